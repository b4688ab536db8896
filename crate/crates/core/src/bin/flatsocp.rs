fn main() {
    std::process::exit(flatsocp::cli::run(std::env::args_os()));
}
