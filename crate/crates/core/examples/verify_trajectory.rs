//! Plans, writes the trajectory CSV, reads it back and re-checks it by
//! sampling; then corrupts one row to show what a violation looks like.

use flatsocp::cli::{read_trajectory_csv, write_trajectory_csv};
use flatsocp::verify::{sample_margins, Trajectory, SET_NAMES};
use flatsocp::{plan, PlanOptions, Scenario};

fn worst(traj: &Trajectory, s: &Scenario) -> Option<(usize, &'static str, f64)> {
    let mut out: Option<(usize, &'static str, f64)> = None;
    for (i, row) in traj.samples.iter().enumerate() {
        for (name, m) in SET_NAMES.iter().zip(sample_margins(row, s)) {
            if let Some(m) = m {
                if out.is_none_or(|o| m < o.2) {
                    out = Some((i, name, m));
                }
            }
        }
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/example2.json"))?;
    let p = plan(&scenario, &PlanOptions::default())?;
    let file = std::env::temp_dir().join("flatsocp_example.traj.csv");
    write_trajectory_csv(&file, &p.trajectory)?;

    let back = Trajectory::from_samples(read_trajectory_csv(&file)?)?;
    if let Some((i, name, m)) = worst(&back, &scenario) {
        println!("stored trajectory: tightest margin {m:.4e} ({name}, row {i})");
    }

    let mut bad = back.clone();
    bad.samples[1234].v = 25.0;
    if let Some((i, name, m)) = worst(&bad, &scenario) {
        println!("corrupted trajectory: margin {m:.4e} ({name}, row {i})");
    }
    std::fs::remove_file(&file)?;
    Ok(())
}
