//! Full pipeline on a rest-to-rest manoeuvre (path, time grid, timing law,
//! sampling and certificates), printing the per-stage results.

use std::path::PathBuf;

use flatsocp::{plan, PlanOptions, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/example1.json")
    });
    let scenario = Scenario::load(&path)?;
    let p = plan(&scenario, &PlanOptions::default())?;

    println!("path: v̄_θ = {:.4}, ā_θ = {:.4}, objective {:.4}", p.path.v_theta_max, p.path.a_theta_max, p.path.objective);
    if let Some(t) = &p.time {
        println!("time grid: {} segments, t_f = {:.4} s", t.n_segments, t.t_f);
    }
    println!("speed: t_f = {:.4} s after {} retries, jerk cost {:.4e}", p.speed.t_f, p.retries, p.speed.jerk_cost);

    let s = &p.trajectory.samples;
    let vmax = s.iter().map(|x| x.v).fold(0.0, f64::max);
    let amax = s.iter().map(|x| x.vdot.abs()).fold(0.0, f64::max);
    println!("sampled: {} rows, max v {:.4}, max |v̇| {:.4}", s.len(), vmax, amax);
    for set in &p.report.sets {
        println!("{:<7} certificate {}", set.name, if set.certificate { "holds" } else { "fails" });
    }
    println!("timings: {:?}", p.timings.total);
    Ok(())
}
