//! Lane change at highway speed inside a corridor. The scenario is built in
//! code; the drivable region is the strip between two lane boundaries.

use flatsocp::flat::{State, VehicleParams};
use flatsocp::scenario::RegionConstraint;
use flatsocp::{plan, PlanOptions, Scenario};
use nalgebra::Vector2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vehicle = VehicleParams::new(2.601, 0.785, 19.0, 2.0)?;
    let mut s = Scenario::new(State::new(0.0, 0.0, 16.0, 0.0), State::new(75.0, 3.7, 17.5, 0.0), vehicle);
    // -1.5 <= y <= 5.2
    s.region.constraints.push(RegionConstraint::HalfSpace { normal: Vector2::new(0.0, 1.0), offset: 5.2 });
    s.region.constraints.push(RegionConstraint::HalfSpace { normal: Vector2::new(0.0, -1.0), offset: 1.5 });

    let p = plan(&s, &PlanOptions { samples: 2000, ..PlanOptions::default() })?;
    println!("t_f = {:.4} s, objective {:.4}", p.report.t_f, p.report.objective);
    for row in p.trajectory.samples.iter().step_by(200) {
        println!("t {:6.3}  x {:7.3}  y {:6.3}  v {:6.3}  gamma {:+.5}", row.t, row.x, row.y, row.v, row.gamma);
    }
    let lateral = p.trajectory.samples.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
    println!("max lateral offset {lateral:.4} (bound 5.2)");
    println!("{}", p.report.to_json());
    Ok(())
}
