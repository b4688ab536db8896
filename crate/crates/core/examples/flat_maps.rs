//! Differential flatness of the kinematic bicycle: states, inputs and the
//! steering angle recovered from a path and a timing law, checked against
//! the vehicle ODE along a circular arc.

use std::f64::consts::PI;

use flatsocp::flat::{bicycle_rhs, parameterized_from_parts, PathPoint};
use nalgebra::Vector2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (radius, wheelbase) = (25.0, 2.7);
    // Quarter circle, traversed with ṡ = 0.05 + 0.02 t.
    let point = |s: f64| {
        let a = 0.5 * PI * s;
        let k = 0.5 * PI;
        PathPoint {
            pos: Vector2::new(radius * a.sin(), radius * (1.0 - a.cos())),
            d1: Vector2::new(a.cos(), a.sin()) * (radius * k),
            d2: Vector2::new(-a.sin(), a.cos()) * (radius * k * k),
        }
    };
    println!("{:>5} {:>8} {:>8} {:>9} {:>9} {:>9}", "t", "v", "psi", "psidot", "gamma", "ode err");
    for i in 0..=5 {
        let t = i as f64;
        let (s, sdot, sddot) = (0.05 * t + 0.01 * t * t, 0.05 + 0.02 * t, 0.02);
        let p = parameterized_from_parts(&point(s), s, sdot, sddot, wheelbase)?;
        let rhs = bicycle_rhs(&p.state, &p.input);
        let vel = point(s).d1 * sdot;
        let err = (rhs[0] - vel.x).abs().max((rhs[1] - vel.y).abs());
        println!(
            "{t:5.1} {:8.4} {:8.4} {:9.5} {:9.6} {err:9.2e}",
            p.state.v, p.state.psi, p.input.psidot, p.steer
        );
    }
    println!("constant steering on a circle: atan(L/R) = {:.6}", (wheelbase / radius).atan());
    Ok(())
}
