//! Control-point certificates: if every (virtual) control point of a
//! B-spline lies in a convex set, the whole curve does. The converse fails,
//! which this example also shows.

use flatsocp::bspline::{first_excluded_vcp, BSplineCurve, KnotVector};
use nalgebra::{DMatrix, DVectorView};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kv = KnotVector::clamped_uniform(3, 7, 0.0, 2.0)?;
    let ctrl = DMatrix::from_row_slice(2, 7, &[
        0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0,
        0.0, 0.2, 0.8, 1.0, 0.8, 0.2, 0.0,
    ]);
    let curve = BSplineCurve::new(kv, ctrl)?;

    let disc = |p: DVectorView<f64>| ((p[0] - 1.5).powi(2) + (p[1] - 0.3).powi(2)).sqrt() <= 1.7;
    let speed_box = |p: DVectorView<f64>| p[0].abs() <= 2.0 && p[1].abs() <= 2.0;
    for (order, name, set) in [(0, "position in disc", &disc as &dyn Fn(DVectorView<f64>) -> bool), (1, "velocity in box", &speed_box)] {
        match first_excluded_vcp(&curve, order, set)? {
            None => println!("{name}: certified by {} control points", curve.vcps(order)?.ncols()),
            Some(j) => println!("{name}: not certified, control point {j} lies outside"),
        }
    }

    let mut worst = 0.0f64;
    for i in 0..=1000 {
        let p = curve.eval(0, 2.0 * i as f64 / 1000.0)?;
        worst = worst.max(((p[0] - 1.5).powi(2) + (p[1] - 0.3).powi(2)).sqrt());
    }
    println!("largest sampled distance from the disc centre: {worst:.4} (radius 1.7)");

    // The bump of a quadratic Bezier stays in the unit disc, its middle
    // control point does not.
    let bez = BSplineCurve::new(KnotVector::clamped_uniform(2, 3, 0.0, 1.0)?, DMatrix::from_column_slice(2, 3, &[-0.5, 0.0, 0.0, 1.2, 0.5, 0.0]))?;
    let unit = |p: DVectorView<f64>| p.norm() <= 1.0;
    println!("bump certified: {:?} (curve peak {:.3})", first_excluded_vcp(&bez, 0, unit)?.is_none(), bez.eval(0, 0.5)?.norm());
    Ok(())
}
