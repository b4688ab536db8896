//! Builds a small second-order cone program by hand: the point of a disc
//! closest to a target, with a squared-distance epigraph as the objective.
//! Prints the solution and the text dump of the program.

use flatsocp::socp::dump::to_text;
use flatsocp::socp::{AffineExpr, ConicProgram};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut p = ConicProgram::new();
    let x = p.add_var("x")?;
    let y = p.add_var("y")?;
    let w = p.add_var("w")?;

    // ‖(x − 1, y − 2)‖ <= 1.5
    p.add_cone(vec![AffineExpr::from(x) - 1.0, AffineExpr::from(y) - 2.0], AffineExpr::constant(1.5))?;
    // w >= (x − 4)² + (y + 1)²
    p.add_square_epigraph(&[AffineExpr::from(x) - 4.0, AffineExpr::from(y) + 1.0], w)?;
    p.add_objective(w, 1.0);

    let r = p.solve();
    println!("status {:?} after {} iterations", r.status, r.iterations);
    println!("closest point ({:.6}, {:.6}), squared distance {:.6}", r.value(x), r.value(y), r.value(w));
    let exact = ((3.0f64).hypot(3.0) - 1.5).powi(2);
    println!("exact squared distance {exact:.6}");
    println!("min cone residual {:.3e}", p.min_cone_residual(&r.x));
    println!("\n{}", to_text(&p));
    Ok(())
}
