//! Escape times on a ball and an ellipsoid: closed form against root finding,
//! boundary classification and the escape-time gradient.

use convex_transport::geometry::{ConvexDomain, Vec3};

fn main() -> convex_transport::Result<()> {
    let ball = ConvexDomain::unit_ball();
    let ellipsoid = ConvexDomain::ellipsoid([0.0; 3], [1.0, 0.7, 0.5])?;
    let x = Vec3::new(0.2, -0.1, 0.3);
    let w = Vec3::new(1.0, 1.0, 0.5).normalize();

    for (name, d) in [("ball", &ball), ("ellipsoid", &ellipsoid)] {
        let t = d.extended_escape_time(&x, &w)?;
        let by_root = d.escape_time_by_root_finding(&x, &w)?;
        let g = d.escape_time_gradient(&x, &w)?;
        let y = x - t * w;
        let class = d.classify_boundary(&y, &w)?;
        println!(
            "{name}: t = {t:.12}, root finding {by_root:.12}, ω·∇t = {:.12}",
            g.dot(&w)
        );
        println!("  inflow point {y:?}, ω·ν = {:.4} ({:?})", class.dot, class.kind);
    }
    Ok(())
}
