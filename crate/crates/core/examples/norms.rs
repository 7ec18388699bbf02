//! Anisotropic Sobolev norms, boundary trace norms, the vanishing margin and
//! the accretivity functional of a smooth bump. The bump must sit deeper
//! than the ghost stencil (four cells) from the boundary to count as
//! vanishing near the inflow boundary.

use convex_transport::attenuation::accretivity_functional;
use convex_transport::fields::{CoefficientSet, DiscreteField, EnergyInterval, GridSpec};
use convex_transport::geometry::ConvexDomain;
use convex_transport::norms::{h0_margin, h_norm, trace_norm, NormOrder, TraceField, TraceSide, TraceWeighting};

fn main() -> convex_transport::Result<()> {
    let grid = GridSpec::new(ConvexDomain::unit_ball(), 24, 2, 4, EnergyInterval::new(0.0, 1.0)?, 1)?;
    let psi = DiscreteField::from_fn(&grid, |x, w, _| {
        (1.0 - (x.norm_squared() / 0.2025)).max(0.0).powi(4) * (1.0 + 0.5 * w.z)
    })?;
    for m in 0..=2 {
        println!("‖ψ‖_H^({m},0,0) = {:.6}", h_norm(&psi, NormOrder::spatial(m))?);
    }
    let smooth = DiscreteField::from_fn(&grid, |x, w, _| 1.0 + x.dot(w))?;
    let outflow = TraceField::of_field(&smooth, TraceSide::Outflow);
    println!(
        "outflow trace of 1 + x·ω: plain {:.6}, τ-weighted {:.6}",
        trace_norm(&outflow, TraceWeighting::Plain)?,
        trace_norm(&outflow, TraceWeighting::Tau)?
    );
    let margin = h0_margin(&psi);
    println!(
        "vanishing margin of the bump: η = {:.3} (in H0: {})",
        margin.eta, margin.pass
    );
    let acc = accretivity_functional(&psi, &CoefficientSet::constant(1.0, 3.0), 1)?;
    println!("accretivity: lhs {:.6} >= (C - C′)‖ψ‖² = {:.6}", acc.lhs, acc.rhs_bound);
    Ok(())
}
