//! Source iteration for an isotropic scatterer, with the shift threshold,
//! the constructive kernel bound and a power-iteration norm estimate.

use std::f64::consts::PI;

use convex_transport::fields::{CoefficientSet, EnergyInterval, GridSpec, KernelFn, PhaseFn};
use convex_transport::geometry::ConvexDomain;
use convex_transport::quadrature::RayQuadrature;
use convex_transport::scattering::{
    estimate_scatter_operator_norm, scatter_norm_bound, shift_threshold, solve_scattering, IterationOptions,
};

fn main() -> convex_transport::Result<()> {
    let grid = GridSpec::new(ConvexDomain::unit_ball(), 12, 2, 4, EnergyInterval::new(0.0, 1.0)?, 1)?;
    let kernel = KernelFn::new(|_, _, _, _| 0.5 / (4.0 * PI));
    let coeffs = CoefficientSet::constant(1.0, 2.0).with_scatter(kernel.clone());

    let bound = scatter_norm_bound(&kernel, 0, &grid);
    let estimate = estimate_scatter_operator_norm(&kernel, &grid, 0, 30, 42)?;
    println!("‖K‖ bound {bound:.4}, power-iteration estimate {estimate:.4}");
    println!(
        "shift threshold {:.4}, shift {}",
        shift_threshold(&coeffs, &grid, 0)?,
        coeffs.shift
    );

    let (psi, report) = solve_scattering(
        &PhaseFn::constant(1.0),
        &coeffs,
        &grid,
        &RayQuadrature::default(),
        &IterationOptions::default(),
    )?;
    println!(
        "{} iterations, observed rate {:.4}, ‖ψ‖ = {:.6}",
        report.iterations,
        report.estimated_rate,
        psi.l2_norm()
    );
    for (k, r) in report.residual_history.iter().enumerate() {
        println!("  {k:>2} {r:.3e}");
    }
    Ok(())
}
