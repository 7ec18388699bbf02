//! Continuous slowing down: backward Euler in energy against the explicit
//! solution for `a = -1`, at two energy steps.

use convex_transport::csda::{explicit_csda, solve_csda};
use convex_transport::fields::{CoefficientSet, DiscreteField, EnergyInterval, GridSpec, PhaseFn, SpaceEnergyFn};
use convex_transport::geometry::{ConvexDomain, PhasePoint};
use convex_transport::quadrature::RayQuadrature;
use convex_transport::scattering::IterationOptions;

fn main() -> convex_transport::Result<()> {
    let interval = EnergyInterval::new(0.0, 1.0)?;
    let grid = GridSpec::new(ConvexDomain::unit_ball(), 12, 2, 4, interval, 2)?;
    let sigma = 1.0;
    let coeffs = CoefficientSet::constant(sigma, 0.0).with_stopping(SpaceEnergyFn::constant(-1.0), 1.0);
    let f = PhaseFn::new(|x, _, e| (1.0 - x.norm_squared() / 0.64).max(0.0).powi(4) * (1.0 - e).powi(2));
    let quad = RayQuadrature::default();

    let mut previous = None;
    for de in [0.25, 0.125] {
        let sol = solve_csda(&f, &coeffs, &grid, &quad, de, &IterationOptions::default())?;
        let d = grid.domain.clone();
        let exact = DiscreteField::from_fn(sol.psi.grid(), |x, w, e| {
            explicit_csda(&d, &f, sigma, &interval, &PhasePoint::new(*x, *w, e), &quad).unwrap()
        })?;
        let err = sol.psi.zip_map(&exact, |a, b| a - b).l2_norm() / exact.l2_norm();
        let ratio = previous.map_or(String::new(), |p: f64| format!(", ratio {:.3}", err / p));
        println!(
            "ΔE = {de}: relative L² error {err:.4e}{ratio}, inflow trace {:.1e}",
            sol.inflow_trace
        );
        previous = Some(err);
    }
    Ok(())
}
