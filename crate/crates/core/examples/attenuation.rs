//! Pure attenuation with constant coefficients on a lattice, compared with
//! the closed form `f (1 - e^{-μ t̃}) / μ`.

use convex_transport::attenuation::solve_attenuation_grid;
use convex_transport::fields::{CoefficientSet, DiscreteField, EnergyInterval, GridSpec, PhaseFn};
use convex_transport::geometry::ConvexDomain;
use convex_transport::quadrature::RayQuadrature;

fn main() -> convex_transport::Result<()> {
    let grid = GridSpec::new(ConvexDomain::unit_ball(), 16, 4, 8, EnergyInterval::new(0.0, 1.0)?, 1)?;
    let (sigma, shift, f) = (1.5, 0.5, 2.0);
    let coeffs = CoefficientSet::constant(sigma, shift);
    let psi = solve_attenuation_grid(&PhaseFn::constant(f), &coeffs, &grid, &RayQuadrature::default())?;

    let mu = sigma + shift;
    let d = grid.domain.clone();
    let exact = DiscreteField::from_fn(&grid, move |x, w, _| {
        f * (1.0 - (-mu * d.extended_escape_time(x, w).unwrap()).exp()) / mu
    })?;
    let err = psi.zip_map(&exact, |a, b| a - b).l2_norm() / exact.l2_norm();
    println!(
        "{} interior nodes × {} directions",
        grid.lattice.n_interior(),
        grid.n_directions()
    );
    println!("relative L² error against the closed form: {err:.3e}");
    Ok(())
}
