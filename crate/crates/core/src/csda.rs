//! Continuous slowing down: `a ∂ψ/∂E + ω·∇ψ + Σψ - K_rψ = f` with zero
//! inflow data and `ψ(·,·,E_m) = 0`.
//!
//! The energy axis is flipped and weighted, `φ(ε) = e^{Cε} ψ(E_m - ε)`, which
//! turns the final condition into an initial one. Marching `φ` upward in `ε`
//! with backward Euler, each step is a steady convection–scattering problem
//!
//! `ω·∇φ + (Σ̂ + |â|(1/Δ - C)) φ - K̂_r φ = |â| φ_n / Δ + e^{Cε} f̂`,
//!
//! solved by the same characteristic sweep and source iteration as the
//! steady solver.

use rayon::prelude::*;
use serde::Serialize;

use crate::attenuation::characteristic_value;
use crate::error::{Error, Result};
use crate::fields::{
    leibniz_constant, sup_norm_estimate, CoefficientSet, DiscreteField, EnergyGrid, EnergyInterval, GridSpec, KernelFn,
    PhaseFn,
};
use crate::geometry::{PhasePoint, Vec3};
use crate::quadrature::{CompensatedSum, RayQuadrature};
use crate::scattering::{
    apply_scatter, scatter_field, scatter_norm_bound, source_iteration, IterationOptions, IterationReport,
};

/// Default number of energy steps across the interval.
pub const DEFAULT_ENERGY_STEPS: usize = 64;

/// State of the energy march after a completed step.
#[derive(Clone, Debug)]
pub struct MarchState {
    /// Flipped energy `ε = E_m - E` of `phi`.
    pub e_current: f64,
    /// `φ(ε)` on `G × S` (a single-energy field).
    pub phi: DiscreteField,
    pub step: f64,
    pub report: IterationReport,
    /// Largest `|φ|` on the inflow boundary, from the characteristic
    /// representation at the boundary points rather than lattice interpolation.
    pub inflow_trace: f64,
}

/// Result of a CSDA solve.
#[derive(Clone, Debug)]
pub struct CsdaSolution {
    /// `ψ` on the marching energy grid `E0 + kΔ`, ascending.
    pub psi: DiscreteField,
    pub step: f64,
    pub reports: Vec<IterationReport>,
    /// Largest inflow trace `|ψ|` over all steps (see [`MarchState::inflow_trace`]).
    pub inflow_trace: f64,
}

/// Number of steps for a requested `ΔE`, which must divide the interval.
pub fn step_count(interval: &EnergyInterval, de: f64) -> Result<usize> {
    if !(de > 0.0 && de.is_finite()) {
        return Err(Error::config("csda.de", "energy step must be positive"));
    }
    let ratio = interval.width() / de;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InsufficientEnergyResolution(format!(
            "step {de} does not divide the interval width {}",
            interval.width()
        )));
    }
    Ok(n as usize)
}

fn single_energy(grid: &GridSpec, energy: f64) -> GridSpec {
    grid.with_energy(EnergyGrid {
        interval: grid.energy.interval,
        nodes: vec![energy],
        weights: vec![1.0],
    })
}

/// March `φ` from `ε = 0` to `ε = E_m - E0`, calling `on_step` after every
/// step. Returns `φ` on the `ε` grid `nΔ` (index `n`).
pub fn march_energy_with<F>(
    f: &PhaseFn,
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    quad: &RayQuadrature,
    de: f64,
    opts: &IterationOptions,
    mut on_step: F,
) -> Result<(DiscreteField, Vec<IterationReport>)>
where
    F: FnMut(&MarchState),
{
    let stop = coeffs
        .stopping
        .as_ref()
        .ok_or_else(|| Error::config("coefficients.stopping", "CSDA needs a stopping power"))?;
    let interval = grid.energy.interval;
    let n_steps = step_count(&interval, de)?;
    let em = interval.em();
    let c = coeffs.shift;
    let relax = 1.0 / de - c;
    if relax <= 0.0 {
        return Err(Error::InsufficientEnergyResolution(format!(
            "backward Euler needs ΔE·C < 1 (ΔE = {de}, C = {c})"
        )));
    }
    let march_grid = grid.with_energy(EnergyGrid::new(interval, n_steps + 1)?);
    coeffs.validate_on(&march_grid)?;

    // Each step is a steady problem with shift κ(1/Δ - C) or more; with
    // scattering it must exceed the solvability threshold.
    if let Some(kernel) = &coeffs.scatter {
        let m = opts.order;
        let threshold = leibniz_constant(m) * sup_norm_estimate(&coeffs.sigma_t, m, &march_grid)?
            + scatter_norm_bound(kernel, m, &march_grid);
        let shift = stop.kappa * relax;
        if shift <= threshold {
            return Err(Error::ShiftTooSmall { shift, threshold });
        }
    }

    let dirs = grid.sphere.nodes().to_vec();
    let n_dir = dirs.len();
    let lat = grid.lattice.clone();
    let n_active = lat.n_active();
    let eps_grid = grid.with_energy(EnergyGrid::new(
        EnergyInterval::new(0.0, interval.width())?,
        n_steps + 1,
    )?);
    let mut phi_all = DiscreteField::zeros(&eps_grid);
    let mut reports = Vec::with_capacity(n_steps);
    let mut phi_prev = DiscreteField::zeros(&single_energy(grid, em));
    for n in 0..n_steps {
        let eps = (n + 1) as f64 * de;
        let e_hat = em - eps;
        let slice_grid = single_energy(grid, e_hat);
        let abs_a = |y: &Vec3| stop.a.eval(y, e_hat).abs();
        let weight = (c * eps).exp();
        let mu = |y: &Vec3, j: usize, _: usize| coeffs.sigma_t.eval(y, &dirs[j], e_hat) + abs_a(y) * relax;
        let src = |y: &Vec3, j: usize, _: usize| weight * f.eval(y, &dirs[j], e_hat);
        // |â| φ_n / Δ, collocated at nodes and interpolated along rays
        let mut carried = DiscreteField::zeros(&slice_grid);
        carried
            .values_mut()
            .par_chunks_mut(n_active)
            .zip(phi_prev.values().par_chunks(n_active))
            .for_each(|(dst, prev)| {
                for node in 0..lat.n_interior() {
                    dst[node] = abs_a(&lat.position(node)) * prev[node] / de;
                }
                lat.fill_ghosts(dst);
            });
        let (phi, report) = source_iteration(
            coeffs.scatter.as_ref(),
            &slice_grid,
            quad,
            opts,
            mu,
            src,
            Some(&carried),
        )?;
        for j in 0..n_dir {
            phi_all.slice_mut(j, n + 1).copy_from_slice(phi.slice(j, 0));
        }
        let extra = match &coeffs.scatter {
            Some(kernel) => scatter_field(kernel, &phi).zip_map(&carried, |a, b| a + b),
            None => carried,
        };
        let inflow_trace = inflow_trace_max(&slice_grid, quad, mu, src, &extra)?;
        let state = MarchState {
            e_current: eps,
            phi,
            step: de,
            report,
            inflow_trace,
        };
        on_step(&state);
        reports.push(state.report);
        phi_prev = state.phi;
    }
    Ok((phi_all, reports))
}

/// `max |φ(y, ω_j)|` over boundary points with `ω_j·ν(y) < 0`, evaluating the
/// step's characteristic integral at `y` itself.
fn inflow_trace_max<M, S>(grid: &GridSpec, quad: &RayQuadrature, mu: M, src: S, extra: &DiscreteField) -> Result<f64>
where
    M: Fn(&Vec3, usize, usize) -> f64 + Sync,
    S: Fn(&Vec3, usize, usize) -> f64 + Sync,
{
    let dirs = grid.sphere.nodes();
    grid.surface()
        .points()
        .par_iter()
        .map(|sp| -> Result<f64> {
            let mut worst = 0.0f64;
            for (j, w) in dirs.iter().enumerate() {
                if w.dot(&sp.normal) < 0.0 {
                    let v = characteristic_value(grid, quad, &mu, &src, Some(extra.slice(j, 0)), &sp.position, j, 0)?;
                    worst = worst.max(v.abs());
                }
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// [`march_energy_with`] without a per-step callback.
pub fn march_energy(
    f: &PhaseFn,
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    quad: &RayQuadrature,
    de: f64,
    opts: &IterationOptions,
) -> Result<(DiscreteField, Vec<IterationReport>)> {
    march_energy_with(f, coeffs, grid, quad, de, opts, |_| {})
}

/// `φ(x,ω,ε) = e^{Cε} ψ(x,ω,E_m - ε)` on a uniform energy grid.
pub fn flip_and_weight(psi: &DiscreteField, c: f64) -> Result<DiscreteField> {
    let grid = psi.grid();
    let interval = grid.energy.interval;
    let n_e = grid.energy.len();
    let eps_grid = grid.with_energy(EnergyGrid::new(EnergyInterval::new(0.0, interval.width())?, n_e)?);
    let mut out = DiscreteField::zeros(&eps_grid);
    for k in 0..n_e {
        let n = n_e - 1 - k;
        let w = (c * eps_grid.energy.nodes[n]).exp();
        for j in 0..grid.n_directions() {
            let src = psi.slice(j, k);
            out.slice_mut(j, n).iter_mut().zip(src).for_each(|(d, s)| *d = w * s);
        }
    }
    Ok(out)
}

/// Inverse of [`flip_and_weight`]: `ψ(x,ω,E) = e^{-C(E_m - E)} φ(x,ω,E_m - E)`.
pub fn unflip(phi: &DiscreteField, c: f64, interval: EnergyInterval) -> Result<DiscreteField> {
    let grid = phi.grid();
    let n_e = grid.energy.len();
    let e_grid = grid.with_energy(EnergyGrid::new(interval, n_e)?);
    let mut out = DiscreteField::zeros(&e_grid);
    for n in 0..n_e {
        let k = n_e - 1 - n;
        let w = (-c * grid.energy.nodes[n]).exp();
        for j in 0..grid.n_directions() {
            let src = phi.slice(j, n);
            out.slice_mut(j, k).iter_mut().zip(src).for_each(|(d, s)| *d = w * s);
        }
    }
    Ok(out)
}

/// Full CSDA pipeline: flip, march, unflip. The returned field lives on the
/// marching energy grid `E0 + kΔ`.
pub fn solve_csda(
    f: &PhaseFn,
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    quad: &RayQuadrature,
    de: f64,
    opts: &IterationOptions,
) -> Result<CsdaSolution> {
    let c = coeffs.shift;
    let mut inflow_trace = 0.0f64;
    let (phi, reports) = march_energy_with(f, coeffs, grid, quad, de, opts, |state| {
        inflow_trace = inflow_trace.max((-c * state.e_current).exp() * state.inflow_trace);
    })?;
    let psi = unflip(&phi, c, grid.energy.interval)?;
    Ok(CsdaSolution {
        psi,
        step: de,
        reports,
        inflow_trace,
    })
}

/// `∫₀^{min(E_m - E, t̃)} e^{-Σs} f(x - sω, ω, E + s) ds` for `a = -1`,
/// constant `Σ` and no scattering.
pub fn explicit_csda(
    domain: &crate::geometry::ConvexDomain,
    f: &PhaseFn,
    sigma: f64,
    interval: &EnergyInterval,
    p: &PhasePoint,
    quad: &RayQuadrature,
) -> Result<f64> {
    let t = domain.extended_escape_time(&p.x, &p.omega)?;
    let length = t.min(interval.em() - p.energy);
    if length <= 0.0 {
        return Ok(0.0);
    }
    let panels = quad.panel_count(length, sigma);
    let width = length / panels as f64;
    let mut acc = CompensatedSum::default();
    for k in 0..panels {
        let s0 = k as f64 * width;
        for (&xi, &w) in quad.reference_nodes().iter().zip(quad.reference_weights()) {
            let s = s0 + xi * width;
            let y = p.x - s * p.omega;
            acc.add(width * w * (-sigma * s).exp() * f.eval(&y, &p.omega, p.energy + s));
        }
    }
    Ok(acc.value())
}

/// Outcome of one compatibility check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub order: usize,
    pub residual: f64,
    pub pass: bool,
}

/// Default tolerance of [`compatibility_check`].
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-8;

/// One-sided derivative at the last node from samples `v[0] = v(E_m)`,
/// `v[i] = v(E_m - iΔ)`.
fn backward_derivative(v: &[f64], order: usize, de: f64) -> f64 {
    match (order, v.len()) {
        (1, 2) => (v[0] - v[1]) / de,
        (1, _) => (3.0 * v[0] - 4.0 * v[1] + v[2]) / (2.0 * de),
        (2, 3) => (v[0] - 2.0 * v[1] + v[2]) / (de * de),
        (2, _) => (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (de * de),
        _ => v[0],
    }
}

/// Check the order-0, 1 or 2 compatibility condition between inflow data
/// `g` and `F = f/a` at `E = E_m` on the inflow boundary of the grid.
///
/// Energy derivatives are one-sided differences on the grid's energy step;
/// order 2 applies `P F = -(1/a)(ω·∇F + ΣF - K_r F)` with `ω·∇F` by a
/// central difference along the ray.
pub fn compatibility_check(
    g: &PhaseFn,
    big_f: &PhaseFn,
    coeffs: &CoefficientSet,
    order: usize,
    grid: &GridSpec,
    tol: f64,
) -> Result<CompatibilityReport> {
    if order > 2 {
        return Err(Error::OrderTooHigh { order, max: 2 });
    }
    let n_e = grid.energy.len();
    if order > 0 && n_e < order + 1 {
        return Err(Error::InsufficientEnergyResolution(format!(
            "order-{order} condition needs at least {} energy nodes, grid has {n_e}",
            order + 1
        )));
    }
    let de = grid.energy.step().unwrap_or(grid.energy.interval.width());
    let em = grid.energy.interval.em();
    let samples = (order + 2).min(n_e);
    let dirs = grid.sphere.nodes();
    let a_at = |y: &Vec3| -> Result<f64> {
        match &coeffs.stopping {
            Some(s) => Ok(s.a.eval(y, em)),
            None => Err(Error::config(
                "coefficients.stopping",
                "second-order compatibility needs a stopping power",
            )),
        }
    };
    let apply_p = |y: &Vec3, w: &Vec3| -> Result<f64> {
        let h = 1e-5;
        let transport = (big_f.eval(&(y + h * w), w, em) - big_f.eval(&(y - h * w), w, em)) / (2.0 * h);
        let mut v = transport + coeffs.sigma_t.eval(y, w, em) * big_f.eval(y, w, em);
        if let Some(kernel) = &coeffs.scatter {
            v -= apply_scatter(kernel, |_, wi| big_f.eval(y, wi, em), y, w, em, &grid.sphere);
        }
        Ok(-v / a_at(y)?)
    };
    let mut residual = 0.0f64;
    for sp in grid.surface().points() {
        for w in dirs {
            if w.dot(&sp.normal) >= 0.0 {
                continue;
            }
            let y = &sp.position;
            let series = |h: &PhaseFn| -> Vec<f64> { (0..samples).map(|i| h.eval(y, w, em - i as f64 * de)).collect() };
            let r = match order {
                0 => g.eval(y, w, em).abs(),
                1 => (backward_derivative(&series(g), 1, de) - big_f.eval(y, w, em)).abs(),
                _ => {
                    let g2 = backward_derivative(&series(g), 2, de);
                    let f1 = backward_derivative(&series(big_f), 1, de);
                    (g2 - apply_p(y, w)? - f1).abs()
                }
            };
            residual = residual.max(r);
        }
    }
    Ok(CompatibilityReport {
        order,
        residual,
        pass: residual < tol,
    })
}

/// `(K_r(E + δ) - K_r(E)) φ / δ` at one point, the difference quotient of
/// the energy-dependent collision operator at a fixed angular field.
pub fn scatter_energy_quotient<F>(
    kernel: &KernelFn,
    phi: F,
    x: &Vec3,
    omega: &Vec3,
    energy: f64,
    delta: f64,
    sphere: &crate::quadrature::SphereQuadrature,
) -> f64
where
    F: Fn(usize, &Vec3) -> f64,
{
    let hi = apply_scatter(kernel, &phi, x, omega, energy + delta, sphere);
    let lo = apply_scatter(kernel, &phi, x, omega, energy, sphere);
    (hi - lo) / delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SpaceEnergyFn;
    use crate::geometry::ConvexDomain;
    use crate::scattering::solve_scattering;

    fn grid(n_e: usize) -> GridSpec {
        GridSpec::new(
            ConvexDomain::unit_ball(),
            9,
            2,
            4,
            EnergyInterval::new(0.0, 1.0).unwrap(),
            n_e,
        )
        .unwrap()
    }

    fn csda_coeffs(sigma: f64) -> CoefficientSet {
        CoefficientSet::constant(sigma, 0.0).with_stopping(SpaceEnergyFn::constant(-1.0), 1.0)
    }

    #[test]
    fn zero_source_gives_zero() {
        let g = grid(2);
        let sol = solve_csda(
            &PhaseFn::constant(0.0),
            &csda_coeffs(1.0),
            &g,
            &RayQuadrature::default(),
            0.25,
            &IterationOptions::default(),
        )
        .unwrap();
        assert!(sol.psi.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_is_a_steady_solve() {
        let g = grid(2);
        let q = RayQuadrature::default();
        let f = PhaseFn::spatial(|x| 1.0 - x.norm_squared());
        let (phi, _) = march_energy(&f, &csda_coeffs(0.5), &g, &q, 1.0, &IterationOptions::default()).unwrap();
        // a = -1, Δ = 1: ω·∇φ + 1.5 φ = f
        let slice = single_energy(&g, 0.0);
        let (steady, _) = solve_scattering(
            &f,
            &CoefficientSet::constant(0.5, 1.0),
            &slice,
            &q,
            &IterationOptions::default(),
        )
        .unwrap();
        for n in 0..g.lattice.n_interior() {
            for j in 0..g.n_directions() {
                assert!((phi.get(n, j, 1) - steady.get(n, j, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transform_round_trip() {
        let g = grid(5);
        let psi = DiscreteField::from_fn(&g, |x, w, e| x.x * w.y + e * e).unwrap();
        let phi = flip_and_weight(&psi, 0.7).unwrap();
        let back = unflip(&phi, 0.7, g.energy.interval).unwrap();
        for (a, b) in psi.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_solution_examples() {
        let d = ConvexDomain::unit_ball();
        let q = RayQuadrature::default();
        let iv = EnergyInterval::new(0.0, 1.0).unwrap();
        let w = Vec3::new(0.0, 0.6, 0.8);
        let x = Vec3::new(0.1, -0.2, 0.3);
        let at_em = PhasePoint::new(x, w, 1.0);
        assert_eq!(
            explicit_csda(&d, &PhaseFn::constant(1.0), 0.5, &iv, &at_em, &q).unwrap(),
            0.0
        );
        let p = PhasePoint::new(x, w, 0.4);
        let t = d.extended_escape_time(&x, &w).unwrap();
        let v = explicit_csda(&d, &PhaseFn::constant(1.0), 0.0, &iv, &p, &q).unwrap();
        assert!((v - t.min(0.6)).abs() < 1e-14);
        // f = E: ∫₀^L e^{-σs}(E+s) ds
        let sigma = 0.8;
        let len = t.min(0.6);
        let exact = (p.energy * (1.0 - (-sigma * len).exp())) / sigma
            + (1.0 - (1.0 + sigma * len) * (-sigma * len).exp()) / (sigma * sigma);
        let v = explicit_csda(&d, &PhaseFn::new(|_, _, e| e), sigma, &iv, &p, &q).unwrap();
        assert!((v - exact).abs() < 1e-9);
    }

    #[test]
    fn compatibility_examples() {
        let g = grid(5);
        let c = csda_coeffs(1.0);
        let zero = PhaseFn::constant(0.0);
        for order in 0..=2 {
            let r = compatibility_check(&zero, &zero, &c, order, &g, COMPATIBILITY_TOLERANCE).unwrap();
            assert!(r.pass && r.residual == 0.0);
        }
        let ramp = PhaseFn::new(|_, _, e| 1.0 - e);
        assert!(
            compatibility_check(&ramp, &zero, &c, 0, &g, COMPATIBILITY_TOLERANCE)
                .unwrap()
                .pass
        );
        let r1 = compatibility_check(&ramp, &zero, &c, 1, &g, COMPATIBILITY_TOLERANCE).unwrap();
        assert!(!r1.pass && (r1.residual - 1.0).abs() < 1e-12);
        let f0 = 0.7;
        let scaled = PhaseFn::new(move |_, _, e| (1.0 - e) * f0);
        let big_f = PhaseFn::constant(-f0);
        for order in 0..=1 {
            assert!(
                compatibility_check(&scaled, &big_f, &c, order, &g, COMPATIBILITY_TOLERANCE)
                    .unwrap()
                    .pass
            );
        }
        let coarse = grid(2);
        assert!(matches!(
            compatibility_check(&zero, &zero, &c, 2, &coarse, COMPATIBILITY_TOLERANCE),
            Err(Error::InsufficientEnergyResolution(_))
        ));
    }

    #[test]
    fn step_must_divide_interval() {
        let iv = EnergyInterval::new(0.0, 1.0).unwrap();
        assert_eq!(step_count(&iv, 0.125).unwrap(), 8);
        assert!(step_count(&iv, 0.3).is_err());
    }

    #[test]
    fn stopping_power_is_required_and_checked() {
        let g = grid(2);
        let q = RayQuadrature::default();
        let opts = IterationOptions::default();
        let f = PhaseFn::constant(1.0);
        assert!(matches!(
            march_energy(&f, &CoefficientSet::constant(1.0, 0.0), &g, &q, 0.5, &opts),
            Err(Error::Config { .. })
        ));
        let weak = CoefficientSet::constant(1.0, 0.0).with_stopping(SpaceEnergyFn::constant(-0.5), 1.0);
        assert!(matches!(
            march_energy(&f, &weak, &g, &q, 0.5, &opts),
            Err(Error::StoppingPowerViolation { .. })
        ));
    }
}
