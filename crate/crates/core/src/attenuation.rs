//! Exact characteristic solution of `ω·∇ψ + (Σ + C)ψ = f`, `ψ|Γ₋ = 0`.
//!
//! The solution at `(x, ω, E)` is the backward ray integral
//! `∫₀^{t̃} exp(-∫₀ᵗ (Σ+C)(x - sω) ds) f(x - tω) dt`. Both the outer integral
//! and the optical depth use the same composite Gauss–Legendre panels; the
//! optical depth at each node comes from the panel's cumulative
//! (spectral-integration) matrix, so a ray costs one pass over its nodes.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{
    leibniz_constant, sup_norm_estimate, CoefficientSet, DiscreteField, GridSpec, MultiIndex, PhaseFn,
};
use crate::geometry::{ConvexDomain, PhasePoint, Vec3};
use crate::norms;
use crate::quadrature::RayQuadrature;

/// Optical depth beyond which the remaining ray contributes below `e^{-45}`.
const TRUNCATION_DEPTH: f64 = 45.0;

/// A vector-valued phase-space field, e.g. `∇_x Σ` or `∇_x f`.
pub type GradientFn = Arc<dyn Fn(&Vec3, &Vec3, f64) -> Vec3 + Send + Sync>;

/// Integrate `∫₀^L e^{-τ(t)} src(x - tω) dt` with `τ(t) = ∫₀ᵗ μ(x - sω) ds`.
///
/// Returns the integral and the optical depth reached (the full `τ(L)`
/// unless the ray was truncated).
pub(crate) fn ray_integral<M, S>(
    x: &Vec3,
    omega: &Vec3,
    length: f64,
    quad: &RayQuadrature,
    rate_hint: f64,
    mu: M,
    src: S,
) -> (f64, f64)
where
    M: Fn(&Vec3) -> f64,
    S: Fn(&Vec3) -> f64,
{
    if length <= 0.0 {
        return (0.0, 0.0);
    }
    let n_panels = quad.panel_count(length, rate_hint);
    let width = length / n_panels as f64;
    let xi = quad.reference_nodes();
    let wts = quad.reference_weights();
    let cum = quad.cumulative_matrix();
    let n = xi.len();
    let mut mu_k = [0.0f64; 32];
    let mut f_k = [0.0f64; 32];
    let mut depth = 0.0;
    let mut acc = 0.0;
    for p in 0..n_panels {
        let t0 = p as f64 * width;
        for k in 0..n {
            let pt = x - (t0 + xi[k] * width) * omega;
            mu_k[k] = mu(&pt);
            f_k[k] = src(&pt);
        }
        let mut panel_depth = 0.0;
        for k in 0..n {
            let partial: f64 = (0..n).map(|l| cum[k][l] * mu_k[l]).sum();
            let tau = depth + width * partial;
            acc += width * wts[k] * (-tau).exp() * f_k[k];
            panel_depth += wts[k] * mu_k[k];
        }
        depth += width * panel_depth;
        if depth > TRUNCATION_DEPTH {
            break;
        }
    }
    (acc, depth)
}

/// Solve `ω·∇ψ + (Σ+C)ψ = f` with zero inflow data at one phase point.
pub fn solve_attenuation(
    domain: &ConvexDomain,
    f: &PhaseFn,
    coeffs: &CoefficientSet,
    p: &PhasePoint,
    quad: &RayQuadrature,
) -> Result<f64> {
    let length = domain.extended_escape_time(&p.x, &p.omega)?;
    if length <= 0.0 {
        return Ok(0.0);
    }
    let e = p.energy;
    let w = p.omega;
    let mu = |y: &Vec3| coeffs.total_attenuation(y, &w, e);
    let rate = mu(&p.x).abs().max(mu(&(p.x - length * w)).abs());
    let (value, _) = ray_integral(&p.x, &w, length, quad, rate, mu, |y| f.eval(y, &w, e));
    Ok(value)
}

/// Spatial gradient of the attenuation solution.
///
/// Sums the two ray-integral terms (attenuation-gradient weighted source and
/// attenuated source gradient) and, unless `inflow_vanishing` is set, the
/// boundary term `e^{-τ(t)} f(y) ∇t` at the inflow point `y`.
pub fn solve_attenuation_gradient(
    domain: &ConvexDomain,
    f: &PhaseFn,
    grad_f: &GradientFn,
    coeffs: &CoefficientSet,
    grad_sigma: &GradientFn,
    p: &PhasePoint,
    quad: &RayQuadrature,
    inflow_vanishing: bool,
) -> Result<Vec3> {
    let length = domain.extended_escape_time(&p.x, &p.omega)?;
    if length <= 0.0 {
        return Ok(Vec3::zeros());
    }
    let (x, w, e) = (p.x, p.omega, p.energy);
    let n_panels = quad.panel_count(
        length,
        coeffs
            .total_attenuation(&x, &w, e)
            .abs()
            .max(coeffs.total_attenuation(&(x - length * w), &w, e).abs()),
    );
    let width = length / n_panels as f64;
    let xi = quad.reference_nodes();
    let wts = quad.reference_weights();
    let cum = quad.cumulative_matrix();
    let n = xi.len();
    let mut depth = 0.0;
    let mut grad_depth = Vec3::zeros();
    let mut h1 = Vec3::zeros();
    let mut h2 = Vec3::zeros();
    let mut mu_k = vec![0.0; n];
    let mut gs_k = vec![Vec3::zeros(); n];
    let mut f_k = vec![0.0; n];
    let mut gf_k = vec![Vec3::zeros(); n];
    let mut truncated = false;
    for p in 0..n_panels {
        let t0 = p as f64 * width;
        for k in 0..n {
            let pt = x - (t0 + xi[k] * width) * w;
            mu_k[k] = coeffs.total_attenuation(&pt, &w, e);
            gs_k[k] = grad_sigma(&pt, &w, e);
            f_k[k] = f.eval(&pt, &w, e);
            gf_k[k] = grad_f(&pt, &w, e);
        }
        for k in 0..n {
            let mut tau = depth;
            let mut gtau = grad_depth;
            for l in 0..n {
                tau += width * cum[k][l] * mu_k[l];
                gtau += width * cum[k][l] * gs_k[l];
            }
            let weight = width * wts[k] * (-tau).exp();
            h1 -= weight * f_k[k] * gtau;
            h2 += weight * gf_k[k];
        }
        for k in 0..n {
            depth += width * wts[k] * mu_k[k];
            grad_depth += width * wts[k] * gs_k[k];
        }
        if depth > TRUNCATION_DEPTH {
            truncated = true;
            break;
        }
    }
    let mut grad = h1 + h2;
    if !inflow_vanishing && !truncated {
        let y = x - length * w;
        let fy = f.eval(&y, &w, e);
        if fy != 0.0 {
            let dt = domain.escape_time_gradient(&x, &w)?;
            grad += (-depth).exp() * fy * dt;
        }
    }
    Ok(grad)
}

/// Table of `∂_x^α` of a field, keyed by multi-index.
#[derive(Clone, Debug, Default)]
pub struct DerivativeTable {
    name: &'static str,
    entries: HashMap<MultiIndex, PhaseFn>,
}

impl DerivativeTable {
    pub fn new(name: &'static str) -> Self {
        Self {
            name,
            entries: HashMap::new(),
        }
    }

    pub fn with(mut self, alpha: MultiIndex, f: PhaseFn) -> Self {
        self.entries.insert(alpha, f);
        self
    }

    pub fn insert(&mut self, alpha: MultiIndex, f: PhaseFn) {
        self.entries.insert(alpha, f);
    }

    pub fn get(&self, alpha: MultiIndex) -> Result<&PhaseFn> {
        self.entries.get(&alpha).ok_or(Error::MissingDerivative {
            table: self.name,
            order: alpha.0,
        })
    }
}

/// Source of the transport problem satisfied by `∂_x^α ψ`:
/// `f_α = ∂^α f - Σ_{β<α} binom(α,β) (∂^{α-β} Σ)(∂^β ψ)`.
pub fn derivative_source(
    f_derivs: &DerivativeTable,
    sigma_derivs: &DerivativeTable,
    psi_derivs: &DerivativeTable,
    alpha: MultiIndex,
) -> Result<PhaseFn> {
    let base = f_derivs.get(alpha)?.clone();
    let mut terms: Vec<(f64, PhaseFn, PhaseFn)> = Vec::new();
    for beta in alpha.below() {
        if beta == alpha {
            continue;
        }
        let sigma = sigma_derivs.get(alpha.minus(&beta))?.clone();
        let psi = psi_derivs.get(beta)?.clone();
        terms.push((alpha.binomial(&beta), sigma, psi));
    }
    Ok(PhaseFn::new(move |x, w, e| {
        let mut v = base.eval(x, w, e);
        for (c, s, p) in &terms {
            v -= c * s.eval(x, w, e) * p.eval(x, w, e);
        }
        v
    }))
}

/// Attenuation solve at every interior node of the grid; ghosts extrapolated.
pub fn solve_attenuation_grid(
    f: &PhaseFn,
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    quad: &RayQuadrature,
) -> Result<DiscreteField> {
    let mut out = DiscreteField::zeros(grid);
    let domain = &grid.domain;
    out.try_fill_interior(|_, _, _, x, omega, e| {
        solve_attenuation(domain, f, coeffs, &PhasePoint::new(*x, *omega, e), quad)
    })?;
    Ok(out)
}

/// Grid transport sweep with per-slice attenuation and an additional
/// grid-interpolated source.
///
/// Solves `ω_j·∇ψ + μ_{jk} ψ = src_{jk} + I_h(extra_{jk})` at every interior
/// node, where `I_h` is lattice interpolation of the discrete field `extra`.
pub(crate) fn transport_sweep<M, S>(
    grid: &GridSpec,
    quad: &RayQuadrature,
    mu: M,
    src: S,
    extra: Option<&DiscreteField>,
) -> Result<DiscreteField>
where
    M: Fn(&Vec3, usize, usize) -> f64 + Sync,
    S: Fn(&Vec3, usize, usize) -> f64 + Sync,
{
    let mut out = DiscreteField::zeros(grid);
    let lat = grid.lattice.clone();
    let n_active = lat.n_active();
    let n_dir = grid.n_directions();
    out.values_mut()
        .par_chunks_mut(n_active)
        .enumerate()
        .try_for_each(|(s, chunk)| -> Result<()> {
            let (j, k) = (s % n_dir, s / n_dir);
            let extra_slice = extra.map(|f| f.slice(j, k));
            for (n, v) in chunk.iter_mut().take(lat.n_interior()).enumerate() {
                *v = characteristic_value(grid, quad, &mu, &src, extra_slice, &lat.position(n), j, k)?;
            }
            lat.fill_ghosts(chunk);
            Ok(())
        })?;
    Ok(out)
}

/// The characteristic integral behind [`transport_sweep`] at one point `x`
/// and grid direction/energy `(j, k)`; `extra` is one slice of a lattice field.
#[allow(clippy::too_many_arguments)]
pub(crate) fn characteristic_value<M, S>(
    grid: &GridSpec,
    quad: &RayQuadrature,
    mu: M,
    src: S,
    extra: Option<&[f64]>,
    x: &Vec3,
    j: usize,
    k: usize,
) -> Result<f64>
where
    M: Fn(&Vec3, usize, usize) -> f64,
    S: Fn(&Vec3, usize, usize) -> f64,
{
    let w = grid.sphere.nodes()[j];
    let length = grid.domain.extended_escape_time(x, &w)?;
    let m = |y: &Vec3| mu(y, j, k);
    let rate = m(x).abs().max(m(&(x - length * w)).abs());
    let (val, _) = ray_integral(x, &w, length, quad, rate, m, |y| {
        let base = src(y, j, k);
        match extra {
            Some(sl) => base + grid.lattice.interpolate(sl, y),
            None => base,
        }
    });
    Ok(val)
}

/// Terms of the discrete accretivity inequality.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Accretivity {
    /// `⟨(P + C)ψ, ψ⟩_{H^{(m,0,0)}}`.
    pub lhs: f64,
    /// `(C - C′) ‖ψ‖²_{H^{(m,0,0)}}` with `C′ = c(m) ‖Σ‖_{W^{∞,(m,0,0)}}`.
    pub rhs_bound: f64,
    /// `½ Σ_{|α|<=m} ∫_{Γ₊} (∂^α ψ)² ω·ν`.
    pub boundary_term: f64,
    /// `‖ψ‖²_{H^{(m,0,0)}}`.
    pub norm_squared: f64,
    /// `C′`.
    pub sigma_constant: f64,
}

/// Largest order supported by [`accretivity_functional`].
pub const MAX_ACCRETIVITY_ORDER: usize = 2;

/// Evaluate the accretivity functional of `P + C`, `P = ω·∇ + Σ`, on a field
/// that vanishes near the inflow boundary.
pub fn accretivity_functional(psi: &DiscreteField, coeffs: &CoefficientSet, m: usize) -> Result<Accretivity> {
    if m > MAX_ACCRETIVITY_ORDER {
        return Err(Error::OrderTooHigh {
            order: m,
            max: MAX_ACCRETIVITY_ORDER,
        });
    }
    let grid = psi.grid();
    let margin = norms::h0_margin(psi);
    if !margin.pass {
        return Err(Error::NotInH0 {
            eta: margin.eta,
            required: 2.0 * grid.h(),
        });
    }
    let sigma_constant = leibniz_constant(m) * sup_norm_estimate(&coeffs.sigma_t, m, grid)?;
    let sigma = DiscreteField::from_fn(grid, |x, w, e| coeffs.sigma_t.eval(x, w, e))?;
    let mut applied = psi
        .transport_derivative()
        .zip_map(&sigma.zip_map(psi, |s, v| s * v), |a, b| a + b)
        .zip_map(psi, |a, v| a + coeffs.shift * v);
    applied.fill_ghosts();
    let d_applied = applied.derivatives_up_to(m);
    let d_psi = psi.derivatives_up_to(m);
    let mut lhs = 0.0;
    let mut norm_squared = 0.0;
    for ((_, a), (_, p)) in d_applied.iter().zip(&d_psi) {
        lhs += a.inner(p);
        norm_squared += p.inner(p);
    }
    let boundary = norms::boundary_h_norm(psi, m)?;
    Ok(Accretivity {
        lhs,
        rhs_bound: (coeffs.shift - sigma_constant) * norm_squared,
        boundary_term: 0.5 * boundary * boundary,
        norm_squared,
        sigma_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ball_escape_closed_form;
    use approx::assert_abs_diff_eq;

    fn ball() -> ConvexDomain {
        ConvexDomain::unit_ball()
    }

    fn pp(x: [f64; 3], w: [f64; 3]) -> PhasePoint {
        PhasePoint::new(Vec3::from(x), Vec3::from(w).normalize(), 0.0)
    }

    #[test]
    fn zero_attenuation_unit_source_gives_escape_time() {
        let q = RayQuadrature::default();
        let c = CoefficientSet::constant(0.0, 0.0);
        let p = pp([0.3, -0.2, 0.1], [1.0, 2.0, -0.5]);
        let v = solve_attenuation(&ball(), &PhaseFn::constant(1.0), &c, &p, &q).unwrap();
        let t = ball().extended_escape_time(&p.x, &p.omega).unwrap();
        assert_abs_diff_eq!(v, t, epsilon = 1e-13);
    }

    #[test]
    fn constant_attenuation_closed_form() {
        let q = RayQuadrature::default();
        let c = CoefficientSet::constant(0.4, 0.6);
        let p = pp([0.1, 0.5, -0.3], [0.0, -1.0, 0.2]);
        let t = ball().extended_escape_time(&p.x, &p.omega).unwrap();
        let v = solve_attenuation(&ball(), &PhaseFn::constant(1.0), &c, &p, &q).unwrap();
        assert_abs_diff_eq!(v, 1.0 - (-t).exp(), epsilon = 1e-12);
    }

    #[test]
    fn inflow_points_return_zero() {
        let q = RayQuadrature::default();
        let c = CoefficientSet::constant(1.0, 0.0);
        let p = pp([0.0, 0.0, -1.0], [0.0, 0.0, 1.0]);
        assert_eq!(
            solve_attenuation(&ball(), &PhaseFn::constant(1.0), &c, &p, &q).unwrap(),
            0.0
        );
    }

    #[test]
    fn gradient_of_zero_source_is_zero() {
        let q = RayQuadrature::default();
        let c = CoefficientSet::constant(1.0, 0.0);
        let zero_grad: GradientFn = Arc::new(|_, _, _| Vec3::zeros());
        let p = pp([0.1, 0.2, 0.3], [1.0, 0.0, 0.0]);
        let g = solve_attenuation_gradient(
            &ball(),
            &PhaseFn::constant(0.0),
            &zero_grad,
            &c,
            &zero_grad,
            &p,
            &q,
            false,
        )
        .unwrap();
        assert_eq!(g, Vec3::zeros());
    }

    #[test]
    fn boundary_term_reproduces_escape_time_gradient() {
        let q = RayQuadrature::default();
        let c = CoefficientSet::constant(0.0, 0.0);
        let zero_grad: GradientFn = Arc::new(|_, _, _| Vec3::zeros());
        let p = pp([0.2, -0.4, 0.3], [0.3, 0.3, -1.0]);
        let g = solve_attenuation_gradient(
            &ball(),
            &PhaseFn::constant(1.0),
            &zero_grad,
            &c,
            &zero_grad,
            &p,
            &q,
            false,
        )
        .unwrap();
        let (_, exact) = ball_escape_closed_form(&p.x, &p.omega).unwrap();
        assert_abs_diff_eq!(g, exact, epsilon = 1e-12);
    }

    #[test]
    fn derivative_source_examples() {
        let f = PhaseFn::spatial(|x| x.x * x.x + x.y);
        let df = PhaseFn::spatial(|x| 2.0 * x.x);
        let e1 = MultiIndex::unit(0);
        let f_tab = DerivativeTable::new("f")
            .with(MultiIndex::ZERO, f.clone())
            .with(e1, df.clone());
        let psi = PhaseFn::spatial(|x| x.z + 3.0);
        let psi_tab = DerivativeTable::new("psi").with(MultiIndex::ZERO, psi.clone());

        // constant Σ: Leibniz sum vanishes
        let const_sigma = DerivativeTable::new("sigma")
            .with(MultiIndex::ZERO, PhaseFn::constant(2.0))
            .with(e1, PhaseFn::constant(0.0));
        let fa = derivative_source(&f_tab, &const_sigma, &psi_tab, e1).unwrap();
        let x = Vec3::new(0.3, 0.1, -0.2);
        let w = Vec3::new(0.0, 0.0, 1.0);
        assert_abs_diff_eq!(fa.eval(&x, &w, 0.0), df.eval(&x, &w, 0.0));

        // Σ = x₁: f_α = ∂₁f - ψ
        let lin_sigma = DerivativeTable::new("sigma")
            .with(MultiIndex::ZERO, PhaseFn::spatial(|x| x.x))
            .with(e1, PhaseFn::constant(1.0));
        let fa = derivative_source(&f_tab, &lin_sigma, &psi_tab, e1).unwrap();
        assert_abs_diff_eq!(fa.eval(&x, &w, 0.0), 2.0 * x.x - (x.z + 3.0));

        let missing = derivative_source(&f_tab, &lin_sigma, &DerivativeTable::new("psi"), e1);
        assert!(matches!(missing, Err(Error::MissingDerivative { table: "psi", .. })));
    }

    #[test]
    fn linearity_in_source() {
        let q = RayQuadrature::default();
        let c = CoefficientSet::new(PhaseFn::spatial(|x| 1.0 + 0.5 * x.x), 0.2);
        let f1 = PhaseFn::spatial(|x| x.y * x.y);
        let f2 = PhaseFn::new(|x, w, _| (x.z * w.x).cos());
        let (a, b) = (1.7, -0.3);
        let f3 = {
            let (f1, f2) = (f1.clone(), f2.clone());
            PhaseFn::new(move |x, w, e| a * f1.eval(x, w, e) + b * f2.eval(x, w, e))
        };
        let p = pp([0.2, 0.3, -0.1], [0.5, -0.5, 0.7]);
        let d = ball();
        let lhs = solve_attenuation(&d, &f3, &c, &p, &q).unwrap();
        let rhs =
            a * solve_attenuation(&d, &f1, &c, &p, &q).unwrap() + b * solve_attenuation(&d, &f2, &c, &p, &q).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }
}
