//! Restricted collision operator `K_r`, its constructive norm bound, source
//! iteration for `ω·∇ψ + Σψ + Cψ - K_rψ = f`, and the inflow lift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attenuation::transport_sweep;
use crate::error::{Error, Result};
use crate::fields::{
    central_derivative, leibniz_constant, sup_norm_estimate, CoefficientSet, DiscreteField, GridSpec, KernelFn,
    MultiIndex, PhaseFn,
};
use crate::geometry::{BoundaryKind, ConvexDomain, PhasePoint, Vec3};
use crate::norms::{h_norm, NormOrder};
use crate::quadrature::{RayQuadrature, SphereQuadrature};

/// `Σ_j w_j σ²(x, ω'_j, ω, E) ψ(ω'_j)` for a field given as a function of `ω'`.
pub fn apply_scatter<F>(
    kernel: &KernelFn,
    psi: F,
    x: &Vec3,
    omega: &Vec3,
    energy: f64,
    sphere: &SphereQuadrature,
) -> f64
where
    F: Fn(usize, &Vec3) -> f64,
{
    sphere
        .nodes()
        .iter()
        .zip(sphere.weights())
        .enumerate()
        .map(|(j, (w_in, &q))| q * kernel.eval(x, w_in, omega, energy) * psi(j, w_in))
        .sum()
}

/// [`apply_scatter`] at one stored node of a discrete field.
pub fn apply_scatter_node(
    kernel: &KernelFn,
    psi: &DiscreteField,
    sphere: &SphereQuadrature,
    node: usize,
    direction: usize,
    energy: usize,
) -> Result<f64> {
    let grid = psi.grid();
    if grid.n_directions() != sphere.len() {
        return Err(Error::QuadratureMismatch {
            field: grid.n_directions(),
            quadrature: sphere.len(),
        });
    }
    let x = grid.lattice.position(node);
    let omega = sphere.nodes()[direction];
    let e = grid.energy.nodes[energy];
    Ok(apply_scatter(
        kernel,
        |j, _| psi.get(node, j, energy),
        &x,
        &omega,
        e,
        sphere,
    ))
}

/// `K_r ψ` collocated at every interior node; ghosts extrapolated.
pub fn scatter_field(kernel: &KernelFn, psi: &DiscreteField) -> DiscreteField {
    let grid = psi.grid();
    let lat = &grid.lattice;
    let sphere = &grid.sphere;
    let n_dir = grid.n_directions();
    let n_int = lat.n_interior();
    let mut out = DiscreteField::zeros(grid);
    for k in 0..grid.energy.len() {
        let e = grid.energy.nodes[k];
        // Node-major evaluation so each kernel row is built once per node.
        let rows: Vec<Vec<f64>> = (0..n_int)
            .into_par_iter()
            .map(|n| {
                let x = lat.position(n);
                sphere
                    .nodes()
                    .iter()
                    .map(|w| apply_scatter(kernel, |j, _| psi.get(n, j, k), &x, w, e, sphere))
                    .collect()
            })
            .collect();
        for (n, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().take(n_dir) {
                out.set(n, j, k, v);
            }
        }
    }
    out.fill_ghosts();
    out
}

/// The combinatorial constant of the `K_r` bound.
///
/// Squaring the Leibniz sum with `(Σ_{i<=n} a_i)² <= n Σ a_i²` costs the
/// largest term count `max_α #{β <= α}`; regrouping by `β` then collects
/// `Σ_{α >= β, |α| <= m} binom(α,β)²` in front of each `‖∂^β ψ‖²`.
pub fn scatter_constant(m: usize) -> f64 {
    let alphas = MultiIndex::all_up_to(m);
    let terms = alphas.iter().map(|a| a.below().len()).max().unwrap_or(1) as f64;
    let regrouped = alphas
        .iter()
        .map(|beta| {
            alphas
                .iter()
                .filter(|a| beta.le(a))
                .map(|a| a.binomial(beta).powi(2))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    terms * regrouped
}

/// Grid estimates `(N₁, N₂)` of the two mixed `W^{∞,m}(L¹)` kernel norms.
pub fn kernel_mixed_norms(kernel: &KernelFn, m: usize, grid: &GridSpec) -> (f64, f64) {
    let lat = &grid.lattice;
    let h = lat.spacing();
    let dirs = grid.sphere.nodes();
    let wts = grid.sphere.weights();
    let alphas = MultiIndex::all_up_to(m);
    (0..lat.n_interior())
        .into_par_iter()
        .map(|n| {
            let x = lat.position(n);
            let depth = -lat.distance(n);
            let mut n1 = 0.0f64;
            let mut n2 = 0.0f64;
            for &e in &grid.energy.nodes {
                for &alpha in &alphas {
                    if depth <= alpha.order() as f64 * h {
                        continue;
                    }
                    // table[i][o] = |∂^α σ²(x, ω'_i, ω_o, E)|
                    let table: Vec<Vec<f64>> = dirs
                        .iter()
                        .map(|wi| {
                            dirs.iter()
                                .map(|wo| {
                                    let f = |p: &Vec3| kernel.eval(p, wi, wo, e);
                                    central_derivative(&f, &x, alpha, h).abs()
                                })
                                .collect()
                        })
                        .collect();
                    for o in 0..dirs.len() {
                        let s: f64 = (0..dirs.len()).map(|i| wts[i] * table[i][o]).sum();
                        n1 = n1.max(s);
                    }
                    for row in &table {
                        let s: f64 = row.iter().zip(wts).map(|(v, w)| v * w).sum();
                        n2 = n2.max(s);
                    }
                }
            }
            (n1, n2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

/// `√(C_m N₁ N₂)`: the constructive bound on `‖K_r‖` in `H^{(m,0,0)}`.
pub fn scatter_norm_bound(kernel: &KernelFn, m: usize, grid: &GridSpec) -> f64 {
    let (n1, n2) = kernel_mixed_norms(kernel, m, grid);
    (scatter_constant(m) * n1 * n2).sqrt()
}

/// Power-iteration estimate of the discrete operator norm of `K_r` in
/// `H^{(m,0,0)}`, started from a seeded random field.
///
/// For `m = 0` this iterates `K_r* K_r` on interior nodes (ghosts zeroed)
/// with the adjoint taken in the weighted `L²` product, which converges to
/// the exact discrete norm; for
/// `m > 0` it tracks the largest observed ratio `‖K_r ψ‖_m / ‖ψ‖_m` along
/// the power sequence (a lower estimate of the norm).
pub fn estimate_scatter_operator_norm(
    kernel: &KernelFn,
    grid: &GridSpec,
    m: usize,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; grid.field_len()];
    for v in values.iter_mut() {
        *v = rng.random_range(0.0..1.0);
    }
    let mut psi = DiscreteField::from_values(grid, values)?;
    if m == 0 {
        psi.zero_ghosts();
    } else {
        psi.fill_ghosts();
    }
    let order = NormOrder::spatial(m);
    let mut best = 0.0f64;
    for _ in 0..iterations {
        let norm = h_norm(&psi, order)?;
        if norm == 0.0 {
            return Ok(0.0);
        }
        psi = psi.scaled(1.0 / norm);
        let mut k_psi = scatter_field(kernel, &psi);
        if m == 0 {
            k_psi.zero_ghosts();
            let mut back = adjoint_scatter_field(kernel, &k_psi);
            back.zero_ghosts();
            // ⟨K*Kψ, ψ⟩ = ‖Kψ‖² for unit ψ; the Rayleigh quotient increases.
            best = best.max(back.inner(&psi).max(0.0).sqrt());
            psi = back;
        } else {
            best = best.max(h_norm(&k_psi, order)?);
            psi = k_psi;
        }
    }
    Ok(best)
}

/// `K_r* φ` with respect to the weighted discrete `L²` product.
fn adjoint_scatter_field(kernel: &KernelFn, phi: &DiscreteField) -> DiscreteField {
    let grid = phi.grid();
    let lat = &grid.lattice;
    let sphere = &grid.sphere;
    let mut out = DiscreteField::zeros(grid);
    for k in 0..grid.energy.len() {
        let e = grid.energy.nodes[k];
        let rows: Vec<Vec<f64>> = (0..lat.n_interior())
            .into_par_iter()
            .map(|n| {
                let x = lat.position(n);
                sphere
                    .nodes()
                    .iter()
                    .map(|w_in| {
                        sphere
                            .nodes()
                            .iter()
                            .zip(sphere.weights())
                            .enumerate()
                            .map(|(o, (w_out, &q))| q * kernel.eval(&x, w_in, w_out, e) * phi.get(n, o, k))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        for (n, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out.set(n, j, k, v);
            }
        }
    }
    out.fill_ghosts();
    out
}

/// Convergence record of a source iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub estimated_rate: f64,
    /// `C″ = c(m) ‖Σ‖_{W^{∞,m}} + ‖K_r‖` bound that the shift had to exceed.
    pub threshold: f64,
}

impl IterationReport {
    fn rate_from_history(history: &[f64]) -> f64 {
        // Mean of the last few successive ratios, skipping the start-up step.
        let ratios: Vec<f64> = history
            .windows(2)
            .skip(1)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect();
        let tail = &ratios[ratios.len().saturating_sub(3)..];
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

/// Source iteration controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Spatial order `m` of the space in which the shift threshold is checked.
    pub order: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            order: 0,
        }
    }
}

/// `C″ = c(m) ‖Σ‖_{W^{∞,(m,0,0)}} + scatter_norm_bound`.
pub fn shift_threshold(coeffs: &CoefficientSet, grid: &GridSpec, m: usize) -> Result<f64> {
    let sigma = leibniz_constant(m) * sup_norm_estimate(&coeffs.sigma_t, m, grid)?;
    let bound = coeffs.scatter.as_ref().map_or(0.0, |k| scatter_norm_bound(k, m, grid));
    Ok(sigma + bound)
}

/// Solve `ω·∇ψ + Σψ + Cψ - K_rψ = f` with zero inflow by source iteration.
pub fn solve_scattering(
    f: &PhaseFn,
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    quad: &RayQuadrature,
    opts: &IterationOptions,
) -> Result<(DiscreteField, IterationReport)> {
    let dirs = grid.sphere.nodes().to_vec();
    let energies = grid.energy.nodes.clone();
    let src = |y: &Vec3, j: usize, k: usize| f.eval(y, &dirs[j], energies[k]);
    iterate(coeffs, grid, quad, opts, src)
}

fn iterate<S>(
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    quad: &RayQuadrature,
    opts: &IterationOptions,
    src: S,
) -> Result<(DiscreteField, IterationReport)>
where
    S: Fn(&Vec3, usize, usize) -> f64 + Sync,
{
    let dirs = grid.sphere.nodes().to_vec();
    let energies = grid.energy.nodes.clone();
    let mu = |y: &Vec3, j: usize, k: usize| coeffs.total_attenuation(y, &dirs[j], energies[k]);
    let mut threshold = 0.0;
    if coeffs.scatter.is_some() {
        threshold = shift_threshold(coeffs, grid, opts.order)?;
        if coeffs.shift <= threshold {
            return Err(Error::ShiftTooSmall {
                shift: coeffs.shift,
                threshold,
            });
        }
    }
    let (psi, mut report) = source_iteration(coeffs.scatter.as_ref(), grid, quad, opts, mu, src, None)?;
    report.threshold = threshold;
    Ok((psi, report))
}

/// Picard iteration `ψ_{k+1} = A⁻¹(src + fixed + K_r ψ_k)` where `A⁻¹` is the
/// characteristic sweep with attenuation `mu` and the two discrete terms are
/// interpolated along each ray. Shift thresholds are the caller's business.
pub(crate) fn source_iteration<M, S>(
    kernel: Option<&KernelFn>,
    grid: &GridSpec,
    quad: &RayQuadrature,
    opts: &IterationOptions,
    mu: M,
    src: S,
    fixed: Option<&DiscreteField>,
) -> Result<(DiscreteField, IterationReport)>
where
    M: Fn(&Vec3, usize, usize) -> f64 + Sync,
    S: Fn(&Vec3, usize, usize) -> f64 + Sync,
{
    let mut report = IterationReport::default();
    let Some(kernel) = kernel else {
        let psi = transport_sweep(grid, quad, &mu, &src, fixed)?;
        report.iterations = 1;
        report.residual_history.push(psi.sup_abs());
        report.converged = true;
        return Ok((psi, report));
    };
    // The source part of every sweep is the same, so sweep it once and
    // iterate on the scattered part alone.
    let base = transport_sweep(grid, quad, &mu, &src, fixed)?;
    let zero = |_: &Vec3, _: usize, _: usize| 0.0;
    let mut psi = DiscreteField::zeros(grid);
    let mut next = base.clone();
    for it in 1..=opts.max_iter {
        let residual = next.zip_map(&psi, |a, b| a - b).sup_abs();
        psi = next;
        report.iterations = it;
        report.residual_history.push(residual);
        if residual < opts.tol {
            report.converged = true;
            break;
        }
        let scattered = scatter_field(kernel, &psi);
        next = transport_sweep(grid, quad, &mu, zero, Some(&scattered))?.zip_map(&base, |a, b| a + b);
    }
    report.estimated_rate = IterationReport::rate_from_history(&report.residual_history);
    if !report.converged {
        return Err(Error::MaxIterationsExceeded {
            iterations: report.iterations,
            residual: report.residual_history.last().copied().unwrap_or(f64::NAN),
        });
    }
    Ok((psi, report))
}

/// Value of the inflow lift at one phase point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftValue {
    pub value: f64,
    /// Set for tangential boundary points, where the lift is 0 by convention.
    pub tangential: bool,
}

/// `L₋g = e^{-λ t̃(x,ω)} g(x - t̃(x,ω)ω, ω, E)`.
pub fn lift_inflow(domain: &ConvexDomain, g: &PhaseFn, lambda: f64, p: &PhasePoint) -> Result<LiftValue> {
    if domain.is_on_boundary(&p.x) && domain.classify_boundary(&p.x, &p.omega)?.kind == BoundaryKind::Tangential {
        return Ok(LiftValue {
            value: 0.0,
            tangential: true,
        });
    }
    let t = domain.extended_escape_time(&p.x, &p.omega)?;
    let y = p.x - t * p.omega;
    Ok(LiftValue {
        value: (-lambda * t).exp() * g.eval(&y, &p.omega, p.energy),
        tangential: false,
    })
}

/// Solve with inflow data `ψ|Γ₋ = g` through the change of unknown
/// `ψ = u + L₋g`, where `u` solves the zero-inflow problem with source
/// `f - (ω·∇ + Σ + C - K_r) L₋g` and `ω·∇ L₋g = -λ L₋g`.
pub fn solve_with_inflow(
    f: &PhaseFn,
    g: &PhaseFn,
    lambda: f64,
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    quad: &RayQuadrature,
    opts: &IterationOptions,
) -> Result<(DiscreteField, IterationReport)> {
    let domain = &grid.domain;
    let dirs = grid.sphere.nodes().to_vec();
    let energies = grid.energy.nodes.clone();
    let lift = |y: &Vec3, w: &Vec3, e: f64| -> f64 {
        lift_inflow(domain, g, lambda, &PhasePoint::new(*y, *w, e))
            .map(|l| l.value)
            .unwrap_or(0.0)
    };
    let src = |y: &Vec3, j: usize, k: usize| {
        let (w, e) = (&dirs[j], energies[k]);
        let mut v = f.eval(y, w, e) - (coeffs.total_attenuation(y, w, e) - lambda) * lift(y, w, e);
        if let Some(kernel) = &coeffs.scatter {
            v += apply_scatter(kernel, |_, w_in| lift(y, w_in, e), y, w, e, &grid.sphere);
        }
        v
    };
    let (u, report) = iterate(coeffs, grid, quad, opts, src)?;
    let lifted = DiscreteField::from_fn(grid, |x, w, e| lift(x, w, e))?;
    Ok((u.zip_map(&lifted, |a, b| a + b), report))
}
