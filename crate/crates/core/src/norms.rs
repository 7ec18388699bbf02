//! Discrete anisotropic Sobolev norms, trace norms and Green-identity checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{DiscreteField, GridSpec, PhaseFn};
use crate::geometry::{ConvexDomain, Vec3};
use crate::quadrature::CompensatedSum;
use crate::surface::{DomainQuadrature, SurfacePoint};

/// Largest spatial order accepted by [`h_norm`].
pub const MAX_SPATIAL_ORDER: usize = 3;

/// Threshold below which a field value counts as zero for [`h0_margin`].
pub const VANISHING_THRESHOLD: f64 = 1e-10;

/// Differentiation orders `(m1, m2, m3)` in space, direction and energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormOrder {
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
}

impl NormOrder {
    pub fn spatial(m: usize) -> Self {
        Self { m1: m, m2: 0, m3: 0 }
    }
}

fn check_order(grid: &GridSpec, order: NormOrder) -> Result<()> {
    if order.m1 > MAX_SPATIAL_ORDER {
        return Err(Error::OrderTooHigh {
            order: order.m1,
            max: MAX_SPATIAL_ORDER,
        });
    }
    // Angular and energy derivatives are not discretized.
    if order.m2 > 0 || order.m3 > 0 {
        return Err(Error::OrderTooHigh {
            order: order.m2.max(order.m3),
            max: 0,
        });
    }
    let stencil = (2 * order.m1 + 1).pow(3);
    if grid.lattice.n_interior() < stencil {
        return Err(Error::GridTooCoarse(format!(
            "{} interior nodes cannot carry an order-{} stencil",
            grid.lattice.n_interior(),
            order.m1
        )));
    }
    Ok(())
}

/// `(Σ_{|α|<=m1} ‖∂^α ψ‖²)^{1/2}` over the lattice × sphere × energy measure.
pub fn h_norm(psi: &DiscreteField, order: NormOrder) -> Result<f64> {
    check_order(psi.grid(), order)?;
    let total: CompensatedSum = psi
        .derivatives_up_to(order.m1)
        .iter()
        .map(|(_, d)| d.inner(d))
        .collect();
    Ok(total.value().max(0.0).sqrt())
}

/// Which part of the boundary a trace lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSide {
    Inflow,
    Outflow,
}

impl TraceSide {
    fn contains(self, dot: f64) -> bool {
        match self {
            TraceSide::Inflow => dot < 0.0,
            TraceSide::Outflow => dot > 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceWeighting {
    Plain,
    Tau,
}

/// One boundary phase point with its quadrature weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub position: Vec3,
    pub omega: Vec3,
    pub energy: f64,
    /// `ω·ν(y)`.
    pub dot: f64,
    /// Surface area × sphere weight × energy weight.
    pub weight: f64,
    pub value: f64,
}

/// Values on `Γ₋` or `Γ₊` at boundary quadrature points.
#[derive(Clone, Debug)]
pub struct TraceField {
    pub side: TraceSide,
    pub domain: ConvexDomain,
    pub points: Vec<TracePoint>,
}

impl TraceField {
    fn build<F>(grid: &GridSpec, surface: &[SurfacePoint], side: TraceSide, value: F) -> Self
    where
        F: Fn(&SurfacePoint, usize, usize) -> f64 + Sync,
    {
        let dirs = grid.sphere.nodes();
        let sw = grid.sphere.weights();
        let points = surface
            .par_iter()
            .flat_map_iter(|sp| {
                let mut out = Vec::new();
                for (k, (&e, &ew)) in grid.energy.nodes.iter().zip(&grid.energy.weights).enumerate() {
                    for (j, w) in dirs.iter().enumerate() {
                        let dot = w.dot(&sp.normal);
                        if side.contains(dot) {
                            out.push(TracePoint {
                                position: sp.position,
                                omega: *w,
                                energy: e,
                                dot,
                                weight: sp.area * sw[j] * ew,
                                value: value(sp, j, k),
                            });
                        }
                    }
                }
                out
            })
            .collect();
        Self {
            side,
            domain: grid.domain.clone(),
            points,
        }
    }

    /// Trace of a discrete field, interpolated onto the boundary triangulation.
    pub fn of_field(psi: &DiscreteField, side: TraceSide) -> Self {
        let grid = psi.grid();
        Self::build(grid, grid.surface().points(), side, |sp, j, k| {
            psi.interpolate(&sp.position, j, k)
        })
    }

    /// Trace of an analytic field.
    pub fn of_fn(grid: &GridSpec, g: &PhaseFn, side: TraceSide) -> Self {
        let dirs = grid.sphere.nodes();
        let energies = &grid.energy.nodes;
        Self::build(grid, grid.surface().points(), side, |sp, j, k| {
            g.eval(&sp.position, &dirs[j], energies[k])
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `τ₋(y,ω)` on the inflow side (forward chord) or `τ₊(y,ω)` on the outflow side.
fn chord(domain: &ConvexDomain, p: &TracePoint, side: TraceSide) -> Result<f64> {
    match side {
        TraceSide::Outflow => domain.extended_escape_time(&p.position, &p.omega),
        TraceSide::Inflow => domain.extended_escape_time(&p.position, &(-p.omega)),
    }
}

/// `(∫ g² |ω·ν|)^{1/2}`, optionally weighted by the boundary-to-boundary chord.
pub fn trace_norm(tr: &TraceField, weighting: TraceWeighting) -> Result<f64> {
    if tr.points.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let terms: Vec<f64> = tr
        .points
        .par_iter()
        .map(|p| {
            let base = p.weight * p.dot.abs() * p.value * p.value;
            Ok(match weighting {
                TraceWeighting::Plain => base,
                TraceWeighting::Tau => base * chord(&tr.domain, p, tr.side)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(terms.into_iter().collect::<CompensatedSum>().value().sqrt())
}

fn boundary_sum(psi: &DiscreteField, m: usize, outflow_only: bool) -> Result<f64> {
    let grid = psi.grid();
    check_order(grid, NormOrder::spatial(m))?;
    let derivs = psi.derivatives_up_to(m);
    let dirs = grid.sphere.nodes();
    let sw = grid.sphere.weights();
    let ew = &grid.energy.weights;
    let partials: Vec<f64> = grid
        .surface()
        .points()
        .par_iter()
        .map(|sp| {
            let mut acc = CompensatedSum::default();
            for (k, &wk) in ew.iter().enumerate() {
                for (j, w) in dirs.iter().enumerate() {
                    let dot = w.dot(&sp.normal);
                    if outflow_only && dot <= 0.0 {
                        continue;
                    }
                    let weight = sp.area * sw[j] * wk * dot.abs();
                    for (_, d) in &derivs {
                        let v = d.interpolate(&sp.position, j, k);
                        acc.add(weight * v * v);
                    }
                }
            }
            acc.value()
        })
        .collect();
    Ok(partials.into_iter().collect::<CompensatedSum>().value().max(0.0).sqrt())
}

/// `(Σ_{|α|<=m} ‖∂^α ψ‖²_{T²(Γ₊)})^{1/2}`.
pub fn boundary_h_norm(psi: &DiscreteField, m: usize) -> Result<f64> {
    boundary_sum(psi, m, true)
}

/// The same sum over the whole boundary with weight `|ω·ν|`; agrees with
/// [`boundary_h_norm`] for fields vanishing near `Γ̄₋`.
pub fn boundary_h_norm_full(psi: &DiscreteField, m: usize) -> Result<f64> {
    boundary_sum(psi, m, false)
}

/// Resolution of the mapped quadrature used by [`green_residual`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreenQuadrature {
    pub radial: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for GreenQuadrature {
    fn default() -> Self {
        Self {
            radial: 10,
            n_theta: 12,
            n_phi: 24,
        }
    }
}

impl GreenQuadrature {
    /// Resolution matched to the lattice: the interpolated integrands are
    /// only piecewise smooth on the cell scale, so a fixed rule would stall
    /// the refinement at its own error.
    pub fn for_grid(grid: &GridSpec) -> Self {
        let across = grid.lattice.dims().into_iter().max().unwrap_or(0);
        let base = Self::default();
        Self {
            radial: base.radial.max(across),
            n_theta: base.n_theta.max(across),
            n_phi: base.n_phi.max(2 * across),
        }
    }
}

/// `∫(ω·∇ψ)v + ∫(ω·∇v)ψ − ∫_{∂G×S×I}(ω·ν)vψ`, which vanishes exactly.
pub fn green_residual(psi: &DiscreteField, v: &DiscreteField) -> Result<f64> {
    green_residual_with(psi, v, GreenQuadrature::for_grid(psi.grid()))
}

/// [`green_residual`] with an explicit quadrature resolution.
///
/// Transport derivatives are central differences on the lattice; volume and
/// surface integrals use a mapped Gauss rule on the smooth domain, with the
/// lattice fields interpolated at its nodes.
pub fn green_residual_with(psi: &DiscreteField, v: &DiscreteField, q: GreenQuadrature) -> Result<f64> {
    let grid = psi.grid();
    if v.grid().field_len() != grid.field_len() || v.grid().n_directions() != grid.n_directions() {
        return Err(Error::QuadratureMismatch {
            field: v.grid().n_directions(),
            quadrature: grid.n_directions(),
        });
    }
    check_order(grid, NormOrder::spatial(1))?;
    let dpsi = psi.transport_derivative();
    let dv = v.transport_derivative();
    let rule = DomainQuadrature::new(&grid.domain, q.radial, q.n_theta, q.n_phi);
    let n_dir = grid.n_directions();
    let sw = grid.sphere.weights();
    let ew = &grid.energy.weights;
    let dirs = grid.sphere.nodes();
    let partials: Vec<f64> = (0..n_dir * grid.energy.len())
        .into_par_iter()
        .map(|s| {
            let (j, k) = (s % n_dir, s / n_dir);
            let mut acc = CompensatedSum::default();
            for (x, wx) in &rule.volume {
                let a = dpsi.interpolate(x, j, k) * v.interpolate(x, j, k);
                let b = dv.interpolate(x, j, k) * psi.interpolate(x, j, k);
                acc.add(wx * (a + b));
            }
            for sp in &rule.surface {
                let flux =
                    dirs[j].dot(&sp.normal) * v.interpolate(&sp.position, j, k) * psi.interpolate(&sp.position, j, k);
                acc.add(-sp.area * flux);
            }
            sw[j] * ew[k] * acc.value()
        })
        .collect();
    Ok(partials.into_iter().collect::<CompensatedSum>().value())
}

/// Vanishing margin of a field near `Γ̄₋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct H0Margin {
    pub eta: f64,
    pub pass: bool,
}

/// Largest `η` with `|ψ| < 1e-10` wherever `t̃ < η`.
///
/// Lattice nodes are complemented by inflow and tangential boundary points
/// of the grid's triangulation (where `t̃ = 0`), with values interpolated.
pub fn h0_margin(psi: &DiscreteField) -> H0Margin {
    let grid = psi.grid();
    let lat = &grid.lattice;
    let dirs = grid.sphere.nodes();
    let n_dir = grid.n_directions();
    let domain = &grid.domain;
    let eta = (0..n_dir * grid.energy.len())
        .into_par_iter()
        .map(|s| {
            let (j, k) = (s % n_dir, s / n_dir);
            let slice = psi.slice(j, k);
            let w = dirs[j];
            let mut eta = f64::INFINITY;
            for sp in grid.surface().points() {
                if w.dot(&sp.normal) <= 0.0 && lat.interpolate(slice, &sp.position).abs() >= VANISHING_THRESHOLD {
                    return 0.0;
                }
            }
            for (n, value) in slice.iter().take(lat.n_interior()).enumerate() {
                if value.abs() >= VANISHING_THRESHOLD {
                    let t = domain.extended_escape_time(&lat.position(n), &w).unwrap_or(0.0);
                    eta = eta.min(t);
                }
            }
            eta
        })
        .reduce(|| f64::INFINITY, f64::min);
    let eta = eta.min(domain.diameter());
    H0Margin {
        eta,
        pass: eta > 2.0 * grid.h(),
    }
}

/// `Σ_{|α|<=m} ⟨∂^α(ω·∇ψ), ∂^α ψ⟩`, the transport part of the accretivity form.
pub fn transport_form(psi: &DiscreteField, m: usize) -> Result<f64> {
    check_order(psi.grid(), NormOrder::spatial(m))?;
    let t = psi.transport_derivative();
    let total: CompensatedSum = t
        .derivatives_up_to(m)
        .iter()
        .zip(psi.derivatives_up_to(m))
        .map(|((_, a), (_, b))| a.inner(&b))
        .collect();
    Ok(total.value())
}
