//! Coefficient fields, grid sampling, sup-norm estimates and the scattering
//! kernel support condition.

mod discrete;
mod grid;
mod multi_index;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub use discrete::DiscreteField;
pub use grid::{EnergyGrid, GridMetadata, GridSpec, Lattice, GHOST_LAYERS};
pub use multi_index::{binomial, leibniz_constant, leibniz_factor, MultiIndex};

/// Energy interval `I = [E0, Em]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct EnergyInterval {
    e0: f64,
    em: f64,
}

impl EnergyInterval {
    pub fn new(e0: f64, em: f64) -> Result<Self> {
        if !(e0.is_finite() && em.is_finite() && e0 >= 0.0 && em > e0) {
            return Err(Error::config(
                "energy",
                format!("need 0 <= E0 < Em < inf, got [{e0}, {em}]"),
            ));
        }
        Ok(Self { e0, em })
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn em(&self) -> f64 {
        self.em
    }

    pub fn width(&self) -> f64 {
        self.em - self.e0
    }
}

impl TryFrom<(f64, f64)> for EnergyInterval {
    type Error = Error;
    fn try_from(v: (f64, f64)) -> Result<Self> {
        Self::new(v.0, v.1)
    }
}

impl From<EnergyInterval> for (f64, f64) {
    fn from(i: EnergyInterval) -> Self {
        (i.e0, i.em)
    }
}

/// A field on phase space, `(x, ω, E) ↦ value`.
#[derive(Clone)]
pub struct PhaseFn(Arc<dyn Fn(&Vec3, &Vec3, f64) -> f64 + Send + Sync>);

impl PhaseFn {
    pub fn new(f: impl Fn(&Vec3, &Vec3, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _, _| c)
    }

    /// A field depending on position only.
    pub fn spatial(f: impl Fn(&Vec3) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(move |x, _, _| f(x))
    }

    #[inline]
    pub fn eval(&self, x: &Vec3, omega: &Vec3, energy: f64) -> f64 {
        (self.0)(x, omega, energy)
    }
}

impl fmt::Debug for PhaseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PhaseFn(..)")
    }
}

/// A scattering kernel `σ²(x, ω', ω, E)`.
#[derive(Clone)]
pub struct KernelFn(Arc<dyn Fn(&Vec3, &Vec3, &Vec3, f64) -> f64 + Send + Sync>);

impl KernelFn {
    pub fn new(f: impl Fn(&Vec3, &Vec3, &Vec3, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn zero() -> Self {
        Self::new(|_, _, _, _| 0.0)
    }

    /// `σ²(x, ω', ω, E)`: `omega_in` is the pre-collision direction `ω'`.
    #[inline]
    pub fn eval(&self, x: &Vec3, omega_in: &Vec3, omega: &Vec3, energy: f64) -> f64 {
        (self.0)(x, omega_in, omega, energy)
    }
}

impl fmt::Debug for KernelFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("KernelFn(..)")
    }
}

/// A field on `G × I`, used for the stopping power `a(x, E)`.
#[derive(Clone)]
pub struct SpaceEnergyFn(Arc<dyn Fn(&Vec3, f64) -> f64 + Send + Sync>);

impl SpaceEnergyFn {
    pub fn new(f: impl Fn(&Vec3, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
    }

    #[inline]
    pub fn eval(&self, x: &Vec3, energy: f64) -> f64 {
        (self.0)(x, energy)
    }
}

impl fmt::Debug for SpaceEnergyFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SpaceEnergyFn(..)")
    }
}

/// Stopping power `a` with its lower bound `κ` for `-a`.
#[derive(Clone, Debug)]
pub struct StoppingPower {
    pub a: SpaceEnergyFn,
    pub kappa: f64,
}

/// Attenuation `Σ`, optional scattering kernel `σ²`, optional stopping power
/// and the shift constant `C`.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    pub sigma_t: PhaseFn,
    pub scatter: Option<KernelFn>,
    pub stopping: Option<StoppingPower>,
    pub shift: f64,
}

impl CoefficientSet {
    pub fn new(sigma_t: PhaseFn, shift: f64) -> Self {
        Self {
            sigma_t,
            scatter: None,
            stopping: None,
            shift,
        }
    }

    /// Constant attenuation and no scattering.
    pub fn constant(sigma: f64, shift: f64) -> Self {
        Self::new(PhaseFn::constant(sigma), shift)
    }

    pub fn with_scatter(mut self, kernel: KernelFn) -> Self {
        self.scatter = Some(kernel);
        self
    }

    pub fn with_stopping(mut self, a: SpaceEnergyFn, kappa: f64) -> Self {
        self.stopping = Some(StoppingPower { a, kappa });
        self
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    /// `Σ + C` at a phase point.
    #[inline]
    pub fn total_attenuation(&self, x: &Vec3, omega: &Vec3, energy: f64) -> f64 {
        self.sigma_t.eval(x, omega, energy) + self.shift
    }

    /// Check `σ² >= 0` and `-a >= κ` at every grid sample.
    pub fn validate_on(&self, grid: &GridSpec) -> Result<()> {
        if !(self.shift.is_finite() && self.shift >= 0.0) {
            return Err(Error::config("coefficients.shift", "C must be finite and >= 0"));
        }
        let lat = &grid.lattice;
        if let Some(stop) = &self.stopping {
            if stop.kappa <= 0.0 {
                return Err(Error::config("coefficients.stopping.kappa", "kappa must be > 0"));
            }
            for n in 0..lat.n_interior() {
                let x = lat.position(n);
                for &e in &grid.energy.nodes {
                    let minus_a = -stop.a.eval(&x, e);
                    if !(minus_a >= stop.kappa) {
                        return Err(Error::StoppingPowerViolation {
                            kappa: stop.kappa,
                            found: minus_a,
                        });
                    }
                }
            }
        }
        if let Some(k) = &self.scatter {
            let dirs = grid.sphere.nodes();
            for n in 0..lat.n_interior() {
                let x = lat.position(n);
                for &e in &grid.energy.nodes {
                    for wi in dirs {
                        for wo in dirs {
                            let v = k.eval(&x, wi, wo, e);
                            if !(v >= 0.0) {
                                return Err(Error::config(
                                    "coefficients.scatter",
                                    format!("kernel must be non-negative, found {v}"),
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Sample a phase-space field at every interior node, direction and energy;
/// ghost values are extrapolated.
pub fn sample_field(field: &PhaseFn, grid: &GridSpec) -> Result<DiscreteField> {
    DiscreteField::from_fn(grid, |x, omega, e| field.eval(x, omega, e))
}

/// Nested central difference `∂^α f(x)` with step `h`.
pub fn central_derivative<F: Fn(&Vec3) -> f64>(f: &F, x: &Vec3, alpha: MultiIndex, h: f64) -> f64 {
    match alpha.first_axis() {
        None => f(x),
        Some(axis) => {
            let rest = alpha.minus_axis(axis);
            let mut e = Vec3::zeros();
            e[axis] = h;
            (central_derivative(f, &(x + e), rest, h) - central_derivative(f, &(x - e), rest, h)) / (2.0 * h)
        }
    }
}

/// Largest order handled by [`sup_norm_estimate`].
pub const MAX_SUP_ORDER: usize = 4;

/// Estimate `‖field‖_{W^{∞,(m,0,0)}}`: the maximum over `|α| <= m` of the grid
/// supremum of central-difference `∂^α field`, taken over interior nodes
/// farther than `m·h` from the boundary.
pub fn sup_norm_estimate(field: &PhaseFn, m: usize, grid: &GridSpec) -> Result<f64> {
    if m > MAX_SUP_ORDER {
        return Err(Error::OrderTooHigh {
            order: m,
            max: MAX_SUP_ORDER,
        });
    }
    let lat = &grid.lattice;
    let h = lat.spacing();
    let alphas = MultiIndex::all_up_to(m);
    // An order-k stencil reaches k·h from its centre, so each order uses the
    // nodes deep enough for its own stencil to stay inside the domain.
    let best = (0..lat.n_interior())
        .into_par_iter()
        .map(|n| {
            let x = lat.position(n);
            let depth = -lat.distance(n);
            let mut best = 0.0f64;
            for omega in grid.sphere.nodes() {
                for &e in &grid.energy.nodes {
                    let f = |p: &Vec3| field.eval(p, omega, e);
                    for &alpha in &alphas {
                        if depth > alpha.order() as f64 * h {
                            best = best.max(central_derivative(&f, &x, alpha, h).abs());
                        }
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Outcome of [`kernel_support_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportReport {
    pub pass: bool,
    pub worst_violation: f64,
    pub worst_position: Option<[f64; 3]>,
    pub worst_order: Option<[u8; 3]>,
}

/// Threshold below which kernel derivatives count as vanishing.
pub const KERNEL_VANISHING_TOLERANCE: f64 = 1e-10;

/// Check that `∂_x^α σ²` vanishes for `|α| <= m - 1` at every lattice node
/// within distance `margin` of the boundary.
pub fn kernel_support_check(scatter: &KernelFn, m: usize, margin: f64, grid: &GridSpec) -> SupportReport {
    let lat = &grid.lattice;
    let h = lat.spacing();
    let mut report = SupportReport {
        pass: true,
        worst_violation: 0.0,
        worst_position: None,
        worst_order: None,
    };
    if m == 0 {
        return report;
    }
    let alphas = MultiIndex::all_up_to(m - 1);
    let dirs = grid.sphere.nodes();
    for n in 0..lat.n_active() {
        let dist = lat.distance(n);
        if dist > 0.0 || dist.abs() >= margin {
            continue;
        }
        let x = lat.position(n);
        for wi in dirs {
            for wo in dirs {
                for &e in &grid.energy.nodes {
                    let f = |p: &Vec3| scatter.eval(p, wi, wo, e);
                    for &alpha in &alphas {
                        let v = central_derivative(&f, &x, alpha, h).abs();
                        if v > report.worst_violation {
                            report.worst_violation = v;
                            report.worst_position = Some([x.x, x.y, x.z]);
                            report.worst_order = Some(alpha.0);
                        }
                    }
                }
            }
        }
    }
    report.pass = report.worst_violation < KERNEL_VANISHING_TOLERANCE;
    report
}
