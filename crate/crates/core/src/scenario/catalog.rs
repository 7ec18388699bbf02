//! Analytic fields that scenarios can name.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fields::{EnergyInterval, KernelFn, PhaseFn, SpaceEnergyFn};
use crate::geometry::{ConvexDomain, Vec3};

/// Spatial shape of a catalog field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldShape {
    Constant {
        value: f64,
    },
    /// `value + gradient·x`.
    Affine {
        value: f64,
        gradient: [f64; 3],
    },
    /// `amplitude (1 - |x - c|²/r²)⁴` inside the ball of radius `r`, else 0.
    Bump {
        amplitude: f64,
        center: [f64; 3],
        radius: f64,
    },
    /// `amplitude t̃^power e^{-t̃}` along the backward characteristic.
    EscapeProfile {
        amplitude: f64,
        power: i32,
    },
    /// `amplitude S((t̃ - margin)/width)` with a smooth step `S`; vanishes
    /// wherever `t̃ <= margin`.
    MarginSource {
        amplitude: f64,
        margin: f64,
        #[serde(default = "default_width")]
        width: f64,
    },
}

fn default_width() -> f64 {
    0.5
}

/// Energy factor of a catalog field.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyProfile {
    #[default]
    Flat,
    /// `((E_m - E)/(E_m - E_0))^power`, vanishing at the final energy.
    Falling { power: i32 },
}

/// A catalog field `shape(x, ω) · (1 + angular·ω) · energy(E)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    #[serde(flatten)]
    pub shape: FieldShape,
    #[serde(default)]
    pub angular: [f64; 3],
    #[serde(default)]
    pub energy: EnergyProfile,
}

/// `C^∞` step, 0 for `s <= 0` and 1 for `s >= 1`.
pub(crate) fn smooth_step(s: f64) -> f64 {
    let g = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (a, b) = (g(s), g(1.0 - s));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

impl FieldSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            shape: FieldShape::Constant { value },
            angular: [0.0; 3],
            energy: EnergyProfile::Flat,
        }
    }

    /// The value if the field is constant in `(x, ω, E)`.
    pub fn constant_value(&self) -> Option<f64> {
        match (&self.shape, &self.energy) {
            (FieldShape::Constant { value }, EnergyProfile::Flat) if self.angular == [0.0; 3] => Some(*value),
            _ => None,
        }
    }

    /// Whether every value of the field is `>= 0`.
    pub fn is_nonnegative(&self) -> bool {
        let angular_ok = Vec3::from(self.angular).norm() <= 1.0;
        let shape_ok = match &self.shape {
            FieldShape::Constant { value } => *value >= 0.0,
            FieldShape::Affine { .. } => false,
            FieldShape::Bump { amplitude, .. }
            | FieldShape::EscapeProfile { amplitude, .. }
            | FieldShape::MarginSource { amplitude, .. } => *amplitude >= 0.0,
        };
        angular_ok && shape_ok
    }

    /// Vanishing margin in `t̃` guaranteed by the shape, if any.
    pub fn margin(&self) -> Option<f64> {
        match &self.shape {
            FieldShape::MarginSource { margin, .. } => Some(*margin),
            _ => None,
        }
    }

    pub fn build(&self, domain: &ConvexDomain, interval: EnergyInterval) -> PhaseFn {
        let angular = Vec3::from(self.angular);
        let energy = self.energy.clone();
        let (e0, em) = (interval.e0(), interval.em());
        let energy_factor = move |e: f64| match energy {
            EnergyProfile::Flat => 1.0,
            EnergyProfile::Falling { power } => ((em - e) / (em - e0)).max(0.0).powi(power),
        };
        let shape: Box<dyn Fn(&Vec3, &Vec3) -> f64 + Send + Sync> = match self.shape.clone() {
            FieldShape::Constant { value } => Box::new(move |_, _| value),
            FieldShape::Affine { value, gradient } => {
                let g = Vec3::from(gradient);
                Box::new(move |x, _| value + g.dot(x))
            }
            FieldShape::Bump {
                amplitude,
                center,
                radius,
            } => {
                let c = Vec3::from(center);
                Box::new(move |x, _| amplitude * (1.0 - (x - c).norm_squared() / (radius * radius)).max(0.0).powi(4))
            }
            FieldShape::EscapeProfile { amplitude, power } => {
                let d = domain.clone();
                Box::new(move |x, w| {
                    let t = d.extended_escape_time(x, w).unwrap_or(0.0);
                    amplitude * t.powi(power) * (-t).exp()
                })
            }
            FieldShape::MarginSource {
                amplitude,
                margin,
                width,
            } => {
                let d = domain.clone();
                Box::new(move |x, w| {
                    let t = d.extended_escape_time(x, w).unwrap_or(0.0);
                    amplitude * smooth_step((t - margin) / width)
                })
            }
        };
        PhaseFn::new(move |x, w, e| shape(x, w) * (1.0 + angular.dot(w)) * energy_factor(e))
    }
}

/// Scattering kernels `σ²(x, ω' → ω, E)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `strength / 4π` everywhere.
    Isotropic { strength: f64 },
    /// `strength (1 + anisotropy ω'·ω) / 4π`.
    LinearAnisotropic { strength: f64, anisotropy: f64 },
    /// `strength (1 - |x|²/r²)⁴₊ / 4π`, vanishing outside the ball of radius `r`.
    InteriorIsotropic { strength: f64, radius: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> KernelFn {
        match *self {
            KernelSpec::Isotropic { strength } => KernelFn::new(move |_, _, _, _| strength / (4.0 * PI)),
            KernelSpec::LinearAnisotropic { strength, anisotropy } => {
                KernelFn::new(move |_, wi, wo, _| strength * (1.0 + anisotropy * wi.dot(wo)) / (4.0 * PI))
            }
            KernelSpec::InteriorIsotropic { strength, radius } => KernelFn::new(move |x, _, _, _| {
                strength * (1.0 - x.norm_squared() / (radius * radius)).max(0.0).powi(4) / (4.0 * PI)
            }),
        }
    }
}

/// Constant stopping power `a` with the lower bound `κ` for `-a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSpec {
    pub value: f64,
    pub kappa: f64,
}

impl StoppingSpec {
    pub fn build(&self) -> SpaceEnergyFn {
        SpaceEnergyFn::constant(self.value)
    }
}
