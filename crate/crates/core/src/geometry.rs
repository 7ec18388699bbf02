//! Strictly convex domains, boundary classification and escape-time maps.
//!
//! A domain is the sublevel set `{r < 0}` of a smooth level function `r`.
//! The escape time `t(x, ω)` is the distance travelled backwards along `-ω`
//! from `x` before leaving the domain. Its extension to the closed domain is
//! zero on inflow and tangential boundary points and equals the chord length
//! `τ₊` on outflow boundary points.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Band on `ω·ν` inside which a boundary direction counts as tangential.
pub const TANGENTIAL_TOLERANCE: f64 = 1e-10;
/// `|level| <= BOUNDARY_TOLERANCE` qualifies a point as a boundary point.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance on the escape-time root.
pub const ROOT_TOLERANCE: f64 = 1e-12;
/// Gradient norms below this are treated as degenerate.
const GRADIENT_FLOOR: f64 = 1e-12;
/// Square-root arguments below this make the closed-form ball gradient undefined.
const CLOSED_FORM_SQRT_FLOOR: f64 = 1e-14;
/// Relative `|ω·∇r| / |∇r|` below which the implicit escape-time gradient is refused.
const NEAR_TANGENTIAL_GRADIENT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    UnitBall,
    Ball { center: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], semi_axes: [f64; 3] },
}

/// A strictly convex region `{r < 0}` with an analytic level function.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexDomain {
    kind: DomainKind,
    center: Vec3,
    semi_axes: Vec3,
}

impl ConvexDomain {
    pub fn new(kind: DomainKind) -> Result<Self> {
        let (center, semi_axes) = match &kind {
            DomainKind::UnitBall => (Vec3::zeros(), Vec3::repeat(1.0)),
            DomainKind::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::config("domain.radius", "radius must be positive"));
                }
                (Vec3::from(*center), Vec3::repeat(*radius))
            }
            DomainKind::Ellipsoid { center, semi_axes } => {
                if semi_axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return Err(Error::config("domain.semi_axes", "semi-axes must be positive"));
                }
                (Vec3::from(*center), Vec3::from(*semi_axes))
            }
        };
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("domain.center", "center must be finite"));
        }
        Ok(Self {
            kind,
            center,
            semi_axes,
        })
    }

    pub fn unit_ball() -> Self {
        Self::new(DomainKind::UnitBall).expect("unit ball is valid")
    }

    pub fn ball(center: [f64; 3], radius: f64) -> Result<Self> {
        Self::new(DomainKind::Ball { center, radius })
    }

    pub fn ellipsoid(center: [f64; 3], semi_axes: [f64; 3]) -> Result<Self> {
        Self::new(DomainKind::Ellipsoid { center, semi_axes })
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn semi_axes(&self) -> Vec3 {
        self.semi_axes
    }

    /// `Some(radius)` for balls.
    pub fn ball_radius(&self) -> Option<f64> {
        match self.kind {
            DomainKind::UnitBall => Some(1.0),
            DomainKind::Ball { radius, .. } => Some(radius),
            DomainKind::Ellipsoid { .. } => None,
        }
    }

    /// `r(x) = Σ ((x - c)_i / a_i)² - 1`.
    pub fn level(&self, x: &Vec3) -> f64 {
        let u = (x - self.center).component_div(&self.semi_axes);
        u.norm_squared() - 1.0
    }

    pub fn level_gradient(&self, x: &Vec3) -> Vec3 {
        let d = x - self.center;
        Vec3::new(
            2.0 * d.x / (self.semi_axes.x * self.semi_axes.x),
            2.0 * d.y / (self.semi_axes.y * self.semi_axes.y),
            2.0 * d.z / (self.semi_axes.z * self.semi_axes.z),
        )
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.semi_axes.max()
    }

    /// Volume of the domain.
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.semi_axes.x * self.semi_axes.y * self.semi_axes.z
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        (self.center - self.semi_axes, self.center + self.semi_axes)
    }

    /// Signed distance to the boundary, negative inside. Exact for balls,
    /// first-order `r / |∇r|` estimate for ellipsoids.
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        if let Some(radius) = self.ball_radius() {
            return (x - self.center).norm() - radius;
        }
        let g = self.level_gradient(x).norm();
        if g < GRADIENT_FLOOR {
            return -self.semi_axes.min();
        }
        self.level(x) / g
    }

    pub fn is_on_boundary(&self, x: &Vec3) -> bool {
        self.level(x).abs() <= BOUNDARY_TOLERANCE
    }

    /// Radial projection of a point onto the boundary (along the ray from the center).
    pub fn project_to_boundary(&self, x: &Vec3) -> Vec3 {
        let u = (x - self.center).component_div(&self.semi_axes);
        let n = u.norm();
        if n == 0.0 {
            return self.center + Vec3::new(self.semi_axes.x, 0.0, 0.0);
        }
        self.center + (u / n).component_mul(&self.semi_axes)
    }

    pub fn outward_normal(&self, y: &Vec3) -> Result<Vec3> {
        let level = self.level(y);
        if level.abs() > BOUNDARY_TOLERANCE {
            return Err(Error::NotOnBoundary { level });
        }
        let g = self.level_gradient(y);
        let norm = g.norm();
        if norm < GRADIENT_FLOOR {
            return Err(Error::DegenerateGradient { norm });
        }
        Ok(g / norm)
    }

    pub fn classify_boundary(&self, y: &Vec3, omega: &Vec3) -> Result<BoundaryClass> {
        let nu = self.outward_normal(y)?;
        Ok(BoundaryClass::from_dot(omega.dot(&nu)))
    }

    /// Extended escape time `t̃(x, ω)`.
    ///
    /// Balls use the closed form; other domains use safeguarded Newton on
    /// `s ↦ r(x - sω)` bracketed in `[0, diameter]`.
    pub fn extended_escape_time(&self, x: &Vec3, omega: &Vec3) -> Result<f64> {
        match self.ball_radius() {
            Some(radius) => self.ball_escape_time(x, omega, radius),
            None => self.escape_time_by_root_finding(x, omega),
        }
    }

    fn ball_escape_time(&self, x: &Vec3, omega: &Vec3, radius: f64) -> Result<f64> {
        let level = self.level(x);
        if level > BOUNDARY_TOLERANCE {
            return Err(Error::OutsideDomain { level });
        }
        if level >= -BOUNDARY_TOLERANCE {
            let class = self.classify_boundary(x, omega)?;
            if class.kind != BoundaryKind::Outflow {
                return Ok(0.0);
            }
        }
        let u = (x - self.center) / radius;
        let b = u.dot(omega);
        let disc = (b * b + 1.0 - u.norm_squared()).max(0.0);
        Ok(radius * (b + disc.sqrt()).max(0.0))
    }

    /// Generic escape time, valid for every built-in domain kind.
    pub fn escape_time_by_root_finding(&self, x: &Vec3, omega: &Vec3) -> Result<f64> {
        let level = self.level(x);
        if level > BOUNDARY_TOLERANCE {
            return Err(Error::OutsideDomain { level });
        }
        let d = self.diameter();
        let g = |s: f64| self.level(&(x - s * omega));
        let mut lo = 0.0;
        if level >= -BOUNDARY_TOLERANCE {
            if self.classify_boundary(x, omega)?.kind != BoundaryKind::Outflow {
                return Ok(0.0);
            }
            // Step off the boundary into the interior along the chord.
            let mut s = 0.5 * d;
            let mut found = false;
            for _ in 0..80 {
                if g(s) < 0.0 {
                    found = true;
                    break;
                }
                s *= 0.5;
            }
            if !found {
                return Ok(0.0);
            }
            lo = s;
        }
        // Any chord is at most d long; pad so a tip-to-tip chord still brackets.
        let hi = d * (1.0 + 1e-9) + 1e-12;
        if g(hi) <= 0.0 {
            return Err(Error::RootNotBracketed { diameter: d });
        }
        Ok(self.safeguarded_newton(x, omega, lo, hi))
    }

    fn safeguarded_newton(&self, x: &Vec3, omega: &Vec3, mut lo: f64, mut hi: f64) -> f64 {
        let mut s = 0.5 * (lo + hi);
        for _ in 0..200 {
            let p = x - s * omega;
            let val = self.level(&p);
            if val == 0.0 {
                return s;
            }
            if val < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let deriv = -self.level_gradient(&p).dot(omega);
            let newton = if deriv != 0.0 { s - val / deriv } else { f64::NAN };
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - s).abs();
            s = next;
            if step < ROOT_TOLERANCE || hi - lo < ROOT_TOLERANCE {
                break;
            }
        }
        s
    }

    /// Spatial gradient of the escape time at an interior point.
    ///
    /// Balls use the closed form; other domains use implicit differentiation
    /// of `r(x - tω) = 0`, i.e. `∇t = ∇r(y) / (ω·∇r(y))` at `y = x - tω`.
    pub fn escape_time_gradient(&self, x: &Vec3, omega: &Vec3) -> Result<Vec3> {
        if let Some(radius) = self.ball_radius() {
            let u = (x - self.center) / radius;
            return match ball_escape_closed_form(&u, omega) {
                Ok((_, grad)) => Ok(grad),
                Err(Error::GradientUndefinedOnBoundary) => Err(Error::GradientUnavailable(
                    "closed-form gradient undefined at the boundary".into(),
                )),
                Err(e) => Err(e),
            };
        }
        let level = self.level(x);
        if level > -BOUNDARY_TOLERANCE {
            return Err(Error::GradientUnavailable(
                "escape-time gradient is only defined at interior points".into(),
            ));
        }
        let t = self.escape_time_by_root_finding(x, omega)?;
        let y = x - t * omega;
        let gr = self.level_gradient(&y);
        let dot = omega.dot(&gr);
        if dot.abs() < NEAR_TANGENTIAL_GRADIENT * gr.norm() {
            return Err(Error::GradientUnavailable(format!(
                "near-tangential inflow point (ω·∇r = {dot:.3e})"
            )));
        }
        Ok(gr / dot)
    }

    /// Follow the characteristic backwards to its inflow boundary point.
    pub fn backtrack_to_inflow(&self, x: &Vec3, omega: &Vec3) -> Result<(Vec3, f64)> {
        let s = self.extended_escape_time(x, omega)?;
        if s <= 0.0 {
            return Err(Error::TangentialStart);
        }
        Ok((x - s * omega, s))
    }

    /// Largest `η` such that every point lies in `{t̃ >= η}`.
    pub fn support_margin<'a, I>(&self, points: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a PhasePoint>,
    {
        let mut margin: Option<f64> = None;
        for p in points {
            let t = self.extended_escape_time(&p.x, &p.omega)?;
            margin = Some(margin.map_or(t, |m: f64| m.min(t)));
        }
        margin.ok_or(Error::EmptyInput("support_margin needs at least one point"))
    }
}

/// Closed-form escape time of the unit ball and its spatial gradient.
///
/// `t = x·ω + √((x·ω)² + 1 - |x|²)`, `∇t = ω + ((x·ω)ω - x) / √(...)`.
/// The gradient has no continuous extension to the boundary, so boundary
/// points are rejected.
pub fn ball_escape_closed_form(x: &Vec3, omega: &Vec3) -> Result<(f64, Vec3)> {
    let level = x.norm_squared() - 1.0;
    if level > BOUNDARY_TOLERANCE {
        return Err(Error::OutsideDomain { level });
    }
    let b = x.dot(omega);
    let arg = b * b + 1.0 - x.norm_squared();
    if arg < CLOSED_FORM_SQRT_FLOOR || level >= -BOUNDARY_TOLERANCE {
        return Err(Error::GradientUndefinedOnBoundary);
    }
    let root = arg.sqrt();
    let time = b + root;
    let grad = omega + (b * omega - x) / root;
    Ok((time, grad))
}

/// A point `(x, ω, E)` of phase space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec3,
    pub omega: Vec3,
    pub energy: f64,
}

impl PhasePoint {
    pub fn new(x: Vec3, omega: Vec3, energy: f64) -> Self {
        Self { x, omega, energy }
    }

    /// Check the phase-point invariants against a domain and energy range.
    pub fn validate(&self, domain: &ConvexDomain, e0: f64, em: f64) -> Result<()> {
        if (self.omega.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::config("omega", "direction must be a unit vector"));
        }
        if self.energy < e0 || self.energy > em {
            return Err(Error::config("energy", "energy outside the interval"));
        }
        let level = domain.level(&self.x);
        if level > BOUNDARY_TOLERANCE {
            return Err(Error::OutsideDomain { level });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    Inflow,
    Outflow,
    Tangential,
}

/// Boundary class of `(y, ω)` together with the `ω·ν(y)` it was derived from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryClass {
    pub kind: BoundaryKind,
    pub dot: f64,
}

impl BoundaryClass {
    pub fn from_dot(dot: f64) -> Self {
        let kind = if dot < -TANGENTIAL_TOLERANCE {
            BoundaryKind::Inflow
        } else if dot > TANGENTIAL_TOLERANCE {
            BoundaryKind::Outflow
        } else {
            BoundaryKind::Tangential
        };
        Self { kind, dot }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn sphere_normals_are_radial() {
        let d = ConvexDomain::unit_ball();
        assert_abs_diff_eq!(d.outward_normal(&v(1.0, 0.0, 0.0)).unwrap(), v(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(d.outward_normal(&v(0.0, -1.0, 0.0)).unwrap(), v(0.0, -1.0, 0.0));
    }

    #[test]
    fn ellipsoid_normal_at_long_axis_tip() {
        let d = ConvexDomain::ellipsoid([0.0; 3], [2.0, 1.0, 1.0]).unwrap();
        let n = d.outward_normal(&v(2.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(n, v(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert!((n.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_off_boundary_is_rejected() {
        let d = ConvexDomain::unit_ball();
        assert!(matches!(
            d.outward_normal(&v(0.5, 0.0, 0.0)),
            Err(Error::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn boundary_classes() {
        let d = ConvexDomain::unit_ball();
        let y = v(1.0, 0.0, 0.0);
        let c = d.classify_boundary(&y, &v(-1.0, 0.0, 0.0)).unwrap();
        assert_eq!(c.kind, BoundaryKind::Inflow);
        assert_eq!(c.dot, -1.0);
        let c = d.classify_boundary(&y, &v(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(c.kind, BoundaryKind::Tangential);
        assert_eq!(c.dot, 0.0);
        let c = d.classify_boundary(&y, &v(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(c.kind, BoundaryKind::Outflow);
        assert_eq!(c.dot, 1.0);
    }

    #[test]
    fn escape_time_examples() {
        let d = ConvexDomain::unit_ball();
        let om = v(0.0, 0.6, 0.8);
        assert_abs_diff_eq!(d.extended_escape_time(&Vec3::zeros(), &om).unwrap(), 1.0);
        assert_abs_diff_eq!(
            d.extended_escape_time(&v(0.5, 0.0, 0.0), &v(1.0, 0.0, 0.0)).unwrap(),
            1.5
        );
        assert_eq!(
            d.extended_escape_time(&v(1.0, 0.0, 0.0), &v(0.0, 0.0, 1.0)).unwrap(),
            0.0
        );
        assert!(matches!(
            d.extended_escape_time(&v(1.5, 0.0, 0.0), &om),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn ellipsoid_escape_time_along_axis() {
        let d = ConvexDomain::ellipsoid([0.0; 3], [2.0, 1.0, 0.5]).unwrap();
        let t = d.extended_escape_time(&Vec3::zeros(), &v(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(t, 2.0, epsilon = 1e-12);
        let t = d.extended_escape_time(&v(0.0, 0.0, 0.25), &v(0.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(t, 0.75, epsilon = 1e-12);
        // outflow tip: chord through the whole ellipsoid
        let t = d.extended_escape_time(&v(2.0, 0.0, 0.0), &v(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(t, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn shifted_ball_uses_affine_closed_form() {
        let d = ConvexDomain::ball([1.0, -2.0, 0.5], 3.0).unwrap();
        let x = v(1.0, -2.0, 0.5) + v(1.0, 0.0, 0.0);
        let t = d.extended_escape_time(&x, &v(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(t, 4.0, epsilon = 1e-12);
        let t_root = d.escape_time_by_root_finding(&x, &v(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(t, t_root, epsilon = 1e-10);
    }

    #[test]
    fn closed_form_ball_examples() {
        let om = v(0.0, 0.0, 1.0);
        let (t, g) = ball_escape_closed_form(&Vec3::zeros(), &om).unwrap();
        assert_abs_diff_eq!(t, 1.0);
        assert_abs_diff_eq!(g, om);
        let (t, g) = ball_escape_closed_form(&v(0.5, 0.0, 0.0), &v(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(t, 1.5);
        assert_abs_diff_eq!(g, v(1.0, 0.0, 0.0));
        assert_eq!(
            ball_escape_closed_form(&v(1.0, 0.0, 0.0), &om),
            Err(Error::GradientUndefinedOnBoundary)
        );
    }

    #[test]
    fn implicit_gradient_matches_closed_form_on_ball_shaped_ellipsoid() {
        let sphere = ConvexDomain::ellipsoid([0.0; 3], [1.0, 1.0, 1.0]).unwrap();
        let x = v(0.2, -0.3, 0.1);
        let om = v(0.3, 0.4, -0.5).normalize();
        let g = sphere.escape_time_gradient(&x, &om).unwrap();
        let (_, g_ref) = ball_escape_closed_form(&x, &om).unwrap();
        assert_abs_diff_eq!(g, g_ref, epsilon = 1e-9);
    }

    #[test]
    fn backtracking_examples() {
        let d = ConvexDomain::unit_ball();
        let (y, s) = d.backtrack_to_inflow(&Vec3::zeros(), &v(0.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(y, v(0.0, 0.0, -1.0));
        assert_abs_diff_eq!(s, 1.0);
        assert_eq!(d.classify_boundary(&y, &v(0.0, 0.0, 1.0)).unwrap().dot, -1.0);
        let (y, s) = d.backtrack_to_inflow(&v(1.0, 0.0, 0.0), &v(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(y, v(-1.0, 0.0, 0.0));
        assert_abs_diff_eq!(s, 2.0);
        assert_eq!(
            d.backtrack_to_inflow(&v(1.0, 0.0, 0.0), &v(-1.0, 0.0, 0.0)),
            Err(Error::TangentialStart)
        );
    }

    #[test]
    fn support_margin_examples() {
        let d = ConvexDomain::unit_ball();
        let center = PhasePoint::new(Vec3::zeros(), v(0.0, 1.0, 0.0), 0.0);
        assert_abs_diff_eq!(d.support_margin([&center]).unwrap(), 1.0);
        let inflow = PhasePoint::new(v(1.0, 0.0, 0.0), v(-1.0, 0.0, 0.0), 0.0);
        assert_eq!(d.support_margin([&center, &inflow]).unwrap(), 0.0);
        let empty: Vec<PhasePoint> = Vec::new();
        assert!(matches!(d.support_margin(&empty), Err(Error::EmptyInput(_))));
    }
}
