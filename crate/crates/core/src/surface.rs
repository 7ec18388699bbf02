//! Boundary surface quadrature from a triangulated level set.
//!
//! The boundary of a ball or ellipsoid is the image of the unit sphere under
//! `u ↦ c + a∘u`, so we subdivide an icosahedron, map its vertices onto the
//! surface and use one point per flat triangle: the centroid projected back
//! onto the surface, weighted by the triangle area.

use std::collections::HashMap;

use crate::geometry::{ConvexDomain, Vec3};
use crate::quadrature::{gauss_legendre_unit, SphereQuadrature};

/// One surface quadrature point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub area: f64,
}

#[derive(Clone, Debug)]
pub struct BoundarySurface {
    points: Vec<SurfacePoint>,
    subdivisions: usize,
}

impl BoundarySurface {
    /// Triangulate with edge length roughly `target_edge`.
    pub fn with_edge_length(domain: &ConvexDomain, target_edge: f64) -> Self {
        let scale = domain.semi_axes().max();
        // Icosahedron edge on the unit sphere is about 1.05.
        let ratio = (1.05 * scale / target_edge.max(1e-6)).max(1.0);
        let subdivisions = ratio.log2().ceil().clamp(0.0, 8.0) as usize;
        Self::new(domain, subdivisions)
    }

    pub fn new(domain: &ConvexDomain, subdivisions: usize) -> Self {
        let (verts, tris) = icosphere(subdivisions);
        let center = domain.center();
        let axes = domain.semi_axes();
        let mapped: Vec<Vec3> = verts.iter().map(|u| center + u.component_mul(&axes)).collect();
        let points = tris
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (mapped[a], mapped[b], mapped[c]);
                let area = 0.5 * (pb - pa).cross(&(pc - pa)).norm();
                let position = domain.project_to_boundary(&((pa + pb + pc) / 3.0));
                let g = domain.level_gradient(&position);
                SurfacePoint {
                    position,
                    normal: g / g.norm(),
                    area,
                }
            })
            .collect();
        Self { points, subdivisions }
    }

    pub fn points(&self) -> &[SurfacePoint] {
        &self.points
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.points.iter().map(|p| p.area).sum()
    }
}

/// Smooth-domain quadrature obtained by mapping the unit ball through
/// `u ↦ c + a∘u`: Gauss–Legendre in the radius times a product sphere rule,
/// and the same sphere rule for the boundary. Exact for polynomials of
/// moderate degree, so it separates field errors from quadrature errors.
#[derive(Clone, Debug)]
pub struct DomainQuadrature {
    pub volume: Vec<(Vec3, f64)>,
    pub surface: Vec<SurfacePoint>,
}

impl DomainQuadrature {
    pub fn new(domain: &ConvexDomain, radial: usize, n_theta: usize, n_phi: usize) -> Self {
        let sphere = SphereQuadrature::product(n_theta, n_phi).expect("positive node counts");
        let c = domain.center();
        let a = domain.semi_axes();
        let jac = a.x * a.y * a.z;
        let mut volume = Vec::with_capacity(radial * sphere.len());
        for (r, wr) in gauss_legendre_unit(radial) {
            for (u, &wu) in sphere.nodes().iter().zip(sphere.weights()) {
                volume.push((c + (r * u).component_mul(&a), jac * r * r * wr * wu));
            }
        }
        let surface = sphere
            .nodes()
            .iter()
            .zip(sphere.weights())
            .map(|(u, &wu)| {
                let g = u.component_div(&a);
                SurfacePoint {
                    position: c + u.component_mul(&a),
                    normal: g / g.norm(),
                    area: jac * g.norm() * wu,
                }
            })
            .collect();
        Self { volume, surface }
    }
}

fn icosphere(subdivisions: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vec3::new(v[0], v[1], v[2]).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    (verts, tris)
}
