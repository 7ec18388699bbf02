//! Structured discretization of `G × S × I`.
//!
//! The spatial lattice covers the domain's bounding box plus a band of ghost
//! layers. Nodes strictly inside the domain carry data; exterior nodes within
//! the band are ghosts whose values are extrapolated from the interior so
//! that interpolation and difference stencils never leave the stored set.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ConvexDomain, Vec3, BOUNDARY_TOLERANCE};
use crate::quadrature::SphereQuadrature;
use crate::surface::BoundarySurface;

use super::EnergyInterval;

/// Ghost layers kept around the interior (enough for a 4-point stencil
/// plus one derivative).
pub const GHOST_LAYERS: usize = 3;

/// One step of a ghost extrapolation recipe: `value += coeff * values[source]`.
#[derive(Clone, Copy, Debug)]
struct Term {
    source: usize,
    coeff: f64,
}

/// Uniform Cartesian lattice with interior mask, ghost band and cut-cell
/// volume weights.
#[derive(Clone, Debug)]
pub struct Lattice {
    origin: Vec3,
    spacing: f64,
    dims: [usize; 3],
    /// Dense map from lattice position to active index (`usize::MAX` if inactive).
    index: Vec<usize>,
    /// Lattice position of every active node; interior nodes come first.
    positions: Vec<[usize; 3]>,
    n_interior: usize,
    /// Volume of each active node's cell that lies inside the domain.
    volumes: Vec<f64>,
    /// Signed distance from each active node to the boundary.
    distances: Vec<f64>,
    /// Extrapolation recipe per ghost node, in fill order.
    ghost_recipes: Vec<(usize, Vec<Term>)>,
}

impl Lattice {
    /// Build a lattice with `nodes_across` nodes spanning the longest extent
    /// of the domain's bounding box.
    pub fn new(domain: &ConvexDomain, nodes_across: usize) -> Result<Self> {
        if nodes_across < 4 {
            return Err(Error::GridTooCoarse(format!(
                "need at least 4 lattice nodes across the domain, got {nodes_across}"
            )));
        }
        let (lo, hi) = domain.bounding_box();
        let extent = hi - lo;
        let spacing = extent.max() / (nodes_across - 1) as f64;
        let pad = GHOST_LAYERS as f64 * spacing;
        let mut dims = [0usize; 3];
        let mut origin = Vec3::zeros();
        for a in 0..3 {
            let n_core = (extent[a] / spacing - 1e-9).ceil() as usize + 1;
            let span = (n_core - 1) as f64 * spacing;
            let start = 0.5 * (lo[a] + hi[a]) - 0.5 * span;
            dims[a] = n_core + 2 * GHOST_LAYERS;
            origin[a] = start - pad;
        }
        let total = dims[0] * dims[1] * dims[2];
        let flat = |p: [usize; 3]| (p[0] * dims[1] + p[1]) * dims[2] + p[2];
        let point = |p: [usize; 3]| origin + Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) * spacing;

        let mut interior = vec![false; total];
        let mut positions = Vec::new();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let p = [i, j, k];
                    if domain.level(&point(p)) < -BOUNDARY_TOLERANCE {
                        interior[flat(p)] = true;
                        positions.push(p);
                    }
                }
            }
        }
        if positions.is_empty() {
            return Err(Error::GridTooCoarse("no interior lattice nodes".into()));
        }
        let n_interior = positions.len();

        // Ghost band: BFS layers (26-neighbourhood) around the interior.
        let mut layer = vec![usize::MAX; total];
        for p in &positions {
            layer[flat(*p)] = 0;
        }
        let mut frontier: Vec<[usize; 3]> = positions.clone();
        let mut ghosts_by_layer: Vec<Vec<[usize; 3]>> = Vec::new();
        for l in 1..=GHOST_LAYERS {
            let mut next = Vec::new();
            for p in &frontier {
                for d in neighbour_offsets() {
                    if let Some(q) = offset(*p, d, 1, dims) {
                        let f = flat(q);
                        if layer[f] == usize::MAX {
                            layer[f] = l;
                            next.push(q);
                        }
                    }
                }
            }
            next.sort_unstable();
            ghosts_by_layer.push(next.clone());
            frontier = next;
        }
        for g in ghosts_by_layer.iter().flatten() {
            positions.push(*g);
        }
        let mut index = vec![usize::MAX; total];
        for (a, p) in positions.iter().enumerate() {
            index[flat(*p)] = a;
        }

        let mut ghost_recipes = Vec::new();
        for g in ghosts_by_layer.iter().flatten() {
            let lg = layer[flat(*g)];
            let known = |q: [usize; 3]| layer[flat(q)] < lg;
            let recipe = ghost_recipe(*g, dims, &known, &|q| index[flat(q)]);
            ghost_recipes.push((index[flat(*g)], recipe));
        }

        let distances: Vec<f64> = positions.iter().map(|p| domain.signed_distance(&point(*p))).collect();
        let volumes = positions
            .iter()
            .zip(&distances)
            .map(|(p, &d)| cell_volume_inside(domain, &point(*p), d, spacing))
            .collect();

        Ok(Self {
            origin,
            spacing,
            dims,
            index,
            positions,
            n_interior,
            volumes,
            distances,
            ghost_recipes,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// Number of stored (interior + ghost) nodes.
    pub fn n_active(&self) -> usize {
        self.positions.len()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn is_interior(&self, node: usize) -> bool {
        node < self.n_interior
    }

    pub fn position(&self, node: usize) -> Vec3 {
        let p = self.positions[node];
        self.origin + Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) * self.spacing
    }

    pub fn lattice_position(&self, node: usize) -> [usize; 3] {
        self.positions[node]
    }

    /// Volume of the node's cell inside the domain (cut-cell weight).
    pub fn volume(&self, node: usize) -> f64 {
        self.volumes[node]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Signed distance from the node to the boundary (negative inside).
    pub fn distance(&self, node: usize) -> f64 {
        self.distances[node]
    }

    /// Active index at a lattice position, if stored.
    pub fn active_index(&self, p: [isize; 3]) -> Option<usize> {
        if p.iter().zip(&self.dims).any(|(&c, &n)| c < 0 || c as usize >= n) {
            return None;
        }
        let f = (p[0] as usize * self.dims[1] + p[1] as usize) * self.dims[2] + p[2] as usize;
        let a = self.index[f];
        (a != usize::MAX).then_some(a)
    }

    /// Neighbour of an active node along `axis` by `step` lattice units.
    pub fn neighbour(&self, node: usize, axis: usize, step: isize) -> Option<usize> {
        let p = self.positions[node];
        let mut q = [p[0] as isize, p[1] as isize, p[2] as isize];
        q[axis] += step;
        self.active_index(q)
    }

    /// Overwrite ghost values in `values` (one value per active node) by
    /// extrapolation from the interior.
    pub fn fill_ghosts(&self, values: &mut [f64]) {
        debug_assert_eq!(values.len(), self.n_active());
        for (g, recipe) in &self.ghost_recipes {
            values[*g] = recipe.iter().map(|t| t.coeff * values[t.source]).sum();
        }
    }

    /// Tricubic Lagrange interpolation of per-node values, falling back to
    /// trilinear and then nearest-node where the stencil is incomplete.
    pub fn interpolate(&self, values: &[f64], x: &Vec3) -> f64 {
        let rel = (x - self.origin) / self.spacing;
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let f = rel[a].floor();
            base[a] = f as isize;
            frac[a] = rel[a] - f;
        }
        if let Some(v) = self.interpolate_cubic(values, base, frac) {
            return v;
        }
        if let Some(v) = self.interpolate_linear(values, base, frac) {
            return v;
        }
        let nearest = [
            (rel[0].round()) as isize,
            (rel[1].round()) as isize,
            (rel[2].round()) as isize,
        ];
        self.active_index(nearest).map_or(0.0, |a| values[a])
    }

    fn interpolate_cubic(&self, values: &[f64], base: [isize; 3], frac: [f64; 3]) -> Option<f64> {
        if (0..3).any(|a| base[a] < 1 || base[a] + 2 >= self.dims[a] as isize) {
            return None;
        }
        let w: [[f64; 4]; 3] = [cubic_weights(frac[0]), cubic_weights(frac[1]), cubic_weights(frac[2])];
        let (s0, s1) = (self.dims[1] * self.dims[2], self.dims[2]);
        let corner = (base[0] as usize - 1) * s0 + (base[1] as usize - 1) * s1 + base[2] as usize - 1;
        let mut acc = 0.0;
        for (a, wa) in w[0].iter().enumerate() {
            for (b, wb) in w[1].iter().enumerate() {
                let row = &self.index[corner + a * s0 + b * s1..][..4];
                let mut line = 0.0;
                for (&idx, wc) in row.iter().zip(&w[2]) {
                    if idx == usize::MAX {
                        return None;
                    }
                    line += wc * values[idx];
                }
                acc += wa * wb * line;
            }
        }
        Some(acc)
    }

    fn interpolate_linear(&self, values: &[f64], base: [isize; 3], frac: [f64; 3]) -> Option<f64> {
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let idx = self.active_index([base[0] + a as isize, base[1] + b as isize, base[2] + c as isize])?;
                    let w = (if a == 0 { 1.0 - frac[0] } else { frac[0] })
                        * (if b == 0 { 1.0 - frac[1] } else { frac[1] })
                        * (if c == 0 { 1.0 - frac[2] } else { frac[2] });
                    acc += w * values[idx];
                }
            }
        }
        Some(acc)
    }
}

/// Lagrange weights for nodes `-1, 0, 1, 2` at offset `t ∈ [0, 1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

fn neighbour_offsets() -> impl Iterator<Item = [isize; 3]> {
    (-1..=1isize).flat_map(|a| {
        (-1..=1isize)
            .flat_map(move |b| (-1..=1isize).filter_map(move |c| (a != 0 || b != 0 || c != 0).then_some([a, b, c])))
    })
}

fn offset(p: [usize; 3], d: [isize; 3], k: isize, dims: [usize; 3]) -> Option<[usize; 3]> {
    let mut q = [0usize; 3];
    for a in 0..3 {
        let c = p[a] as isize + k * d[a];
        if c < 0 || c as usize >= dims[a] {
            return None;
        }
        q[a] = c as usize;
    }
    Some(q)
}

/// Extrapolation recipe for one ghost: quadratic extrapolation along the
/// shortest lattice directions with three known nodes, then linear, then the
/// mean of known neighbours.
fn ghost_recipe(
    g: [usize; 3],
    dims: [usize; 3],
    known: &dyn Fn([usize; 3]) -> bool,
    index: &dyn Fn([usize; 3]) -> usize,
) -> Vec<Term> {
    let mut by_class: [Vec<[isize; 3]>; 3] = Default::default();
    for d in neighbour_offsets() {
        let nz = d.iter().filter(|&&c| c != 0).count();
        by_class[nz - 1].push(d);
    }
    for (order, coeffs) in [
        (4usize, [4.0, -6.0, 4.0, -1.0].as_slice()),
        (3, [3.0, -3.0, 1.0].as_slice()),
        (2, [2.0, -1.0].as_slice()),
    ] {
        for class in &by_class {
            let mut lines: Vec<Vec<usize>> = Vec::new();
            for d in class {
                let pts: Option<Vec<[usize; 3]>> = (1..=order as isize).map(|k| offset(g, *d, k, dims)).collect();
                if let Some(pts) = pts {
                    if pts.iter().all(|q| known(*q)) {
                        lines.push(pts.iter().map(|q| index(*q)).collect());
                    }
                }
            }
            if !lines.is_empty() {
                let scale = 1.0 / lines.len() as f64;
                return lines
                    .iter()
                    .flat_map(|l| {
                        l.iter().zip(coeffs).map(move |(&s, &c)| Term {
                            source: s,
                            coeff: c * scale,
                        })
                    })
                    .collect();
            }
        }
    }
    let neigh: Vec<usize> = neighbour_offsets()
        .filter_map(|d| offset(g, d, 1, dims))
        .filter(|q| known(*q))
        .map(index)
        .collect();
    let scale = 1.0 / neigh.len().max(1) as f64;
    neigh
        .into_iter()
        .map(|s| Term {
            source: s,
            coeff: scale,
        })
        .collect()
}

/// Volume of the cube of side `h` centred at `c` that lies inside the domain,
/// using the tangent-plane approximation of the boundary inside the cell.
fn cell_volume_inside(domain: &ConvexDomain, c: &Vec3, dist: f64, h: f64) -> f64 {
    cut_cell_volume(domain, c, dist, h, CUT_CELL_REFINEMENT)
}

/// Bisection levels applied to cells cut by the boundary before the local
/// half-space approximation; each level cuts the curvature error by four.
const CUT_CELL_REFINEMENT: usize = 2;

fn cut_cell_volume(domain: &ConvexDomain, c: &Vec3, dist: f64, h: f64, depth: usize) -> f64 {
    let reach = 0.5 * 3f64.sqrt() * h;
    if dist <= -reach * 1.01 {
        return h * h * h;
    }
    if dist >= reach * 1.01 {
        return 0.0;
    }
    if depth > 0 {
        let q = 0.25 * h;
        let mut total = 0.0;
        for corner in 0..8 {
            let s = |bit: usize| if corner & bit != 0 { q } else { -q };
            let sub = c + Vec3::new(s(1), s(2), s(4));
            total += cut_cell_volume(domain, &sub, domain.signed_distance(&sub), 0.5 * h, depth - 1);
        }
        return total;
    }
    let g = domain.level_gradient(c);
    let norm = g.norm();
    if norm == 0.0 {
        return h * h * h;
    }
    let n = g / norm;
    // Unit-cube coordinates: p = c + h (x - 1/2); inside iff n·x <= n·(1/2) - dist/h.
    let b = 0.5 * (n.x + n.y + n.z) - dist / h;
    h * h * h * unit_cube_halfspace_volume([n.x, n.y, n.z], b)
}

/// Volume of `{x ∈ [0,1]³ : a·x <= b}`.
pub(crate) fn unit_cube_halfspace_volume(a: [f64; 3], b: f64) -> f64 {
    const EPS: f64 = 1e-5;
    // Reflect so that all coefficients are non-negative.
    let mut a = a;
    let mut b = b;
    for c in a.iter_mut() {
        if *c < 0.0 {
            b -= *c;
            *c = -*c;
        }
    }
    let mut active: Vec<f64> = a.iter().copied().filter(|&c| c > EPS).collect();
    active.sort_by(|x, y| y.total_cmp(x));
    let total: f64 = active.iter().sum();
    if b <= 0.0 {
        return 0.0;
    }
    if b >= total {
        return 1.0;
    }
    let cube = |x: f64| if x > 0.0 { x * x * x } else { 0.0 };
    let square = |x: f64| if x > 0.0 { x * x } else { 0.0 };
    match active.len() {
        0 => 1.0,
        1 => (b / active[0]).clamp(0.0, 1.0),
        2 => {
            let (p, q) = (active[0], active[1]);
            let s = square(b) - square(b - p) - square(b - q) + square(b - p - q);
            (s / (2.0 * p * q)).clamp(0.0, 1.0)
        }
        _ => {
            let (p, q, r) = (active[0], active[1], active[2]);
            let s =
                cube(b) - cube(b - p) - cube(b - q) - cube(b - r) + cube(b - p - q) + cube(b - p - r) + cube(b - q - r)
                    - cube(b - p - q - r);
            (s / (6.0 * p * q * r)).clamp(0.0, 1.0)
        }
    }
}

/// Uniform energy nodes on `[E0, Em]` with trapezoid weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyGrid {
    pub interval: EnergyInterval,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EnergyGrid {
    pub fn new(interval: EnergyInterval, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("grid.energy_nodes", "need at least one energy node"));
        }
        let (e0, em) = (interval.e0(), interval.em());
        if count == 1 {
            return Ok(Self {
                interval,
                nodes: vec![e0],
                weights: vec![em - e0],
            });
        }
        let step = (em - e0) / (count - 1) as f64;
        let nodes = (0..count).map(|k| e0 + k as f64 * step).collect();
        let weights = (0..count)
            .map(|k| if k == 0 || k == count - 1 { 0.5 * step } else { step })
            .collect();
        Ok(Self {
            interval,
            nodes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self) -> Option<f64> {
        (self.nodes.len() > 1).then(|| self.nodes[1] - self.nodes[0])
    }
}

/// Discretization of `G × S × I`.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub domain: ConvexDomain,
    pub lattice: Arc<Lattice>,
    pub sphere: SphereQuadrature,
    pub energy: EnergyGrid,
    surface: Arc<OnceLock<BoundarySurface>>,
}

/// Grid metadata echoed into reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridMetadata {
    pub h: f64,
    pub nodes_across: usize,
    pub interior_nodes: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_energy: usize,
    pub e0: f64,
    pub em: f64,
}

impl GridSpec {
    pub fn new(
        domain: ConvexDomain,
        nodes_across: usize,
        n_theta: usize,
        n_phi: usize,
        interval: EnergyInterval,
        n_energy: usize,
    ) -> Result<Self> {
        let lattice = Arc::new(Lattice::new(&domain, nodes_across)?);
        let sphere = SphereQuadrature::product(n_theta, n_phi)?;
        let energy = EnergyGrid::new(interval, n_energy)?;
        Ok(Self {
            domain,
            lattice,
            sphere,
            energy,
            surface: Arc::default(),
        })
    }

    pub fn h(&self) -> f64 {
        self.lattice.spacing()
    }

    pub fn n_directions(&self) -> usize {
        self.sphere.len()
    }

    /// Total number of stored values in a field on this grid.
    pub fn field_len(&self) -> usize {
        self.lattice.n_active() * self.sphere.len() * self.energy.len()
    }

    pub fn metadata(&self) -> GridMetadata {
        let (lo, hi) = self.domain.bounding_box();
        GridMetadata {
            h: self.h(),
            nodes_across: ((hi - lo).max() / self.h()).round() as usize + 1,
            interior_nodes: self.lattice.n_interior(),
            n_theta: self.sphere.n_theta(),
            n_phi: self.sphere.n_phi(),
            n_energy: self.energy.len(),
            e0: self.energy.interval.e0(),
            em: self.energy.interval.em(),
        }
    }

    /// Same grid with a different energy axis.
    pub fn with_energy(&self, energy: EnergyGrid) -> Self {
        Self {
            domain: self.domain.clone(),
            lattice: self.lattice.clone(),
            sphere: self.sphere.clone(),
            energy,
            surface: self.surface.clone(),
        }
    }

    /// Boundary triangulation with edges about one lattice spacing long,
    /// built on first use and shared by clones.
    pub fn surface(&self) -> &BoundarySurface {
        self.surface
            .get_or_init(|| BoundarySurface::with_edge_length(&self.domain, self.h()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn halfspace_volume_matches_sampling() {
        let cases = [
            ([0.3, -0.5, 0.81], 0.2),
            ([1.0, 0.0, 0.0], 0.37),
            ([0.6, 0.8, 0.0], 0.9),
            ([0.577, 0.577, 0.578], 0.8),
        ];
        let m = 60;
        for (a, b) in cases {
            let mut inside = 0usize;
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let x = [
                            (i as f64 + 0.5) / m as f64,
                            (j as f64 + 0.5) / m as f64,
                            (k as f64 + 0.5) / m as f64,
                        ];
                        if a[0] * x[0] + a[1] * x[1] + a[2] * x[2] <= b {
                            inside += 1;
                        }
                    }
                }
            }
            let sampled = inside as f64 / (m * m * m) as f64;
            assert!((unit_cube_halfspace_volume(a, b) - sampled).abs() < 0.01, "{a:?} {b}");
        }
    }

    #[test]
    fn interior_mask_and_volume() {
        let d = ConvexDomain::unit_ball();
        let lat = Lattice::new(&d, 24).unwrap();
        for n in 0..lat.n_interior() {
            assert!(d.level(&lat.position(n)) < 0.0);
        }
        for n in lat.n_interior()..lat.n_active() {
            assert!(d.level(&lat.position(n)) >= -BOUNDARY_TOLERANCE);
        }
        let vol: f64 = lat.volumes().iter().sum();
        assert!((vol - 4.0 * PI / 3.0).abs() < 2e-3, "{vol}");
    }

    #[test]
    fn ghost_fill_is_exact_for_quadratics() {
        let d = ConvexDomain::ellipsoid([0.1, 0.0, -0.2], [1.0, 0.8, 0.6]).unwrap();
        let lat = Lattice::new(&d, 20).unwrap();
        let f = |x: &Vec3| 1.0 + x.x - 2.0 * x.y * x.z + 0.5 * x.z * x.z;
        let mut vals: Vec<f64> = (0..lat.n_active()).map(|n| f(&lat.position(n))).collect();
        let exact = vals.clone();
        for v in vals.iter_mut().skip(lat.n_interior()) {
            *v = 0.0;
        }
        lat.fill_ghosts(&mut vals);
        for (a, b) in vals.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tricubic_interpolation_reproduces_cubics() {
        let d = ConvexDomain::unit_ball();
        let lat = Lattice::new(&d, 16).unwrap();
        let f = |x: &Vec3| x.x * x.x * x.x - x.y * x.z + 2.0;
        let vals: Vec<f64> = (0..lat.n_active()).map(|n| f(&lat.position(n))).collect();
        for p in [Vec3::new(0.1, 0.2, -0.3), Vec3::new(-0.55, 0.31, 0.12)] {
            assert!((lat.interpolate(&vals, &p) - f(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_grid_trapezoid() {
        let g = EnergyGrid::new(EnergyInterval::new(0.0, 1.0).unwrap(), 2).unwrap();
        assert_eq!(g.nodes, vec![0.0, 1.0]);
        assert_eq!(g.weights.iter().sum::<f64>(), 1.0);
    }
}
