//! Quadrature rules: Gauss–Legendre panels along rays and a product rule on S².

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`, nodes ascending.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
    let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(n)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Composite Gauss–Legendre rule used for characteristic integrals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RayQuadratureParams", into = "RayQuadratureParams")]
pub struct RayQuadrature {
    panels_per_unit_length: usize,
    nodes_per_panel: usize,
    /// Reference nodes on `[0, 1]`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `cumulative[k][l] = ∫₀^{ξ_k} ℓ_l(ξ) dξ` for the Lagrange basis on the nodes.
    cumulative: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct RayQuadratureParams {
    panels_per_unit_length: usize,
    nodes_per_panel: usize,
}

impl From<RayQuadratureParams> for RayQuadrature {
    fn from(p: RayQuadratureParams) -> Self {
        RayQuadrature::new(p.panels_per_unit_length, p.nodes_per_panel)
    }
}

impl From<RayQuadrature> for RayQuadratureParams {
    fn from(q: RayQuadrature) -> Self {
        RayQuadratureParams {
            panels_per_unit_length: q.panels_per_unit_length,
            nodes_per_panel: q.nodes_per_panel,
        }
    }
}

impl Default for RayQuadrature {
    fn default() -> Self {
        Self::new(16, 4)
    }
}

impl RayQuadrature {
    pub fn new(panels_per_unit_length: usize, nodes_per_panel: usize) -> Self {
        let panels_per_unit_length = panels_per_unit_length.max(1);
        let nodes_per_panel = nodes_per_panel.clamp(1, 32);
        let rule = gauss_legendre_unit(nodes_per_panel);
        let nodes: Vec<f64> = rule.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = rule.iter().map(|p| p.1).collect();
        // ℓ_l has degree n-1, so the n-point rule on [0, ξ_k] integrates it exactly.
        let cumulative = nodes
            .iter()
            .map(|&xk| {
                (0..nodes.len())
                    .map(|l| {
                        rule.iter()
                            .map(|&(s, w)| w * xk * lagrange_basis(&nodes, l, s * xk))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Self {
            panels_per_unit_length,
            nodes_per_panel,
            nodes,
            weights,
            cumulative,
        }
    }

    pub fn panels_per_unit_length(&self) -> usize {
        self.panels_per_unit_length
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.nodes_per_panel
    }

    pub fn reference_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn reference_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cumulative_matrix(&self) -> &[Vec<f64>] {
        &self.cumulative
    }

    /// Number of panels covering a ray of the given length.
    ///
    /// `rate` is an upper estimate of the attenuation rate; panels are refined
    /// so that a single panel never spans more than one optical depth.
    pub fn panel_count(&self, length: f64, rate: f64) -> usize {
        let density = (self.panels_per_unit_length as f64).max(rate.abs());
        ((length * density).ceil() as usize).max(1)
    }
}

fn lagrange_basis(nodes: &[f64], l: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != l)
        .map(|(_, &xk)| (x - xk) / (nodes[l] - xk))
        .product()
}

/// Product rule on the unit sphere: Gauss–Legendre in the polar cosine and
/// the uniform trapezoid rule in azimuth.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereQuadrature {
    n_theta: usize,
    n_phi: usize,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn product(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::config(
                "grid.sphere",
                "sphere quadrature needs at least one node per axis",
            ));
        }
        let polar = gauss_legendre_unit(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for &(s, w) in &polar {
            let mu = 2.0 * s - 1.0;
            let wmu = 2.0 * w;
            let sin = (1.0 - mu * mu).max(0.0).sqrt();
            for k in 0..n_phi {
                let phi = (k as f64 + 0.5) * dphi;
                nodes.push(Vec3::new(sin * phi.cos(), sin * phi.sin(), mu));
                weights.push(wmu * dphi);
            }
        }
        Ok(Self {
            n_theta,
            n_phi,
            nodes,
            weights,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(w, &q)| q * f(w)).sum()
    }
}

/// Kahan–Babuška compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}
