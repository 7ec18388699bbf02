use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::quadrature::CompensatedSum;

use super::{GridSpec, MultiIndex};

/// Values of a phase-space field on a [`GridSpec`].
///
/// Storage is slice-major: one contiguous block of per-node values for every
/// (energy, direction) pair, so that single-direction spatial fields can be
/// interpolated without gathering.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.field_len()],
        }
    }

    /// Evaluate `f` at every interior node and fill the ghost band.
    pub fn from_fn<F>(grid: &GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&Vec3, &Vec3, f64) -> f64 + Sync,
    {
        let mut field = Self::zeros(grid);
        field.try_fill_interior(|n, j, k, x, omega, e| {
            let v = f(x, omega, e);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteValue {
                    node: n,
                    direction: j,
                    energy: k,
                })
            }
        })?;
        Ok(field)
    }

    /// Fill interior values from a fallible per-node closure, then ghosts.
    pub fn try_fill_interior<F>(&mut self, f: F) -> Result<()>
    where
        F: Fn(usize, usize, usize, &Vec3, &Vec3, f64) -> Result<f64> + Sync,
    {
        let n_active = self.grid.lattice.n_active();
        let n_dir = self.grid.n_directions();
        let grid = &self.grid;
        self.values
            .par_chunks_mut(n_active)
            .enumerate()
            .try_for_each(|(slice, chunk)| -> Result<()> {
                let (k, j) = (slice / n_dir, slice % n_dir);
                let omega = grid.sphere.nodes()[j];
                let e = grid.energy.nodes[k];
                for (n, v) in chunk.iter_mut().take(grid.lattice.n_interior()).enumerate() {
                    *v = f(n, j, k, &grid.lattice.position(n), &omega, e)?;
                }
                grid.lattice.fill_ghosts(chunk);
                Ok(())
            })
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.field_len() {
            return Err(Error::GridTooCoarse(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.field_len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    fn offset(&self, direction: usize, energy: usize) -> usize {
        (energy * self.grid.n_directions() + direction) * self.grid.lattice.n_active()
    }

    #[inline]
    pub fn get(&self, node: usize, direction: usize, energy: usize) -> f64 {
        self.values[self.offset(direction, energy) + node]
    }

    #[inline]
    pub fn set(&mut self, node: usize, direction: usize, energy: usize, v: f64) {
        let o = self.offset(direction, energy);
        self.values[o + node] = v;
    }

    /// Per-node values of one (direction, energy) slice, ghosts included.
    pub fn slice(&self, direction: usize, energy: usize) -> &[f64] {
        let o = self.offset(direction, energy);
        &self.values[o..o + self.grid.lattice.n_active()]
    }

    pub fn slice_mut(&mut self, direction: usize, energy: usize) -> &mut [f64] {
        let o = self.offset(direction, energy);
        let n = self.grid.lattice.n_active();
        &mut self.values[o..o + n]
    }

    /// Iterate `(direction, energy, slice)` over all slices.
    pub fn slices(&self) -> impl Iterator<Item = (usize, usize, &[f64])> {
        let n_dir = self.grid.n_directions();
        self.values
            .chunks(self.grid.lattice.n_active())
            .enumerate()
            .map(move |(s, c)| (s % n_dir, s / n_dir, c))
    }

    /// Re-extrapolate every ghost value from the interior.
    pub fn fill_ghosts(&mut self) {
        let lat = self.grid.lattice.clone();
        self.values
            .par_chunks_mut(lat.n_active())
            .for_each(|c| lat.fill_ghosts(c));
    }

    /// Set every ghost value to zero, restricting the field to interior nodes.
    pub fn zero_ghosts(&mut self) {
        let n_int = self.grid.lattice.n_interior();
        self.values
            .par_chunks_mut(self.grid.lattice.n_active())
            .for_each(|c| c[n_int..].iter_mut().for_each(|v| *v = 0.0));
    }

    /// Interpolated value at an arbitrary position for one slice.
    pub fn interpolate(&self, x: &Vec3, direction: usize, energy: usize) -> f64 {
        self.grid.lattice.interpolate(self.slice(direction, energy), x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Largest absolute value over interior nodes.
    pub fn sup_abs(&self) -> f64 {
        let n_int = self.grid.lattice.n_interior();
        self.values
            .par_chunks(self.grid.lattice.n_active())
            .map(|c| c[..n_int].iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .reduce(|| 0.0, f64::max)
    }

    /// Central difference along `axis` at interior nodes; ghosts re-extrapolated.
    pub fn derivative(&self, axis: usize) -> Self {
        self.difference(axis, &[(1, 0.5), (-1, -0.5)])
    }

    /// Five-point (fourth-order) central difference along `axis`.
    pub fn derivative_fourth_order(&self, axis: usize) -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 12.0);
        self.difference(axis, &[(1, a), (-1, -a), (2, -b), (-2, b)])
    }

    /// `Σ c_i ψ(x + s_i h e_axis) / h` at interior nodes; ghosts re-extrapolated.
    fn difference(&self, axis: usize, weights: &[(isize, f64)]) -> Self {
        let lat = self.grid.lattice.clone();
        let h = lat.spacing();
        let n_int = lat.n_interior();
        let stencil: Vec<Vec<(usize, f64)>> = (0..n_int)
            .map(|n| {
                weights
                    .iter()
                    .map(|&(step, c)| {
                        let idx = lat
                            .neighbour(n, axis, step)
                            .expect("ghost band covers interior stencils");
                        (idx, c / h)
                    })
                    .collect()
            })
            .collect();
        let mut out = Self::zeros(&self.grid);
        out.values
            .par_chunks_mut(lat.n_active())
            .zip(self.values.par_chunks(lat.n_active()))
            .for_each(|(dst, src)| {
                for (n, terms) in stencil.iter().enumerate() {
                    dst[n] = terms.iter().map(|&(i, c)| c * src[i]).sum();
                }
                lat.fill_ghosts(dst);
            });
        out
    }

    /// `∂_x^α` by nested central differences.
    pub fn derivative_multi(&self, alpha: MultiIndex) -> Self {
        let mut out = self.clone();
        for (axis, &count) in alpha.0.iter().enumerate() {
            for _ in 0..count {
                out = out.derivative(axis);
            }
        }
        out
    }

    /// All derivatives `∂^α` for `|α| <= m`, sharing intermediate results.
    pub fn derivatives_up_to(&self, m: usize) -> Vec<(MultiIndex, Self)> {
        let mut out: Vec<(MultiIndex, Self)> = vec![(MultiIndex::ZERO, self.clone())];
        for alpha in MultiIndex::all_up_to(m).into_iter().skip(1) {
            let axis = alpha.first_axis().expect("nonzero order");
            let parent = alpha.minus_axis(axis);
            let base = &out
                .iter()
                .find(|(a, _)| *a == parent)
                .expect("parents precede children")
                .1;
            let d = base.derivative(axis);
            out.push((alpha, d));
        }
        out
    }

    /// `ω·∇ψ` with fourth-order central differences.
    pub fn transport_derivative(&self) -> Self {
        let dx = [
            self.derivative_fourth_order(0),
            self.derivative_fourth_order(1),
            self.derivative_fourth_order(2),
        ];
        let n_active = self.grid.lattice.n_active();
        let n_dir = self.grid.n_directions();
        let dirs = self.grid.sphere.nodes().to_vec();
        let mut out = Self::zeros(&self.grid);
        out.values.par_chunks_mut(n_active).enumerate().for_each(|(s, dst)| {
            let w = dirs[s % n_dir];
            let o = s * n_active;
            for (n, v) in dst.iter_mut().enumerate() {
                *v = w.x * dx[0].values[o + n] + w.y * dx[1].values[o + n] + w.z * dx[2].values[o + n];
            }
        });
        out
    }

    /// Weighted `L²(G × S × I)` inner product using cut-cell volumes, sphere
    /// weights and trapezoid energy weights.
    pub fn inner(&self, other: &Self) -> f64 {
        let lat = &self.grid.lattice;
        let n_active = lat.n_active();
        let n_dir = self.grid.n_directions();
        let sw = self.grid.sphere.weights();
        let ew = &self.grid.energy.weights;
        let vol = lat.volumes();
        let partials: Vec<f64> = self
            .values
            .par_chunks(n_active)
            .zip(other.values.par_chunks(n_active))
            .enumerate()
            .map(|(s, (a, b))| {
                let w = sw[s % n_dir] * ew[s / n_dir];
                let acc: CompensatedSum = (0..n_active)
                    .filter(|&n| vol[n] > 0.0)
                    .map(|n| vol[n] * a[n] * b[n])
                    .collect();
                w * acc.value()
            })
            .collect();
        partials.into_iter().collect::<CompensatedSum>().value()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }
}
