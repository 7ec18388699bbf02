use serde::Serialize;

/// Spatial multi-index `α = (α₁, α₂, α₃)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct MultiIndex(pub [u8; 3]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0, 0]);

    pub fn unit(axis: usize) -> Self {
        let mut a = [0; 3];
        a[axis] = 1;
        Self(a)
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// All multi-indices with `|α| <= m`, ordered by total order.
    pub fn all_up_to(m: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for total in 0..=m {
            for a in (0..=total).rev() {
                for b in (0..=total - a).rev() {
                    out.push(MultiIndex([a as u8, b as u8, (total - a - b) as u8]));
                }
            }
        }
        out
    }

    /// All `β <= α` componentwise.
    pub fn below(&self) -> Vec<MultiIndex> {
        let [a, b, c] = self.0;
        let mut out = Vec::new();
        for i in 0..=a {
            for j in 0..=b {
                for k in 0..=c {
                    out.push(MultiIndex([i, j, k]));
                }
            }
        }
        out
    }

    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn minus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex([self.0[0] - other.0[0], self.0[1] - other.0[1], self.0[2] - other.0[2]])
    }

    pub fn first_axis(&self) -> Option<usize> {
        self.0.iter().position(|&a| a > 0)
    }

    pub fn minus_axis(&self, axis: usize) -> MultiIndex {
        let mut a = self.0;
        a[axis] -= 1;
        MultiIndex(a)
    }

    /// Multinomial binomial `binom(α, β) = Π binom(α_i, β_i)`.
    pub fn binomial(&self, beta: &MultiIndex) -> f64 {
        self.0
            .iter()
            .zip(&beta.0)
            .map(|(&a, &b)| binomial(a as u64, b as u64))
            .product()
    }
}

pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `(Σ_{β<=α} binom(α,β)²)^{1/2}`: the ℓ² Leibniz factor of one multi-index.
pub fn leibniz_factor(alpha: MultiIndex) -> f64 {
    alpha
        .below()
        .iter()
        .map(|b| alpha.binomial(b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Constant `c(m)` with `‖Σψ‖_{H^m} <= c(m) ‖Σ‖_{W^{∞,m}} ‖ψ‖_{H^m}`.
///
/// Cauchy–Schwarz on the Leibniz sum bounds `‖∂^α(Σψ)‖²` by
/// `leibniz_factor(α)² ‖Σ‖² Σ_{β<=α} ‖∂^βψ‖²`; summing over `|α| <= m` gives
/// `c(m)² = Σ_{|α|<=m} leibniz_factor(α)²` (the `β = 0` term is the worst
/// case of the regrouped sum).
pub fn leibniz_constant(m: usize) -> f64 {
    MultiIndex::all_up_to(m)
        .into_iter()
        .map(|a| leibniz_factor(a).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts() {
        assert_eq!(MultiIndex::all_up_to(0).len(), 1);
        assert_eq!(MultiIndex::all_up_to(1).len(), 4);
        assert_eq!(MultiIndex::all_up_to(2).len(), 10);
        assert_eq!(MultiIndex::all_up_to(3).len(), 20);
    }

    #[test]
    fn leibniz_factor_of_first_order_index_is_sqrt2() {
        for axis in 0..3 {
            assert!((leibniz_factor(MultiIndex::unit(axis)) - 2f64.sqrt()).abs() < 1e-15);
        }
        assert_eq!(leibniz_factor(MultiIndex::ZERO), 1.0);
    }

    #[test]
    fn leibniz_constant_low_orders() {
        assert_eq!(leibniz_constant(0), 1.0);
        // 1 + 3·2
        assert!((leibniz_constant(1) - 7f64.sqrt()).abs() < 1e-14);
        // 1 + 3·2 + 3·(1+4+1) + 3·(1+1+1+1)
        assert!((leibniz_constant(2) - 37f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(2, 3), 0.0);
        assert_eq!(MultiIndex([2, 1, 0]).binomial(&MultiIndex([1, 1, 0])), 2.0);
    }
}
