//! Truncated free tensor algebra over `R^d`.
//!
//! A [`TruncatedTensor`] of order `N` stores levels `0..=N`; level `k` is a
//! dense block of `d^k` coefficients in row-major multi-index order (the first
//! index varies slowest). Products discard everything above level `N`.

use std::ops::{Add, Sub};

use crate::error::{ensure, Result};

/// Number of coefficients in levels `1..=order` for paths in `R^dim`.
pub fn feature_len(dim: usize, order: usize) -> usize {
    (1..=order).map(|k| dim.pow(k as u32)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    order: usize,
    levels: Vec<Vec<f64>>,
}

impl TruncatedTensor {
    pub fn zeros(dim: usize, order: usize) -> Self {
        assert!(dim >= 1 && order >= 1, "dim and order must be positive");
        let levels = (0..=order).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
        Self { dim, order, levels }
    }

    /// The algebra unit: level 0 is 1, everything else 0.
    pub fn identity(dim: usize, order: usize) -> Self {
        let mut t = Self::zeros(dim, order);
        t.levels[0][0] = 1.0;
        t
    }

    /// Builds a tensor from explicit level blocks, checking block sizes and finiteness.
    pub fn from_levels(dim: usize, order: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        ensure!(dim >= 1 && order >= 1, "dim ({dim}) and order ({order}) must be positive");
        ensure!(
            levels.len() == order + 1,
            "expected {} level blocks, got {}",
            order + 1,
            levels.len()
        );
        for (k, block) in levels.iter().enumerate() {
            let want = dim.pow(k as u32);
            ensure!(block.len() == want, "level {k} has {} entries, expected {want}", block.len());
            ensure!(block.iter().all(|v| v.is_finite()), "level {k} contains a non-finite entry");
        }
        Ok(Self { dim, order, levels })
    }

    /// Lie-like tensor with only level 1 set to `v`.
    pub fn from_vector(v: &[f64], order: usize) -> Result<Self> {
        ensure!(!v.is_empty(), "vector must be non-empty");
        ensure!(v.iter().all(|x| x.is_finite()), "vector contains a non-finite entry");
        let mut t = Self::zeros(v.len(), order);
        t.levels[1].copy_from_slice(v);
        Ok(t)
    }

    /// Rebuilds a tensor from levels `1..=order` laid out back to back, with
    /// the given level-0 scalar.
    pub fn from_flat(dim: usize, order: usize, scalar: f64, flat: &[f64]) -> Result<Self> {
        ensure!(
            flat.len() == feature_len(dim, order),
            "flat length {} does not match d={dim}, N={order} (expected {})",
            flat.len(),
            feature_len(dim, order)
        );
        let mut levels = vec![vec![scalar]];
        let mut offset = 0;
        for k in 1..=order {
            let n = dim.pow(k as u32);
            levels.push(flat[offset..offset + n].to_vec());
            offset += n;
        }
        Self::from_levels(dim, order, levels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.levels[k]
    }

    pub fn scalar(&self) -> f64 {
        self.levels[0][0]
    }

    /// Levels `1..=order` concatenated; level 0 is dropped.
    pub fn flatten(&self) -> Vec<f64> {
        self.levels[1..].iter().flatten().copied().collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.levels.iter_mut().flatten().for_each(|v| *v *= c);
        out
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        ensure!(
            self.dim == other.dim && self.order == other.order,
            "tensor shape mismatch: (d={}, N={}) vs (d={}, N={})",
            self.dim,
            self.order,
            other.dim,
            other.order
        );
        Ok(())
    }

    /// Truncated tensor product. Level `k` of the result is
    /// `sum_{i+j=k} a_i (x) b_j`, with multi-indices concatenated.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zeros(self.dim, self.order);
        for k in 0..=self.order {
            let dst = &mut out.levels[k];
            for i in 0..=k {
                let a = &self.levels[i];
                let b = &other.levels[k - i];
                let b_len = b.len();
                for (ia, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let row = &mut dst[ia * b_len..(ia + 1) * b_len];
                    for (d, &bv) in row.iter_mut().zip(b) {
                        *d += av * bv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Truncated exponential `sum_k x^k / k!`. Requires a zero level-0 entry.
    pub fn exp(&self) -> Result<Self> {
        ensure!(
            self.scalar() == 0.0,
            "exp requires level-0 entry 0, got {}",
            self.scalar()
        );
        let mut acc = Self::identity(self.dim, self.order);
        let mut power = Self::identity(self.dim, self.order);
        for k in 1..=self.order {
            power = power.product(self)?.scale(1.0 / k as f64);
            acc = &acc + &power;
        }
        Ok(acc)
    }

    /// Truncated logarithm `sum_k (-1)^(k+1) (s - 1)^k / k` of a grouplike tensor.
    pub fn log(&self) -> Result<Self> {
        ensure!(
            self.scalar() == 1.0,
            "log requires level-0 entry 1, got {}",
            self.scalar()
        );
        let mut shifted = self.clone();
        shifted.levels[0][0] = 0.0;
        let mut acc = Self::zeros(self.dim, self.order);
        let mut power = Self::identity(self.dim, self.order);
        for k in 1..=self.order {
            power = power.product(&shifted)?;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            acc = &acc + &power.scale(sign / k as f64);
        }
        Ok(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.levels.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest absolute coefficient difference across all levels.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .levels
            .iter()
            .flatten()
            .zip(other.levels.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(
            self.dim == other.dim && self.order == other.order,
            "tensor shape mismatch"
        );
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            .collect();
        Self {
            dim: self.dim,
            order: self.order,
            levels,
        }
    }
}

impl Add for &TruncatedTensor {
    type Output = TruncatedTensor;

    /// Panics on shape mismatch.
    fn add(self, rhs: Self) -> TruncatedTensor {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn sub(self, rhs: Self) -> TruncatedTensor {
        self.zip_with(rhs, |a, b| a - b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn feature_len_matches_geometric_sum() {
        assert_eq!(feature_len(3, 3), 3 + 9 + 27);
        assert_eq!(feature_len(2, 4), 2 + 4 + 8 + 16);
        assert_eq!(feature_len(1, 5), 5);
        assert_eq!(TruncatedTensor::zeros(3, 2).flatten().len(), 12);
    }

    #[test]
    fn identity_is_the_unit() {
        let b = TruncatedTensor::from_levels(
            2,
            2,
            vec![vec![0.3], vec![1.0, -2.0], vec![0.5, 0.25, -1.0, 4.0]],
        )
        .unwrap();
        let id = TruncatedTensor::identity(2, 2);
        assert_eq!(id.product(&b).unwrap(), b);
        assert_eq!(b.product(&id).unwrap(), b);
    }

    #[test]
    fn product_of_axis_exponentials() {
        let a = TruncatedTensor::from_vector(&[1.0, 0.0], 2).unwrap().exp().unwrap();
        let b = TruncatedTensor::from_vector(&[0.0, 1.0], 2).unwrap().exp().unwrap();
        let ab = a.product(&b).unwrap();
        assert_eq!(ab.level(0), &[1.0]);
        assert!(close(ab.level(1), &[1.0, 1.0], 1e-15));
        assert!(close(ab.level(2), &[0.5, 1.0, 0.0, 0.5], 1e-15));
    }

    #[test]
    fn exp_closed_forms() {
        let zero = TruncatedTensor::zeros(3, 3);
        assert_eq!(zero.exp().unwrap(), TruncatedTensor::identity(3, 3));

        let e = TruncatedTensor::from_vector(&[1.0, 2.0], 2).unwrap().exp().unwrap();
        assert!(close(e.level(1), &[1.0, 2.0], 1e-15));
        assert!(close(e.level(2), &[0.5, 1.0, 1.0, 2.0], 1e-15));

        let v = [0.3, -1.2, 2.0];
        let e3 = TruncatedTensor::from_vector(&v, 3).unwrap().exp().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let want = v[i] * v[j] * v[k] / 6.0;
                    let got = e3.level(3)[(i * 3 + j) * 3 + k];
                    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn log_of_product_gives_half_bracket() {
        let a = TruncatedTensor::from_vector(&[1.0, 0.0], 2).unwrap().exp().unwrap();
        let b = TruncatedTensor::from_vector(&[0.0, 1.0], 2).unwrap().exp().unwrap();
        let l = a.product(&b).unwrap().log().unwrap();
        assert_eq!(l.scalar(), 0.0);
        assert!(close(l.level(1), &[1.0, 1.0], 1e-15));
        assert!(close(l.level(2), &[0.0, 0.5, -0.5, 0.0], 1e-15));
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = TruncatedTensor::identity(2, 3).log().unwrap();
        assert_eq!(l, TruncatedTensor::zeros(2, 3));
    }

    #[test]
    fn log_exp_of_level_one_has_no_higher_levels() {
        let x = TruncatedTensor::from_vector(&[0.7, -0.4, 1.1], 4).unwrap();
        let back = x.exp().unwrap().log().unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-14);
    }

    #[test]
    fn contract_violations() {
        let a = TruncatedTensor::identity(2, 2);
        let b = TruncatedTensor::identity(3, 2);
        let c = TruncatedTensor::identity(2, 3);
        assert!(matches!(a.product(&b), Err(Error::Contract(_))));
        assert!(matches!(a.product(&c), Err(Error::Contract(_))));
        assert!(matches!(a.exp(), Err(Error::Contract(_))));
        assert!(matches!(TruncatedTensor::zeros(2, 2).log(), Err(Error::Contract(_))));
        assert!(TruncatedTensor::from_levels(2, 1, vec![vec![1.0], vec![1.0]]).is_err());
        assert!(TruncatedTensor::from_levels(1, 1, vec![vec![1.0], vec![f64::NAN]]).is_err());
    }

    #[test]
    fn flat_roundtrip() {
        let t = TruncatedTensor::from_vector(&[0.5, -1.5], 3).unwrap().exp().unwrap();
        let back = TruncatedTensor::from_flat(2, 3, 1.0, &t.flatten()).unwrap();
        assert_eq!(back, t);
    }

    fn arb_shape() -> impl Strategy<Value = (usize, usize)> {
        (1usize..=3, 1usize..=4)
    }

    fn arb_tensor(dim: usize, order: usize, scalar: Option<f64>) -> impl Strategy<Value = TruncatedTensor> {
        proptest::collection::vec(-1.5f64..1.5, feature_len(dim, order) + 1).prop_map(move |v| {
            let s = scalar.unwrap_or(v[0]);
            TruncatedTensor::from_flat(dim, order, s, &v[1..]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn product_is_associative(
            (a, b, c) in arb_shape().prop_flat_map(|(d, n)| (
                arb_tensor(d, n, None),
                arb_tensor(d, n, None),
                arb_tensor(d, n, None),
            ))
        ) {
            let left = a.product(&b).unwrap().product(&c).unwrap();
            let right = a.product(&b.product(&c).unwrap()).unwrap();
            let scale = left.max_abs().max(1.0);
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-12 * scale);
        }

        #[test]
        fn log_inverts_exp(x in arb_shape().prop_flat_map(|(d, n)| arb_tensor(d, n, Some(0.0)))) {
            let back = x.exp().unwrap().log().unwrap();
            let scale = x.max_abs().max(1.0);
            prop_assert!(back.max_abs_diff(&x).unwrap() <= 1e-12 * scale);
        }

        #[test]
        fn collinear_exponentials_add(
            (v, s, t) in (1usize..=3, 1usize..=4).prop_flat_map(|(d, _)| (
                proptest::collection::vec(-1.0f64..1.0, d),
                -2.0f64..2.0,
                -2.0f64..2.0,
            )),
            order in 1usize..=4,
        ) {
            let a: Vec<f64> = v.iter().map(|x| x * s).collect();
            let b: Vec<f64> = v.iter().map(|x| x * t).collect();
            let sum: Vec<f64> = v.iter().map(|x| x * (s + t)).collect();
            let ea = TruncatedTensor::from_vector(&a, order).unwrap().exp().unwrap();
            let eb = TruncatedTensor::from_vector(&b, order).unwrap().exp().unwrap();
            let esum = TruncatedTensor::from_vector(&sum, order).unwrap().exp().unwrap();
            let prod = ea.product(&eb).unwrap();
            prop_assert!(prod.max_abs_diff(&esum).unwrap() <= 1e-12 * esum.max_abs().max(1.0));
        }
    }
}
