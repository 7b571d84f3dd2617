//! Saliency grids and signed difference grids.

use crate::error::{Error, Result};

/// Non-negative per-pixel importance, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} values for a {width}x{height} map, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("saliency value {v} is negative or non-finite")));
        }
        Ok(Self { width, height, values, normalized: false })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height], normalized: false }
    }

    /// Wraps values the caller guarantees are finite and non-negative.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self { width, height, values, normalized: false }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Compensated sum of all values.
    pub fn sum(&self) -> f64 {
        stable_sum(self.values.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|v| *v == self.values[0])
    }

    pub fn ensure_same_dims(&self, other: &SaliencyMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), actual: other.dims() });
        }
        Ok(())
    }
}

/// Rescales to `[0, 1]` via `(v - min) / (max - min)`. A constant map becomes
/// all zeros.
/// Neumaier summation.
pub(crate) fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub fn minmax_normalize(m: &SaliencyMap) -> SaliencyMap {
    let (lo, hi) = (m.min(), m.max());
    let range = hi - lo;
    let values = if range > 0.0 {
        m.values.iter().map(|v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; m.values.len()]
    };
    SaliencyMap { width: m.width, height: m.height, values, normalized: true }
}

/// Signed per-pixel grid, e.g. the difference of two saliency maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DiffMap {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let m = SaliencyMap::new(2, 2, vec![2., 4., 6., 2.]).unwrap();
        let n = minmax_normalize(&m);
        assert_eq!(n.values(), &[0.0, 0.5, 1.0, 0.0]);
        assert!(n.is_normalized());

        let c = minmax_normalize(&SaliencyMap::new(2, 1, vec![5., 5.]).unwrap());
        assert_eq!(c.values(), &[0.0, 0.0]);

        assert_eq!(minmax_normalize(&n).values(), n.values());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SaliencyMap::new(2, 1, vec![1.0]).is_err());
        assert!(SaliencyMap::new(2, 1, vec![1.0, -0.5]).is_err());
        assert!(SaliencyMap::new(2, 1, vec![1.0, f64::NAN]).is_err());
    }

    fn argmax(v: &[f64]) -> usize {
        let mut b = 0;
        for (i, x) in v.iter().enumerate() {
            if *x > v[b] {
                b = i;
            }
        }
        b
    }

    fn argmin(v: &[f64]) -> usize {
        let mut b = 0;
        for (i, x) in v.iter().enumerate() {
            if *x < v[b] {
                b = i;
            }
        }
        b
    }

    proptest! {
        #[test]
        fn normalize_idempotent_and_order_preserving(
            vals in prop::collection::vec(0.0..1000.0f64, 1..64)
        ) {
            let m = SaliencyMap::new(vals.len(), 1, vals.clone()).unwrap();
            let n = minmax_normalize(&m);
            let again = minmax_normalize(&n);
            prop_assert_eq!(again.values(), n.values());
            if !m.is_constant() {
                prop_assert_eq!(argmax(n.values()), argmax(&vals));
                prop_assert_eq!(argmin(n.values()), argmin(&vals));
                prop_assert_eq!(n.min(), 0.0);
                prop_assert_eq!(n.max(), 1.0);
            }
        }
    }
}
