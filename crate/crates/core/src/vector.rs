//! Dense parameter vector.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense real vector of tunable generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T>(Vec<T>);

impl<T: Real> ParamVector<T> {
    pub fn from_vec(values: Vec<T>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![T::zero(); dim])
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> T) -> Self {
        ParamVector((0..dim).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_dim(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "vector add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "vector sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, factor: T) -> Self {
        ParamVector(self.0.iter().map(|&v| v * factor).collect())
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(T, T) -> T) -> Self {
        ParamVector(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Dot product, accumulated strictly left to right.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_dim(other, "dot product")?;
        let mut acc = T::zero();
        for (&a, &b) in self.0.iter().zip(other.0.iter()) {
            acc = acc + a * b;
        }
        Ok(acc)
    }

    pub fn squared_norm(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.0 {
            acc = acc + v * v;
        }
        acc
    }

    pub fn squared_distance(&self, other: &Self) -> Result<T> {
        self.check_same_dim(other, "distance")?;
        let mut acc = T::zero();
        for (&a, &b) in self.0.iter().zip(other.0.iter()) {
            let d = a - b;
            acc = acc + d * d;
        }
        Ok(acc)
    }

    pub fn clamp_elementwise(&self, lo: T, hi: T) -> Self {
        ParamVector(
            self.0
                .iter()
                .map(|&v| if v < lo { lo } else if v > hi { hi } else { v })
                .collect(),
        )
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn from_f64_slice(values: &[f64]) -> Self {
        ParamVector(values.iter().map(|&v| T::from_f64_lossy(v)).collect())
    }
}

impl<T> std::ops::Index<usize> for ParamVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> std::ops::IndexMut<usize> for ParamVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Real> FromIterator<T> for ParamVector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        ParamVector(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_basics() {
        let a: ParamVector<f64> = ParamVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = ParamVector::from_vec(vec![4.0, 5.0, 6.0]);
        assert_eq!(a.add(&b).unwrap().as_slice(), &[5.0, 7.0, 9.0]);
        assert_eq!(a.sub(&b).unwrap().as_slice(), &[-3.0, -3.0, -3.0]);
        assert_eq!(a.scale(2.0).as_slice(), &[2.0, 4.0, 6.0]);
        assert_eq!(a.dot(&b).unwrap(), 32.0);
        assert_eq!(a.squared_norm(), 14.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a: ParamVector<f64> = ParamVector::zeros(2);
        let b = ParamVector::zeros(3);
        assert!(matches!(
            a.add(&b),
            Err(crate::error::Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn clamp_respects_bounds() {
        let v: ParamVector<f64> = ParamVector::from_vec(vec![-2.0, 0.5, 7.0]);
        assert_eq!(v.clamp_elementwise(0.0, 1.0).as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn generic_over_f32() {
        let v: ParamVector<f32> = ParamVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(v.squared_norm(), 2.0f32);
    }
}
