use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::{Mat64, NumError, NumResult};

/// Fixed-length vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    /// The `i`-th standard basis vector of length `d`.
    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = Self::zeros(d);
        v.0[i] = 1.0;
        v
    }

    pub fn filled(d: usize, value: f64) -> Self {
        Self(vec![value; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    fn check_len(&self, other: &Self) -> NumResult<()> {
        if self.len() != other.len() {
            return Err(NumError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    fn finite(self, op: &'static str) -> NumResult<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(NumError::NonFinite(op))
        }
    }

    pub fn dot(&self, other: &Self) -> NumResult<f64> {
        dot(self, other)
    }

    pub fn norm_sq(&self) -> f64 {
        dot_slices(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn add(&self, other: &Self) -> NumResult<Self> {
        self.check_len(other)?;
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()).finite("add")
    }

    pub fn sub(&self, other: &Self) -> NumResult<Self> {
        self.check_len(other)?;
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()).finite("sub")
    }

    pub fn scale(&self, s: f64) -> NumResult<Self> {
        Self(self.0.iter().map(|a| a * s).collect()).finite("scale")
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &Self) -> NumResult<()> {
        self.check_len(x)?;
        for (s, xi) in self.0.iter_mut().zip(&x.0) {
            *s += alpha * xi;
        }
        if self.is_finite() {
            Ok(())
        } else {
            Err(NumError::NonFinite("axpy"))
        }
    }

    /// `‖self − other‖²` with compensated accumulation.
    pub fn dist_sq(&self, other: &Self) -> NumResult<f64> {
        self.check_len(other)?;
        let mut acc = Neumaier::default();
        for (a, b) in self.0.iter().zip(&other.0) {
            let t = a - b;
            acc.add(t * t);
        }
        let v = acc.total();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NumError::NonFinite("dist_sq"))
        }
    }

    pub fn l1_norm(&self) -> f64 {
        let mut acc = Neumaier::default();
        for a in &self.0 {
            acc.add(a.abs());
        }
        acc.total()
    }
}

impl Index<usize> for Vec64 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vec64 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for Vec64 {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated inner product of two equal-length slices. No length check.
#[inline]
pub fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = Neumaier::default();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.total()
}

/// Σ aᵢbᵢ with Neumaier compensation.
pub fn dot(a: &Vec64, b: &Vec64) -> NumResult<f64> {
    a.check_len(b)?;
    let v = dot_slices(a.as_slice(), b.as_slice());
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumError::NonFinite("dot"))
    }
}

pub fn matvec(m: &Mat64, v: &Vec64) -> NumResult<Vec64> {
    m.matvec(v)
}
