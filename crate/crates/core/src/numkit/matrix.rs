use serde::{Deserialize, Serialize};

use super::vector::dot_slices;
use super::{NumError, NumResult, Vec64};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = Self::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> NumResult<Self> {
        if data.len() != rows * cols {
            return Err(NumError::ShapeMismatch {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> NumResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumError::ShapeMismatch {
                    rows: r,
                    cols: c,
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec64 {
        Vec64::from_vec((0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, v: &Vec64) -> NumResult<Vec64> {
        if v.len() != self.cols {
            return Err(NumError::ShapeMismatch {
                rows: self.rows,
                cols: self.cols,
                len: v.len(),
            });
        }
        let mut out = Vec64::zeros(self.rows);
        self.matvec_into(v.as_slice(), out.as_mut_slice());
        if out.is_finite() {
            Ok(out)
        } else {
            Err(NumError::NonFinite("matvec"))
        }
    }

    /// Unchecked `out = self · v` on raw slices.
    #[inline]
    pub(crate) fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot_slices(self.row(i), v);
        }
    }

    pub fn matmul(&self, other: &Mat64) -> NumResult<Mat64> {
        if self.cols != other.rows {
            return Err(NumError::ShapeMismatch {
                rows: other.rows,
                cols: other.cols,
                len: self.cols,
            });
        }
        let t = other.transpose();
        let mut out = Mat64::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                out.set(i, j, dot_slices(self.row(i), t.row(j)));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Mat64 {
        let mut t = Mat64::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `a·self + b·I`
    pub fn scaled_plus_identity(&self, a: f64, b: f64) -> Mat64 {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= a;
        }
        for i in 0..self.rows.min(self.cols) {
            let v = m.get(i, i);
            m.set(i, i, v + b);
        }
        m
    }

    pub fn scale(&self, s: f64) -> Mat64 {
        self.scaled_plus_identity(s, 0.0)
    }

    pub fn add(&self, other: &Mat64) -> NumResult<Mat64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumError::ShapeMismatch {
                rows: self.rows,
                cols: self.cols,
                len: other.rows * other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Mat64 {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        (0..self.rows).all(|i| {
            (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale)
        })
    }

    /// `(M + Mᵀ)/2`
    pub fn sym_part(&self) -> Mat64 {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                s.set(i, j, 0.5 * (self.get(i, j) + self.get(j, i)));
            }
        }
        s
    }

    /// Gershgorin interval `[lo, hi]` containing every eigenvalue of a
    /// symmetric matrix.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.rows {
            let radius: f64 = (0..self.cols)
                .filter(|&j| j != i)
                .map(|j| self.get(i, j).abs())
                .sum();
            lo = lo.min(self.get(i, i) - radius);
            hi = hi.max(self.get(i, i) + radius);
        }
        if self.rows == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    pub fn cholesky(&self) -> NumResult<Cholesky> {
        Cholesky::new(self)
    }

    pub fn lu(&self) -> NumResult<Lu> {
        Lu::new(self)
    }

    /// Solve `self · x = b` by partial-pivot LU.
    pub fn solve(&self, b: &Vec64) -> NumResult<Vec64> {
        self.lu()?.solve(b)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Lower-triangular factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat64,
}

impl Cholesky {
    pub fn new(m: &Mat64) -> NumResult<Self> {
        if !m.is_square() {
            return Err(NumError::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        let d = m.rows;
        let mut l = Mat64::zeros(d, d);
        for j in 0..d {
            let mut s = m.get(j, j);
            for k in 0..j {
                s -= l.get(j, k) * l.get(j, k);
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(NumError::NotPositiveDefinite);
            }
            let ljj = s.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..d {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Mat64 {
        &self.l
    }

    pub fn solve(&self, b: &Vec64) -> NumResult<Vec64> {
        let d = self.l.rows;
        if b.len() != d {
            return Err(NumError::ShapeMismatch {
                rows: d,
                cols: d,
                len: b.len(),
            });
        }
        let mut y = b.clone().into_vec();
        self.solve_in_place(&mut y);
        let y = Vec64::from_vec(y);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(NumError::NonFinite("cholesky solve"))
        }
    }

    pub(crate) fn solve_in_place(&self, y: &mut [f64]) {
        let d = self.l.rows;
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= self.l.get(k, i) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
    }
}

/// Partial-pivot LU factorization `P M = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat64,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(m: &Mat64) -> NumResult<Self> {
        if !m.is_square() {
            return Err(NumError::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        let d = m.rows;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..d).collect();
        let scale = m.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for k in 0..d {
            let (p, pivot) = (k..d)
                .map(|i| (i, lu.get(i, k).abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= f64::EPSILON * scale * d as f64 || pivot == 0.0 {
                return Err(NumError::Singular);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..d {
                    let a = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, a);
                }
            }
            let pkk = lu.get(k, k);
            for i in (k + 1)..d {
                let f = lu.get(i, k) / pkk;
                lu.set(i, k, f);
                for j in (k + 1)..d {
                    let v = lu.get(i, j) - f * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &Vec64) -> NumResult<Vec64> {
        let d = self.lu.rows;
        if b.len() != d {
            return Err(NumError::ShapeMismatch {
                rows: d,
                cols: d,
                len: b.len(),
            });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu.get(i, k) * y[k];
            }
            y[i] = s;
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= self.lu.get(i, k) * y[k];
            }
            y[i] = s / self.lu.get(i, i);
        }
        let y = Vec64::from_vec(y);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(NumError::NonFinite("lu solve"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_examples() {
        let v = Vec64::from_vec(vec![1.0, -2.0, 3.5]);
        assert_eq!(Mat64::identity(3).matvec(&v).unwrap(), v);
        let d = Mat64::from_diag(&[2.0, 3.0]);
        assert_eq!(
            d.matvec(&Vec64::from_vec(vec![1.0, 1.0])).unwrap().into_vec(),
            vec![2.0, 3.0]
        );
        assert_eq!(Mat64::zeros(3, 3).matvec(&v).unwrap(), Vec64::zeros(3));
    }

    #[test]
    fn matvec_shape_mismatch() {
        let err = Mat64::identity(3).matvec(&Vec64::zeros(2)).unwrap_err();
        assert_eq!(
            err,
            NumError::ShapeMismatch {
                rows: 3,
                cols: 3,
                len: 2
            }
        );
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Mat64::from_diag(&[1.0, -1.0]);
        assert_eq!(m.cholesky().unwrap_err(), NumError::NotPositiveDefinite);
    }

    #[test]
    fn solvers_agree() {
        let m = Mat64::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap();
        let b = Vec64::from_vec(vec![1.0, 2.0, 3.0]);
        let x1 = m.cholesky().unwrap().solve(&b).unwrap();
        let x2 = m.solve(&b).unwrap();
        let r = m.matvec(&x1).unwrap().sub(&b).unwrap();
        assert!(r.norm() < 1e-14);
        assert!(x1.sub(&x2).unwrap().norm() < 1e-14);
    }

    #[test]
    fn lu_detects_singular() {
        let m = Mat64::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(m.lu().unwrap_err(), NumError::Singular);
    }

    proptest! {
        #[test]
        fn identity_matvec_is_exact(v in prop::collection::vec(-1e6f64..1e6, 1..30)) {
            let v = Vec64::from_vec(v);
            let out = Mat64::identity(v.len()).matvec(&v).unwrap();
            prop_assert_eq!(out, v);
        }
    }
}
