//! Dense complex matrices, unitarity checks, Haar sampling and gauge alignment.
//!
//! Matrices are small (a handful of optical modes) so everything here is a
//! plain row-major `Vec<Complex64>`; the only place a general-purpose linear
//! algebra crate is used is for the QR and SVD factorizations behind
//! [`haar_random_unitary`] and [`nearest_unitary`].

mod gauge;
mod haar;
mod polar;

use std::ops::Index;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use gauge::{align_gauge, raw_fidelity, GaugeAlignment};
pub use haar::haar_random_unitary;
pub use polar::nearest_unitary;

/// Tolerance on `max |U†U - I|` for matrices built in memory.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Tolerance used when re-validating matrices read back from text files.
pub const PARSED_UNITARITY_TOL: f64 = 1e-6;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A dense, row-major complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(Error::shape(format!(
                "ragged rows: row {bad} has {} entries, expected {n_cols}",
                rows[bad].len()
            )));
        }
        Self::new(n_rows, n_cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| ZERO)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { ONE } else { ZERO })
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |r, c| if r == c { diag[r] } else { ZERO })
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

    /// Row-major view of the entries.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, value: Complex64) {
        self.data[r * self.cols + c] = value;
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn conjugate(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn trace(&self) -> Result<Complex64> {
        if !self.is_square() {
            return Err(Error::shape(format!(
                "trace of non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok((0..self.rows).map(|i| self[(i, i)]).sum())
    }

    /// Standard matrix product `self * other`.
    pub fn multiply(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![ZERO; self.rows * other.cols];
        for r in 0..self.rows {
            let out_row = &mut out[r * other.cols..(r + 1) * other.cols];
            for (k, &lhs) in self.row(r).iter().enumerate() {
                if lhs == ZERO {
                    continue;
                }
                for (o, &rhs) in out_row.iter_mut().zip(other.row(k)) {
                    *o += lhs * rhs;
                }
            }
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(format!(
                "cannot compare {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

/// `max |m†m - I|` over all entries.
pub fn unitarity_defect(m: &ComplexMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::shape(format!(
            "unitarity check needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut gram = ZERO;
            for k in 0..n {
                gram += m[(k, a)].conj() * m[(k, b)];
            }
            if a == b {
                gram -= ONE;
            }
            worst = worst.max(gram.norm());
        }
    }
    Ok(worst)
}

/// True iff `max |m†m - I| <= tol`.
pub fn check_unitary(m: &ComplexMatrix, tol: f64) -> Result<bool> {
    Ok(unitarity_defect(m)? <= tol)
}

/// A square matrix known to be unitary to within [`UNITARITY_TOL`] (or the
/// looser tolerance it was validated against).
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    pub fn new(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        let defect = unitarity_defect(&matrix)?;
        if defect > tol {
            return Err(Error::domain(format!(
                "matrix is not unitary: max |U†U - I| = {defect:.3e} exceeds {tol:.1e}"
            )));
        }
        Ok(Self(matrix))
    }

    /// Wraps a matrix that is unitary by construction.
    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        debug_assert!(matrix.is_square());
        Self(matrix)
    }

    pub fn identity(m: usize) -> Self {
        Self(ComplexMatrix::identity(m))
    }

    /// Number of optical modes.
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn conjugate(&self) -> Self {
        Self(self.0.conjugate())
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `D_left * U * D_right` for unit-modulus diagonal phases given in radians.
    pub fn with_phases(&self, left: &[f64], right: &[f64]) -> Result<Self> {
        let m = self.dim();
        if left.len() != m || right.len() != m {
            return Err(Error::shape(format!(
                "phase vectors of length {} and {} for a {m}-mode unitary",
                left.len(),
                right.len()
            )));
        }
        Ok(Self(ComplexMatrix::from_fn(m, m, |r, c| {
            Complex64::from_polar(1.0, left[r] + right[c]) * self.0[(r, c)]
        })))
    }

    pub fn multiply(&self, other: &UnitaryMatrix) -> Result<UnitaryMatrix> {
        Ok(Self(self.0.multiply(&other.0)?))
    }
}

impl Index<(usize, usize)> for UnitaryMatrix {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.0[idx]
    }
}

impl AsRef<ComplexMatrix> for UnitaryMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
        // entries of modulus <= 1
        ComplexMatrix::from_fn(n, n, |_, _| {
            Complex64::from_polar(rng.random::<f64>(), rng.random::<f64>() * std::f64::consts::TAU)
        })
    }

    fn naive_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![ZERO; b.cols()]; a.rows()];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                for k in 0..a.cols() {
                    *slot += a[(i, k)] * b[(k, j)];
                }
            }
        }
        out
    }

    #[test]
    fn identity_is_left_neutral() {
        let mut rng = stream(1, &[]);
        let m = random_matrix(3, &mut rng);
        let out = ComplexMatrix::identity(3).multiply(&m).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn inverse_phases_multiply_to_identity() {
        let a = ComplexMatrix::from_diagonal(&[c(0.0, 1.0), ONE]);
        let b = ComplexMatrix::from_diagonal(&[c(0.0, -1.0), ONE]);
        assert_eq!(a.multiply(&b).unwrap(), ComplexMatrix::identity(2));
    }

    #[test]
    fn product_matches_triple_loop() {
        let mut rng = stream(2, &[]);
        let a = random_matrix(3, &mut rng);
        let b = random_matrix(3, &mut rng);
        let fast = a.multiply(&b).unwrap();
        let slow = naive_product(&a, &b);
        for i in 0..3 {
            for j in 0..3 {
                assert!((fast[(i, j)] - slow[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rectangular_product_and_mismatch() {
        let a = ComplexMatrix::from_fn(2, 3, |r, c| Complex64::new((r + c) as f64, 0.0));
        let b = ComplexMatrix::from_fn(3, 4, |r, c| Complex64::new(r as f64, c as f64));
        let p = a.multiply(&b).unwrap();
        assert_eq!((p.rows(), p.cols()), (2, 4));
        assert!(matches!(b.multiply(&a), Err(Error::Shape(_))));
    }

    #[test]
    fn multiply_is_associative() {
        let mut rng = stream(3, &[]);
        for _ in 0..20 {
            let a = random_matrix(7, &mut rng);
            let b = random_matrix(7, &mut rng);
            let cc = random_matrix(7, &mut rng);
            let left = a.multiply(&b).unwrap().multiply(&cc).unwrap();
            let right = a.multiply(&b.multiply(&cc).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right).unwrap() < 1e-12);
        }
    }

    #[test]
    fn unitarity_checks() {
        assert!(check_unitary(&ComplexMatrix::identity(5), 1e-10).unwrap());
        let lossy = ComplexMatrix::from_diagonal(&[ONE, c(0.999, 0.0)]);
        assert!(!check_unitary(&lossy, 1e-10).unwrap());
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(check_unitary(&rect, 1e-10), Err(Error::Shape(_))));
        assert!(UnitaryMatrix::new(lossy, 1e-10).is_err());
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(ComplexMatrix::new(2, 2, vec![ONE; 3]).is_err());
        assert!(ComplexMatrix::new(0, 2, vec![]).is_err());
        assert!(ComplexMatrix::new(1, 1, vec![c(f64::NAN, 0.0)]).is_err());
        assert!(ComplexMatrix::from_rows(&[vec![ONE, ONE], vec![ONE]]).is_err());
    }

    #[test]
    fn with_phases_keeps_unitarity() {
        let u = UnitaryMatrix::identity(3).with_phases(&[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0]).unwrap();
        assert!(check_unitary(u.matrix(), 1e-12).unwrap());
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, 2.2)).norm() < 1e-15);
    }
}
