use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ComplexMatrix, UnitaryMatrix};
use crate::error::{Error, Result};

/// Draws an `m x m` unitary from the Haar measure.
///
/// QR-factorizes a complex Ginibre matrix and rescales the columns of `Q` by
/// the phases of `diag(R)`. Without that correction the factorization's sign
/// convention biases the distribution.
pub fn haar_random_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    if m < 2 {
        return Err(Error::domain(format!("Haar sampling needs m >= 2, got {m}")));
    }
    let ginibre = ComplexMatrix::from_fn(m, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let qr = ginibre.to_nalgebra().qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = ComplexMatrix::from_nalgebra(&q);
    for c in 0..m {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { super::ONE };
        for row in 0..m {
            out.set(row, c, out[(row, c)] * phase);
        }
    }
    UnitaryMatrix::new(out, super::UNITARITY_TOL)
}
