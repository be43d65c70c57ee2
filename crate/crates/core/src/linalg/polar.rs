use super::{ComplexMatrix, UnitaryMatrix, UNITARITY_TOL};
use crate::error::{Error, Result};

/// Closest unitary in Frobenius norm: the unitary factor of the polar
/// decomposition, `W V†` for `A = W Σ V†`.
pub fn nearest_unitary(a: &ComplexMatrix) -> Result<UnitaryMatrix> {
    if !a.is_square() {
        return Err(Error::shape(format!(
            "polar projection needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let svd = a.to_nalgebra().svd(true, true);
    let (Some(w), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Procedure("SVD did not converge".into()));
    };
    UnitaryMatrix::new(ComplexMatrix::from_nalgebra(&(w * v_t)), UNITARITY_TOL)
}
