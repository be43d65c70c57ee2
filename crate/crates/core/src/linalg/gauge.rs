//! Alignment of two unitaries modulo the symmetries that single-photon and
//! two-photon data cannot see: independent phases on every input and output
//! mode, and complex conjugation of the whole matrix.

use num_complex::Complex64;

use super::{ComplexMatrix, UnitaryMatrix, ONE, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 1000;
const SWEEP_TOL: f64 = 1e-10;

/// Result of [`align_gauge`].
#[derive(Clone, Debug)]
pub struct GaugeAlignment {
    /// `D1 · a · D2` (or `D1 · a* · D2` when `conjugated`).
    pub aligned: UnitaryMatrix,
    /// `|Tr[aligned† b]| / m`.
    pub fidelity: f64,
    /// `|Tr[a† b]| / m` before any alignment.
    pub raw_fidelity: f64,
    /// Whether the conjugate of `a` gave the better overlap.
    pub conjugated: bool,
}

/// Gate fidelity `|Tr[a† b]| / m`.
pub fn raw_fidelity(a: &UnitaryMatrix, b: &UnitaryMatrix) -> Result<f64> {
    check_dims(a, b)?;
    Ok(overlap(a.matrix(), b.matrix()).norm() / a.dim() as f64)
}

/// Finds unit-modulus diagonals `D1`, `D2` maximizing `|Tr[(D1 a D2)† b]| / m`
/// and also tries `a*` in place of `a`, keeping whichever overlaps better.
///
/// For fixed `D2` the optimal `D1` is closed-form (conjugate phases of the row
/// overlaps), and vice versa; the two updates alternate until the objective
/// stops improving. Alternation only finds a local optimum, so it is restarted
/// from the phase patterns of every row and column of the overlap matrix as
/// well as from the identity.
pub fn align_gauge(a: &UnitaryMatrix, b: &UnitaryMatrix) -> Result<GaugeAlignment> {
    check_dims(a, b)?;
    let raw = raw_fidelity(a, b)?;
    let direct = best_phases(a.matrix(), b.matrix());
    let conj_a = a.matrix().conjugate();
    let conjugate = best_phases(&conj_a, b.matrix());

    let (source, (left, right), conjugated) = if conjugate.2 > direct.2 + 1e-14 {
        (&conj_a, (conjugate.0, conjugate.1), true)
    } else {
        (a.matrix(), (direct.0, direct.1), false)
    };
    let m = a.dim();
    let aligned = ComplexMatrix::from_fn(m, m, |r, c| left[r] * source[(r, c)] * right[c]);
    let aligned = UnitaryMatrix::new_unchecked(aligned);
    let fidelity = (overlap(aligned.matrix(), b.matrix()).norm() / m as f64).min(1.0);
    Ok(GaugeAlignment {
        aligned,
        fidelity,
        raw_fidelity: raw.min(1.0),
        conjugated,
    })
}

fn check_dims(a: &UnitaryMatrix, b: &UnitaryMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "cannot compare {}-mode and {}-mode unitaries",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `Tr[a† b]`.
fn overlap(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

fn unit_phase(z: Complex64) -> Complex64 {
    let n = z.norm();
    if n > 0.0 {
        z / n
    } else {
        ONE
    }
}

/// Returns `(d1, d2, objective)` where `objective = |Σ conj(d1_i c_ij d2_j) b_ij|`.
fn best_phases(a: &ComplexMatrix, b: &ComplexMatrix) -> (Vec<Complex64>, Vec<Complex64>, f64) {
    let m = a.rows();
    // overlap weights C_ij = conj(a_ij) b_ij; objective |Σ x_i y_j C_ij|
    // with x = conj(d1), y = conj(d2)
    let weights = ComplexMatrix::from_fn(m, m, |r, c| a[(r, c)].conj() * b[(r, c)]);

    let mut starts: Vec<(Vec<Complex64>, bool)> = vec![(vec![ONE; m], true)];
    for k in 0..m {
        // y chosen so row k of the weighted sum is real-positive
        starts.push(((0..m).map(|j| unit_phase(weights[(k, j)]).conj()).collect(), true));
        // x chosen so column k is real-positive
        starts.push(((0..m).map(|i| unit_phase(weights[(i, k)]).conj()).collect(), false));
    }

    let mut best: Option<(Vec<Complex64>, Vec<Complex64>, f64)> = None;
    for (init, is_col_phases) in starts {
        let (x, y, value) = alternate(&weights, init, is_col_phases);
        if best.as_ref().is_none_or(|b| value > b.2) {
            best = Some((x, y, value));
        }
    }
    let (x, y, value) = best.expect("at least one start");
    let d1 = x.iter().map(|z| z.conj()).collect();
    let d2 = y.iter().map(|z| z.conj()).collect();
    (d1, d2, value)
}

fn alternate(
    weights: &ComplexMatrix,
    init: Vec<Complex64>,
    init_is_col_phases: bool,
) -> (Vec<Complex64>, Vec<Complex64>, f64) {
    let m = weights.rows();
    let (mut x, mut y) = if init_is_col_phases {
        (vec![ONE; m], init)
    } else {
        (init, vec![ONE; m])
    };
    // When starting from row phases x, update y first.
    if !init_is_col_phases {
        update_cols(weights, &x, &mut y);
    }
    let mut previous = f64::NEG_INFINITY;
    let mut value = 0.0;
    for _ in 0..MAX_SWEEPS {
        update_rows(weights, &mut x, &y);
        value = update_cols(weights, &x, &mut y);
        if value - previous < SWEEP_TOL {
            break;
        }
        previous = value;
    }
    (x, y, value)
}

fn update_rows(weights: &ComplexMatrix, x: &mut [Complex64], y: &[Complex64]) -> f64 {
    let mut total = 0.0;
    for (i, xi) in x.iter_mut().enumerate() {
        let r: Complex64 = weights.row(i).iter().zip(y).map(|(w, yj)| w * yj).sum();
        *xi = unit_phase(r).conj();
        total += r.norm();
    }
    total
}

fn update_cols(weights: &ComplexMatrix, x: &[Complex64], y: &mut [Complex64]) -> f64 {
    let m = weights.rows();
    let mut total = 0.0;
    for (j, yj) in y.iter_mut().enumerate() {
        let mut s = ZERO;
        for (i, xi) in x.iter().enumerate().take(m) {
            s += xi * weights[(i, j)];
        }
        *yj = unit_phase(s).conj();
        total += s.norm();
    }
    total
}
