//! Triangular beam-splitter mesh: the DNA representation of a unitary.
//!
//! A gene is one phase-shifter pair followed by a beam splitter acting on two
//! adjacent modes,
//!
//! ```text
//! B(t, α, β) = [[√t, i√(1-t)], [i√(1-t), √t]] · diag(e^{iα}, e^{iβ})
//! ```
//!
//! and a DNA is the ordered list of `m(m-1)/2` genes. The unitary of a DNA is
//! the left-to-right product of the genes embedded in the `m x m` identity at
//! the mode pairs given by [`TriangleSchedule`].
//!
//! Rows of every unitary index output modes and columns index input modes.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, UnitaryMatrix, ONE, ZERO};

/// Largest transmittivity a gene may carry; `t = 1` itself is excluded.
pub const T_MAX: f64 = 1.0 - 1e-12;

/// Version tag of the gene layout written into DNA files.
pub const SCHEDULE_VERSION: u32 = 1;

/// Number of genes for `m` modes.
pub fn gene_count(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

/// One PS-PS-BS element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    /// Beam-splitter transmittivity in `[0, 1)`.
    pub t: f64,
    /// Phase on the upper mode, radians in `[0, 2π)`.
    pub alpha: f64,
    /// Phase on the lower mode, radians in `[0, 2π)`.
    pub beta: f64,
}

impl Gene {
    pub fn new(t: f64, alpha: f64, beta: f64) -> Result<Self> {
        let g = Self { t, alpha, beta };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.t) {
            return Err(Error::domain(format!("transmittivity {} outside [0, 1)", self.t)));
        }
        for (name, phase) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..TAU).contains(&phase) {
                return Err(Error::domain(format!("{name} = {phase} outside [0, 2π)")));
            }
        }
        Ok(())
    }

    /// Fresh gene with `t ~ U[0,1)` and both phases `~ U[0,2π)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            t: rng.random::<f64>(),
            alpha: wrap_phase(rng.random::<f64>() * TAU),
            beta: wrap_phase(rng.random::<f64>() * TAU),
        }
    }

    fn block(&self) -> [[Complex64; 2]; 2] {
        let cos = self.t.sqrt();
        let sin = (1.0 - self.t).sqrt();
        let ea = Complex64::from_polar(1.0, self.alpha);
        let eb = Complex64::from_polar(1.0, self.beta);
        let isin = Complex64::new(0.0, sin);
        [[ea * cos, eb * isin], [ea * isin, eb * cos]]
    }
}

/// Maps any phase into `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// The 2x2 unitary of a gene: `BS(t) · diag(e^{iα}, e^{iβ})`.
pub fn gene_block(gene: &Gene) -> Result<ComplexMatrix> {
    gene.validate()?;
    let b = gene.block();
    ComplexMatrix::new(2, 2, vec![b[0][0], b[0][1], b[1][0], b[1][1]])
}

/// Mode pairs `(p, p+1)` in the order genes are multiplied.
///
/// The layout runs over the diagonals of the triangle: diagonal `d`
/// (`1 <= d < m`) contributes the pairs starting at modes `d-1, d-2, ..., 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriangleSchedule {
    m: usize,
    upper_modes: Vec<usize>,
}

impl TriangleSchedule {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain(format!("a mesh needs m >= 2 modes, got {m}")));
        }
        let mut upper_modes = Vec::with_capacity(gene_count(m));
        for diagonal in 1..m {
            upper_modes.extend((0..diagonal).rev());
        }
        Ok(Self { m, upper_modes })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.upper_modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper_modes.is_empty()
    }

    /// Mode pair acted on by gene slot `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        let p = self.upper_modes[k];
        (p, p + 1)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.upper_modes.iter().map(|&p| (p, p + 1))
    }
}

/// An ordered list of genes for an `m`-mode mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Dna {
    m: usize,
    genes: Vec<Gene>,
}

impl Dna {
    pub fn new(m: usize, genes: Vec<Gene>) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain(format!("a DNA needs m >= 2 modes, got {m}")));
        }
        if genes.len() != gene_count(m) {
            return Err(Error::shape(format!(
                "{} genes supplied, {m} modes need {}",
                genes.len(),
                gene_count(m)
            )));
        }
        for (k, g) in genes.iter().enumerate() {
            g.validate()
                .map_err(|e| Error::domain(format!("gene {k}: {e}")))?;
        }
        Ok(Self { m, genes })
    }

    pub(crate) fn new_unchecked(m: usize, genes: Vec<Gene>) -> Self {
        debug_assert_eq!(genes.len(), gene_count(m));
        Self { m, genes }
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn genes(&self) -> &[Gene] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }
}

/// Uniformly random DNA: every gene drawn as in [`Gene::random`].
pub fn random_dna<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Dna> {
    if m < 2 {
        return Err(Error::domain(format!("a DNA needs m >= 2 modes, got {m}")));
    }
    let genes = (0..gene_count(m)).map(|_| Gene::random(rng)).collect();
    Ok(Dna::new_unchecked(m, genes))
}

/// Multiplies the embedded gene blocks left to right.
pub fn dna_to_unitary(dna: &Dna, schedule: &TriangleSchedule) -> Result<UnitaryMatrix> {
    if dna.modes() != schedule.modes() || dna.len() != schedule.len() {
        return Err(Error::shape(format!(
            "DNA for {} modes with {} genes does not fit a {}-mode schedule",
            dna.modes(),
            dna.len(),
            schedule.modes()
        )));
    }
    let mut acc = ComplexMatrix::identity(dna.modes());
    compose_into(dna, schedule, &mut acc);
    Ok(UnitaryMatrix::new_unchecked(acc))
}

/// `acc ← I · T_1 · T_2 ⋯ T_M`, reusing `acc`'s storage. Hot path of fitness
/// evaluation; the caller guarantees matching dimensions.
pub(crate) fn compose_into(dna: &Dna, schedule: &TriangleSchedule, acc: &mut ComplexMatrix) {
    let m = dna.modes();
    {
        let data = acc.data_mut();
        data.fill(ZERO);
        for i in 0..m {
            data[i * m + i] = ONE;
        }
    }
    let data = acc.data_mut();
    for (gene, (p, q)) in dna.genes.iter().zip(schedule.pairs()) {
        let [[b00, b01], [b10, b11]] = gene.block();
        // acc · embed(B): columns p and q mix
        for r in 0..m {
            let x = data[r * m + p];
            let y = data[r * m + q];
            data[r * m + p] = x * b00 + y * b10;
            data[r * m + q] = x * b01 + y * b11;
        }
    }
}

/// Reck elimination: a DNA whose unitary equals `u` up to a diagonal phase
/// matrix on the output side.
///
/// Works from the right: for rows `m-1, m-2, ..., 1`, each sub-diagonal entry
/// of the row is nulled in turn by a column rotation on the adjacent pair
/// `(c, c+1)`. The rotations, taken in reverse order, are the genes in
/// schedule order; the diagonal left after elimination is gauge and is dropped.
pub fn unitary_to_dna(u: &UnitaryMatrix) -> Result<Dna> {
    let m = u.dim();
    if m < 2 {
        return Err(Error::domain(format!("a DNA needs m >= 2 modes, got {m}")));
    }
    let defect = crate::linalg::unitarity_defect(u.matrix())?;
    if defect > 1e-8 {
        return Err(Error::domain(format!(
            "cannot decompose a non-unitary matrix (max |U†U - I| = {defect:.3e})"
        )));
    }
    let mut work = u.matrix().clone();
    let mut eliminated = Vec::with_capacity(gene_count(m));
    for row in (1..m).rev() {
        for c in 0..row {
            let gene = nulling_gene(work[(row, c)], work[(row, c + 1)]);
            apply_inverse(&mut work, &gene, c);
            eliminated.push(gene);
        }
    }
    eliminated.reverse();
    Ok(Dna::new_unchecked(m, eliminated))
}

/// Gene `B` such that `[x, y] · B⁻¹` has a zero first component.
fn nulling_gene(x: Complex64, y: Complex64) -> Gene {
    let nx = x.norm_sqr();
    let ny = y.norm_sqr();
    if nx + ny < 1e-24 {
        return Gene {
            t: T_MAX,
            alpha: 0.0,
            beta: 0.0,
        };
    }
    let t = (ny / (nx + ny)).clamp(0.0, T_MAX);
    // first component: √t x e^{-iα} - i√(1-t) y e^{-iβ} = 0
    // ⇒ α - β = arg x - arg y - π/2, with β = 0.
    let arg_x = if nx > 0.0 { x.arg() } else { 0.0 };
    let arg_y = if ny > 0.0 { y.arg() } else { 0.0 };
    Gene {
        t,
        alpha: wrap_phase(arg_x - arg_y - std::f64::consts::FRAC_PI_2),
        beta: 0.0,
    }
}

/// `work ← work · embed(B)⁻¹` on columns `(c, c+1)`.
fn apply_inverse(work: &mut ComplexMatrix, gene: &Gene, c: usize) {
    let [[b00, b01], [b10, b11]] = gene.block();
    // B⁻¹ = B†
    let (i00, i01, i10, i11) = (b00.conj(), b10.conj(), b01.conj(), b11.conj());
    let m = work.rows();
    let data = work.data_mut();
    for r in 0..m {
        let x = data[r * m + c];
        let y = data[r * m + c + 1];
        data[r * m + c] = x * i00 + y * i10;
        data[r * m + c + 1] = x * i01 + y * i11;
    }
}
