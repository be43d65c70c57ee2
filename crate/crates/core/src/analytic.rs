//! Closed-form reconstruction from a minimal data subset, and the pool of
//! analytic starting points for the genetic search.
//!
//! With an anchor input `a` and anchor output `o`, the gauge is fixed so that
//! row `o` and column `a` of the unitary are real and non-negative. Moduli
//! come from the single-photon probabilities, `|U[p][i]| = √P̃[i][p]`. For any
//! other element the two-photon event with inputs `{a, i}` and outputs
//! `{o, p}` gives
//!
//! ```text
//! cos θ[p][i] = −V · P_dist / (2 |U[o][a]| |U[p][i]| |U[o][i]| |U[p][a]|)
//! ```
//!
//! which fixes each phase up to its sign. Signs are chosen greedily by
//! checking both branches against visibilities that were not used for the
//! cosines. Permuting the anchor over all `m²` choices yields `m²` estimates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fitness::Evaluator;
use crate::forward::{coincidence, MeasurementSet};
use crate::linalg::{align_gauge, nearest_unitary, ComplexMatrix, UnitaryMatrix};
use crate::reck::{unitary_to_dna, Dna};

/// Smallest anchor probability the inversion accepts.
pub const ANCHOR_FLOOR: f64 = 1e-6;

/// Products of moduli below this leave a phase undetermined.
const PHASE_DENOM_FLOOR: f64 = 1e-12;

/// Slack on `|cos θ|` before a clamp is counted as a data inconsistency.
const CLAMP_SLACK: f64 = 1e-9;

/// An anchor pair and the entries its inversion consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MinimalSubset {
    pub m: usize,
    pub anchor_input: usize,
    pub anchor_output: usize,
}

impl MinimalSubset {
    pub fn new(m: usize, anchor_input: usize, anchor_output: usize) -> Result<Self> {
        if anchor_input >= m || anchor_output >= m {
            return Err(Error::domain(format!(
                "anchor ({anchor_input}, {anchor_output}) outside {m} modes"
            )));
        }
        Ok(Self {
            m,
            anchor_input,
            anchor_output,
        })
    }

    /// All `m²` anchors, ordered by input then output.
    pub fn all(m: usize) -> Vec<Self> {
        (0..m)
            .flat_map(|a| (0..m).map(move |o| Self { m, anchor_input: a, anchor_output: o }))
            .collect()
    }

    /// The `(m−1)²` visibility events `((a, i), (o, p))` that carry the phases.
    pub fn phase_events(&self) -> Vec<((usize, usize), (usize, usize))> {
        let (a, o) = (self.anchor_input, self.anchor_output);
        let mut out = Vec::with_capacity((self.m - 1).pow(2));
        for p in (0..self.m).filter(|&p| p != o) {
            for i in (0..self.m).filter(|&i| i != a) {
                out.push(((a, i), (o, p)));
            }
        }
        out
    }
}

/// Diagnostics of one inversion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InversionFlags {
    /// Phase cosines that fell outside `[−1, 1]` and were clamped.
    pub clamped_cosines: usize,
    /// Phases that the subset could not determine (set to 0).
    pub undetermined_phases: usize,
}

impl InversionFlags {
    pub fn is_clean(&self) -> bool {
        self.clamped_cosines == 0 && self.undetermined_phases == 0
    }
}

impl std::fmt::Display for InversionFlags {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_clean() {
            return f.write_str("ok");
        }
        let mut parts = Vec::new();
        if self.clamped_cosines > 0 {
            parts.push(format!("clamped={}", self.clamped_cosines));
        }
        if self.undetermined_phases > 0 {
            parts.push(format!("undetermined={}", self.undetermined_phases));
        }
        f.write_str(&parts.join(";"))
    }
}

#[derive(Clone, Debug)]
pub struct AnalyticEstimate {
    pub subset: MinimalSubset,
    /// Polar projection of `raw`.
    pub unitary: UnitaryMatrix,
    /// Direct inversion output, generally not unitary on noisy data.
    pub raw: ComplexMatrix,
    pub flags: InversionFlags,
}

/// Reconstructs a unitary from the subset anchored at `(input, output)`.
pub fn analytic_reconstruct(
    data: &MeasurementSet,
    anchor_input: usize,
    anchor_output: usize,
) -> Result<AnalyticEstimate> {
    let m = data.modes();
    let subset = MinimalSubset::new(m, anchor_input, anchor_output)?;
    let (a, o) = (anchor_input, anchor_output);
    let anchor_p = data.single(a, o).value;
    if anchor_p < ANCHOR_FLOOR {
        return Err(Error::AnchorUnusable {
            input: a,
            output: o,
            reason: format!("P[{a}][{o}] = {anchor_p:.3e} below {ANCHOR_FLOOR:.0e}"),
        });
    }

    // moduli[p][i] = |U[p][i]|, output p, input i
    let modulus = |p: usize, i: usize| data.single(i, p).value.max(0.0).sqrt();
    let mut flags = InversionFlags::default();
    let mut assigned = vec![false; m * m];
    for i in 0..m {
        assigned[o * m + i] = true;
    }
    for p in 0..m {
        assigned[p * m + a] = true;
    }

    let mut raw = ComplexMatrix::from_fn(m, m, |p, i| num_complex::Complex64::new(modulus(p, i), 0.0));

    for p in (0..m).filter(|&p| p != o) {
        for i in (0..m).filter(|&i| i != a) {
            let big_a = modulus(o, a) * modulus(p, i);
            let big_b = modulus(o, i) * modulus(p, a);
            let denom = 2.0 * big_a * big_b;
            let vis = data.visibility(a, i, o, p);
            let magnitude = match vis {
                Some(v) if denom >= PHASE_DENOM_FLOOR => {
                    let p_dist = big_a * big_a + big_b * big_b;
                    let cos = -v.value * p_dist / denom;
                    if cos.abs() > 1.0 + CLAMP_SLACK {
                        flags.clamped_cosines += 1;
                    }
                    Some(cos.clamp(-1.0, 1.0).acos())
                }
                _ => None,
            };
            let theta = match magnitude {
                None => {
                    if modulus(p, i) > 0.0 {
                        flags.undetermined_phases += 1;
                    }
                    0.0
                }
                Some(0.0) => 0.0,
                Some(t) => {
                    let plus = sign_residual(data, &with_phase(&raw, p, i, t), &assigned, (p, i), (a, o));
                    let minus = sign_residual(data, &with_phase(&raw, p, i, -t), &assigned, (p, i), (a, o));
                    if minus < plus {
                        -t
                    } else {
                        t
                    }
                }
            };
            raw.set(p, i, num_complex::Complex64::from_polar(modulus(p, i), theta));
            assigned[p * m + i] = true;
        }
    }

    let unitary = nearest_unitary(&raw)?;
    Ok(AnalyticEstimate {
        subset,
        unitary,
        raw,
        flags,
    })
}

fn with_phase(raw: &ComplexMatrix, p: usize, i: usize, theta: f64) -> ComplexMatrix {
    let mut out = raw.clone();
    out.set(p, i, num_complex::Complex64::from_polar(raw[(p, i)].norm(), theta));
    out
}

/// Weighted squared residual of the held-out visibilities involving element
/// `(p, i)` whose 2x2 block is otherwise fully assigned.
fn sign_residual(
    data: &MeasurementSet,
    raw: &ComplexMatrix,
    assigned: &[bool],
    (p, i): (usize, usize),
    (a, o): (usize, usize),
) -> f64 {
    let m = data.modes();
    let mut total = 0.0;
    for p2 in (0..m).filter(|&q| q != p) {
        for i2 in (0..m).filter(|&k| k != i) {
            if p2 == o && i2 == a {
                continue;
            }
            if !(assigned[p2 * m + i2] && assigned[p * m + i2] && assigned[p2 * m + i]) {
                continue;
            }
            let Some(measured) = data.visibility(i, i2, p, p2) else {
                continue;
            };
            let Some(pred) = coincidence(raw, i, i2, p, p2).visibility() else {
                continue;
            };
            total += ((measured.value - pred) / measured.error).powi(2);
        }
    }
    total
}

/// One anchor's outcome in [`seed_pool`].
#[derive(Clone, Debug)]
pub struct Candidate {
    pub subset: MinimalSubset,
    pub estimate: Option<AnalyticEstimate>,
    /// Weighted χ² against the full data set, when the anchor was usable.
    pub chi2: Option<f64>,
    /// Why the anchor was skipped.
    pub failure: Option<String>,
}

impl Candidate {
    pub fn flags_label(&self) -> String {
        match (&self.estimate, &self.failure) {
            (Some(e), _) => e.flags.to_string(),
            (None, Some(_)) => "unusable".into(),
            (None, None) => "unusable".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedStatus {
    Complete,
    /// Fewer usable anchors than requested seeds.
    Partial { requested: usize, available: usize },
    NoUsableAnchors,
}

#[derive(Clone, Debug)]
pub struct SeedPool {
    /// Best `s₁` estimates as DNAs, ascending χ².
    pub seeds: Vec<Dna>,
    /// Unitaries of `seeds`, gauge-aligned to the best one.
    pub unitaries: Vec<UnitaryMatrix>,
    /// χ² of each seed.
    pub chi2: Vec<f64>,
    /// Every anchor in input-major order.
    pub candidates: Vec<Candidate>,
    pub status: SeedStatus,
}

/// All `m²` anchored reconstructions scored against the full data set.
pub fn rank_candidates(data: &MeasurementSet, weight: f64) -> Result<Vec<Candidate>> {
    let eval = Evaluator::new(data, weight)?;
    let candidates = MinimalSubset::all(data.modes())
        .into_par_iter()
        .map(|subset| {
            match analytic_reconstruct(data, subset.anchor_input, subset.anchor_output) {
                Ok(est) => {
                    let chi2 = eval
                        .evaluate_unitary(&est.unitary)
                        .map(|f| f.chi2)
                        .ok()
                        .filter(|c| c.is_finite());
                    Candidate {
                        subset,
                        chi2,
                        failure: chi2.is_none().then(|| "non-finite chi-square".to_string()),
                        estimate: chi2.is_some().then_some(est),
                    }
                }
                Err(e) => Candidate {
                    subset,
                    estimate: None,
                    chi2: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(candidates)
}

/// Usable candidates sorted by ascending χ² (ties by anchor order).
fn sorted_usable(candidates: &[Candidate]) -> Vec<&Candidate> {
    let mut usable: Vec<&Candidate> = candidates.iter().filter(|c| c.chi2.is_some()).collect();
    usable.sort_by(|x, y| x.chi2.unwrap().total_cmp(&y.chi2.unwrap()));
    usable
}

/// Lowest-χ² analytic reconstruction, if any anchor is usable.
pub fn best_analytic(data: &MeasurementSet, weight: f64) -> Result<Option<AnalyticEstimate>> {
    let candidates = rank_candidates(data, weight)?;
    Ok(sorted_usable(&candidates)
        .first()
        .and_then(|c| c.estimate.clone()))
}

/// The `count` lowest-χ² analytic reconstructions as DNAs.
///
/// All selected unitaries are first brought into the gauge of the best one,
/// so that equal genes in different seeds describe similar optical elements
/// and recombining them is meaningful.
pub fn seed_pool(data: &MeasurementSet, count: usize, weight: f64) -> Result<SeedPool> {
    let m = data.modes();
    if count > m * m {
        return Err(Error::config(format!(
            "{count} analytic seeds requested but only {} anchors exist",
            m * m
        )));
    }
    let candidates = rank_candidates(data, weight)?;
    let usable = sorted_usable(&candidates);
    let chosen: Vec<&Candidate> = usable.iter().take(count).copied().collect();
    let status = if usable.is_empty() {
        SeedStatus::NoUsableAnchors
    } else if chosen.len() < count {
        SeedStatus::Partial {
            requested: count,
            available: chosen.len(),
        }
    } else {
        SeedStatus::Complete
    };

    let mut seeds = Vec::with_capacity(chosen.len());
    let mut unitaries = Vec::with_capacity(chosen.len());
    let mut chi2 = Vec::with_capacity(chosen.len());
    if let Some(reference) = chosen.first().and_then(|c| c.estimate.as_ref()) {
        let reference = reference.unitary.clone();
        for c in &chosen {
            let est = c.estimate.as_ref().expect("usable candidates carry an estimate");
            let aligned = align_gauge(&est.unitary, &reference)?.aligned;
            seeds.push(unitary_to_dna(&aligned)?);
            unitaries.push(aligned);
            chi2.push(c.chi2.expect("usable"));
        }
    }
    Ok(SeedPool {
        seeds,
        unitaries,
        chi2,
        candidates,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::fitness;
    use crate::forward::{simulate_measurements, NoiseConfig};
    use crate::linalg::haar_random_unitary;
    use crate::rng::stream;

    fn noiseless(m: usize, seed: u64) -> (UnitaryMatrix, MeasurementSet) {
        let mut rng = stream(seed, &[]);
        let u = haar_random_unitary(m, &mut rng).unwrap();
        let data = simulate_measurements(&u, &NoiseConfig::noiseless(), &mut rng).unwrap();
        (u, data)
    }

    #[test]
    fn subsets_enumerate_all_anchors() {
        let all = MinimalSubset::all(4);
        assert_eq!(all.len(), 16);
        assert_eq!(all[0].phase_events().len(), 9);
        assert!(MinimalSubset::new(3, 3, 0).is_err());
    }

    #[test]
    fn noiseless_inversion_recovers_the_unitary() {
        for seed in 0..5 {
            let (u, data) = noiseless(3, seed);
            for s in MinimalSubset::all(3) {
                let est = analytic_reconstruct(&data, s.anchor_input, s.anchor_output).unwrap();
                let f = align_gauge(&est.unitary, &u).unwrap().fidelity;
                assert!(f >= 1.0 - 1e-6, "seed {seed} anchor {s:?}: {f}");
                assert!(est.flags.is_clean());
            }
        }
    }

    #[test]
    fn identity_data_gives_identity() {
        let data = simulate_measurements(
            &UnitaryMatrix::identity(3),
            &NoiseConfig::noiseless(),
            &mut stream(0, &[]),
        )
        .unwrap();
        let est = analytic_reconstruct(&data, 1, 1).unwrap();
        let f = align_gauge(&est.unitary, &UnitaryMatrix::identity(3)).unwrap().fidelity;
        assert!(f > 1.0 - 1e-12);
        for p in 0..3 {
            for i in 0..3 {
                if p != i {
                    assert_eq!(est.unitary[(p, i)].norm(), 0.0);
                }
            }
        }
        // off-diagonal anchors carry no light
        assert!(matches!(
            analytic_reconstruct(&data, 0, 1),
            Err(Error::AnchorUnusable { .. })
        ));
    }

    #[test]
    fn pool_is_sorted_and_sized() {
        let mut rng = stream(3, &[]);
        let u = haar_random_unitary(7, &mut rng).unwrap();
        let data = simulate_measurements(&u, &NoiseConfig::noisy(10_000, 0.01), &mut rng).unwrap();
        let pool = seed_pool(&data, 20, 0.5).unwrap();
        assert_eq!(pool.candidates.len(), 49);
        assert_eq!(pool.seeds.len(), 20);
        assert_eq!(pool.status, SeedStatus::Complete);
        assert!(pool.chi2.windows(2).all(|w| w[0] <= w[1]));
        let distinct: std::collections::BTreeSet<u64> = pool
            .candidates
            .iter()
            .filter_map(|c| c.chi2.map(f64::to_bits))
            .collect();
        assert!(distinct.len() > 1);
        // gauge alignment before conversion leaves the χ² unchanged
        for (dna, chi2) in pool.seeds.iter().zip(&pool.chi2) {
            let f = fitness(dna, &data, 0.5).unwrap().chi2;
            assert!((f - chi2).abs() <= 1e-6 * chi2);
        }
    }

    #[test]
    fn pool_can_return_everything() {
        let (u, data) = noiseless(3, 4);
        let pool = seed_pool(&data, 9, 0.5).unwrap();
        assert_eq!(pool.seeds.len(), 9);
        assert!(pool.chi2.windows(2).all(|w| w[0] <= w[1]));
        for v in &pool.unitaries {
            assert!(align_gauge(v, &u).unwrap().fidelity >= 1.0 - 1e-6);
        }
        assert!(seed_pool(&data, 10, 0.5).is_err());
    }

    #[test]
    fn scarce_anchors_are_reported() {
        let data = simulate_measurements(
            &UnitaryMatrix::identity(3),
            &NoiseConfig::noiseless(),
            &mut stream(0, &[]),
        )
        .unwrap();
        let pool = seed_pool(&data, 5, 0.5).unwrap();
        assert_eq!(pool.seeds.len(), 3);
        assert_eq!(pool.status, SeedStatus::Partial { requested: 5, available: 3 });
    }
}
