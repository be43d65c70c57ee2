//! Chi-square distance between measured data and the predictions of a
//! candidate unitary, and the fitness derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{coincidence, mode_pairs, MeasurementSet, P_DIST_FLOOR};
use crate::linalg::{ComplexMatrix, UnitaryMatrix};
use crate::reck::{compose_into, Dna, TriangleSchedule};

/// A zero chi-square is treated as this value when forming `1/χ²`.
pub const CHI2_FLOOR: f64 = 1e-30;

/// Unweighted chi-square terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChiSquare {
    /// `Σ (P̃ − P)² / ΔP̃²` over all `m²` entries.
    pub single: f64,
    /// `Σ (Ṽ − V)² / ΔṼ²` over visibilities defined in both data and prediction.
    pub visibility: f64,
    /// Visibility entries that entered `visibility`.
    pub included: usize,
    /// Visibility slots skipped (undefined in the data or the prediction).
    pub excluded: usize,
}

impl ChiSquare {
    /// `2 [w χ²_P + (1 − w) χ²_V]`; equals `χ²_P + χ²_V` at `w = 0.5`.
    pub fn weighted(&self, weight: f64) -> f64 {
        2.0 * (weight * self.single + (1.0 - weight) * self.visibility)
    }
}

/// Chi-square and the fitness `1/χ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub chi2: f64,
    pub fitness: f64,
}

impl Fitness {
    pub fn from_chi2(chi2: f64) -> Self {
        Self {
            chi2,
            fitness: 1.0 / chi2.max(CHI2_FLOOR),
        }
    }
}

pub(crate) fn check_weight(weight: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::config(format!("weight w = {weight} outside [0, 1]")));
    }
    Ok(())
}

/// Chi-square terms of `u` against `data`.
pub fn chi_square(u: &UnitaryMatrix, data: &MeasurementSet) -> Result<ChiSquare> {
    if u.dim() != data.modes() {
        return Err(Error::shape(format!(
            "{}-mode unitary against {}-mode data",
            u.dim(),
            data.modes()
        )));
    }
    Ok(Evaluator::new(data, 0.5)?.terms(u.matrix()))
}

/// Weighted chi-square and fitness of one DNA.
pub fn fitness(dna: &Dna, data: &MeasurementSet, weight: f64) -> Result<Fitness> {
    let eval = Evaluator::new(data, weight)?;
    eval.evaluate(dna)
}

#[derive(Clone, Copy, Debug)]
struct VisTerm {
    i: usize,
    j: usize,
    p: usize,
    q: usize,
    value: f64,
    inv_var: f64,
}

/// Reusable fitness evaluator with the data flattened for the hot loop.
#[derive(Clone, Debug)]
pub struct Evaluator {
    m: usize,
    weight: f64,
    schedule: TriangleSchedule,
    single: Vec<(f64, f64)>,
    vis: Vec<VisTerm>,
    undefined_in_data: usize,
}

impl Evaluator {
    pub fn new(data: &MeasurementSet, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        let m = data.modes();
        let single = data
            .single_slice()
            .iter()
            .map(|e| (e.value, 1.0 / (e.error * e.error)))
            .collect();
        let vis = data
            .visibility_entries()
            .map(|((i, j), (p, q), e)| VisTerm {
                i,
                j,
                p,
                q,
                value: e.value,
                inv_var: 1.0 / (e.error * e.error),
            })
            .collect();
        debug_assert_eq!(mode_pairs(m).len().pow(2), data.visibility_slice().len());
        Ok(Self {
            m,
            weight,
            schedule: TriangleSchedule::new(m)?,
            single,
            vis,
            undefined_in_data: data.excluded_count(),
        })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn schedule(&self) -> &TriangleSchedule {
        &self.schedule
    }

    pub fn terms(&self, u: &ComplexMatrix) -> ChiSquare {
        let m = self.m;
        let mut single = 0.0;
        for i in 0..m {
            for j in 0..m {
                let (value, inv_var) = self.single[i * m + j];
                let d = value - u[(j, i)].norm_sqr();
                single += d * d * inv_var;
            }
        }
        let mut visibility = 0.0;
        let mut included = 0;
        for t in &self.vis {
            let c = coincidence(u, t.i, t.j, t.p, t.q);
            if c.distinguishable < P_DIST_FLOOR {
                continue;
            }
            let v = (c.distinguishable - c.indistinguishable) / c.distinguishable;
            let d = t.value - v;
            visibility += d * d * t.inv_var;
            included += 1;
        }
        ChiSquare {
            single,
            visibility,
            included,
            excluded: self.undefined_in_data + (self.vis.len() - included),
        }
    }

    pub fn evaluate_unitary(&self, u: &UnitaryMatrix) -> Result<Fitness> {
        if u.dim() != self.m {
            return Err(Error::shape(format!(
                "{}-mode unitary against {}-mode data",
                u.dim(),
                self.m
            )));
        }
        Ok(Fitness::from_chi2(self.terms(u.matrix()).weighted(self.weight)))
    }

    pub fn evaluate(&self, dna: &Dna) -> Result<Fitness> {
        if dna.modes() != self.m {
            return Err(Error::shape(format!(
                "{}-mode DNA against {}-mode data",
                dna.modes(),
                self.m
            )));
        }
        let mut scratch = ComplexMatrix::identity(self.m);
        Ok(self.evaluate_with(dna, &mut scratch))
    }

    /// Caller guarantees `dna.modes() == self.modes()` and a matching scratch.
    pub(crate) fn evaluate_with(&self, dna: &Dna, scratch: &mut ComplexMatrix) -> Fitness {
        compose_into(dna, &self.schedule, scratch);
        Fitness::from_chi2(self.terms(scratch).weighted(self.weight))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{predict_single, predict_visibilities, simulate_measurements, Measured, NoiseConfig};
    use crate::linalg::haar_random_unitary;
    use crate::reck::{dna_to_unitary, random_dna};
    use crate::rng::stream;

    #[test]
    fn self_consistent_data_has_zero_chi2() {
        let mut rng = stream(1, &[]);
        let d = random_dna(4, &mut rng).unwrap();
        let u = dna_to_unitary(&d, &TriangleSchedule::new(4).unwrap()).unwrap();
        let data = simulate_measurements(&u, &NoiseConfig::noiseless(), &mut rng).unwrap();
        let f = fitness(&d, &data, 0.5).unwrap();
        assert!(f.chi2 < 1e-18, "chi2 = {}", f.chi2);
        assert!(f.fitness > 1e17);
    }

    #[test]
    fn perfect_fit_sentinel() {
        let f = Fitness::from_chi2(0.0);
        assert_eq!(f.fitness, 1.0 / CHI2_FLOOR);
        assert!(f.fitness.is_finite());
    }

    #[test]
    fn hand_computed_toy() {
        // P̃=0.5 ± 0.1 on one entry vs P=0.6, nothing else contributes, w=1:
        // χ² = 2·1·(0.01/0.01) = 2
        let truth = UnitaryMatrix::identity(2);
        let mut single = vec![Measured::new(0.0, 1e300); 4];
        // u = identity predicts P[0][0] = 1; build a unitary predicting 0.6 instead
        let c = 0.6f64.sqrt();
        let s = 0.4f64.sqrt();
        let u = UnitaryMatrix::new(
            ComplexMatrix::from_rows(&[
                vec![num_complex::Complex64::new(c, 0.0), num_complex::Complex64::new(-s, 0.0)],
                vec![num_complex::Complex64::new(s, 0.0), num_complex::Complex64::new(c, 0.0)],
            ])
            .unwrap(),
            1e-12,
        )
        .unwrap();
        single[0] = Measured::new(0.5, 0.1);
        let data = MeasurementSet::new(2, single, vec![None]).unwrap();
        let eval = Evaluator::new(&data, 1.0).unwrap();
        let chi2 = eval.evaluate_unitary(&u).unwrap().chi2;
        assert!((chi2 - 2.0).abs() < 1e-12, "chi2 = {chi2}");
        assert!(eval.evaluate_unitary(&truth).unwrap().chi2 > 2.0);
    }

    #[test]
    fn symmetric_weight_is_plain_sum() {
        let mut rng = stream(2, &[]);
        for _ in 0..20 {
            let truth = haar_random_unitary(4, &mut rng).unwrap();
            let data = simulate_measurements(&truth, &NoiseConfig::noisy(1000, 0.05), &mut rng).unwrap();
            let cand = haar_random_unitary(4, &mut rng).unwrap();
            let terms = chi_square(&cand, &data).unwrap();
            // independent evaluation from the prediction tables
            let p = predict_single(&cand);
            let v = predict_visibilities(&cand);
            let chi_p: f64 = data
                .single_entries()
                .map(|(i, j, e)| ((e.value - p.get(i, j)) / e.error).powi(2))
                .sum();
            let chi_v: f64 = data
                .visibility_entries()
                .filter_map(|((i, j), (pp, q), e)| v.get(i, j, pp, q).map(|x| ((e.value - x) / e.error).powi(2)))
                .sum();
            assert!((terms.weighted(0.5) - (chi_p + chi_v)).abs() <= 1e-12 * (chi_p + chi_v));
            let eval = Evaluator::new(&data, 0.5).unwrap();
            let chi2 = eval.evaluate_unitary(&cand).unwrap().chi2;
            assert!((chi2 - (chi_p + chi_v)).abs() <= 1e-12 * chi2);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = simulate_measurements(
            &UnitaryMatrix::identity(3),
            &NoiseConfig::noiseless(),
            &mut stream(0, &[]),
        )
        .unwrap();
        assert!(matches!(Evaluator::new(&data, 1.5), Err(Error::Config(_))));
        let d = random_dna(4, &mut stream(0, &[])).unwrap();
        assert!(matches!(fitness(&d, &data, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn excluded_entries_are_counted() {
        let data = simulate_measurements(
            &UnitaryMatrix::identity(3),
            &NoiseConfig::noiseless(),
            &mut stream(0, &[]),
        )
        .unwrap();
        let terms = chi_square(&UnitaryMatrix::identity(3), &data).unwrap();
        assert_eq!(terms.included + terms.excluded, 9);
        assert_eq!(terms.included, data.visibility_count());
        assert_eq!(terms.single, 0.0);
    }
}
