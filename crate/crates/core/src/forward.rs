//! Single-photon transition probabilities and two-photon Hong-Ou-Mandel
//! visibilities predicted from a unitary, plus synthetic noisy data sets.
//!
//! Conventions: `P[i][j]` is the probability that a photon entering input
//! `i` leaves from output `j`, i.e. `|U[j][i]|²`. Visibilities are indexed by
//! an input pair `i < j` and an output pair `p < q`; collision events
//! (`p == q`) are never part of the data.
//!
//! The visibility of a two-photon event is `(P_dist − P_indist) / P_dist`,
//! with `P_indist` the coincidence probability for indistinguishable photons
//! (the squared modulus of the 2x2 permanent) and `P_dist` the classical
//! coincidence probability for distinguishable ones.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, UnitaryMatrix};

/// Events with `P_dist` below this are undefined and excluded everywhere.
pub const P_DIST_FLOOR: f64 = 1e-9;

/// Default lower bound on single-photon errors.
pub const DEFAULT_DP_FLOOR: f64 = 1e-4;

/// Default lower bound on visibility errors.
pub const DEFAULT_DV_FLOOR: f64 = 1e-3;

/// All pairs `(a, b)` with `a < b < m`, lexicographically ordered.
pub fn mode_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect()
}

/// Position of `(a, b)` (with `a < b`) in [`mode_pairs`].
pub fn pair_index(m: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < m);
    a * (2 * m - a - 1) / 2 + (b - a - 1)
}

/// A measured value and its one-sigma error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub error: f64,
}

impl Measured {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }
}

/// The input of a reconstruction: `m²` single-photon probabilities and up to
/// `[m(m-1)/2]²` visibilities, each with an error.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    m: usize,
    single: Vec<Measured>,
    visibility: Vec<Option<Measured>>,
}

impl MeasurementSet {
    /// `single` is indexed `i * m + j`; `visibility` is indexed
    /// `in_pair * n_pairs + out_pair` with pair positions from [`pair_index`].
    pub fn new(m: usize, single: Vec<Measured>, visibility: Vec<Option<Measured>>) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain(format!("measurement set needs m >= 2, got {m}")));
        }
        let n_pairs = m * (m - 1) / 2;
        if single.len() != m * m {
            return Err(Error::shape(format!(
                "{} single-photon entries for m = {m}, expected {}",
                single.len(),
                m * m
            )));
        }
        if visibility.len() != n_pairs * n_pairs {
            return Err(Error::shape(format!(
                "{} visibility slots for m = {m}, expected {}",
                visibility.len(),
                n_pairs * n_pairs
            )));
        }
        for (k, e) in single.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.value) {
                return Err(Error::domain(format!(
                    "probability P[{}][{}] = {} outside [0, 1]",
                    k / m,
                    k % m,
                    e.value
                )));
            }
            check_error(e.error, || format!("P[{}][{}]", k / m, k % m))?;
        }
        for (k, e) in visibility.iter().enumerate() {
            let Some(e) = e else { continue };
            if !e.value.is_finite() || e.value > 1.0 {
                return Err(Error::domain(format!(
                    "visibility #{k} = {} is not <= 1",
                    e.value
                )));
            }
            check_error(e.error, || format!("visibility #{k}"))?;
        }
        Ok(Self { m, single, visibility })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn n_pairs(&self) -> usize {
        self.m * (self.m - 1) / 2
    }

    /// Single-photon entry for input `i`, output `j`.
    pub fn single(&self, i: usize, j: usize) -> Measured {
        self.single[i * self.m + j]
    }

    pub fn single_slice(&self) -> &[Measured] {
        &self.single
    }

    pub fn visibility_slice(&self) -> &[Option<Measured>] {
        &self.visibility
    }

    /// Visibility for inputs `{i, j}` and outputs `{p, q}` in either order.
    pub fn visibility(&self, i: usize, j: usize, p: usize, q: usize) -> Option<Measured> {
        if i == j || p == q {
            return None;
        }
        let a = pair_index(self.m, i.min(j), i.max(j));
        let b = pair_index(self.m, p.min(q), p.max(q));
        self.visibility[a * self.n_pairs() + b]
    }

    /// `d₁`: number of single-photon entries.
    pub fn single_count(&self) -> usize {
        self.single.len()
    }

    /// `d₂`: number of defined visibility entries.
    pub fn visibility_count(&self) -> usize {
        self.visibility.iter().filter(|v| v.is_some()).count()
    }

    /// Visibility slots left undefined.
    pub fn excluded_count(&self) -> usize {
        self.visibility.len() - self.visibility_count()
    }

    pub fn total_count(&self) -> usize {
        self.single_count() + self.visibility_count()
    }

    /// `(i, j, entry)` for every single-photon entry.
    pub fn single_entries(&self) -> impl Iterator<Item = (usize, usize, Measured)> + '_ {
        let m = self.m;
        self.single
            .iter()
            .enumerate()
            .map(move |(k, e)| (k / m, k % m, *e))
    }

    /// `((i, j), (p, q), entry)` for every defined visibility.
    pub fn visibility_entries(
        &self,
    ) -> impl Iterator<Item = ((usize, usize), (usize, usize), Measured)> + '_ {
        let pairs = mode_pairs(self.m);
        let n = pairs.len();
        self.visibility.iter().enumerate().filter_map(move |(k, e)| {
            e.map(|e| (pairs[k / n], pairs[k % n], e))
        })
    }
}

fn check_error(error: f64, what: impl FnOnce() -> String) -> Result<()> {
    if !(error.is_finite() && error > 0.0) {
        return Err(Error::domain(format!("{}: error {error} must be positive", what())));
    }
    Ok(())
}

/// Predicted `P[i][j]` for every input `i`, output `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SinglePhotonTable {
    m: usize,
    probs: Vec<f64>,
}

impl SinglePhotonTable {
    pub fn get(&self, input: usize, output: usize) -> f64 {
        self.probs[input * self.m + output]
    }

    pub fn modes(&self) -> usize {
        self.m
    }
}

pub fn predict_single(u: &UnitaryMatrix) -> SinglePhotonTable {
    let m = u.dim();
    let mut probs = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            probs[i * m + j] = u[(j, i)].norm_sqr();
        }
    }
    SinglePhotonTable { m, probs }
}

/// Coincidence probabilities of one two-photon event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coincidence {
    pub distinguishable: f64,
    pub indistinguishable: f64,
}

impl Coincidence {
    /// `None` when `P_dist` falls below [`P_DIST_FLOOR`].
    pub fn visibility(&self) -> Option<f64> {
        (self.distinguishable >= P_DIST_FLOOR)
            .then(|| (self.distinguishable - self.indistinguishable) / self.distinguishable)
    }
}

/// Photons in inputs `i != j`, detected in outputs `p != q`.
#[inline]
pub fn coincidence(u: &ComplexMatrix, i: usize, j: usize, p: usize, q: usize) -> Coincidence {
    let direct = u[(p, i)] * u[(q, j)];
    let exchange = u[(p, j)] * u[(q, i)];
    Coincidence {
        distinguishable: direct.norm_sqr() + exchange.norm_sqr(),
        indistinguishable: (direct + exchange).norm_sqr(),
    }
}

/// Predicted visibilities over all input pairs × output pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityTable {
    m: usize,
    entries: Vec<Option<f64>>,
}

impl VisibilityTable {
    pub fn get(&self, i: usize, j: usize, p: usize, q: usize) -> Option<f64> {
        let n = self.m * (self.m - 1) / 2;
        let a = pair_index(self.m, i.min(j), i.max(j));
        let b = pair_index(self.m, p.min(q), p.max(q));
        self.entries[a * n + b]
    }

    /// Row-major over (input pair, output pair).
    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.entries
    }
}

pub fn predict_visibilities(u: &UnitaryMatrix) -> VisibilityTable {
    let m = u.dim();
    let pairs = mode_pairs(m);
    let mut entries = Vec::with_capacity(pairs.len() * pairs.len());
    for &(i, j) in &pairs {
        for &(p, q) in &pairs {
            entries.push(coincidence(u.matrix(), i, j, p, q).visibility());
        }
    }
    VisibilityTable { m, entries }
}

/// How synthetic data is perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Single-photon events per input; `None` gives exact probabilities.
    pub shots: Option<u64>,
    /// Gaussian width added to each visibility.
    pub sigma_v: f64,
    pub dp_floor: f64,
    pub dv_floor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            shots: None,
            sigma_v: 0.0,
            dp_floor: DEFAULT_DP_FLOOR,
            dv_floor: DEFAULT_DV_FLOOR,
        }
    }

    pub fn noisy(shots: u64, sigma_v: f64) -> Self {
        Self {
            shots: Some(shots),
            sigma_v,
            ..Self::noiseless()
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.shots.is_none() && self.sigma_v == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == Some(0) {
            return Err(Error::config("shot count must be positive"));
        }
        if !(self.sigma_v >= 0.0 && self.sigma_v.is_finite()) {
            return Err(Error::config(format!("sigma_v = {} must be >= 0", self.sigma_v)));
        }
        if !(self.dp_floor > 0.0 && self.dv_floor > 0.0) {
            return Err(Error::config("error floors must be positive"));
        }
        Ok(())
    }
}

/// Synthetic measurement set generated from `u`.
///
/// Single-photon rows are multinomial draws of `shots` events per input with
/// binomial standard errors; visibilities get additive Gaussian noise of width
/// `sigma_v` (capped at 1). Errors never drop below the configured floors.
pub fn simulate_measurements<R: Rng + ?Sized>(
    u: &UnitaryMatrix,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<MeasurementSet> {
    noise.validate()?;
    let m = u.dim();
    let exact = predict_single(u);
    let mut single = Vec::with_capacity(m * m);
    for i in 0..m {
        let row: Vec<f64> = (0..m).map(|j| exact.get(i, j)).collect();
        match noise.shots {
            None => single.extend(row.iter().map(|&p| Measured::new(p, noise.dp_floor))),
            Some(n) => {
                let counts = multinomial(n, &row, rng)?;
                single.extend(counts.iter().map(|&k| {
                    let p = k as f64 / n as f64;
                    let se = (p * (1.0 - p) / n as f64).sqrt();
                    Measured::new(p, se.max(noise.dp_floor))
                }));
            }
        }
    }

    let gaussian = if noise.sigma_v > 0.0 {
        Some(Normal::new(0.0, noise.sigma_v).map_err(|e| Error::config(e.to_string()))?)
    } else {
        None
    };
    let dv = noise.sigma_v.max(noise.dv_floor);
    let visibility = predict_visibilities(u)
        .entries
        .into_iter()
        .map(|v| {
            v.map(|v| {
                let noisy = match &gaussian {
                    Some(g) => (v + g.sample(rng)).min(1.0),
                    None => v,
                };
                Measured::new(noisy, dv)
            })
        })
        .collect();
    MeasurementSet::new(m, single, visibility)
}

/// Multinomial counts via sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    let mut counts = vec![0; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p = 1.0;
    for (k, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = remaining_n;
            break;
        }
        let cond = if remaining_p > 0.0 {
            (p / remaining_p).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining_n, cond)
            .map_err(|e| Error::domain(e.to_string()))?
            .sample(rng);
        counts[k] = draw;
        remaining_n -= draw;
        remaining_p -= p;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_random_unitary;
    use crate::reck::{dna_to_unitary, Dna, Gene, TriangleSchedule};
    use crate::rng::stream;

    fn coupler() -> UnitaryMatrix {
        let d = Dna::new(2, vec![Gene::new(0.5, 0.0, 0.0).unwrap()]).unwrap();
        dna_to_unitary(&d, &TriangleSchedule::new(2).unwrap()).unwrap()
    }

    #[test]
    fn pair_indexing_matches_enumeration() {
        for m in 2..=8 {
            for (k, &(a, b)) in mode_pairs(m).iter().enumerate() {
                assert_eq!(pair_index(m, a, b), k);
            }
        }
        assert_eq!(mode_pairs(7).len(), 21);
    }

    #[test]
    fn identity_probabilities() {
        let t = predict_single(&UnitaryMatrix::identity(4));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(t.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn coupler_probabilities_are_half() {
        let t = predict_single(&coupler());
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_photon_oracle_and_row_sums() {
        let u = haar_random_unitary(5, &mut stream(1, &[])).unwrap();
        let t = predict_single(&u);
        for i in 0..5 {
            let mut sum = 0.0;
            for j in 0..5 {
                let z = u[(j, i)];
                assert_eq!(t.get(i, j), z.re * z.re + z.im * z.im);
                sum += t.get(i, j);
            }
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn hom_dip_on_balanced_coupler() {
        let c = coincidence(coupler().matrix(), 0, 1, 0, 1);
        assert!((c.distinguishable - 0.5).abs() < 1e-15);
        assert!(c.indistinguishable.abs() < 1e-15);
        assert!((c.visibility().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_interference_through_identity() {
        let v = predict_visibilities(&UnitaryMatrix::identity(2));
        assert_eq!(v.get(0, 1, 0, 1), Some(0.0));
    }

    #[test]
    fn degenerate_events_are_undefined() {
        // identity: photons in (0,1) can never reach (0,2)
        let v = predict_visibilities(&UnitaryMatrix::identity(3));
        assert_eq!(v.get(0, 1, 0, 2), None);
        assert_eq!(v.get(0, 1, 0, 1), Some(0.0));
    }

    #[test]
    fn visibilities_bounded_above() {
        let mut rng = stream(2, &[]);
        for _ in 0..50 {
            let u = haar_random_unitary(4, &mut rng).unwrap();
            for v in predict_visibilities(&u).as_slice().iter().flatten() {
                assert!(*v <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_simulation_is_exact() {
        let u = haar_random_unitary(3, &mut stream(3, &[])).unwrap();
        let data = simulate_measurements(&u, &NoiseConfig::noiseless(), &mut stream(4, &[])).unwrap();
        let p = predict_single(&u);
        let v = predict_visibilities(&u);
        for (i, j, e) in data.single_entries() {
            assert_eq!(e.value, p.get(i, j));
            assert_eq!(e.error, DEFAULT_DP_FLOOR);
        }
        for ((i, j), (pp, q), e) in data.visibility_entries() {
            assert_eq!(Some(e.value), v.get(i, j, pp, q));
            assert_eq!(e.error, DEFAULT_DV_FLOOR);
        }
    }

    #[test]
    fn shot_noise_matches_binomial_statistics() {
        let u = haar_random_unitary(2, &mut stream(5, &[])).unwrap();
        let exact = predict_single(&u);
        let n = 10_000u64;
        let data = simulate_measurements(&u, &NoiseConfig::noisy(n, 0.0), &mut stream(6, &[])).unwrap();
        for (i, j, e) in data.single_entries() {
            let p = exact.get(i, j);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((e.value - p).abs() <= 5.0 * sigma.max(1e-4), "P[{i}][{j}]");
            let expect_err = (e.value * (1.0 - e.value) / n as f64).sqrt().max(DEFAULT_DP_FLOOR);
            assert!((e.error - expect_err).abs() < 1e-15);
            assert!((e.error - sigma).abs() < 0.1 * sigma + 1e-4);
        }
    }

    #[test]
    fn visibility_noise_width() {
        let u = haar_random_unitary(2, &mut stream(7, &[])).unwrap();
        let exact = predict_visibilities(&u).get(0, 1, 0, 1).unwrap();
        let noise = NoiseConfig { shots: None, sigma_v: 0.01, ..NoiseConfig::noiseless() };
        let samples: Vec<f64> = (0..1000u64)
            .map(|k| {
                simulate_measurements(&u, &noise, &mut stream(8, &[k]))
                    .unwrap()
                    .visibility(0, 1, 0, 1)
                    .unwrap()
                    .value
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        assert!(exact < 0.95, "entry too close to the cap for this check");
        assert!((var.sqrt() - 0.01).abs() < 0.001, "std {}", var.sqrt());
    }

    #[test]
    fn invalid_noise_configs() {
        let u = UnitaryMatrix::identity(2);
        let mut rng = stream(0, &[]);
        assert!(matches!(
            simulate_measurements(&u, &NoiseConfig::noisy(0, 0.0), &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            simulate_measurements(&u, &NoiseConfig::noisy(10, -0.1), &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn counting_identities_seven_modes() {
        let u = haar_random_unitary(7, &mut stream(9, &[])).unwrap();
        let data = simulate_measurements(&u, &NoiseConfig::noiseless(), &mut stream(10, &[])).unwrap();
        assert_eq!(data.single_count(), 49);
        assert_eq!(data.visibility_count(), 441);
        assert_eq!(data.total_count(), 490);
    }

    #[test]
    fn measurement_set_validation() {
        let ok = Measured::new(0.5, 0.1);
        assert!(MeasurementSet::new(2, vec![ok; 4], vec![Some(ok)]).is_ok());
        assert!(MeasurementSet::new(2, vec![ok; 3], vec![Some(ok)]).is_err());
        assert!(MeasurementSet::new(2, vec![Measured::new(1.5, 0.1); 4], vec![None]).is_err());
        assert!(MeasurementSet::new(2, vec![Measured::new(0.5, 0.0); 4], vec![None]).is_err());
        assert!(MeasurementSet::new(2, vec![ok; 4], vec![Some(Measured::new(1.2, 0.1))]).is_err());
        assert!(MeasurementSet::new(2, vec![ok; 4], vec![Some(Measured::new(-0.8, 0.1))]).is_ok());
    }
}
