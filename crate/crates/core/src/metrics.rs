//! Figures of merit for a reconstruction and their Monte Carlo uncertainty.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{best_analytic, seed_pool};
use crate::error::{Error, Result};
use crate::fitness::{chi_square, check_weight};
use crate::forward::{coincidence, Measured, MeasurementSet, P_DIST_FLOOR};
use crate::ga::{evolve, GaConfig};
use crate::linalg::{align_gauge, UnitaryMatrix};
use crate::reck::{dna_to_unitary, TriangleSchedule};
use crate::rng::stream;

/// `S = 1 − Σ|Ṽ − V| / (2 d₂)` over the visibilities defined in both the data
/// and the prediction, `d₂` being their count.
pub fn similarity(data: &MeasurementSet, u: &UnitaryMatrix) -> Result<f64> {
    if u.dim() != data.modes() {
        return Err(Error::shape(format!(
            "{}-mode unitary against {}-mode data",
            u.dim(),
            data.modes()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ((i, j), (p, q), e) in data.visibility_entries() {
        let c = coincidence(u.matrix(), i, j, p, q);
        if c.distinguishable < P_DIST_FLOOR {
            continue;
        }
        let v = (c.distinguishable - c.indistinguishable) / c.distinguishable;
        total += (e.value - v).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(
            "similarity needs at least one defined visibility".into(),
        ));
    }
    Ok(1.0 - total / (2.0 * count as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateFidelity {
    /// `|Tr[a† b]| / m`.
    pub raw: f64,
    /// Same after optimal phase alignment (and possibly conjugation) of `a`.
    pub aligned: f64,
    pub conjugated: bool,
}

pub fn gate_fidelity(a: &UnitaryMatrix, b: &UnitaryMatrix) -> Result<GateFidelity> {
    let g = align_gauge(a, b)?;
    Ok(GateFidelity {
        raw: g.raw_fidelity.clamp(0.0, 1.0),
        aligned: g.fidelity.max(g.raw_fidelity).clamp(0.0, 1.0),
        conjugated: g.conjugated,
    })
}

/// Reconstruction rerun on every Monte Carlo resample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum McMethod {
    /// Best-χ² analytic inversion.
    Analytic,
    /// Analytic seeds followed by a short genetic run.
    GaShort { config: GaConfig },
}

impl McMethod {
    /// A deliberately small GA configuration for resampling.
    pub fn ga_short() -> Self {
        McMethod::GaShort {
            config: GaConfig {
                population: 30,
                analytic_seeds: 10,
                max_iterations: 200,
                stall_window: 50,
                ..GaConfig::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub samples: usize,
    /// Resamples whose reconstruction failed.
    pub skipped: usize,
    /// Resampled entries clipped back into their physical range.
    pub clipped: usize,
}

/// Draws each entry from a Gaussian centred on its value with its quoted
/// error; probabilities are clipped to `[0, 1]` and visibilities to `<= 1`.
/// Returns the resampled set and the number of clipped entries.
pub fn resample<R: Rng + ?Sized>(data: &MeasurementSet, rng: &mut R) -> (MeasurementSet, usize) {
    let mut clipped = 0;
    let mut draw = |e: &Measured, lo: f64, hi: f64| {
        let z: f64 = StandardNormal.sample(rng);
        let x = e.value + e.error * z;
        let c = x.clamp(lo, hi);
        if c != x {
            clipped += 1;
        }
        Measured::new(c, e.error)
    };
    let single = data
        .single_slice()
        .iter()
        .map(|e| draw(e, 0.0, 1.0))
        .collect();
    let visibility = data
        .visibility_slice()
        .iter()
        .map(|e| e.as_ref().map(|e| draw(e, f64::NEG_INFINITY, 1.0)))
        .collect();
    let set = MeasurementSet::new(data.modes(), single, visibility)
        .expect("resampling preserves every invariant");
    (set, clipped)
}

fn reconstruct(data: &MeasurementSet, method: &McMethod, weight: f64, seed: u64) -> Result<Option<UnitaryMatrix>> {
    match method {
        McMethod::Analytic => Ok(best_analytic(data, weight)?.map(|e| e.unitary)),
        McMethod::GaShort { config } => {
            let m = data.modes();
            let cfg = GaConfig {
                weight,
                seed,
                analytic_seeds: config.analytic_seeds.min(m * m),
                ..config.clone()
            };
            let seeds = seed_pool(data, cfg.analytic_seeds, weight)?.seeds;
            let run = evolve(data, &cfg, &seeds)?;
            Ok(Some(dna_to_unitary(&run.best.dna, &TriangleSchedule::new(m)?)?))
        }
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Spread of the gauge-aligned fidelity against `reference` when the data are
/// resampled within their errors and reconstructed `n` times.
///
/// A base seed is drawn from `rng`; resample `k` uses its own stream derived
/// from it, so the result does not depend on thread scheduling. Resamples
/// whose reconstruction fails are skipped; more than 20% failures is an error.
pub fn monte_carlo_uncertainty<R: Rng + ?Sized>(
    data: &MeasurementSet,
    reference: &UnitaryMatrix,
    n: usize,
    rng: &mut R,
    method: &McMethod,
    weight: f64,
) -> Result<McSummary> {
    let fid = monte_carlo(data, Some(reference), None, n, rng.random(), method, weight)?;
    Ok(fid.fidelity.expect("reference supplied"))
}

#[derive(Clone, Copy, Debug)]
struct McOutcome {
    fidelity: Option<McSummary>,
    similarity: Option<(f64, f64)>,
}

/// One resample's fidelity, similarity and clipped-entry count.
type Draw = (Option<f64>, Option<f64>, usize);

#[allow(clippy::too_many_arguments)]
fn monte_carlo(
    data: &MeasurementSet,
    reference: Option<&UnitaryMatrix>,
    candidate: Option<&UnitaryMatrix>,
    n: usize,
    base_seed: u64,
    method: &McMethod,
    weight: f64,
) -> Result<McOutcome> {
    if n < 2 {
        return Err(Error::config(format!("Monte Carlo needs n >= 2, got {n}")));
    }
    check_weight(weight)?;
    if let Some(r) = reference {
        if r.dim() != data.modes() {
            return Err(Error::shape("reference dimension differs from data"));
        }
    }
    let draws: Vec<Result<Draw>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(base_seed, &[k as u64]);
            let (sample, clipped) = resample(data, &mut rng);
            let sim = candidate.map(|u| similarity(&sample, u)).transpose()?;
            let fid = match reference {
                None => None,
                Some(r) => reconstruct(&sample, method, weight, rng.random())?
                    .map(|u| align_gauge(&u, r).map(|g| g.fidelity))
                    .transpose()?,
            };
            Ok((fid, sim, clipped))
        })
        .collect();

    let mut fids = Vec::with_capacity(n);
    let mut sims = Vec::with_capacity(n);
    let mut skipped = 0;
    let mut clipped = 0;
    for d in draws {
        match d {
            Ok((f, s, c)) => {
                clipped += c;
                if let Some(s) = s {
                    sims.push(s);
                }
                match (reference, f) {
                    (Some(_), Some(f)) => fids.push(f),
                    (Some(_), None) => skipped += 1,
                    _ => {}
                }
            }
            Err(_) => skipped += 1,
        }
    }
    if skipped * 5 > n {
        return Err(Error::Procedure(format!(
            "{skipped} of {n} Monte Carlo reconstructions failed"
        )));
    }
    let fidelity = reference.map(|_| {
        let (mean, std) = mean_std(&fids);
        McSummary {
            mean_fidelity: mean,
            std_fidelity: std,
            samples: fids.len(),
            skipped,
            clipped,
        }
    });
    let similarity = (sims.len() >= 2).then(|| mean_std(&sims));
    Ok(McOutcome {
        fidelity,
        similarity,
    })
}

/// Rounds to six significant digits when serialized.
mod sig6 {
    use serde::Serializer;

    pub fn round(x: f64) -> f64 {
        if x == 0.0 || !x.is_finite() {
            return x;
        }
        format!("{x:.5e}").parse().unwrap_or(x)
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(round(*x))
    }

    pub mod option {
        use serde::Serializer;

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => s.serialize_some(&super::round(*v)),
                None => s.serialize_none(),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    #[serde(serialize_with = "sig6::serialize")]
    pub raw: f64,
    #[serde(serialize_with = "sig6::serialize")]
    pub aligned: f64,
    pub conjugated: bool,
    /// Monte Carlo mean of the aligned fidelity of resampled reconstructions.
    #[serde(serialize_with = "sig6::option::serialize")]
    pub mc_mean: Option<f64>,
    #[serde(serialize_with = "sig6::option::serialize")]
    pub uncertainty: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub single_entries: usize,
    pub visibility_entries: usize,
    /// Visibility slots left out of χ²_V and S.
    pub excluded_entries: usize,
    pub mc_samples: Option<usize>,
    pub mc_skipped: Option<usize>,
    pub mc_clipped: Option<usize>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub modes: usize,
    #[serde(serialize_with = "sig6::serialize")]
    pub weight: f64,
    #[serde(serialize_with = "sig6::serialize")]
    pub chi2_single: f64,
    #[serde(serialize_with = "sig6::serialize")]
    pub chi2_visibility: f64,
    /// `2 [w χ²_P + (1 − w) χ²_V]`.
    #[serde(serialize_with = "sig6::serialize")]
    pub chi2: f64,
    #[serde(serialize_with = "sig6::serialize")]
    pub similarity: f64,
    #[serde(serialize_with = "sig6::option::serialize")]
    pub similarity_uncertainty: Option<f64>,
    pub fidelity: Option<FidelityReport>,
    pub metadata: ReportMetadata,
}

/// Monte Carlo settings for [`evaluate`].
#[derive(Clone, Debug)]
pub struct McOptions {
    pub samples: usize,
    pub method: McMethod,
    pub seed: u64,
}

/// Full report for `u` against `data`, optionally compared with `reference`.
pub fn evaluate(
    data: &MeasurementSet,
    u: &UnitaryMatrix,
    reference: Option<&UnitaryMatrix>,
    weight: f64,
    mc: Option<&McOptions>,
) -> Result<EvaluationReport> {
    check_weight(weight)?;
    let terms = chi_square(u, data)?;
    let s = similarity(data, u)?;
    let mut metadata = ReportMetadata {
        single_entries: data.single_count(),
        visibility_entries: terms.included,
        excluded_entries: terms.excluded,
        ..Default::default()
    };
    let mut fidelity = reference
        .map(|r| {
            gate_fidelity(u, r).map(|g| FidelityReport {
                raw: g.raw,
                aligned: g.aligned,
                conjugated: g.conjugated,
                mc_mean: None,
                uncertainty: None,
            })
        })
        .transpose()?;
    if fidelity.as_ref().is_some_and(|f| f.conjugated) {
        metadata.flags.push("aligned_via_conjugate".into());
    }
    let mut similarity_uncertainty = None;
    if let Some(opts) = mc {
        let outcome = monte_carlo(data, reference, Some(u), opts.samples, opts.seed, &opts.method, weight)?;
        similarity_uncertainty = outcome.similarity.map(|(_, std)| std);
        if let (Some(f), Some(summary)) = (fidelity.as_mut(), outcome.fidelity) {
            f.mc_mean = Some(summary.mean_fidelity);
            f.uncertainty = Some(summary.std_fidelity);
            metadata.mc_skipped = Some(summary.skipped);
            metadata.mc_clipped = Some(summary.clipped);
        }
        metadata.mc_samples = Some(opts.samples);
    }
    Ok(EvaluationReport {
        modes: data.modes(),
        weight,
        chi2_single: terms.single,
        chi2_visibility: terms.visibility,
        chi2: terms.weighted(weight),
        similarity: s,
        similarity_uncertainty,
        fidelity,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{simulate_measurements, NoiseConfig};
    use crate::linalg::haar_random_unitary;
    use num_complex::Complex64;

    fn noisy(m: usize, shots: u64, sigma_v: f64, seed: u64) -> (UnitaryMatrix, MeasurementSet) {
        let mut rng = stream(seed, &[]);
        let u = haar_random_unitary(m, &mut rng).unwrap();
        let noise = if shots == 0 {
            NoiseConfig::noiseless()
        } else {
            NoiseConfig::noisy(shots, sigma_v)
        };
        let data = simulate_measurements(&u, &noise, &mut rng).unwrap();
        (u, data)
    }

    #[test]
    fn generator_has_unit_similarity() {
        let (u, data) = noisy(4, 0, 0.0, 1);
        assert_eq!(similarity(&data, &u).unwrap(), 1.0);
    }

    #[test]
    fn one_entry_toy_similarity() {
        // Ṽ = 1 measured, identity predicts V = 0 → S = 1 − 1/2
        let ok = Measured::new(0.5, 0.1);
        let data = MeasurementSet::new(2, vec![ok; 4], vec![Some(Measured::new(1.0, 0.01))]).unwrap();
        assert!((similarity(&data, &UnitaryMatrix::identity(2)).unwrap() - 0.5).abs() < 1e-15);
        let empty = MeasurementSet::new(2, vec![ok; 4], vec![None]).unwrap();
        assert!(matches!(
            similarity(&empty, &UnitaryMatrix::identity(2)),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn fidelity_properties() {
        let mut rng = stream(2, &[]);
        let a = haar_random_unitary(5, &mut rng).unwrap();
        let same = gate_fidelity(&a, &a).unwrap();
        assert!((same.raw - 1.0).abs() < 1e-12 && (same.aligned - 1.0).abs() < 1e-12);
        let phased = UnitaryMatrix::new(a.matrix().scale(Complex64::from_polar(1.0, 0.7)), 1e-10).unwrap();
        assert!((gate_fidelity(&phased, &a).unwrap().raw - 1.0).abs() < 1e-12);
        for _ in 0..20 {
            let b = haar_random_unitary(5, &mut rng).unwrap();
            let g = gate_fidelity(&a, &b).unwrap();
            assert!(g.aligned >= g.raw - 1e-12);
            assert!((0.0..=1.0).contains(&g.raw) && (0.0..=1.0).contains(&g.aligned));
            let b2 = UnitaryMatrix::new(b.matrix().scale(Complex64::from_polar(1.0, 2.1)), 1e-10).unwrap();
            assert!((gate_fidelity(&a, &b2).unwrap().raw - g.raw).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_monte_carlo_is_tight() {
        let (u, data) = noisy(3, 0, 0.0, 3);
        let s = monte_carlo_uncertainty(&data, &u, 100, &mut stream(4, &[]), &McMethod::Analytic, 0.5).unwrap();
        assert!(s.std_fidelity < 1e-3, "std {}", s.std_fidelity);
        assert_eq!(s.samples, 100);
    }

    #[test]
    fn monte_carlo_spread_shrinks_with_noise() {
        let mut rng = stream(5, &[]);
        let u = haar_random_unitary(3, &mut rng).unwrap();
        let mut stds = Vec::new();
        for (shots, sigma) in [(1_000, 0.05), (10_000, 0.01), (100_000, 0.002)] {
            let data = simulate_measurements(&u, &NoiseConfig::noisy(shots, sigma), &mut rng).unwrap();
            let s = monte_carlo_uncertainty(&data, &u, 200, &mut stream(6, &[]), &McMethod::Analytic, 0.5).unwrap();
            stds.push(s.std_fidelity);
        }
        assert!(stds[0] > stds[1] && stds[1] > stds[2], "{stds:?}");
    }

    #[test]
    fn monte_carlo_is_repeatable() {
        let (u, data) = noisy(3, 10_000, 0.01, 7);
        let a = monte_carlo_uncertainty(&data, &u, 500, &mut stream(8, &[]), &McMethod::Analytic, 0.5).unwrap();
        let b = monte_carlo_uncertainty(&data, &u, 500, &mut stream(9, &[]), &McMethod::Analytic, 0.5).unwrap();
        let rel = (a.std_fidelity - b.std_fidelity).abs() / a.std_fidelity;
        assert!(rel < 0.2, "{} vs {}", a.std_fidelity, b.std_fidelity);
        assert!(monte_carlo_uncertainty(&data, &u, 1, &mut stream(0, &[]), &McMethod::Analytic, 0.5).is_err());
    }

    #[test]
    fn ga_short_monte_carlo_runs() {
        let (u, data) = noisy(3, 10_000, 0.01, 10);
        let s = monte_carlo_uncertainty(&data, &u, 4, &mut stream(11, &[]), &McMethod::ga_short(), 0.5).unwrap();
        assert_eq!(s.samples, 4);
        assert!(s.mean_fidelity > 0.9);
    }

    #[test]
    fn report_round_trips() {
        let (u, data) = noisy(3, 10_000, 0.01, 12);
        let opts = McOptions { samples: 20, method: McMethod::Analytic, seed: 1 };
        let report = evaluate(&data, &u, Some(&u), 0.5, Some(&opts)).unwrap();
        assert!(report.similarity <= 1.0);
        assert!(report.fidelity.as_ref().unwrap().uncertainty.is_some());
        let json = serde_json::to_string_pretty(&report).unwrap();
        let parsed: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string_pretty(&parsed).unwrap(), json);
        assert_eq!(sig6::round(0.123456789), 0.123457);
    }
}
