//! Randomized invariants of the public API.

use proptest::prelude::*;
use unitary_ga::forward::mode_pairs;
use unitary_ga::ga::{crossover, mutate};
use unitary_ga::reck::{gene_count, random_dna};
use unitary_ga::rng::stream;
use unitary_ga::*;

fn haar(m: usize, seed: u64) -> UnitaryMatrix {
    haar_random_unitary(m, &mut stream(seed, &[])).unwrap()
}

/// χ² written out from the definitions, independent of `fitness`.
fn chi2_by_hand(u: &UnitaryMatrix, data: &MeasurementSet, w: f64) -> f64 {
    let m = u.dim();
    let mut cp = 0.0;
    for i in 0..m {
        for j in 0..m {
            let e = data.single(i, j);
            let p = u.matrix()[(j, i)].norm_sqr();
            cp += ((e.value - p) / e.error).powi(2);
        }
    }
    let mut cv = 0.0;
    for &(i, j) in &mode_pairs(m) {
        for &(p, q) in &mode_pairs(m) {
            let Some(e) = data.visibility(i, j, p, q) else { continue };
            let a = u.matrix()[(p, i)] * u.matrix()[(q, j)];
            let b = u.matrix()[(p, j)] * u.matrix()[(q, i)];
            let pd = a.norm_sqr() + b.norm_sqr();
            if pd < 1e-9 {
                continue;
            }
            let v = (pd - (a + b).norm_sqr()) / pd;
            cv += ((e.value - v) / e.error).powi(2);
        }
    }
    2.0 * (w * cp + (1.0 - w) * cv)
}

fn max_table_diff(a: &UnitaryMatrix, b: &UnitaryMatrix) -> f64 {
    let (pa, pb) = (predict_single(a), predict_single(b));
    let m = a.dim();
    let mut d: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            d = d.max((pa.get(i, j) - pb.get(i, j)).abs());
        }
    }
    for (x, y) in predict_visibilities(a)
        .as_slice()
        .iter()
        .zip(predict_visibilities(b).as_slice())
    {
        match (x, y) {
            (Some(x), Some(y)) => d = d.max((x - y).abs()),
            (None, None) => {}
            _ => return f64::INFINITY,
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_ignore_phase_gauge_and_conjugation(m in 2usize..7, seed: u64, phases in prop::collection::vec(0.0..std::f64::consts::TAU, 14)) {
        let u = haar(m, seed);
        let gauged = u.with_phases(&phases[..m], &phases[7..7 + m]).unwrap();
        prop_assert!(max_table_diff(&u, &gauged) < 1e-12);
        prop_assert!(max_table_diff(&u, &u.conjugate()) < 1e-12);
    }

    #[test]
    fn meshes_are_unitary_and_invert(m in 2usize..8, seed: u64) {
        let dna = random_dna(m, &mut stream(seed, &[])).unwrap();
        prop_assert_eq!(dna.len(), gene_count(m));
        let schedule = TriangleSchedule::new(m).unwrap();
        let u = dna_to_unitary(&dna, &schedule).unwrap();
        prop_assert!(linalg::unitarity_defect(u.matrix()).unwrap() < 1e-12);
        let back = dna_to_unitary(&unitary_to_dna(&u).unwrap(), &schedule).unwrap();
        prop_assert!(align_gauge(&back, &u).unwrap().fidelity >= 1.0 - 1e-8);
    }

    #[test]
    fn weighted_chi2_matches_definition(m in 2usize..6, seed: u64, w in 0.0..=1.0f64, shots in 100u64..100_000) {
        let mut rng = stream(seed, &[]);
        let truth = haar_random_unitary(m, &mut rng).unwrap();
        let data = simulate_measurements(&truth, &NoiseConfig::noisy(shots, 0.02), &mut rng).unwrap();
        let trial = haar_random_unitary(m, &mut rng).unwrap();
        let got = chi_square(&trial, &data).unwrap().weighted(w);
        let want = chi2_by_hand(&trial, &data, w);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{} vs {}", got, want);
        let ev = Evaluator::new(&data, w).unwrap();
        let f = ev.evaluate_unitary(&trial).unwrap();
        prop_assert_eq!(f.fitness, 1.0 / f.chi2);
    }

    #[test]
    fn crossover_children_are_slotwise_copies(m in 2usize..8, seed: u64) {
        let mut rng = stream(seed, &[]);
        let a = random_dna(m, &mut rng).unwrap();
        let b = random_dna(m, &mut rng).unwrap();
        let c = crossover(&a, &b, &mut rng).unwrap();
        let from_a = c.genes().iter().zip(a.genes()).filter(|(x, y)| x == y).count();
        for k in 0..c.len() {
            prop_assert!(c.genes()[k] == a.genes()[k] || c.genes()[k] == b.genes()[k]);
        }
        let big = c.len().div_ceil(2);
        prop_assert!(from_a == big || from_a == c.len() - big);
    }

    #[test]
    fn mutation_count_matches_changed_genes(m in 2usize..8, seed: u64, rate in 0.001..0.999f64) {
        let mut rng = stream(seed, &[]);
        let a = random_dna(m, &mut rng).unwrap();
        let (b, count) = mutate(&a, rate, &mut rng);
        let changed = a.genes().iter().zip(b.genes()).filter(|(x, y)| x != y).count();
        prop_assert_eq!(changed, count);
        for g in b.genes() {
            prop_assert!(g.validate().is_ok());
        }
    }

    #[test]
    fn alignment_never_loses_fidelity(m in 2usize..7, s1: u64, s2: u64) {
        let (a, b) = (haar(m, s1), haar(m, s2));
        let g = align_gauge(&a, &b).unwrap();
        prop_assert!(g.fidelity >= g.raw_fidelity - 1e-12);
        prop_assert!(g.fidelity <= 1.0);
        let f = metrics::gate_fidelity(&a, &b).unwrap();
        prop_assert!(f.aligned >= f.raw - 1e-12);
    }

    #[test]
    fn similarity_is_bounded(m in 2usize..6, seed: u64) {
        let mut rng = stream(seed, &[]);
        let truth = haar_random_unitary(m, &mut rng).unwrap();
        let data = simulate_measurements(&truth, &NoiseConfig::noisy(1000, 0.05), &mut rng).unwrap();
        let other = haar_random_unitary(m, &mut rng).unwrap();
        let s = similarity(&data, &other).unwrap();
        prop_assert!(s <= 1.0);
        prop_assert_eq!(similarity(&simulate_measurements(&truth, &NoiseConfig::noiseless(), &mut rng).unwrap(), &truth).unwrap(), 1.0);
    }

    #[test]
    fn seed_pool_is_sorted_and_sized(m in 3usize..6, seed: u64, count in 1usize..9) {
        let mut rng = stream(seed, &[]);
        let truth = haar_random_unitary(m, &mut rng).unwrap();
        let data = simulate_measurements(&truth, &NoiseConfig::noisy(5000, 0.02), &mut rng).unwrap();
        let pool = seed_pool(&data, count, 0.5).unwrap();
        prop_assert_eq!(pool.candidates.len(), m * m);
        prop_assert!(pool.seeds.len() <= count);
        prop_assert!(pool.chi2.windows(2).all(|w| w[0] <= w[1]));
        for (dna, u) in pool.seeds.iter().zip(&pool.unitaries) {
            let rebuilt = dna_to_unitary(dna, &TriangleSchedule::new(m).unwrap()).unwrap();
            prop_assert!(max_table_diff(&rebuilt, u) < 1e-9);
        }
    }
}

#[test]
fn perfect_generator_beats_every_other_individual() {
    let mut rng = stream(77, &[]);
    let dna = random_dna(4, &mut rng).unwrap();
    let schedule = TriangleSchedule::new(4).unwrap();
    let u = dna_to_unitary(&dna, &schedule).unwrap();
    let data = simulate_measurements(&u, &NoiseConfig::noiseless(), &mut rng).unwrap();
    let ev = Evaluator::new(&data, 0.5).unwrap();
    let own = ev.evaluate(&dna).unwrap();
    assert!(own.chi2 < 1e-20, "{}", own.chi2);
    for _ in 0..200 {
        let other = random_dna(4, &mut rng).unwrap();
        assert!(ev.evaluate(&other).unwrap().chi2 >= own.chi2);
    }
}
