//! Genetic evolution of DNA populations against a measurement set.
//!
//! One iteration is one generation: the `elite_count` best individuals are
//! copied unchanged, every other slot is refilled by selecting two parents,
//! recombining them gene by gene and mutating the child. Each child slot draws
//! its randomness from a stream derived from `(seed, generation, slot)`, so a
//! run is reproducible regardless of how many threads evaluate it.

use std::collections::VecDeque;
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::{check_weight, Evaluator, Fitness};
use crate::forward::MeasurementSet;
use crate::linalg::{haar_random_unitary, ComplexMatrix};
use crate::reck::{unitary_to_dna, Dna, Gene};
use crate::rng::{stream, StreamRng};

/// Parent selection scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Probability proportional to `1/χ²`.
    Roulette,
    /// Best of `size` uniformly drawn individuals.
    Tournament { size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    /// Population size `s`.
    pub population: usize,
    /// Slots reserved for analytic seeds (`s₁`); the other `s - s₁` are Haar-random.
    pub analytic_seeds: usize,
    /// Per-gene, per-generation replacement probability `γ`.
    pub mutation_rate: f64,
    /// Weight `w` of the single-photon term.
    pub weight: f64,
    pub max_iterations: u64,
    /// Stop when the best χ² improved by less than `stall_tolerance`
    /// (relative) over this many generations.
    pub stall_window: u64,
    pub stall_tolerance: f64,
    pub elite_count: usize,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            analytic_seeds: 20,
            mutation_rate: 0.02,
            weight: 0.5,
            max_iterations: 100_000,
            stall_window: 2000,
            stall_tolerance: 1e-4,
            elite_count: 2,
            selection: Selection::Roulette,
            seed: 0,
        }
    }
}

impl GaConfig {
    /// `s₂ = s − s₁`.
    pub fn random_seeds(&self) -> usize {
        self.population.saturating_sub(self.analytic_seeds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::config(format!("population {} < 2", self.population)));
        }
        if self.analytic_seeds > self.population {
            return Err(Error::config(format!(
                "{} analytic seeds exceed population {}",
                self.analytic_seeds, self.population
            )));
        }
        if self.elite_count < 1 || self.elite_count >= self.population {
            return Err(Error::config(format!(
                "elite count {} outside [1, {})",
                self.elite_count, self.population
            )));
        }
        if !(self.mutation_rate > 0.0 && self.mutation_rate < 1.0) {
            return Err(Error::config(format!(
                "mutation rate {} outside (0, 1)",
                self.mutation_rate
            )));
        }
        check_weight(self.weight)?;
        if self.stall_window == 0 || self.stall_tolerance.is_nan() || self.stall_tolerance < 0.0 {
            return Err(Error::config("stall window must be positive and tolerance >= 0"));
        }
        if let Selection::Tournament { size } = self.selection {
            if size == 0 {
                return Err(Error::config("tournament size must be positive"));
            }
        }
        Ok(())
    }
}

/// Child whose genes come half from each parent, slot by slot.
///
/// `⌈M/2⌉` slots are drawn uniformly without replacement and taken from one
/// parent (itself chosen by a coin flip); the remaining slots come from the
/// other. Genes are copied whole.
pub fn crossover<R: Rng + ?Sized>(a: &Dna, b: &Dna, rng: &mut R) -> Result<Dna> {
    if a.modes() != b.modes() {
        return Err(Error::shape(format!(
            "cannot cross {}-mode and {}-mode DNAs",
            a.modes(),
            b.modes()
        )));
    }
    let n = a.len();
    let (major, minor) = if rng.random::<bool>() { (a, b) } else { (b, a) };
    let mut genes: Vec<Gene> = minor.genes().to_vec();
    for k in sample(rng, n, n.div_ceil(2)) {
        genes[k] = major.genes()[k];
    }
    Ok(Dna::new_unchecked(a.modes(), genes))
}

/// Replaces each gene with probability `rate` by a fresh random gene.
/// Returns the mutated DNA and the number of replaced genes.
pub fn mutate<R: Rng + ?Sized>(dna: &Dna, rate: f64, rng: &mut R) -> (Dna, usize) {
    let mut count = 0;
    let genes = dna
        .genes()
        .iter()
        .map(|g| {
            if rng.random::<f64>() < rate {
                count += 1;
                Gene::random(rng)
            } else {
                *g
            }
        })
        .collect();
    (Dna::new_unchecked(dna.modes(), genes), count)
}

/// A DNA with its cached fitness.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub dna: Dna,
    pub fitness: Fitness,
}

/// One row of the convergence trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub best_chi2: f64,
    pub mean_chi2: f64,
    pub mutations: u64,
    pub elapsed_ms: u64,
}

/// What produced an improvement of the best χ².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// The new best carries at least one freshly mutated gene (a "jump").
    Mutation,
    /// The new best is a pure recombination of existing genes.
    Crossover,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub iteration: u64,
    pub kind: EventKind,
    pub previous_chi2: f64,
    pub new_chi2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub events: Vec<TraceEvent>,
}

impl RunTrace {
    /// True iff the best χ² never increases.
    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].best_chi2 <= w[0].best_chi2)
    }

    pub fn count_events(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Stalled,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub best: Individual,
    pub trace: RunTrace,
    pub generations: u64,
    pub stop: StopReason,
}

/// Serializable snapshot of a run in progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: GaConfig,
    pub generation: u64,
    pub modes: usize,
    pub population: Vec<Vec<Gene>>,
    pub best: Vec<Gene>,
    /// Best χ² of the last `stall_window + 1` generations, oldest first.
    pub recent_best: Vec<f64>,
    pub rng: RngDescriptor,
}

/// Describes how per-slot random streams are derived. Streams are stateless
/// functions of `(master_seed, generation, slot)`, so this is all that is
/// needed to continue a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngDescriptor {
    pub algorithm: String,
    pub master_seed: u64,
    pub next_generation: u64,
}

const RNG_ALGORITHM: &str = "chacha8/splitmix64-path";

/// Runs the evolution to completion. `seeds` (at most `cfg.analytic_seeds`)
/// enter the initial population; the rest is filled with Haar-random unitaries.
pub fn evolve(data: &MeasurementSet, cfg: &GaConfig, seeds: &[Dna]) -> Result<RunResult> {
    let mut evo = Evolution::new(data, cfg.clone(), seeds)?;
    evo.run_to_end();
    Ok(evo.finish())
}

/// Stepwise evolution, for callers that checkpoint or observe progress.
pub struct Evolution {
    cfg: GaConfig,
    eval: Evaluator,
    population: Vec<Individual>,
    mutations: Vec<usize>,
    generation: u64,
    best: Individual,
    recent_best: VecDeque<f64>,
    trace: RunTrace,
    started: Instant,
    stop: Option<StopReason>,
}

impl Evolution {
    pub fn new(data: &MeasurementSet, cfg: GaConfig, seeds: &[Dna]) -> Result<Self> {
        cfg.validate()?;
        let eval = Evaluator::new(data, cfg.weight)?;
        check_data(data)?;
        let m = data.modes();
        if seeds.len() > cfg.analytic_seeds {
            return Err(Error::config(format!(
                "{} seeds supplied but only {} analytic slots configured",
                seeds.len(),
                cfg.analytic_seeds
            )));
        }
        if let Some(bad) = seeds.iter().find(|d| d.modes() != m) {
            return Err(Error::shape(format!(
                "seed DNA has {} modes, data has {m}",
                bad.modes()
            )));
        }
        let seed = cfg.seed;
        let mut dnas: Vec<Dna> = seeds.to_vec();
        let fill: Result<Vec<Dna>> = (seeds.len()..cfg.population)
            .into_par_iter()
            .map(|slot| {
                let mut rng = stream(seed, &[0, slot as u64]);
                unitary_to_dna(&haar_random_unitary(m, &mut rng)?)
            })
            .collect();
        dnas.extend(fill?);
        let population = evaluate_all(&eval, dnas);
        Ok(Self::assemble(cfg, eval, population, 0, None, VecDeque::new()))
    }

    pub fn from_checkpoint(data: &MeasurementSet, ckpt: &Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        check_data(data)?;
        if ckpt.modes != data.modes() {
            return Err(Error::shape(format!(
                "checkpoint is for {} modes, data has {}",
                ckpt.modes,
                data.modes()
            )));
        }
        if ckpt.population.len() != ckpt.config.population {
            return Err(Error::config("checkpoint population size does not match its config"));
        }
        if ckpt.rng.algorithm != RNG_ALGORITHM || ckpt.rng.master_seed != ckpt.config.seed {
            return Err(Error::config("checkpoint random stream descriptor is incompatible"));
        }
        let eval = Evaluator::new(data, ckpt.config.weight)?;
        let dnas = ckpt
            .population
            .iter()
            .map(|g| Dna::new(ckpt.modes, g.clone()))
            .collect::<Result<Vec<_>>>()?;
        let best_dna = Dna::new(ckpt.modes, ckpt.best.clone())?;
        let best = Individual {
            fitness: eval.evaluate(&best_dna)?,
            dna: best_dna,
        };
        let population = evaluate_all(&eval, dnas);
        Ok(Self::assemble(
            ckpt.config.clone(),
            eval,
            population,
            ckpt.generation,
            Some(best),
            ckpt.recent_best.iter().copied().collect(),
        ))
    }

    fn assemble(
        cfg: GaConfig,
        eval: Evaluator,
        population: Vec<Individual>,
        generation: u64,
        best: Option<Individual>,
        recent_best: VecDeque<f64>,
    ) -> Self {
        let current = population[best_index(&population)].clone();
        let best = match best {
            Some(b) if b.fitness.chi2 <= current.fitness.chi2 => b,
            _ => current,
        };
        let mut evo = Self {
            mutations: vec![0; population.len()],
            cfg,
            eval,
            population,
            generation,
            best,
            recent_best,
            trace: RunTrace::default(),
            started: Instant::now(),
            stop: None,
        };
        if evo.recent_best.is_empty() {
            evo.record(0);
        }
        evo
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn best(&self) -> &Individual {
        &self.best
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn is_done(&self) -> bool {
        self.stop.is_some()
    }

    /// Advances one generation. Returns `false` once the run has stopped.
    pub fn step(&mut self) -> bool {
        if self.stop.is_some() {
            return false;
        }
        if self.generation >= self.cfg.max_iterations {
            self.stop = Some(StopReason::MaxIterations);
            return false;
        }
        let generation = self.generation + 1;
        let s = self.cfg.population;
        let elites = self.cfg.elite_count;

        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| {
            self.population[a]
                .fitness
                .chi2
                .total_cmp(&self.population[b].fitness.chi2)
                .then(a.cmp(&b))
        });
        let selector = Selector::new(&self.population, self.cfg.selection);

        let seed = self.cfg.seed;
        let rate = self.cfg.mutation_rate;
        let m = self.eval.modes();
        let population = &self.population;
        let eval = &self.eval;
        let children: Vec<(Individual, usize)> = (elites..s)
            .into_par_iter()
            .map_init(
                || ComplexMatrix::identity(m),
                |scratch, slot| {
                    let mut rng = stream(seed, &[generation, slot as u64]);
                    let a = &population[selector.pick(&mut rng)].dna;
                    let b = &population[selector.pick(&mut rng)].dna;
                    let child = crossover(a, b, &mut rng).expect("population shares one mode count");
                    let (child, count) = mutate(&child, rate, &mut rng);
                    let fitness = eval.evaluate_with(&child, scratch);
                    (Individual { dna: child, fitness }, count)
                },
            )
            .collect();

        let mut next = Vec::with_capacity(s);
        let mut mutations = Vec::with_capacity(s);
        for &i in order.iter().take(elites) {
            next.push(self.population[i].clone());
            mutations.push(0);
        }
        let mut total_mutations = 0;
        for (ind, count) in children {
            total_mutations += count as u64;
            next.push(ind);
            mutations.push(count);
        }
        self.population = next;
        self.mutations = mutations;
        self.generation = generation;

        let idx = best_index(&self.population);
        let candidate = &self.population[idx];
        if candidate.fitness.chi2 < self.best.fitness.chi2 {
            let kind = if self.mutations[idx] > 0 {
                EventKind::Mutation
            } else {
                EventKind::Crossover
            };
            self.trace.events.push(TraceEvent {
                iteration: generation,
                kind,
                previous_chi2: self.best.fitness.chi2,
                new_chi2: candidate.fitness.chi2,
            });
            self.best = candidate.clone();
        }
        self.record(total_mutations);
        self.check_stall();
        self.stop.is_none()
    }

    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    fn record(&mut self, mutations: u64) {
        let mean = self.population.iter().map(|i| i.fitness.chi2).sum::<f64>()
            / self.population.len() as f64;
        self.trace.records.push(TraceRecord {
            iteration: self.generation,
            best_chi2: self.best.fitness.chi2,
            mean_chi2: mean,
            mutations,
            elapsed_ms: self.started.elapsed().as_millis() as u64,
        });
        self.recent_best.push_back(self.best.fitness.chi2);
        while self.recent_best.len() as u64 > self.cfg.stall_window + 1 {
            self.recent_best.pop_front();
        }
    }

    fn check_stall(&mut self) {
        if (self.recent_best.len() as u64) <= self.cfg.stall_window {
            return;
        }
        let old = self.recent_best[0];
        let now = *self.recent_best.back().expect("non-empty");
        let stalled = if old <= 0.0 {
            true
        } else {
            (old - now) / old < self.cfg.stall_tolerance
        };
        if stalled {
            self.stop = Some(StopReason::Stalled);
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            generation: self.generation,
            modes: self.eval.modes(),
            population: self
                .population
                .iter()
                .map(|i| i.dna.genes().to_vec())
                .collect(),
            best: self.best.dna.genes().to_vec(),
            recent_best: self.recent_best.iter().copied().collect(),
            rng: RngDescriptor {
                algorithm: RNG_ALGORITHM.into(),
                master_seed: self.cfg.seed,
                next_generation: self.generation + 1,
            },
        }
    }

    pub fn finish(mut self) -> RunResult {
        if self.stop.is_none() {
            self.stop = Some(StopReason::MaxIterations);
        }
        RunResult {
            best: self.best,
            trace: self.trace,
            generations: self.generation,
            stop: self.stop.expect("set above"),
        }
    }
}

fn check_data(data: &MeasurementSet) -> Result<()> {
    if data.single_count() == 0 || data.visibility_count() == 0 {
        return Err(Error::config("measurement tables are empty"));
    }
    Ok(())
}

fn evaluate_all(eval: &Evaluator, dnas: Vec<Dna>) -> Vec<Individual> {
    let m = eval.modes();
    dnas.into_par_iter()
        .map_init(
            || ComplexMatrix::identity(m),
            |scratch, dna| {
                let fitness = eval.evaluate_with(&dna, scratch);
                Individual { dna, fitness }
            },
        )
        .collect()
}

fn best_index(pop: &[Individual]) -> usize {
    pop.iter()
        .enumerate()
        .min_by(|a, b| a.1.fitness.chi2.total_cmp(&b.1.fitness.chi2).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("population is never empty")
}

enum Selector {
    Uniform(usize),
    Roulette { cumulative: Vec<f64> },
    Tournament { chi2: Vec<f64>, size: usize },
}

impl Selector {
    fn new(pop: &[Individual], scheme: Selection) -> Self {
        match scheme {
            Selection::Roulette => {
                let mut acc = 0.0;
                let cumulative: Vec<f64> = pop
                    .iter()
                    .map(|i| {
                        acc += i.fitness.fitness;
                        acc
                    })
                    .collect();
                let first = pop[0].fitness.fitness;
                let degenerate = !(acc.is_finite() && acc > 0.0)
                    || pop.iter().all(|i| i.fitness.fitness == first);
                if degenerate {
                    Selector::Uniform(pop.len())
                } else {
                    Selector::Roulette { cumulative }
                }
            }
            Selection::Tournament { size } => Selector::Tournament {
                chi2: pop.iter().map(|i| i.fitness.chi2).collect(),
                size,
            },
        }
    }

    fn pick(&self, rng: &mut StreamRng) -> usize {
        match self {
            Selector::Uniform(n) => rng.random_range(0..*n),
            Selector::Roulette { cumulative } => {
                let total = *cumulative.last().expect("non-empty");
                let x = rng.random::<f64>() * total;
                cumulative
                    .partition_point(|&c| c <= x)
                    .min(cumulative.len() - 1)
            }
            Selector::Tournament { chi2, size } => {
                let mut best = rng.random_range(0..chi2.len());
                for _ in 1..*size {
                    let other = rng.random_range(0..chi2.len());
                    if chi2[other] < chi2[best] || (chi2[other] == chi2[best] && other < best) {
                        best = other;
                    }
                }
                best
            }
        }
    }
}
