use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use unitary_ga::analytic::SeedStatus;
use unitary_ga::forward::{NoiseConfig, P_DIST_FLOOR};
use unitary_ga::io::{self, Series};
use unitary_ga::metrics::{McMethod, McOptions};
use unitary_ga::rng::stream;
use unitary_ga::{
    dna_to_unitary, haar_random_unitary, metrics, seed_pool, simulate_measurements,
    Error as CoreError, Evolution, MeasurementSet, TriangleSchedule, UnitaryMatrix,
};

use crate::args::{DataArgs, EvaluateArgs, McMethodArg, ReconstructArgs, SeedAnalyticArgs, SimulateArgs};
use crate::config::{self, SeedOrigin};
use crate::manifest::{ManifestBuilder, SeedSource};
use crate::{input, run, usage, Failure};

pub const BEST_UNITARY_FILE: &str = "best_unitary.json";
pub const BEST_DNA_FILE: &str = "best_dna.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SERIES_FILE: &str = "series.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const BEST_ANALYTIC_FILE: &str = "best_analytic.json";

/// Classifies a library error: bad input files and data map to exit code 2,
/// invalid parameters to 64, anything else to 1.
fn core(e: CoreError) -> Failure {
    match e {
        CoreError::Parse { .. }
        | CoreError::Format { .. }
        | CoreError::Io { .. }
        | CoreError::Shape(_)
        | CoreError::Domain(_) => input(e),
        CoreError::Config(_) => usage(e),
        _ => run(e),
    }
}

fn entropy_seed() -> u64 {
    rand::random()
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(run)
}

/// Loads the measurements and records every file read in the manifest.
fn load_data(args: &DataArgs, manifest: &mut ManifestBuilder) -> Result<MeasurementSet, Failure> {
    match (&args.data, &args.single, &args.visibility) {
        (Some(path), _, _) => {
            let (data, dm, base) = io::read_dataset(path).map_err(core)?;
            let manifest_path = if path.is_dir() {
                path.join(io::DATASET_MANIFEST)
            } else {
                path.clone()
            };
            for p in [manifest_path, dm.single_path(&base), dm.visibility_path(&base)] {
                manifest.input(&p).map_err(input)?;
            }
            Ok(data)
        }
        (None, Some(single), Some(vis)) => {
            let data = io::read_measurements(single, vis).map_err(core)?;
            manifest.input(single).map_err(input)?;
            manifest.input(vis).map_err(input)?;
            Ok(data)
        }
        _ => Err(usage(anyhow!("give --data, or both --single and --visibility"))),
    }
}

fn read_unitary(path: &Path, manifest: &mut ManifestBuilder) -> Result<UnitaryMatrix, Failure> {
    let u = io::read_unitary(path).map_err(core)?;
    manifest.input(path).map_err(input)?;
    Ok(u)
}

#[derive(Serialize)]
struct SimulateConfig {
    modes: usize,
    source: String,
    noise: NoiseConfig,
    write_truth: bool,
}

pub fn simulate(args: SimulateArgs, threads: Option<u64>) -> Result<(), Failure> {
    let mut manifest = ManifestBuilder::start("simulate", threads);
    let noise = if args.noiseless {
        NoiseConfig {
            dp_floor: args.dp_floor,
            dv_floor: args.dv_floor,
            ..NoiseConfig::noiseless()
        }
    } else {
        NoiseConfig {
            shots: args.shots,
            sigma_v: args.sigma_v.unwrap_or(0.0),
            dp_floor: args.dp_floor,
            dv_floor: args.dv_floor,
        }
    };
    noise.validate().map_err(usage)?;
    if let Some(m) = args.haar {
        if m < 2 {
            return Err(usage(anyhow!("--haar needs at least 2 modes, got {m}")));
        }
    }
    let (seed, source) = match args.seed {
        Some(s) => (s, SeedSource::Flag),
        None => (entropy_seed(), SeedSource::Entropy),
    };
    manifest.seed(seed, source);

    let (truth, source) = match (args.haar, &args.unitary) {
        (Some(m), _) => {
            let u = haar_random_unitary(m, &mut stream(seed, &[0])).map_err(core)?;
            (u, format!("haar:{m}"))
        }
        (None, Some(path)) => (read_unitary(path, &mut manifest)?, path.display().to_string()),
        (None, None) => return Err(usage(anyhow!("give --haar M or --unitary FILE"))),
    };
    let data = simulate_measurements(&truth, &noise, &mut stream(seed, &[1])).map_err(core)?;
    manifest
        .config(&SimulateConfig {
            modes: truth.dim(),
            source,
            noise,
            write_truth: !args.no_truth,
        })
        .map_err(run)?;

    create_dir(&args.output)?;
    let ground_truth = (!args.no_truth).then_some(&truth);
    io::write_dataset(&args.output, &data, Some(noise), Some(seed), ground_truth).map_err(core)?;
    for name in [io::SINGLE_FILE, io::VISIBILITY_FILE, io::DATASET_MANIFEST] {
        manifest.output(&args.output.join(name));
    }
    if ground_truth.is_some() {
        manifest.output(&args.output.join(io::GROUND_TRUTH_FILE));
    }
    manifest.finish(&args.output).map_err(run)?;
    println!(
        "wrote {} single-photon and {} visibility entries ({} undefined) to {}",
        data.single_count(),
        data.visibility_count(),
        data.excluded_count(),
        args.output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReconstructConfig<'a> {
    ga: &'a unitary_ga::GaConfig,
    seeds_used: usize,
    resumed_from: Option<PathBuf>,
}

pub fn reconstruct(args: ReconstructArgs, threads: Option<u64>) -> Result<(), Failure> {
    let mut manifest = ManifestBuilder::start("reconstruct", threads);
    let data = load_data(&args.data, &mut manifest)?;
    let m = data.modes();

    let (mut evo, seeds_used) = match &args.resume {
        Some(path) => {
            let mut ckpt = io::read_checkpoint(path).map_err(core)?;
            if let Some(n) = args.max_iter {
                ckpt.config.max_iterations = n;
            }
            manifest.input(path).map_err(input)?;
            manifest.seed(ckpt.config.seed, SeedSource::Checkpoint);
            let evo = Evolution::from_checkpoint(&data, &ckpt).map_err(|e| match e {
                CoreError::Config(_) | CoreError::Shape(_) => input(e),
                other => core(other),
            })?;
            (evo, 0)
        }
        None => {
            let (mut cfg, origin) = config::effective(&args)?;
            if let Some(p) = &args.config {
                manifest.input(p).map_err(input)?;
            }
            match origin {
                SeedOrigin::Flag => manifest.seed(cfg.seed, SeedSource::Flag),
                SeedOrigin::Config => manifest.seed(cfg.seed, SeedSource::Config),
                SeedOrigin::Unset => {
                    cfg.seed = entropy_seed();
                    manifest.seed(cfg.seed, SeedSource::Entropy);
                }
            }
            let wanted = cfg.analytic_seeds.min(m * m);
            let seeds = if wanted > 0 {
                let pool = seed_pool(&data, wanted, cfg.weight).map_err(core)?;
                match pool.status {
                    SeedStatus::Complete => {}
                    SeedStatus::Partial { requested, available } => eprintln!(
                        "note: {available} of {requested} analytic seeds available; the rest are random"
                    ),
                    SeedStatus::NoUsableAnchors => {
                        eprintln!("note: no usable analytic anchor; starting from random individuals")
                    }
                }
                pool.seeds
            } else {
                Vec::new()
            };
            let used = seeds.len();
            let evo = Evolution::new(&data, cfg, &seeds).map_err(core)?;
            (evo, used)
        }
    };

    create_dir(&args.output)?;
    let checkpoint_path = args.output.join(CHECKPOINT_FILE);
    while evo.step() {
        if let Some(every) = args.checkpoint_every {
            if evo.generation() % every == 0 {
                io::write_checkpoint(&checkpoint_path, &evo.checkpoint()).map_err(core)?;
            }
        }
    }
    if args.checkpoint_every.is_some() {
        io::write_checkpoint(&checkpoint_path, &evo.checkpoint()).map_err(core)?;
        manifest.output(&checkpoint_path);
    }
    let final_checkpoint = evo.checkpoint();
    let result = evo.finish();

    let best = dna_to_unitary(&result.best.dna, &TriangleSchedule::new(m).map_err(core)?).map_err(core)?;
    let paths = [BEST_UNITARY_FILE, BEST_DNA_FILE, TRACE_FILE, SERIES_FILE].map(|f| args.output.join(f));
    io::write_unitary(&paths[0], &best).map_err(core)?;
    io::write_dna(&paths[1], &result.best.dna).map_err(core)?;
    io::write_trace_csv(&paths[2], &result.trace).map_err(core)?;
    io::write_json(&paths[3], &Series::from_trace(&result.trace)).map_err(core)?;
    for p in &paths {
        manifest.output(p);
    }
    check_trace_file(&paths[2])?;

    manifest
        .config(&ReconstructConfig {
            ga: &final_checkpoint.config,
            seeds_used,
            resumed_from: args.resume.clone(),
        })
        .map_err(run)?;
    manifest.finish(&args.output).map_err(run)?;

    let similarity = match metrics::similarity(&data, &best) {
        Ok(s) => format!("{s:.6}"),
        Err(_) => "undefined".into(),
    };
    println!(
        "chi2 {:.6e}  similarity {similarity}  iterations {}  stop {:?}",
        result.best.fitness.chi2, result.generations, result.stop
    );
    Ok(())
}

/// Re-reads the written trace and checks that its best-χ² column never rises.
fn check_trace_file(path: &Path) -> Result<(), Failure> {
    let rows = io::read_trace_best(path).map_err(run)?;
    if let Some(w) = rows.windows(2).find(|w| w[1].1 > w[0].1) {
        return Err(run(anyhow!(
            "{}: best chi2 rises at iteration {}",
            path.display(),
            w[1].0
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluateConfig {
    weight: f64,
    monte_carlo: Option<usize>,
    method: Option<McMethod>,
    reference: bool,
}

pub fn evaluate(args: EvaluateArgs, threads: Option<u64>) -> Result<(), Failure> {
    if args.fidelity && args.reference.is_none() {
        return Err(usage(anyhow!("--fidelity needs --reference")));
    }
    if args.mc.is_some_and(|n| n < 2) {
        return Err(usage(anyhow!("--mc needs at least 2 resamples")));
    }
    if !(0.0..=1.0).contains(&args.weight) {
        return Err(usage(anyhow!("--weight must lie in [0, 1]")));
    }
    let mut manifest = ManifestBuilder::start("evaluate", threads);
    let u = read_unitary(&args.unitary, &mut manifest)?;
    let data = load_data(&args.data, &mut manifest)?;
    let reference = args
        .reference
        .as_deref()
        .map(|p| read_unitary(p, &mut manifest))
        .transpose()?;
    if u.dim() != data.modes() || reference.as_ref().is_some_and(|r| r.dim() != u.dim()) {
        return Err(input(anyhow!("unitary, reference and data disagree on the mode count")));
    }

    let method = match args.mc_method {
        McMethodArg::Analytic => McMethod::Analytic,
        McMethodArg::GaShort => McMethod::ga_short(),
    };
    let mc = match args.mc {
        Some(samples) => {
            let (seed, source) = match args.seed {
                Some(s) => (s, SeedSource::Flag),
                None => (entropy_seed(), SeedSource::Entropy),
            };
            manifest.seed(seed, source);
            Some(McOptions {
                samples,
                method: method.clone(),
                seed,
            })
        }
        None => None,
    };
    manifest
        .config(&EvaluateConfig {
            weight: args.weight,
            monte_carlo: args.mc,
            method: args.mc.map(|_| method),
            reference: reference.is_some(),
        })
        .map_err(run)?;

    let report = metrics::evaluate(&data, &u, reference.as_ref(), args.weight, mc.as_ref()).map_err(core)?;
    create_dir(&args.output)?;
    let path = args.output.join(REPORT_FILE);
    io::write_json(&path, &report).map_err(core)?;
    manifest.output(&path);
    manifest.finish(&args.output).map_err(run)?;

    print!("chi2 {:.6e}  similarity {:.6}", report.chi2, report.similarity);
    if let Some(f) = &report.fidelity {
        print!("  fidelity {:.6} (raw {:.6})", f.aligned, f.raw);
        if let Some(sd) = f.uncertainty {
            print!(" ± {sd:.3e}");
        }
    }
    println!();
    Ok(())
}

#[derive(Serialize)]
struct SeedConfig {
    weight: f64,
    anchor_floor: f64,
    dist_floor: f64,
}

pub fn seed_analytic(args: SeedAnalyticArgs, threads: Option<u64>) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.weight) {
        return Err(usage(anyhow!("--weight must lie in [0, 1]")));
    }
    let mut manifest = ManifestBuilder::start("seed-analytic", threads);
    let data = load_data(&args.data, &mut manifest)?;
    manifest
        .config(&SeedConfig {
            weight: args.weight,
            anchor_floor: unitary_ga::analytic::ANCHOR_FLOOR,
            dist_floor: P_DIST_FLOOR,
        })
        .map_err(run)?;
    let m = data.modes();
    let pool = seed_pool(&data, m * m, args.weight).map_err(core)?;

    create_dir(&args.output)?;
    let table = args.output.join(CANDIDATES_FILE);
    io::write_candidates_csv(&table, &pool.candidates).map_err(core)?;
    manifest.output(&table);
    let usable = pool.chi2.len();
    if let Some(best) = pool.unitaries.first() {
        let path = args.output.join(BEST_ANALYTIC_FILE);
        io::write_unitary(&path, best).map_err(core)?;
        manifest.output(&path);
    }
    manifest.finish(&args.output).map_err(run)?;
    let Some(best_chi2) = pool.chi2.first() else {
        return Err(run(anyhow!("no usable anchor in the data")));
    };
    println!("{usable} of {} anchors usable; best chi2 {best_chi2:.6e}", m * m);
    Ok(())
}
