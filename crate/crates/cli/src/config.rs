//! GA configuration: built-in defaults, then a config file, then flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use unitary_ga::{GaConfig, Selection};

use crate::args::ReconstructArgs;
use crate::{input, usage, Failure};

/// Reads a TOML or JSON config. A reconstruct run manifest yields the GA
/// configuration it recorded. Returns the config and whether the file
/// set a seed.
pub fn load(path: &Path) -> anyhow::Result<(GaConfig, bool)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let mut value: serde_json::Value = if is_toml {
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        serde_json::to_value(table)?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    if let Some(inner) = value.pointer("/config/ga").filter(|v| v.is_object()) {
        value = inner.clone();
    }
    let has_seed = value.get("seed").is_some();
    let cfg: GaConfig = serde_json::from_value(value).with_context(|| format!("invalid config in {}", path.display()))?;
    Ok((cfg, has_seed))
}

pub fn parse_selection(s: &str) -> anyhow::Result<Selection> {
    match s.split_once(':') {
        None if s == "roulette" => Ok(Selection::Roulette),
        None if s == "tournament" => Ok(Selection::Tournament { size: 2 }),
        Some(("tournament", k)) => {
            let size = k.parse().map_err(|_| anyhow!("invalid tournament size {k:?}"))?;
            Ok(Selection::Tournament { size })
        }
        _ => bail!("unknown selection {s:?}; use `roulette` or `tournament:K`"),
    }
}

pub enum SeedOrigin {
    Flag,
    Config,
    Unset,
}

/// Merges defaults, the config file and flags, then validates.
pub fn effective(args: &ReconstructArgs) -> Result<(GaConfig, SeedOrigin), Failure> {
    let (mut cfg, mut origin) = match &args.config {
        Some(p) => {
            let (cfg, has_seed) = load(p).map_err(input)?;
            cfg.validate()
                .with_context(|| format!("config file {}", p.display()))
                .map_err(input)?;
            (cfg, if has_seed { SeedOrigin::Config } else { SeedOrigin::Unset })
        }
        None => (GaConfig::default(), SeedOrigin::Unset),
    };
    if let Some(v) = args.pop {
        cfg.population = v;
    }
    if let Some(v) = args.analytic {
        cfg.analytic_seeds = v;
    }
    if args.no_analytic {
        cfg.analytic_seeds = 0;
    }
    if let Some(v) = args.gamma {
        cfg.mutation_rate = v;
    }
    if let Some(v) = args.weight {
        cfg.weight = v;
    }
    if let Some(v) = args.max_iter {
        cfg.max_iterations = v;
    }
    if let Some(v) = args.stall_window {
        cfg.stall_window = v;
    }
    if let Some(v) = args.stall_tol {
        cfg.stall_tolerance = v;
    }
    if let Some(v) = args.elite {
        cfg.elite_count = v;
    }
    if let Some(s) = &args.selection {
        cfg.selection = parse_selection(s).map_err(usage)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
        origin = SeedOrigin::Flag;
    }
    // a population smaller than the default seed count only shrinks s₁
    if args.pop.is_some() && args.analytic.is_none() && cfg.analytic_seeds > cfg.population {
        cfg.analytic_seeds = cfg.population;
    }
    cfg.validate().map_err(usage)?;
    Ok((cfg, origin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_strings() {
        assert_eq!(parse_selection("roulette").unwrap(), Selection::Roulette);
        assert_eq!(parse_selection("tournament:5").unwrap(), Selection::Tournament { size: 5 });
        assert!(parse_selection("tournament:x").is_err());
        assert!(parse_selection("rank").is_err());
    }

    #[test]
    fn toml_and_manifest_configs() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("ga.toml");
        std::fs::write(&toml_path, "population = 40\nmutation_rate = 0.05\n[selection]\nkind = \"tournament\"\nsize = 3\n").unwrap();
        let (cfg, has_seed) = load(&toml_path).unwrap();
        assert_eq!(cfg.population, 40);
        assert_eq!(cfg.selection, Selection::Tournament { size: 3 });
        assert!(!has_seed);

        let json_path = dir.path().join("manifest.json");
        std::fs::write(&json_path, r#"{"command":"reconstruct","config":{"ga":{"population":30,"seed":9},"seeds_used":0}}"#).unwrap();
        let (cfg, has_seed) = load(&json_path).unwrap();
        assert_eq!((cfg.population, cfg.seed, has_seed), (30, 9, true));

        std::fs::write(&json_path, r#"{"popul":3}"#).unwrap();
        assert!(load(&json_path).is_err());
    }
}
