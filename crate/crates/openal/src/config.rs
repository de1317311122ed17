//! Experiment configuration: a flat key=value file with `[section]` headers.
//! The format is documented in the README; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::engine::{ExperimentConfig, PoolSource};
use crate::error::{Error, Result};
use crate::pool::{SynthClassSpec, SynthSpec};
use crate::probe::ProbeConfig;
use crate::strategies::{AblationFlags, StrategyKind};

#[derive(Debug, Clone, Default)]
pub struct IniFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl IniFile {
    pub fn parse(text: &str) -> Result<IniFile> {
        let mut file = IniFile::default();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(Error::Config(format!(
                        "line {}: unterminated section header `{line}`",
                        lineno + 1
                    )));
                }
                current = line[1..line.len() - 1].trim().to_string();
                file.sections.entry(current.clone()).or_default();
            } else if let Some((key, value)) = line.split_once('=') {
                file.sections
                    .entry(current.clone())
                    .or_default()
                    .insert(key.trim().to_string(), value.trim().to_string());
            } else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, found `{line}`",
                    lineno + 1
                )));
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<IniFile> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        IniFile::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|v| v.as_str())
    }

    fn parse_key<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("[{section}] {key} = {v}: cannot parse value"))
            }),
        }
    }

    fn parse_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.parse_key(section, key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.parse_key(section, key)?
            .ok_or_else(|| Error::Config(format!("missing [{section}] {key}")))
    }

    fn parse_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim().parse::<T>().map_err(|_| {
                        Error::Config(format!("[{section}] {key}: bad list item `{item}`"))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Axis-aligned Gaussian mixture shorthand: class c gets mean
/// `separation * e_(c mod dim)` scaled by (1 + c / dim) so classes sharing an
/// axis stay separated, diagonal covariance `cov_scale`.
pub fn axis_gaussian_spec(
    dim: usize,
    classes: usize,
    targets: &[usize],
    per_class_count: usize,
    cov_scale: f64,
    separation: f64,
    seed: u64,
) -> SynthSpec {
    let class_specs = (0..classes)
        .map(|c| {
            let mut mean = vec![0.0; dim];
            let axis = c % dim.max(1);
            mean[axis] = separation * (1.0 + (c / dim.max(1)) as f64);
            SynthClassSpec {
                count: per_class_count,
                mean,
                cov_scale,
                target: targets.contains(&c),
            }
        })
        .collect();
    SynthSpec {
        dim,
        classes: class_specs,
        seed,
    }
}

/// Reads the pool source keys from one section (`[pool]` in experiment files,
/// `[synth]` in synth spec files).
pub fn pool_source_from_section(ini: &IniFile, section: &str) -> Result<(PoolSource, Vec<u32>)> {
    let source = ini
        .get(section, "source")
        .unwrap_or(if section == "synth" { "synth" } else { "" });
    match source {
        "csv" => {
            let path: String = ini.require(section, "path")?;
            let labels = ini
                .parse_list::<u32>(section, "target_labels")?
                .ok_or_else(|| Error::Config(format!("missing [{section}] target_labels")))?;
            Ok((PoolSource::Csv(path), labels))
        }
        "binary" => {
            let path: String = ini.require(section, "path")?;
            let labels = ini
                .parse_list::<u32>(section, "target_labels")?
                .ok_or_else(|| Error::Config(format!("missing [{section}] target_labels")))?;
            Ok((PoolSource::Binary(path), labels))
        }
        "synth" => {
            let dim: usize = ini.parse_or(section, "dim", 32)?;
            let classes: usize = ini.parse_or(section, "classes", 9)?;
            let targets = ini
                .parse_list::<usize>(section, "targets")?
                .unwrap_or_else(|| vec![0, 1, 2]);
            let per_class_count: usize = ini.parse_or(section, "per_class_count", 1000)?;
            let cov_scale: f64 = ini.parse_or(section, "cov_scale", 1.0)?;
            let separation: f64 = ini.parse_or(section, "mean_separation", 8.0)?;
            let pool_seed: u64 = ini.parse_or(section, "pool_seed", 0)?;
            let spec = axis_gaussian_spec(
                dim,
                classes,
                &targets,
                per_class_count,
                cov_scale,
                separation,
                pool_seed,
            );
            Ok((PoolSource::Synth(spec), Vec::new()))
        }
        other => Err(Error::Config(format!(
            "[{section}] source = `{other}`: expected csv | binary | synth"
        ))),
    }
}

pub fn experiment_from_ini(ini: &IniFile) -> Result<ExperimentConfig> {
    let strategy: StrategyKind = ini
        .get("experiment", "strategy")
        .unwrap_or("openal")
        .parse()?;
    let ablation = AblationFlags {
        disable_sw: ini.parse_or("experiment", "disable_sw", false)?,
        disable_st: ini.parse_or("experiment", "disable_st", false)?,
        disable_miss: ini.parse_or("experiment", "disable_miss", false)?,
        only_miss: ini.parse_or("experiment", "only_miss", false)?,
    };
    let probe = ProbeConfig {
        learning_rate: ini.parse_or("probe", "learning_rate", 0.1)?,
        epochs: ini.parse_or("probe", "epochs", 200)?,
        l2_penalty: ini.parse_or("probe", "l2_penalty", 1e-4)?,
        seed: ini.parse_or("probe", "seed", 0)?,
    };
    let (source, target_labels) = pool_source_from_section(ini, "pool")?;
    let cfg = ExperimentConfig {
        strategy,
        ablation,
        rounds: ini.parse_or("experiment", "rounds", 7)?,
        seed_fraction: ini.parse_or("experiment", "seed_fraction", 0.01)?,
        budget_fraction: ini.parse_or("experiment", "budget_fraction", 0.05)?,
        candidate_multiplier: ini.parse_or("experiment", "candidate_multiplier", 2)?,
        kmeans_w: ini.parse_or("experiment", "kmeans_w", 9)?,
        test_fraction: ini.parse_or("experiment", "test_fraction", 0.2)?,
        probe,
        train_after_seed: ini.parse_or("experiment", "train_after_seed", true)?,
        seeds: ini
            .parse_list::<u64>("experiment", "seeds")?
            .unwrap_or_else(|| vec![0]),
        source,
        target_labels,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    experiment_from_ini(&IniFile::load(path)?)
}

/// Echo of the effective configuration, written next to the results so every
/// run is reproducible from its artifacts.
pub fn render_effective(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    out.push_str("[experiment]\n");
    out.push_str(&format!("strategy = {}\n", cfg.strategy));
    out.push_str(&format!("rounds = {}\n", cfg.rounds));
    out.push_str(&format!("seed_fraction = {}\n", cfg.seed_fraction));
    out.push_str(&format!("budget_fraction = {}\n", cfg.budget_fraction));
    out.push_str(&format!(
        "candidate_multiplier = {}\n",
        cfg.candidate_multiplier
    ));
    out.push_str(&format!("kmeans_w = {}\n", cfg.kmeans_w));
    out.push_str(&format!("test_fraction = {}\n", cfg.test_fraction));
    out.push_str(&format!("train_after_seed = {}\n", cfg.train_after_seed));
    out.push_str(&format!("disable_sw = {}\n", cfg.ablation.disable_sw));
    out.push_str(&format!("disable_st = {}\n", cfg.ablation.disable_st));
    out.push_str(&format!("disable_miss = {}\n", cfg.ablation.disable_miss));
    out.push_str(&format!("only_miss = {}\n", cfg.ablation.only_miss));
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    out.push_str(&format!("seeds = {}\n", seeds.join(",")));
    out.push_str("\n[probe]\n");
    out.push_str(&format!("learning_rate = {}\n", cfg.probe.learning_rate));
    out.push_str(&format!("epochs = {}\n", cfg.probe.epochs));
    out.push_str(&format!("l2_penalty = {}\n", cfg.probe.l2_penalty));
    out.push_str("\n[pool]\n");
    match &cfg.source {
        PoolSource::Csv(path) => {
            out.push_str("source = csv\n");
            out.push_str(&format!("path = {path}\n"));
        }
        PoolSource::Binary(path) => {
            out.push_str("source = binary\n");
            out.push_str(&format!("path = {path}\n"));
        }
        PoolSource::Synth(spec) => {
            out.push_str("source = synth\n");
            out.push_str(&format!("# generated spec: {} classes, dim {}\n", spec.classes.len(), spec.dim));
            out.push_str(&format!("pool_seed = {}\n", spec.seed));
        }
    }
    if !cfg.target_labels.is_empty() {
        let labels: Vec<String> = cfg.target_labels.iter().map(|l| l.to_string()).collect();
        out.push_str(&format!("target_labels = {}\n", labels.join(",")));
    }
    out
}
