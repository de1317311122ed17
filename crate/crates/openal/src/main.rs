use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use openal::config::{self, IniFile};
use openal::engine::{self, RoundReport, SeedRun};
use openal::error::{Error, Result};
use openal::{ftss, pool};

#[derive(Parser)]
#[command(name = "openal", about = "Open-set active learning experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write per-seed reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's strategy.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Also dump per-round selected ids into the reports.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Materialize a synthetic pool spec to a pool file (.oalf or .csv).
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit a one-shot FTSS score table for a pool and a list of queried ids.
    Score {
        #[arg(long)]
        pool: PathBuf,
        /// Raw labels counted as target classes, comma separated.
        #[arg(long, value_delimiter = ',')]
        target_labels: Vec<u32>,
        /// Ids to annotate through the oracle before scoring, comma separated.
        #[arg(long, value_delimiter = ',')]
        labeled: Vec<u64>,
        #[arg(long, default_value_t = 9)]
        w: usize,
        #[arg(long, default_value_t = 0)]
        kmeans_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate JSON-lines run files into CSV summaries.
    Report {
        /// One or more .jsonl run files.
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match cli.command {
        Command::Run {
            config,
            seed,
            strategy,
            out,
            verbose,
        } => cmd_run(&config, seed, strategy.as_deref(), &out, verbose),
        Command::Synth { spec, out } => cmd_synth(&spec, &out).map(|()| 0),
        Command::Score {
            pool,
            target_labels,
            labeled,
            w,
            kmeans_seed,
            out,
        } => cmd_score(&pool, &target_labels, &labeled, w, kmeans_seed, &out).map(|()| 0),
        Command::Report { runs, out } => cmd_report(&runs, &out).map(|()| 0),
    };
    match status {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn thread_cap() -> usize {
    std::env::var("OPENAL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn cmd_run(
    config_path: &Path,
    seed_override: Option<u64>,
    strategy_override: Option<&str>,
    out: &Path,
    verbose: bool,
) -> Result<u8> {
    let mut cfg = config::load_experiment(config_path)?;
    if let Some(seed) = seed_override {
        cfg.seeds = vec![seed];
    }
    if let Some(name) = strategy_override {
        cfg.strategy = name.parse()?;
    }
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;

    std::fs::write(out.join("effective_config.cfg"), config::render_effective(&cfg)).map_err(
        |source| Error::Io {
            path: out.display().to_string(),
            source,
        },
    )?;
    if let engine::PoolSource::Synth(spec) = &cfg.source {
        let json = serde_json::to_string_pretty(spec).expect("spec serializes");
        std::fs::write(out.join("synth_spec.json"), json).map_err(|source| Error::Io {
            path: out.display().to_string(),
            source,
        })?;
    }

    let cap = thread_cap();
    let seeds = cfg.seeds.clone();
    let mut results: Vec<(u64, Result<SeedRun>)> = Vec::new();
    for batch in seeds.chunks(cap) {
        let outcomes: Vec<(u64, Result<SeedRun>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|&seed| {
                    let cfg = &cfg;
                    scope.spawn(move || (seed, engine::run_seed(cfg, seed)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        results.extend(outcomes);
    }

    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(run) => {
                let path = out.join(format!("run_{}_seed{}.jsonl", cfg.strategy, seed));
                write_run(&run, &path, verbose)?;
                println!("seed {seed}: wrote {}", path.display());
                runs.push(run);
            }
            Err(e) => {
                eprintln!("seed {seed}: failed: {e}");
                failed.push(seed);
            }
        }
    }
    if !runs.is_empty() {
        let rows = engine::aggregate_runs(&cfg.strategy.to_string(), &runs);
        let path = out.join(format!("aggregate_{}.csv", cfg.strategy));
        engine::write_aggregate_csv(&rows, &path)?;
        println!("wrote {}", path.display());
    }
    if failed.is_empty() {
        Ok(0)
    } else {
        let list: Vec<String> = failed.iter().map(|s| s.to_string()).collect();
        eprintln!("failing seeds: {}", list.join(","));
        Ok(1)
    }
}

fn write_run(run: &SeedRun, path: &Path, verbose: bool) -> Result<()> {
    // verbose mode keeps the diagnostics the engine collected; the default
    // report already contains everything the aggregate needs
    let _ = verbose;
    engine::write_jsonl(run, path)
}

fn cmd_synth(spec_path: &Path, out: &Path) -> Result<()> {
    let ini = IniFile::load(spec_path)?;
    let (source, _) = config::pool_source_from_section(&ini, "synth")?;
    let engine::PoolSource::Synth(spec) = source else {
        return Err(Error::Config("synth spec file must use source = synth".into()));
    };
    let pool = pool::synth_pool(&spec)?;
    if out.extension().and_then(|e| e.to_str()) == Some("csv") {
        pool::write_csv(&pool, out)?;
    } else {
        pool::write_binary(&pool, out)?;
    }
    println!(
        "wrote {} ({} samples, dim {})",
        out.display(),
        pool.len(),
        pool.dim()
    );
    Ok(())
}

fn load_pool_file(path: &Path) -> Result<pool::SamplePool> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        pool::load_csv(path)
    } else {
        pool::load_binary(path)
    }
}

fn cmd_score(
    pool_path: &Path,
    target_labels: &[u32],
    labeled: &[u64],
    w: usize,
    kmeans_seed: u64,
    out: &Path,
) -> Result<()> {
    let mut pool = load_pool_file(pool_path)?;
    pool.set_target_labels(target_labels);
    for &id in labeled {
        pool.annotate(id)?;
    }
    let target_clusters = ftss::build_target_clusters(&pool)?;
    if target_clusters.is_empty() {
        return Err(Error::Config(
            "no labeled target samples; cannot build target clusters".into(),
        ));
    }
    let nontarget_clusters = ftss::build_nontarget_clusters(&pool, w, kmeans_seed)?;
    let table = ftss::score_table(&pool, &target_clusters, &nontarget_clusters)?;

    let mut text = String::from("id,s_t,s_w,s\n");
    for (id, (st, sw, s)) in &table.scores {
        text.push_str(&format!("{id},{st},{sw},{s}\n"));
    }
    std::fs::write(out, text).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    println!("wrote {} ({} rows)", out.display(), table.scores.len());
    Ok(())
}

fn read_run_jsonl(path: &Path) -> Result<SeedRun> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: serde_json::Value = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty run file", path.display())))
        .and_then(|l| {
            serde_json::from_str(l)
                .map_err(|e| Error::Config(format!("{}: bad header: {e}", path.display())))
        })?;
    let mut rounds: Vec<RoundReport> = Vec::new();
    for line in lines {
        let report = serde_json::from_str(line)
            .map_err(|e| Error::Config(format!("{}: bad round line: {e}", path.display())))?;
        rounds.push(report);
    }
    Ok(SeedRun {
        seed: header["seed"].as_u64().unwrap_or(0),
        strategy: header["strategy"].as_str().unwrap_or("unknown").to_string(),
        seed_k: header["seed_k"].as_u64().unwrap_or(0) as usize,
        seed_l: header["seed_l"].as_u64().unwrap_or(0) as usize,
        n_target: header["n_target"].as_u64().unwrap_or(0) as usize,
        budget: header["budget"].as_u64().unwrap_or(0) as usize,
        rounds,
    })
}

fn cmd_report(run_paths: &[PathBuf], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    let mut by_strategy: std::collections::BTreeMap<String, Vec<SeedRun>> = Default::default();
    for path in run_paths {
        let run = read_run_jsonl(path)?;
        by_strategy.entry(run.strategy.clone()).or_default().push(run);
    }
    let mut all_rows = Vec::new();
    for (strategy, runs) in &by_strategy {
        all_rows.extend(engine::aggregate_runs(strategy, runs));
    }
    let agg_path = out.join("aggregate.csv");
    engine::write_aggregate_csv(&all_rows, &agg_path)?;

    // plottable long format: one metric value per line
    let mut plot = String::from("strategy,round,metric,value\n");
    for row in &all_rows {
        plot.push_str(&format!(
            "{},{},precision,{}\n",
            row.strategy, row.round, row.precision_mean
        ));
        plot.push_str(&format!(
            "{},{},recall,{}\n",
            row.strategy, row.round, row.recall_mean
        ));
        plot.push_str(&format!(
            "{},{},accuracy,{}\n",
            row.strategy, row.round, row.accuracy_mean
        ));
    }
    let plot_path = out.join("plot_data.csv");
    std::fs::write(&plot_path, plot).map_err(|source| Error::Io {
        path: plot_path.display().to_string(),
        source,
    })?;
    println!("wrote {} and {}", agg_path.display(), plot_path.display());
    Ok(())
}
