use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simbeam::experiments::{
    emit_csv, load_config, run_convergence_study, run_layer_sweep, run_oracle_check, run_timing_study,
    ExperimentConfig,
};
use simbeam::Error;

/// Stacked-metasurface beamforming experiments. Writes one CSV per run.
///
/// Exit status: 0 on success, 2 for configuration errors, 3 for numerical
/// failures, 1 for I/O errors.
#[derive(Parser, Debug)]
#[command(name = "simbeam", version, about)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Mean/median rate per outer iteration for every resolution in `system.b`.
    Convergence(Common),
    /// Final rate per layer count and resolution.
    Layers {
        #[command(flatten)]
        common: Common,
        /// Layer counts, overriding `run.layers` (e.g. 1,2,3).
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
    },
    /// Optimiser wall-clock time per layer count.
    Timing {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        /// Repetitions per layer count, overriding `run.timing_repetitions`.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Optimiser against exhaustive 1-bit search (toy sizes only).
    OracleCheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Single seed, overriding `run.seeds` and `SIMBEAM_SEED`.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed list (`1,2,3`) or inclusive range (`1..20`).
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    /// Output CSV (default: `<run.output_dir>/<verb>.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |_| format!("bad seed list `{s}`");
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a > b {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok(Seeds((a..=b).collect()));
    }
    let v: Vec<u64> = s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>()?;
    Ok(Seeds(v))
}

enum Failure {
    Sim(Error),
    Setup(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Sim(e)
    }
}

fn prepare(common: &Common) -> Result<ExperimentConfig, Failure> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Setup("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Setup(e.to_string()))?;
    }
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seeds = vec![seed];
    } else if let Some(Seeds(list)) = &common.seeds {
        cfg.run.seeds = list.clone();
    } else if let Ok(text) = std::env::var("SIMBEAM_SEED") {
        let seed = text
            .trim()
            .parse()
            .map_err(|_| Failure::Setup(format!("SIMBEAM_SEED is not a seed: `{text}`")))?;
        cfg.run.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(common: &Common, cfg: &ExperimentConfig, verb: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| cfg.run.output_dir.join(format!("{verb}.csv")))
}

fn written(path: &Path, rows: usize) {
    println!("wrote {rows} rows to {}", path.display());
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.verb {
        Verb::Convergence(common) => {
            let cfg = prepare(&common)?;
            let study = run_convergence_study(&cfg)?;
            let path = out_path(&common, &cfg, "convergence");
            emit_csv(&study.rows, &path)?;
            written(&path, study.rows.len());
        }
        Verb::Layers { common, layers } => {
            let mut cfg = prepare(&common)?;
            if let Some(l) = layers {
                cfg.run.layers = l;
            }
            let layers = cfg.run.layers.clone();
            let study = run_layer_sweep(&cfg, &layers)?;
            let path = out_path(&common, &cfg, "layers");
            emit_csv(&study.rows, &path)?;
            written(&path, study.rows.len());
        }
        Verb::Timing {
            common,
            layers,
            repetitions,
        } => {
            let mut cfg = prepare(&common)?;
            if let Some(l) = layers {
                cfg.run.layers = l;
            }
            if let Some(r) = repetitions {
                cfg.run.timing_repetitions = r;
            }
            let layers = cfg.run.layers.clone();
            let rows = run_timing_study(&cfg, &layers)?;
            let path = out_path(&common, &cfg, "timing");
            emit_csv(&rows, &path)?;
            written(&path, rows.len());
        }
        Verb::OracleCheck(common) => {
            let cfg = prepare(&common)?;
            let rows = run_oracle_check(&cfg)?;
            let path = out_path(&common, &cfg, "oracle_check");
            emit_csv(&rows, &path)?;
            written(&path, rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Setup(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Sim(e)) => {
            eprintln!("error: {e}");
            let code = if e.is_config_error() {
                2
            } else if matches!(e, Error::Io { .. }) {
                1
            } else {
                3
            };
            ExitCode::from(code)
        }
    }
}
