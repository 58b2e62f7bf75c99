use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fabg::compare::compare_summary;
use fabg::config::{ConfigError, ExperimentConfig};
use fabg::experiment::{resolve_out, run_experiment};
use fabg::io::{fmt9, read_frames, write_actions_csv, write_episode};
use fabg_core::metrics::{dtw, Cost};
use fabg_core::scenario::{build_corpus, generate, CorpusOptions, ScenarioSpec};
use fabg_core::ACTION_DIM;

#[derive(Parser)]
#[command(name = "fabg", version, about = "Action chunk execution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix and write the report bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's global seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Strategy orderings and reductions from a summary.csv.
    Compare {
        #[arg(long)]
        summary: PathBuf,
    },
    /// Generate one episode from a scenario spec (JSON).
    Gen {
        #[arg(long)]
        spec: PathBuf,
        /// `.csv` writes actions only; anything else writes the binary container.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        observations: bool,
        /// Observation size as HxW.
        #[arg(long, value_parser = parse_shape, default_value = "36x48")]
        obs_shape: (usize, usize),
        /// Gaussian jitter on the driven dimensions.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
    },
    /// DTW distance between two trajectories (CSV or episode files).
    Dtw {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Restrict the cost to one dimension; all dimensions otherwise.
        #[arg(long)]
        dim: Option<usize>,
    },
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW")?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    if h == 0 || w == 0 {
        return Err("shape must be non-empty".into());
    }
    Ok((h, w))
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn cmd_run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>) -> Result<ExitCode> {
    let mut cfg = match ExperimentConfig::from_path(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = match resolve_out(&cfg, out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    let summary = run_experiment(&cfg, &out, jobs)?;
    let total = summary.outcomes.len();
    println!(
        "{} cells, {} failed; wrote {} files to {}",
        total,
        summary.failures,
        summary.files.len(),
        out.display()
    );
    for o in summary.outcomes.iter().filter(|o| o.result.is_err()) {
        if let Err(e) = &o.result {
            eprintln!("cell {} ({}): {e}", o.cell.index, o.cell.label);
        }
    }
    if summary.failures > 0 {
        return Ok(ExitCode::from(EXIT_RUNTIME));
    }
    if let Ok(comparisons) = compare_summary(&out.join("summary.csv")) {
        for c in comparisons {
            print!("{c}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(summary: &Path) -> Result<ExitCode> {
    for c in compare_summary(summary)? {
        print!("{c}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(spec: &Path, out: &Path, observations: bool, shape: (usize, usize), jitter: f64) -> Result<ExitCode> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: ScenarioSpec = match serde_path_to_error::deserialize(de) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: at $.{}: {}", spec.display(), e.path(), e.inner());
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    if let Err(e) = spec.validate() {
        eprintln!("error: {e}");
        return Ok(ExitCode::from(EXIT_CONFIG));
    }
    let csv_out = out.extension().is_some_and(|e| e == "csv");
    if csv_out && observations {
        bail!("CSV output cannot carry observations; use a binary output path");
    }
    let episode = if observations || jitter > 0.0 {
        let opts = CorpusOptions {
            observations,
            obs_height: shape.0,
            obs_width: shape.1,
            jitter,
        };
        build_corpus(std::slice::from_ref(&spec), &opts)?.remove(0)
    } else {
        generate(&spec)?
    };
    if csv_out {
        let f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        write_actions_csv(BufWriter::new(f), &episode)?;
    } else {
        write_episode(out, &episode)?;
    }
    println!("{} frames -> {}", episode.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_dtw(a: &Path, b: &Path, dim: Option<usize>) -> Result<ExitCode> {
    let cost = match dim {
        Some(d) if d >= ACTION_DIM => bail!("dimension {d} out of range (0..{ACTION_DIM})"),
        Some(d) => Cost::L1Dim(d),
        None => Cost::L1All,
    };
    let fa = read_frames(a)?;
    let fb = read_frames(b)?;
    println!("{}", fmt9(dtw(&fa, &fb, cost)?));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
        } => cmd_run(&config, out, seed, jobs),
        Command::Compare { summary } => cmd_compare(&summary),
        Command::Gen {
            spec,
            out,
            observations,
            obs_shape,
            jitter,
        } => cmd_gen(&spec, &out, observations, obs_shape, jitter),
        Command::Dtw { a, b, dim } => cmd_dtw(&a, &b, dim),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
