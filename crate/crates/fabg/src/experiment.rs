//! The experiment matrix: scenario × latency × strategy × trial.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use fabg_core::depth::FeaturePipeline;
use fabg_core::executor::execute;
use fabg_core::metrics::{evaluate, EvalSpec, MetricReport, Stimulus};
use fabg_core::policy::learned::{chunk_dataset, episode_features};
use fabg_core::policy::{train_linear_policy, Dataset, LinearChunkPolicy, ObservationPolicy, OraclePolicy, OracleSpec};
use fabg_core::scenario::{build_corpus, generate, ScenarioSpec};
use fabg_core::{ActionFrame, Episode, ExecutionTrace, LatencyModel, StrategyConfig, StrategyKind};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, LearnedOptions, PolicyChoice};
use crate::io::{fmt9, fmt_opt, report_csv_fields, write_policy, write_trace_csv};

/// Seed offset separating learned-policy training episodes from evaluation ones.
const TRAIN_SEED_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub scenario_index: usize,
    pub latency_index: usize,
    pub strategy_index: usize,
    pub trial: usize,
    pub seed: u64,
    pub strategy: StrategyConfig,
    pub latency: LatencyModel,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub demonstration: Vec<ActionFrame>,
    pub trace: ExecutionTrace,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: Result<CellResult, String>,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub outcomes: Vec<CellOutcome>,
    pub failures: usize,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
    /// Trained models keyed by chunk length (learned policy only).
    pub models: BTreeMap<usize, LinearChunkPolicy>,
}

/// Seed shared by every strategy and latency of one scenario trial, so all
/// strategies face identical demonstrations and noise.
pub fn cell_seed(global: u64, scenario_index: usize, trials: usize, trial: usize) -> u64 {
    global.wrapping_add((scenario_index * trials + trial) as u64)
}

pub fn enumerate_cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (si, scenario) in config.scenarios.iter().enumerate() {
        let rate = scenario.rate_hz as f64;
        for (li, lat) in config.latencies.iter().enumerate() {
            for (ki, entry) in config.strategies.iter().enumerate() {
                let strategy = config.strategy_config(ki, li, rate);
                let n = (strategy.kind == StrategyKind::PDLC).then_some(strategy.pdlc_offset);
                for trial in 0..config.trials {
                    cells.push(Cell {
                        index: cells.len(),
                        scenario_index: si,
                        latency_index: li,
                        strategy_index: ki,
                        trial,
                        seed: cell_seed(config.seed, si, config.trials, trial),
                        strategy,
                        latency: lat.model(rate),
                        label: entry.label(n),
                    });
                }
            }
        }
    }
    cells
}

fn episode_spec(spec: &ScenarioSpec, seed: u64) -> ScenarioSpec {
    spec.clone().with_seed(spec.seed.wrapping_add(seed))
}

fn stimulus(spec: &ScenarioSpec) -> Stimulus {
    Stimulus {
        onset: spec.onset(),
        dim: spec.target(),
        amplitude: spec.amplitude,
    }
}

fn eval_spec(config: &ExperimentConfig, spec: &ScenarioSpec) -> EvalSpec {
    let m = &config.metrics;
    EvalSpec {
        stimulus: stimulus(spec),
        cost: m.cost_for(spec.target()),
        response_fraction: m.response_fraction,
        lo_fraction: m.lo_fraction,
        hi_fraction: m.hi_fraction,
        per_dim: m.per_dim,
    }
}

fn run_oracle_cell(config: &ExperimentConfig, cell: &Cell) -> Result<CellResult> {
    let PolicyChoice::Oracle(opts) = &config.policy else {
        unreachable!("oracle cell under a learned policy")
    };
    let spec = &config.scenarios[cell.scenario_index];
    let demo = generate(&episode_spec(spec, cell.seed))?;
    let oracle = OracleSpec::exact(&demo)
        .with_noise(opts.noise_sigma, cell.seed)
        .with_foresight(opts.foresight.resolve(&cell.latency));
    let policy = OraclePolicy::new(oracle, cell.strategy.k);
    let trace = execute(&policy, &demo, &cell.latency, &cell.strategy)?;
    let demonstration: Vec<ActionFrame> = demo.actions().copied().collect();
    let report = evaluate(&trace, &demonstration, &eval_spec(config, spec))?;
    Ok(CellResult {
        demonstration,
        trace,
        report,
    })
}

/// An evaluation episode with its pooled features.
struct Prepared {
    episode: Episode,
    pooled: Vec<Vec<f64>>,
}

fn learned_episode(
    spec: &ScenarioSpec,
    seed: u64,
    opts: &LearnedOptions,
    pipeline: &FeaturePipeline,
) -> Result<Prepared> {
    let mut eps = build_corpus(&[episode_spec(spec, seed)], &opts.corpus())?;
    let mut episode = eps.pop().expect("one spec yields one episode");
    let pooled = episode_features(pipeline, &episode)?;
    for f in &mut episode.frames {
        f.observation = None;
    }
    Ok(Prepared { episode, pooled })
}

/// Trains one model per distinct chunk length on `episodes` jittered
/// episodes of every configured scenario.
pub fn train_models(config: &ExperimentConfig) -> Result<BTreeMap<usize, LinearChunkPolicy>> {
    let PolicyChoice::Learned(opts) = &config.policy else {
        return Ok(BTreeMap::new());
    };
    let pipeline = FeaturePipeline::new(config.pipeline)?;
    let jobs: Vec<(usize, usize)> = (0..config.scenarios.len())
        .flat_map(|si| (0..opts.episodes).map(move |e| (si, e)))
        .collect();
    let corpus: Vec<Prepared> = jobs
        .par_iter()
        .map(|&(si, e)| {
            let seed = config
                .seed
                .wrapping_add(TRAIN_SEED_BASE)
                .wrapping_add((si * opts.episodes + e) as u64);
            learned_episode(&config.scenarios[si], seed, opts, &pipeline)
        })
        .collect::<Result<_>>()?;
    let mut ks: Vec<usize> = config.strategies.iter().map(|s| s.k).collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let mut data: Option<Dataset> = None;
            for p in &corpus {
                let part = chunk_dataset(&p.pooled, &p.episode, k)?;
                let all = data.get_or_insert_with(|| Dataset::new(part.feature_dim(), part.output_dim()));
                for n in 0..part.len() {
                    all.push(part.features(n), part.target(n))?;
                }
            }
            let data = data.ok_or_else(|| anyhow!("empty training corpus"))?;
            let model = train_linear_policy(&data, &opts.train).with_context(|| format!("training k = {k}"))?;
            Ok((k, model))
        })
        .collect()
}

fn run_learned_cell(
    config: &ExperimentConfig,
    cell: &Cell,
    prepared: &Prepared,
    models: &BTreeMap<usize, LinearChunkPolicy>,
) -> Result<CellResult> {
    let spec = &config.scenarios[cell.scenario_index];
    let model = &models[&cell.strategy.k];
    let policy = ObservationPolicy::new(model, &prepared.pooled)?;
    let trace = execute(&policy, &prepared.episode, &cell.latency, &cell.strategy)?;
    let demonstration: Vec<ActionFrame> = prepared.episode.actions().copied().collect();
    let report = evaluate(&trace, &demonstration, &eval_spec(config, spec))?;
    Ok(CellResult {
        demonstration,
        trace,
        report,
    })
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    Ok(b.build()?)
}

/// Runs every cell in memory. Cell failures are recorded, not propagated.
pub fn run_cells(config: &ExperimentConfig, jobs: Option<usize>) -> Result<RunSummary> {
    config.validate()?;
    let cells = enumerate_cells(config);
    let pool = pool(jobs)?;
    pool.install(|| {
        let models = train_models(config)?;
        let outcomes: Vec<CellOutcome> = match &config.policy {
            PolicyChoice::Oracle(_) => cells
                .into_par_iter()
                .map(|cell| {
                    let result = run_oracle_cell(config, &cell).map_err(|e| format!("{e:#}"));
                    CellOutcome { cell, result }
                })
                .collect(),
            PolicyChoice::Learned(opts) => {
                let pipeline = FeaturePipeline::new(config.pipeline)?;
                let keys: Vec<(usize, usize)> = (0..config.scenarios.len())
                    .flat_map(|si| (0..config.trials).map(move |t| (si, t)))
                    .collect();
                let prepared: Vec<Result<Prepared, String>> = keys
                    .par_iter()
                    .map(|&(si, t)| {
                        let seed = cell_seed(config.seed, si, config.trials, t);
                        learned_episode(&config.scenarios[si], seed, opts, &pipeline).map_err(|e| format!("{e:#}"))
                    })
                    .collect();
                cells
                    .into_par_iter()
                    .map(|cell| {
                        let slot = &prepared[cell.scenario_index * config.trials + cell.trial];
                        let result = match slot {
                            Ok(p) => run_learned_cell(config, &cell, p, &models).map_err(|e| format!("{e:#}")),
                            Err(e) => Err(e.clone()),
                        };
                        CellOutcome { cell, result }
                    })
                    .collect()
            }
        };
        let failures = outcomes.iter().filter(|o| o.result.is_err()).count();
        Ok(RunSummary {
            outcomes,
            failures,
            files: Vec::new(),
            models,
        })
    })
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "cell",
    "scenario_index",
    "scenario",
    "strategy",
    "label",
    "k",
    "n",
    "m",
    "perception_delay",
    "inference_delay",
    "communication_delay",
    "trial",
    "seed",
    "status",
    "error",
];

fn cell_fields(config: &ExperimentConfig, c: &Cell) -> Vec<String> {
    let s = &c.strategy;
    vec![
        c.index.to_string(),
        c.scenario_index.to_string(),
        config.scenarios[c.scenario_index].kind.name().to_string(),
        s.kind.name().to_string(),
        c.label.clone(),
        s.k.to_string(),
        if s.kind == StrategyKind::PDLC {
            s.pdlc_offset.to_string()
        } else {
            String::new()
        },
        if s.kind == StrategyKind::TE {
            fmt9(s.te_decay)
        } else {
            String::new()
        },
        c.latency.perception_delay.to_string(),
        c.latency.inference_delay.to_string(),
        c.latency.communication_delay.to_string(),
        c.trial.to_string(),
        c.seed.to_string(),
    ]
}

fn write_summary(config: &ExperimentConfig, outcomes: &[CellOutcome], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER.iter().chain(MetricReport::CSV_HEADER.iter()))?;
    for o in outcomes {
        let mut row = cell_fields(config, &o.cell);
        match &o.result {
            Ok(r) => {
                row.push("ok".into());
                row.push(String::new());
                row.extend(report_csv_fields(&r.report));
            }
            Err(e) => {
                row.push("error".into());
                row.push(e.clone());
                row.extend(std::iter::repeat_n(String::new(), MetricReport::CSV_HEADER.len()));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn mean_sem(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (None, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

fn metric_values(r: &MetricReport) -> [Option<f64>; 6] {
    [
        Some(r.dtw),
        r.response_latency_s,
        r.completion_time_s,
        Some(r.max_boundary_jump),
        Some(r.max_within_jump),
        Some(r.smoothness),
    ]
}

/// Per (scenario, latency, strategy): mean and standard error over the
/// trials where each metric was detected.
fn write_summary_mean(config: &ExperimentConfig, outcomes: &[CellOutcome], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = SUMMARY_HEADER[1..11].iter().map(|s| s.to_string()).collect();
    header.push("trials_ok".into());
    for m in MetricReport::CSV_HEADER {
        header.extend([format!("{m}_mean"), format!("{m}_sem"), format!("{m}_n")]);
    }
    w.write_record(&header)?;
    for group in outcomes.chunk_by(|a, b| {
        (a.cell.scenario_index, a.cell.latency_index, a.cell.strategy_index)
            == (b.cell.scenario_index, b.cell.latency_index, b.cell.strategy_index)
    }) {
        let mut row = cell_fields(config, &group[0].cell)[1..11].to_vec();
        let ok: Vec<&CellResult> = group.iter().filter_map(|o| o.result.as_ref().ok()).collect();
        row.push(ok.len().to_string());
        for i in 0..MetricReport::CSV_HEADER.len() {
            let xs: Vec<f64> = ok.iter().filter_map(|r| metric_values(&r.report)[i]).collect();
            let (mean, sem) = mean_sem(&xs);
            row.extend([fmt_opt(mean), fmt_opt(sem), xs.len().to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format overlay of demonstration and commanded values for trial 0.
fn write_curves(config: &ExperimentConfig, outcomes: &[CellOutcome], dim: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario_index",
        "scenario",
        "perception_delay",
        "inference_delay",
        "communication_delay",
        "trial",
        "strategy",
        "tick",
        "demonstration",
        "commanded",
    ])?;
    for o in outcomes.iter().filter(|o| o.cell.trial == 0) {
        let c = &o.cell;
        if config.scenarios[c.scenario_index].target() != dim {
            continue;
        }
        let Ok(r) = &o.result else { continue };
        for (t, (d, a)) in r.demonstration.iter().zip(&r.trace.commanded).enumerate() {
            w.write_record([
                c.scenario_index.to_string(),
                config.scenarios[c.scenario_index].kind.name().to_string(),
                c.latency.perception_delay.to_string(),
                c.latency.inference_delay.to_string(),
                c.latency.communication_delay.to_string(),
                c.trial.to_string(),
                c.label.clone(),
                t.to_string(),
                fmt9(d.get(dim) as f64),
                fmt9(a.get(dim) as f64),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn trace_file(index: usize) -> String {
    format!("traces/cell_{index:04}.csv")
}

/// Runs the matrix and writes the report bundle under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, jobs: Option<usize>) -> Result<RunSummary> {
    let mut summary = run_cells(config, jobs)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::new();

    write_summary(config, &summary.outcomes, &out.join("summary.csv"))?;
    files.push("summary.csv".to_string());
    write_summary_mean(config, &summary.outcomes, &out.join("summary_mean.csv"))?;
    files.push("summary_mean.csv".to_string());

    let mut dims: Vec<usize> = config.scenarios.iter().map(ScenarioSpec::target).collect();
    dims.sort_unstable();
    dims.dedup();
    for d in dims {
        let name = format!("curves_{d}.csv");
        write_curves(config, &summary.outcomes, d, &out.join(&name))?;
        files.push(name);
    }

    if config.write_traces {
        fs::create_dir_all(out.join("traces"))?;
        let written: Vec<Result<Option<String>>> = pool(jobs)?.install(|| {
            summary
                .outcomes
                .par_iter()
                .map(|o| {
                    let Ok(r) = &o.result else { return Ok(None) };
                    let name = trace_file(o.cell.index);
                    let f = fs::File::create(out.join(&name)).with_context(|| format!("creating {name}"))?;
                    write_trace_csv(BufWriter::new(f), &r.trace)?;
                    Ok(Some(name))
                })
                .collect()
        });
        for name in written {
            files.extend(name?);
        }
    }

    for (k, model) in &summary.models {
        let name = format!("policy_k{k}.fabp");
        write_policy(&out.join(&name), model)?;
        files.push(name);
    }

    files.push("report.json".to_string());
    let cells: Vec<serde_json::Value> = summary
        .outcomes
        .iter()
        .map(|o| {
            let c = &o.cell;
            let mut v = json!({
                "cell": c.index,
                "scenario_index": c.scenario_index,
                "latency_index": c.latency_index,
                "strategy_index": c.strategy_index,
                "strategy": c.label,
                "trial": c.trial,
                "seed": c.seed,
            });
            match &o.result {
                Ok(r) => {
                    v["status"] = json!("ok");
                    v["metrics"] = serde_json::to_value(&r.report).expect("reports serialize");
                    if config.write_traces {
                        v["trace"] = json!(trace_file(c.index));
                    }
                }
                Err(e) => {
                    v["status"] = json!("error");
                    v["error"] = json!(e);
                }
            }
            v
        })
        .collect();
    let report = json!({
        "config": config,
        "cells": cells,
        "failures": summary.failures,
        "files": files,
    });
    let mut f = BufWriter::new(fs::File::create(out.join("report.json"))?);
    serde_json::to_writer_pretty(&mut f, &report)?;
    writeln!(f)?;
    f.flush()?;

    summary.files = files;
    Ok(summary)
}

/// Output directory: the explicit one, else the config's.
pub fn resolve_out(config: &ExperimentConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    out.or_else(|| config.output_dir.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output_dir"))
}
