//! Strategy comparison over a summary table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fabg_core::StrategyKind;

use crate::io::parse_opt;

/// Metrics compared across strategies. Lower is better for all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Dtw,
    ResponseLatency,
    CompletionTime,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Dtw, Metric::ResponseLatency, Metric::CompletionTime];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Dtw => "dtw",
            Metric::ResponseLatency => "response_latency_s",
            Metric::CompletionTime => "completion_time_s",
        }
    }

    /// Expected ranking, best first. Completion only pins the winner.
    pub fn expected(self) -> &'static [StrategyKind] {
        use StrategyKind::*;
        match self {
            Metric::Dtw => &[PDLC, NoTE, TE],
            Metric::ResponseLatency => &[PDLC, TE, NoTE],
            Metric::CompletionTime => &[PDLC],
        }
    }
}

/// `(baseline − value) / baseline` in percent, rounded half away from zero
/// to one decimal.
pub fn reduction_percent(baseline: f64, value: f64) -> Option<f64> {
    if baseline == 0.0 || !baseline.is_finite() || !value.is_finite() {
        return None;
    }
    let pct = (baseline - value) / baseline * 100.0;
    Some((pct * 10.0).round() / 10.0)
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricVerdict {
    pub metric: Metric,
    /// Mean value per strategy; `None` when never detected.
    pub values: Vec<(StrategyKind, Option<f64>)>,
    /// Strategies best first; undetected values rank last.
    pub ordering: Vec<StrategyKind>,
    /// PDLC reduction relative to each other strategy.
    pub reductions: Vec<(StrategyKind, Option<f64>)>,
    pub tie: bool,
    pub contradiction: bool,
}

impl MetricVerdict {
    pub fn value(&self, kind: StrategyKind) -> Option<f64> {
        self.values.iter().find(|(k, _)| *k == kind).and_then(|(_, v)| *v)
    }

    pub fn reduction(&self, baseline: StrategyKind) -> Option<f64> {
        self.reductions
            .iter()
            .find(|(k, _)| *k == baseline)
            .and_then(|(_, v)| *v)
    }

    pub fn ordering_string(&self) -> String {
        let mut s = String::new();
        for (i, w) in self.ordering.windows(2).enumerate() {
            if i == 0 {
                s.push_str(w[0].name());
            }
            let rel = match (self.value(w[0]), self.value(w[1])) {
                (Some(a), Some(b)) if same(a, b) => " = ",
                _ => " < ",
            };
            s.push_str(rel);
            s.push_str(w[1].name());
        }
        if self.ordering.len() == 1 {
            s.push_str(self.ordering[0].name());
        }
        s
    }
}

impl fmt::Display for MetricVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.metric.column(), self.ordering_string())?;
        for (k, r) in &self.reductions {
            match r {
                Some(r) => write!(f, "; PDLC vs {k}: {r:.1}%")?,
                None => write!(f, "; PDLC vs {k}: n/a")?,
            }
        }
        if self.tie {
            write!(f, " [tie]")?;
        }
        if self.contradiction {
            write!(f, " [contradicts expected order]")?;
        }
        Ok(())
    }
}

/// Orders per-strategy values of one metric and checks them against the
/// expected pattern. All three strategies must be present.
pub fn compare_values(metric: Metric, values: &[(StrategyKind, Option<f64>)]) -> Result<MetricVerdict> {
    for kind in StrategyKind::ALL {
        if !values.iter().any(|(k, _)| *k == kind) {
            bail!("missing {kind} value for {}", metric.column());
        }
    }
    let mut values: Vec<_> = StrategyKind::ALL
        .iter()
        .map(|&k| (k, values.iter().find(|(v, _)| *v == k).and_then(|(_, x)| *x)))
        .collect();
    values.sort_by_key(|(k, _)| *k);
    let key = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
    let mut ordering: Vec<_> = values.clone();
    ordering.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)).then(a.0.cmp(&b.0)));
    let ordering: Vec<StrategyKind> = ordering.into_iter().map(|(k, _)| k).collect();
    let get = |kind: StrategyKind| values.iter().find(|(k, _)| *k == kind).and_then(|(_, v)| *v);

    let mut tie = false;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            match (values[i].1, values[j].1) {
                (Some(a), Some(b)) if same(a, b) => tie = true,
                (None, None) => tie = true,
                _ => {}
            }
        }
    }
    let rank = |kind: StrategyKind| key(get(kind));
    let contradiction = match metric.expected() {
        [best] => StrategyKind::ALL
            .iter()
            .filter(|&&k| k != *best)
            .any(|&k| rank(k) < rank(*best) && !same(rank(k), rank(*best))),
        order => order
            .windows(2)
            .any(|w| rank(w[0]) > rank(w[1]) && !same(rank(w[0]), rank(w[1]))),
    };
    let pdlc = get(StrategyKind::PDLC);
    let reductions = [StrategyKind::NoTE, StrategyKind::TE]
        .into_iter()
        .map(|b| (b, get(b).zip(pdlc).and_then(|(base, v)| reduction_percent(base, v))))
        .collect();
    Ok(MetricVerdict {
        metric,
        values,
        ordering,
        reductions,
        tie,
        contradiction,
    })
}

/// Verdicts for one scenario under one latency model.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub scenario_index: usize,
    pub scenario: String,
    pub latency: (u32, u32, u32),
    pub verdicts: Vec<MetricVerdict>,
}

impl Comparison {
    pub fn verdict(&self, metric: Metric) -> &MetricVerdict {
        self.verdicts
            .iter()
            .find(|v| v.metric == metric)
            .expect("every metric is compared")
    }

    pub fn has_contradiction(&self) -> bool {
        self.verdicts.iter().any(|v| v.contradiction)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, i, c) = self.latency;
        writeln!(
            f,
            "scenario {} ({}), latency p={p} i={i} c={c}",
            self.scenario_index, self.scenario
        )?;
        for v in &self.verdicts {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Acc {
    sum: f64,
    n: usize,
}

/// Groups successful rows of a `summary.csv` by scenario and latency, averages
/// each metric per strategy over trials (undetected entries are skipped), and
/// compares the means. Several entries of one strategy kind are pooled.
pub fn compare_summary(path: &Path) -> Result<Vec<Comparison>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{}: missing column {name}", path.display()))
    };
    let c_si = col("scenario_index")?;
    let c_scn = col("scenario")?;
    let c_strat = col("strategy")?;
    let c_lat = [
        col("perception_delay")?,
        col("inference_delay")?,
        col("communication_delay")?,
    ];
    let c_status = col("status")?;
    let c_metrics: Vec<usize> = Metric::ALL.iter().map(|m| col(m.column())).collect::<Result<_>>()?;

    type Key = (usize, (u32, u32, u32));
    let mut names: BTreeMap<Key, String> = BTreeMap::new();
    let mut acc: BTreeMap<(Key, StrategyKind, Metric), Acc> = BTreeMap::new();
    let mut seen: BTreeMap<Key, Vec<StrategyKind>> = BTreeMap::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if &rec[c_status] != "ok" {
            continue;
        }
        let line = row + 2;
        let si: usize = rec[c_si]
            .parse()
            .with_context(|| format!("line {line}: scenario_index"))?;
        let mut lat = [0u32; 3];
        for (dst, &c) in lat.iter_mut().zip(&c_lat) {
            *dst = rec[c].parse().with_context(|| format!("line {line}: latency"))?;
        }
        let key = (si, (lat[0], lat[1], lat[2]));
        let kind = StrategyKind::parse(&rec[c_strat])
            .with_context(|| format!("line {line}: unknown strategy {}", &rec[c_strat]))?;
        names.entry(key).or_insert_with(|| rec[c_scn].to_string());
        let kinds = seen.entry(key).or_default();
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
        for (&m, &c) in Metric::ALL.iter().zip(&c_metrics) {
            let a = acc.entry((key, kind, m)).or_default();
            if let Some(v) = parse_opt(&rec[c]).with_context(|| format!("line {line}: {}", m.column()))? {
                a.sum += v;
                a.n += 1;
            }
        }
    }
    if names.is_empty() {
        bail!("{}: no successful rows", path.display());
    }
    let mut out = Vec::new();
    for (key, scenario) in names {
        let kinds = &seen[&key];
        for kind in StrategyKind::ALL {
            if !kinds.contains(&kind) {
                bail!("scenario {} ({scenario}) latency {:?}: no {kind} rows", key.0, key.1);
            }
        }
        let verdicts = Metric::ALL
            .iter()
            .map(|&m| {
                let values: Vec<_> = StrategyKind::ALL
                    .iter()
                    .map(|&k| {
                        let a = &acc[&(key, k, m)];
                        (k, (a.n > 0).then(|| a.sum / a.n as f64))
                    })
                    .collect();
                compare_values(m, &values)
            })
            .collect::<Result<_>>()?;
        out.push(Comparison {
            scenario_index: key.0,
            scenario,
            latency: key.1,
            verdicts,
        });
    }
    Ok(out)
}
