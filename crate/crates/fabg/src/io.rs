//! Files: episode containers, policy sidecars, and CSV exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fabg_core::action::{ActionFrame, ACTION_DIM};
use fabg_core::episode::Episode;
use fabg_core::executor::ExecutionTrace;
use fabg_core::format::{decode_episode, decode_policy, encode_episode, encode_policy};
use fabg_core::metrics::MetricReport;
use fabg_core::policy::LinearChunkPolicy;

/// Formats `v` with `sig` significant digits, switching to exponent form for
/// very large or small magnitudes. Trailing zeros are dropped.
pub fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= sig as i32 {
        return format!("{}e{}", trim_zeros(mant), exp);
    }
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt9(v: f64) -> String {
    fmt_sig(v, 9)
}

pub fn write_episode(path: &Path, episode: &Episode) -> Result<usize> {
    let bytes = encode_episode(episode)?;
    fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(bytes.len())
}

pub fn read_episode(path: &Path) -> Result<Episode> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_episode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

pub fn write_policy(path: &Path, policy: &LinearChunkPolicy) -> Result<()> {
    fs::write(path, encode_policy(policy)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_policy(path: &Path) -> Result<LinearChunkPolicy> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_policy(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn dim_header() -> impl Iterator<Item = String> {
    (0..ACTION_DIM).map(|d| format!("dim_{d}"))
}

/// `tick,dim_0..dim_60,queried,boundary`, one row per tick.
pub fn write_trace_csv<W: Write>(out: W, trace: &ExecutionTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tick".to_string()];
    header.extend(dim_header());
    header.push("queried".into());
    header.push("boundary".into());
    w.write_record(&header)?;
    for (t, frame) in trace.commanded.iter().enumerate() {
        let mut row = Vec::with_capacity(ACTION_DIM + 3);
        row.push(t.to_string());
        row.extend(frame.values().iter().map(|&v| fmt9(v as f64)));
        row.push(u8::from(trace.is_query(t as u64)).to_string());
        row.push(u8::from(trace.is_boundary(t as u64)).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `tick,dim_0..dim_60` for an episode's actions.
pub fn write_actions_csv<W: Write>(out: W, episode: &Episode) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tick".to_string()];
    header.extend(dim_header());
    w.write_record(&header)?;
    for (t, frame) in episode.actions().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(frame.values().iter().map(|&v| fmt9(v as f64)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Frames from any CSV carrying `dim_0`..`dim_60` columns; other columns are
/// ignored.
pub fn read_frames_csv(path: &Path) -> Result<Vec<ActionFrame>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let mut cols = Vec::with_capacity(ACTION_DIM);
    for name in dim_header() {
        match headers.iter().position(|h| h.trim() == name) {
            Some(i) => cols.push(i),
            None => bail!("{}: missing column {name}", path.display()),
        }
    }
    let mut frames = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let mut values = [0.0f32; ACTION_DIM];
        for (d, &c) in cols.iter().enumerate() {
            let field = record.get(c).unwrap_or("");
            values[d] = field
                .trim()
                .parse()
                .with_context(|| format!("{}: row {} dim_{d}: bad number {field:?}", path.display(), row + 1))?;
        }
        frames.push(ActionFrame::from_array(values));
    }
    Ok(frames)
}

/// Frames from an episode container or a CSV, chosen by extension.
pub fn read_frames(path: &Path) -> Result<Vec<ActionFrame>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_frames_csv(path),
        _ => Ok(read_episode(path)?.actions().copied().collect()),
    }
}

pub const NOT_DETECTED: &str = "not_detected";

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt9).unwrap_or_else(|| NOT_DETECTED.into())
}

pub fn parse_opt(field: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field == NOT_DETECTED || field.is_empty() {
        Ok(None)
    } else {
        Ok(Some(field.parse().with_context(|| format!("bad number {field:?}"))?))
    }
}

/// CSV cells of a report in [`MetricReport::CSV_HEADER`] order.
pub fn report_csv_fields(r: &MetricReport) -> Vec<String> {
    vec![
        fmt9(r.dtw),
        fmt_opt(r.response_latency_s),
        fmt_opt(r.completion_time_s),
        fmt9(r.max_boundary_jump),
        fmt9(r.max_within_jump),
        fmt9(r.smoothness),
    ]
}

pub fn report_json(r: &MetricReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)?)
}
