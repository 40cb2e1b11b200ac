//! File formats: JSONL event data, JSON checkpoints and plans, CSV reports.
//!
//! Events are one JSON object per line behind a `{"C": .., "T": ..}` header
//! (streamable and append-friendly); checkpoints and plans are JSON; reports
//! are CSV for plotting tools. Floating-point values round-trip exactly:
//! JSON uses shortest-exact encoding and CSV prints 17 significant digits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelBasis;
use crate::model::{Dataset, Event, EventSequence, ModelParams};
use crate::optimize::FitReport;
use crate::pipeline::SweepRow;
use crate::recsys::{RawEvent, RecResult};
use crate::superpose::SuperpositionPlan;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct EventsHeader {
    #[serde(rename = "C")]
    c: usize,
    #[serde(rename = "T")]
    t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventLine {
    agent: usize,
    time: f64,
    entity: usize,
}

/// Reads a JSONL event file: a header line `{"C": int, "T": float}` followed
/// by `{"agent": int, "time": float, "entity": int}` lines. Sequences come
/// back grouped by agent and sorted by time; malformed lines, out-of-range
/// entities, and times beyond the horizon are rejected with their line
/// number, as are simultaneous same-entity events within one agent.
pub fn read_events(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing header line".into() })??;
    let header: EventsHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Parse { line: 1, msg: format!("bad header: {e}") })?;
    if header.c == 0 || !(header.t.is_finite() && header.t > 0.0) {
        return Err(Error::Parse { line: 1, msg: "header needs C >= 1 and T > 0".into() });
    }

    let mut by_agent: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: EventLine = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        if ev.entity >= header.c {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("entity {} out of range for C={}", ev.entity, header.c),
            });
        }
        if !ev.time.is_finite() || ev.time < 0.0 {
            return Err(Error::Parse { line: line_no, msg: format!("bad time {}", ev.time) });
        }
        if ev.time > header.t {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("time {} exceeds horizon {}", ev.time, header.t),
            });
        }
        by_agent.entry(ev.agent).or_default().push((ev.time, ev.entity));
    }

    let mut sequences = Vec::with_capacity(by_agent.len());
    for (agent, mut raw) in by_agent {
        // stable by time so ties keep file order (round-trip identity)
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut run_start = 0;
        for i in 1..=raw.len() {
            if i == raw.len() || raw[i].0 != raw[run_start].0 {
                let run = &raw[run_start..i];
                let mut entities: Vec<usize> = run.iter().map(|&(_, c)| c).collect();
                entities.sort_unstable();
                if entities.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Invalid(format!(
                        "agent {agent}: simultaneous same-entity events at time {}",
                        raw[run_start].0
                    )));
                }
                run_start = i;
            }
        }
        let events = raw.into_iter().map(|(t, c)| Event::new(t, c)).collect();
        sequences.push(EventSequence::new(agent, events, header.t)?);
    }
    Dataset::new(header.c, header.t, sequences)
}

/// Writes the JSONL event format read by [`read_events`].
pub fn write_events(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    let header = EventsHeader { c: data.c, t: data.horizon };
    serde_json::to_writer(&mut out, &header).map_err(io_err)?;
    out.write_all(b"\n")?;
    for seq in &data.sequences {
        for e in seq.events() {
            let line = EventLine { agent: seq.agent, time: e.time, entity: e.entity };
            serde_json::to_writer(&mut out, &line).map_err(io_err)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Checkpoint provenance. The timestamp is only stamped on request so that
/// identical runs write byte-identical files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    c: usize,
    m: usize,
    l: usize,
    kernel: KernelBasis,
    /// Row-major `U` (c-major, then m).
    u: Vec<f64>,
    /// `A` in (c, c', l) order.
    a: Vec<f64>,
    provenance: Provenance,
}

/// Writes a model checkpoint as JSON.
pub fn write_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    provenance: &Provenance,
) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        c: params.c(),
        m: params.m(),
        l: params.l(),
        kernel: params.basis().clone(),
        u: params.u().iter().copied().collect(),
        a: params.a().iter().copied().collect(),
        provenance: provenance.clone(),
    };
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut out, &ckpt).map_err(io_err)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Reads a checkpoint, validating the schema version and array dimensions.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, Provenance)> {
    let file = File::open(path.as_ref())?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse { line: 0, msg: format!("bad checkpoint: {e}") })?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    if ckpt.u.len() != ckpt.c * ckpt.m || ckpt.a.len() != ckpt.c * ckpt.c * ckpt.l {
        return Err(Error::Dimension(format!(
            "checkpoint arrays do not match C={} M={} L={}",
            ckpt.c, ckpt.m, ckpt.l
        )));
    }
    if ckpt.l != ckpt.kernel.len() {
        return Err(Error::Dimension("checkpoint kernel count mismatch".into()));
    }
    let u = Array2::from_shape_vec((ckpt.c, ckpt.m), ckpt.u).expect("u shape");
    let a = Array3::from_shape_vec((ckpt.c, ckpt.c, ckpt.l), ckpt.a).expect("a shape");
    Ok((ModelParams::new(u, a, ckpt.kernel)?, ckpt.provenance))
}

/// Writes a plan as a JSON array of folder source lists.
pub fn write_plan(path: impl AsRef<Path>, plan: &SuperpositionPlan) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer(&mut out, plan).map_err(io_err)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Reads a plan and validates it against the source count.
pub fn read_plan(path: impl AsRef<Path>, sources: usize) -> Result<SuperpositionPlan> {
    let file = File::open(path.as_ref())?;
    let folders: Vec<Vec<usize>> = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse { line: 0, msg: format!("bad plan: {e}") })?;
    SuperpositionPlan::new(folders, sources)
}

/// 17-significant-digit float formatting: exact round-trip for f64.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes a fit trace as `epoch,nll,err_u,err_a,seconds`. Timing is written
/// as zero unless `include_timing` is set, keeping identical runs
/// byte-identical.
pub fn write_fit_csv(
    path: impl AsRef<Path>,
    report: &FitReport,
    include_timing: bool,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "epoch,nll,err_u,err_a,seconds")?;
    for r in &report.records {
        let seconds = if include_timing { r.seconds } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            fmt_f64(r.nll),
            fmt_opt(r.err_u),
            fmt_opt(r.err_a),
            fmt_f64(seconds)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes sweep rows as tidy CSV:
/// `strategy,k,seed,round,epoch,nll,err_u,err_a,seconds`.
pub fn write_sweep_csv(
    path: impl AsRef<Path>,
    rows: &[SweepRow],
    include_timing: bool,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "strategy,k,seed,round,epoch,nll,err_u,err_a,seconds")?;
    for r in rows {
        let seconds = if include_timing { r.seconds } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.seed,
            r.round,
            r.epoch,
            fmt_f64(r.nll),
            fmt_opt(r.err_u),
            fmt_opt(r.err_a),
            fmt_f64(seconds)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes ranked lists as `user,rank,entity` (rank is 1-based).
pub fn write_recommendations(path: impl AsRef<Path>, lists: &[(usize, Vec<usize>)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "user,rank,entity")?;
    for (user, list) in lists {
        for (rank, entity) in list.iter().enumerate() {
            writeln!(out, "{},{},{}", user, rank + 1, entity)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads ranked lists written by [`write_recommendations`], ordered by rank.
pub fn read_recommendations(path: impl AsRef<Path>) -> Result<Vec<(usize, Vec<usize>)>> {
    let file = File::open(path.as_ref())?;
    let mut rows: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line_no == 1 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse { line: line_no, msg: "expected user,rank,entity".into() });
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })
        };
        let (user, rank, entity) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        rows.entry(user).or_default().push((rank, entity));
    }
    Ok(rows
        .into_iter()
        .map(|(user, mut ranked)| {
            ranked.sort_unstable();
            (user, ranked.into_iter().map(|(_, e)| e).collect())
        })
        .collect())
}

/// Writes per-user metrics plus a macro-average row keyed as `user = "all"`.
pub fn write_rec_metrics(
    path: impl AsRef<Path>,
    result: &RecResult,
    user_ids: Option<&[String]>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "user,n,precision,recall,f1")?;
    for (i, m) in result.per_user.iter().enumerate() {
        let user = user_ids
            .and_then(|ids| ids.get(i).cloned())
            .unwrap_or_else(|| i.to_string());
        writeln!(
            out,
            "{},{},{},{},{}",
            user,
            result.n,
            fmt_f64(m.precision),
            fmt_f64(m.recall),
            fmt_f64(m.f1)
        )?;
    }
    writeln!(
        out,
        "all,{},{},{},{}",
        result.n,
        fmt_f64(result.precision),
        fmt_f64(result.recall),
        fmt_f64(result.f1)
    )?;
    out.flush()?;
    Ok(())
}

/// Reads raw interaction CSV with a header naming `user_id`, `item_id`,
/// `timestamp`, and optionally `rating`.
pub fn read_raw_events(path: impl AsRef<Path>) -> Result<Vec<RawEvent>> {
    let file = File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })??;
    let cols: Vec<&str> = header.split(',').map(|s| s.trim()).collect();
    let find = |name: &str| cols.iter().position(|&c| c == name);
    let user_col = find("user_id")
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing user_id column".into() })?;
    let item_col = find("item_id")
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing item_id column".into() })?;
    let time_col = find("timestamp")
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing timestamp column".into() })?;
    let rating_col = find("rating");

    let mut events = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        let need = user_col.max(item_col).max(time_col).max(rating_col.unwrap_or(0));
        if parts.len() <= need {
            return Err(Error::Parse { line: line_no, msg: "too few columns".into() });
        }
        let time: f64 = parts[time_col]
            .parse()
            .map_err(|e| Error::Parse { line: line_no, msg: format!("bad timestamp: {e}") })?;
        let rating = match rating_col {
            Some(col) if !parts[col].is_empty() => Some(
                parts[col]
                    .parse()
                    .map_err(|e| Error::Parse { line: line_no, msg: format!("bad rating: {e}") })?,
            ),
            _ => None,
        };
        events.push(RawEvent {
            user: parts[user_col].to_string(),
            item: parts[item_col].to_string(),
            time,
            rating,
        });
    }
    Ok(events)
}

/// FNV-1a hash of a byte string, hex-encoded; used for config provenance.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
