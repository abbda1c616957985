//! Artifact writers: JSON summaries, per-iteration CSV traces, episode
//! dumps (JSON-lines and a columnar binary), and the run manifest.
//!
//! Every writer is deterministic for identical inputs — fixed field order,
//! fixed float formatting — so reruns with the same manifest reproduce
//! artifacts byte for byte. The one intentional exception is the manifest's
//! `run` section (wall time), which records the run rather than defining it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write as IoWrite};
use std::path::Path;

use crate::dp_belief::{AugQTable, BeliefGrid};
use crate::dp_markov::{InfoSpace, IterationTrace, Policy, QTable, ValueTable};
use crate::dp_nonmarkov::BoundReport;
use crate::error::{Error, Result};
use crate::sim::EpisodeTrace;

/// Pretty-printed JSON plus a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// CSV field quoting for free-form strings (action labels); numbers are
/// written bare.
fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn window_header(space: InfoSpace) -> String {
    // Window slots newest first: x0 is the current state, x1 one step back.
    (0..=space.memory())
        .map(|t| format!("x{t}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn window_cells(space: InfoSpace, i: usize) -> String {
    space
        .state(i)
        .window()
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// `k,residual` rows, one per sweep.
pub fn write_residuals_csv(path: &Path, trace: &IterationTrace) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "k,residual")?;
    for (k, r) in trace.residuals.iter().enumerate() {
        writeln!(out, "{k},{r}")?;
    }
    out.flush()?;
    Ok(())
}

/// Window table: one row per window, newest slot first, then the value.
pub fn write_value_csv(path: &Path, table: &ValueTable) -> Result<()> {
    let space = table.space();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{},value", window_header(space))?;
    for i in 0..space.count() {
        writeln!(out, "{},{}", window_cells(space, i), table.get(i))?;
    }
    out.flush()?;
    Ok(())
}

/// Window Q table: one row per window, one `q_<label>` column per action.
pub fn write_q_csv(path: &Path, table: &QTable, labels: &[&str]) -> Result<()> {
    let space = table.space();
    if labels.len() != table.num_actions() {
        return Err(Error::Shape {
            context: "write_q_csv labels".into(),
            expected: format!("{} labels", table.num_actions()),
            actual: format!("{}", labels.len()),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    let cols: Vec<String> = labels.iter().map(|l| csv_quote(&format!("q_{l}"))).collect();
    writeln!(out, "{},{}", window_header(space), cols.join(","))?;
    for i in 0..space.count() {
        let row: Vec<String> = table.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", window_cells(space, i), row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Policy table: one row per window with the chosen action and its label.
pub fn write_policy_csv(path: &Path, policy: &Policy, labels: &[&str]) -> Result<()> {
    let space = policy.space();
    if labels.len() != policy.num_actions() {
        return Err(Error::Shape {
            context: "write_policy_csv labels".into(),
            expected: format!("{} labels", policy.num_actions()),
            actual: format!("{}", labels.len()),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{},action,label", window_header(space))?;
    for i in 0..space.count() {
        let u = policy.action(i);
        writeln!(
            out,
            "{},{},{}",
            window_cells(space, i),
            u,
            csv_quote(labels[u])
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Belief-augmented Q table: one row per (grid point, lattice belief).
pub fn write_aug_q_csv(
    path: &Path,
    table: &AugQTable,
    grid: &BeliefGrid,
    labels: &[&str],
) -> Result<()> {
    if labels.len() != table.num_actions() || grid.len() != table.num_beliefs() {
        return Err(Error::Shape {
            context: "write_aug_q_csv".into(),
            expected: format!("{} actions, {} beliefs", table.num_actions(), table.num_beliefs()),
            actual: format!("{} labels, {} lattice points", labels.len(), grid.len()),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    let bs: Vec<String> = (0..grid.num_modes()).map(|s| format!("b{s}")).collect();
    let qs: Vec<String> = labels.iter().map(|l| csv_quote(&format!("q_{l}"))).collect();
    writeln!(out, "x,{},{}", bs.join(","), qs.join(","))?;
    for x in 0..table.num_grid() {
        for b in 0..grid.len() {
            let coords: Vec<String> = grid
                .point(b)
                .weights()
                .iter()
                .map(|v| v.to_string())
                .collect();
            let row: Vec<String> = (0..table.num_actions())
                .map(|u| table.get(x, b, u).to_string())
                .collect();
            writeln!(out, "{x},{},{}", coords.join(","), row.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-sweep bound rows: `k,sup_error,bound,slack,satisfied`.
pub fn write_bound_csv(path: &Path, report: &BoundReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "k,sup_error,bound,slack,satisfied")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.k, row.sup_error, row.bound, row.slack, row.satisfied
        )?;
    }
    out.flush()?;
    Ok(())
}

/// JSON-lines step dump: one step per line, tagged by episode index.
pub fn write_trace_jsonl(path: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (e, trace) in traces.iter().enumerate() {
        for step in &trace.steps {
            let line = serde_json::json!({
                "episode": e,
                "k": step.k,
                "x": step.x,
                "s": step.s,
                "u": step.u,
                "r": step.r,
            });
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

const COLUMNAR_MAGIC: &[u8; 8] = b"HMDPCOL1";
const COLUMNAR_VERSION: u32 = 1;

// (name, type code); codes: 1 = u32, 2 = u64, 3 = f64.
const COLUMNAR_FIELDS: [(&str, u8); 6] = [
    ("episode", 1),
    ("k", 2),
    ("x", 1),
    ("s", 1),
    ("u", 1),
    ("r", 3),
];

/// Flat step columns decoded from (or encoded into) the binary dump.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepColumns {
    pub episode: Vec<u32>,
    pub k: Vec<u64>,
    pub x: Vec<u32>,
    pub s: Vec<u32>,
    pub u: Vec<u32>,
    pub r: Vec<f64>,
}

impl StepColumns {
    pub fn from_traces(traces: &[EpisodeTrace]) -> Self {
        let n: usize = traces.iter().map(|t| t.steps.len()).sum();
        let mut cols = StepColumns {
            episode: Vec::with_capacity(n),
            k: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
        };
        for (e, trace) in traces.iter().enumerate() {
            for step in &trace.steps {
                cols.episode.push(e as u32);
                cols.k.push(step.k as u64);
                cols.x.push(step.x as u32);
                cols.s.push(step.s as u32);
                cols.u.push(step.u as u32);
                cols.r.push(step.r);
            }
        }
        cols
    }

    pub fn len(&self) -> usize {
        self.episode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episode.is_empty()
    }
}

/// Columnar binary step dump: magic, version, row count, field table
/// (name, type code), then one little-endian array per field in order.
pub fn write_trace_columnar(path: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    let cols = StepColumns::from_traces(traces);
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(COLUMNAR_MAGIC)?;
    out.write_all(&COLUMNAR_VERSION.to_le_bytes())?;
    out.write_all(&(cols.len() as u64).to_le_bytes())?;
    out.write_all(&(COLUMNAR_FIELDS.len() as u32).to_le_bytes())?;
    for (name, code) in COLUMNAR_FIELDS {
        out.write_all(&[name.len() as u8])?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[code])?;
    }
    for v in &cols.episode {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &cols.k {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &cols.x {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &cols.s {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &cols.u {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &cols.r {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn bad_dump(what: &str) -> Error {
    Error::InvalidArgument(format!("columnar dump: {what}"))
}

/// Reads back a columnar step dump written by [`write_trace_columnar`].
pub fn read_trace_columnar(path: &Path) -> Result<StepColumns> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != COLUMNAR_MAGIC {
        return Err(bad_dump("bad magic"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != COLUMNAR_VERSION {
        return Err(bad_dump("unsupported version"));
    }
    input.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    input.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) as usize != COLUMNAR_FIELDS.len() {
        return Err(bad_dump("unexpected field count"));
    }
    for (name, code) in COLUMNAR_FIELDS {
        let mut len = [0u8; 1];
        input.read_exact(&mut len)?;
        let mut buf = vec![0u8; len[0] as usize];
        input.read_exact(&mut buf)?;
        let mut c = [0u8; 1];
        input.read_exact(&mut c)?;
        if buf != name.as_bytes() || c[0] != code {
            return Err(bad_dump("field table mismatch"));
        }
    }
    let mut cols = StepColumns::default();
    let read_u32 = |input: &mut BufReader<File>, out: &mut Vec<u32>| -> Result<()> {
        let mut b = [0u8; 4];
        for _ in 0..rows {
            input.read_exact(&mut b)?;
            out.push(u32::from_le_bytes(b));
        }
        Ok(())
    };
    read_u32(&mut input, &mut cols.episode)?;
    for _ in 0..rows {
        input.read_exact(&mut b8)?;
        cols.k.push(u64::from_le_bytes(b8));
    }
    read_u32(&mut input, &mut cols.x)?;
    read_u32(&mut input, &mut cols.s)?;
    read_u32(&mut input, &mut cols.u)?;
    for _ in 0..rows {
        input.read_exact(&mut b8)?;
        cols.r.push(f64::from_le_bytes(b8));
    }
    Ok(cols)
}

/// Everything needed to rerun a command and reproduce its outputs
/// bit-for-bit. Serialized order is fixed; parameter keys are sorted.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Reproduction {
    pub command: String,
    pub model_sha256: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub base_seed: u64,
    pub streams: u64,
    pub generator: String,
    pub version: String,
}

/// Observed facts about one run; informational, not reproducible.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RunInfo {
    pub wall_time_s: f64,
    pub threads: usize,
}

/// The run manifest written next to every command's artifacts.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub reproduction: Reproduction,
    pub run: RunInfo,
}

impl Manifest {
    pub fn new(reproduction: Reproduction, run: RunInfo) -> Self {
        Manifest {
            schema: "hmdp-manifest-v1",
            reproduction,
            run,
        }
    }
}
