//! Result tables and run logs.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::value::RawValue;

use super::{Aggregate, RegretRow};
use crate::mfhoo::EvalRecord;

pub const RESULTS_HEADER: &str =
    "algo,function,budget,seed,simple_regret,n_evals,cost_spent,wall_time_s";
pub const PLOT_HEADER: &str = "budget,mean_simple_regret,stderr,runs";

pub fn results_csv(rows: &[RegretRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.algo,
            r.function,
            r.budget,
            r.seed,
            r.simple_regret,
            r.n_evals,
            r.cost_spent,
            r.wall_time_s
        );
    }
    out
}

pub fn plot_csv(aggregates: &[Aggregate]) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for a in aggregates {
        let _ = writeln!(out, "{},{},{},{}", a.budget, a.mean, a.stderr, a.runs);
    }
    out
}

/// Writes budget against mean regret with its standard error.
pub fn emit_plot_data(aggregates: &[Aggregate], path: &Path) -> io::Result<()> {
    fs::write(path, plot_csv(aggregates))
}

#[derive(Serialize)]
struct LogLine<'a> {
    t: u64,
    h: Option<u32>,
    i: Option<Box<RawValue>>,
    x: &'a [f64],
    z: f64,
    y: f64,
    cost: f64,
}

/// One JSON object per line: `{"t":..,"h":..,"i":..,"x":[..],"z":..,"y":..,"cost":..}`.
///
/// `h` and `i` are `null` for queries not tied to a cell (bias probes).
/// Cell indices are written as exact decimal integers at any depth.
pub fn log_line(record: &EvalRecord) -> String {
    let i = record.cell.as_ref().map(|c| {
        RawValue::from_string(c.index().to_string()).expect("a decimal integer is valid JSON")
    });
    let line = LogLine {
        t: record.t,
        h: record.cell.as_ref().map(|c| c.depth()),
        i,
        x: &record.x,
        z: record.z,
        y: record.y,
        cost: record.cost,
    };
    serde_json::to_string(&line).expect("finite floats serialize")
}

pub fn write_log(records: &[EvalRecord], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        out.write_all(log_line(r).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
