//! CSV and JSON writers.
//!
//! CSV output is UTF-8 with a header row. Tolerances and errors use
//! scientific notation (`1e-8`, `2.5e-11`, `inf`); times are nanoseconds.

use std::io::{self, Write};

use serde::Serializer;

use crate::config::Format;
use crate::run::{BenchRow, CompileStatsOutRow};

/// Serializes non-finite floats as the strings `inf`, `-inf` and `nan`,
/// which JSON cannot represent as numbers.
pub fn float<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&sci(*x))
    }
}

fn sci(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

fn nanos(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.0}")
    } else {
        sci(x)
    }
}

fn csv_error(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

fn write_csv<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()
}

fn write_json<W: Write, T: serde::Serialize>(mut out: W, rows: &[T]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)
}

pub fn write_bench<W: Write>(out: W, rows: &[BenchRow], format: Format) -> io::Result<()> {
    match format {
        Format::Json => write_json(out, rows),
        Format::Csv => write_csv(
            out,
            &BenchRow::COLUMNS,
            rows.iter().map(|r| {
                vec![
                    r.problem.clone(),
                    r.method.clone(),
                    sci(r.abstol),
                    sci(r.reltol),
                    sci(r.final_error),
                    nanos(r.median_wall_time_ns),
                    r.compile_time_ns.to_string(),
                    r.evals.to_string(),
                    r.work.to_string(),
                    r.steps_accepted.to_string(),
                    r.steps_rejected.to_string(),
                ]
            }),
        ),
    }
}

pub fn write_compile_stats<W: Write>(
    out: W,
    rows: &[CompileStatsOutRow],
    format: Format,
) -> io::Result<()> {
    match format {
        Format::Json => write_json(out, rows),
        Format::Csv => write_csv(
            out,
            &CompileStatsOutRow::COLUMNS,
            rows.iter().map(|r| {
                vec![
                    r.problem.clone(),
                    r.degree.to_string(),
                    r.strategy.clone(),
                    r.op_count.to_string(),
                    format!("{:.1}", r.median_eval_ns),
                ]
            }),
        ),
    }
}
