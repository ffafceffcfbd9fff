//! CSV formats.
//!
//! Paths are `t,x`, events are `t`, curves are `x,qhat,defined` and
//! selection diagnostics are `h,criterion,vhat,penalty`. Floats are written
//! with Rust's shortest round-trip formatting, so reading a written file
//! reproduces the in-memory values exactly. Missing curve values are
//! written as `NaN`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localpoly::{CandidateScore, CurveEstimate};
use crate::path::{EventRecord, SampledPath};

#[derive(Debug, Serialize, Deserialize)]
struct PathRow {
    t: f64,
    x: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    t: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    x: f64,
    qhat: f64,
    defined: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionRow {
    h: f64,
    criterion: f64,
    vhat: f64,
    penalty: f64,
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if got != want {
        return Err(Error::invalid(format!("expected header '{}', found '{}'", want.join(","), got.join(","))));
    }
    Ok(())
}

/// Reads a path; the horizon defaults to the last sample time.
pub fn read_path<R: Read>(r: R, horizon: Option<f64>) -> Result<SampledPath> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["t", "x"])?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for row in rdr.deserialize::<PathRow>() {
        let row = row?;
        times.push(row.t);
        values.push(row.x);
    }
    let h = horizon.unwrap_or_else(|| times.last().copied().unwrap_or(0.0));
    SampledPath::new(times, values, h)
}

pub fn write_path<W: Write>(w: W, path: &SampledPath) -> Result<()> {
    let mut wtr = writer(w);
    for (&t, &x) in path.times().iter().zip(path.values()) {
        wtr.serialize(PathRow { t, x })?;
    }
    if path.is_empty() {
        wtr.write_record(["t", "x"])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads event times; they must be nondecreasing and within `[0, horizon]`.
pub fn read_events<R: Read>(r: R, horizon: f64) -> Result<EventRecord> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["t"])?;
    let times = rdr
        .deserialize::<EventRow>()
        .map(|row| row.map(|r| r.t).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    EventRecord::new(times, horizon)
}

pub fn write_events<W: Write>(w: W, events: &EventRecord) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["t"])?;
    for &t in events.times() {
        wtr.write_record([t.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_curve<W: Write>(w: W, curve: &CurveEstimate) -> Result<()> {
    let mut wtr = writer(w);
    for ((&x, &qhat), &defined) in curve.grid.iter().zip(&curve.values).zip(&curve.defined) {
        // `+ 0.0` turns a negative zero into `0`.
        wtr.serialize(CurveRow { x, qhat: qhat + 0.0, defined })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_curve<R: Read>(r: R) -> Result<CurveEstimate> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["x", "qhat", "defined"])?;
    let mut c = CurveEstimate { grid: Vec::new(), values: Vec::new(), defined: Vec::new() };
    for row in rdr.deserialize::<CurveRow>() {
        let row = row?;
        c.grid.push(row.x);
        c.values.push(row.qhat);
        c.defined.push(row.defined);
    }
    Ok(c)
}

pub fn write_selection<W: Write>(w: W, candidates: &[CandidateScore]) -> Result<()> {
    let mut wtr = writer(w);
    for c in candidates {
        wtr.serialize(SelectionRow { h: c.h, criterion: c.criterion, vhat: c.v_hat, penalty: c.penalty })?;
    }
    wtr.flush()?;
    Ok(())
}

/// `(h, criterion, vhat, penalty)` rows.
pub fn read_selection<R: Read>(r: R) -> Result<Vec<(f64, f64, f64, f64)>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["h", "criterion", "vhat", "penalty"])?;
    rdr.deserialize::<SelectionRow>()
        .map(|row| row.map(|r| (r.h, r.criterion, r.vhat, r.penalty)).map_err(Error::from))
        .collect()
}

pub fn read_path_file(p: impl AsRef<Path>, horizon: Option<f64>) -> Result<SampledPath> {
    read_path(std::fs::File::open(p)?, horizon)
}

pub fn read_events_file(p: impl AsRef<Path>, horizon: f64) -> Result<EventRecord> {
    read_events(std::fs::File::open(p)?, horizon)
}
