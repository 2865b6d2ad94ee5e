//! CSV exchange formats. Every file opens with a block of `# key: value`
//! metadata lines followed by a header row.

use crate::error::{Error, Result};
use crate::mc::Ensemble;
use crate::sde::Trajectory;
use crate::transform::{Provenance, RateCurve, RatePoint, ScgfCurve, ScgfPoint};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

pub type Metadata = BTreeMap<String, String>;

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

/// Writes the metadata block. Newlines in values are escaped.
pub fn write_metadata<W: Write>(w: &mut W, meta: &Metadata) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {}", v.replace('\n', "\\n")).map_err(io_err)?;
    }
    Ok(())
}

/// Splits a document into its metadata block and the remaining CSV text.
pub fn split_metadata<R: Read>(r: R) -> Result<(Metadata, String)> {
    let mut meta = Metadata::new();
    let mut body = String::new();
    for line in BufReader::new(r).lines() {
        let line = line.map_err(io_err)?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim_start().split_once(": ") {
                meta.insert(k.to_string(), v.replace("\\n", "\n"));
            }
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

fn write_rows<W: Write, T: Serialize>(w: &mut W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut cw = csv::Writer::from_writer(w);
    for r in rows {
        cw.serialize(r).map_err(io_err)?;
    }
    cw.flush().map_err(io_err)
}

fn read_rows<T: for<'de> Deserialize<'de>>(body: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(body.as_bytes()).deserialize().map(|r| r.map_err(io_err)).collect()
}

#[derive(Serialize, Deserialize)]
struct ScgfRow {
    lambda: f64,
    e: f64,
    reliable: bool,
    std_error: f64,
    ess: f64,
    residual: f64,
    iterations: usize,
    h: Option<f64>,
    #[serde(rename = "L")]
    l: Option<f64>,
}

pub fn write_scgf_csv<W: Write>(mut w: W, curve: &ScgfCurve, extra: &Metadata) -> Result<()> {
    let mut meta = curve.metadata.clone();
    meta.extend(extra.clone());
    meta.insert("provenance".into(), curve.provenance.as_str().into());
    write_metadata(&mut w, &meta)?;
    let h = curve.metadata.get("h").and_then(|v| v.parse().ok());
    let l = curve.metadata.get("L").and_then(|v| v.parse().ok());
    write_rows(
        &mut w,
        curve.points.iter().map(|p| ScgfRow {
            lambda: p.lambda,
            e: p.value,
            reliable: p.reliable,
            std_error: p.std_error,
            ess: p.ess,
            residual: p.residual,
            iterations: p.iterations,
            h,
            l,
        }),
    )
}

pub fn read_scgf_csv<R: Read>(r: R) -> Result<ScgfCurve> {
    let (mut meta, body) = split_metadata(r)?;
    let provenance: Provenance = meta.remove("provenance").as_deref().unwrap_or("synthetic").parse()?;
    let rows: Vec<ScgfRow> = read_rows(&body)?;
    let pts = rows
        .into_iter()
        .map(|r| ScgfPoint {
            lambda: r.lambda,
            value: r.e,
            reliable: r.reliable,
            std_error: r.std_error,
            ess: r.ess,
            residual: r.residual,
            iterations: r.iterations,
        })
        .collect();
    let mut c = ScgfCurve::new(pts, provenance)?;
    c.metadata = meta;
    Ok(c)
}

#[derive(Serialize, Deserialize)]
struct RateRow {
    q: f64,
    rate: f64,
    boundary_active: bool,
    argmin_t: Option<f64>,
    action: Option<f64>,
    residual: Option<f64>,
    status: Option<String>,
    halving_delta: Option<f64>,
}

pub fn write_rate_csv<W: Write>(mut w: W, curve: &RateCurve, extra: &Metadata) -> Result<()> {
    let mut meta = curve.metadata.clone();
    meta.extend(extra.clone());
    meta.insert("provenance".into(), curve.provenance.as_str().into());
    write_metadata(&mut w, &meta)?;
    write_rows(
        &mut w,
        curve.points.iter().map(|p| RateRow {
            q: p.q,
            rate: p.value,
            boundary_active: p.boundary_active,
            argmin_t: p.argmin_t,
            action: p.action,
            residual: p.residual,
            status: p.status.clone(),
            halving_delta: p.halving_delta,
        }),
    )
}

pub fn read_rate_csv<R: Read>(r: R) -> Result<RateCurve> {
    let (mut meta, body) = split_metadata(r)?;
    let provenance: Provenance = meta.remove("provenance").as_deref().unwrap_or("synthetic").parse()?;
    let rows: Vec<RateRow> = read_rows(&body)?;
    let pts = rows
        .into_iter()
        .map(|r| RatePoint {
            q: r.q,
            value: r.rate,
            boundary_active: r.boundary_active,
            argmin_t: r.argmin_t,
            action: r.action,
            residual: r.residual,
            status: r.status,
            halving_delta: r.halving_delta,
        })
        .collect();
    let mut c = RateCurve::new(pts, provenance)?;
    c.metadata = meta;
    Ok(c)
}

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory, meta: &Metadata) -> Result<()> {
    write_metadata(&mut w, meta)?;
    #[derive(Serialize)]
    struct Row {
        t: f64,
        x: f64,
        y: f64,
    }
    write_rows(&mut w, traj.times().zip(&traj.states).map(|(t, s)| Row { t, x: s.x, y: s.y }))
}

/// Per-trajectory work `W_T` and martingale part `M_T`.
pub fn write_ensemble_csv<W: Write>(mut w: W, ens: &Ensemble, meta: &Metadata) -> Result<()> {
    write_metadata(&mut w, meta)?;
    #[derive(Serialize)]
    struct Row {
        index: usize,
        w: f64,
        m: f64,
    }
    write_rows(&mut w, ens.w.iter().zip(&ens.m).enumerate().map(|(index, (&w, &m))| Row { index, w, m }))
}

/// Field values on grid nodes, as produced by `SpectralOperator::grid_values`.
pub fn write_grid_csv<W: Write>(mut w: W, rows: &[[f64; 3]], meta: &Metadata) -> Result<()> {
    write_metadata(&mut w, meta)?;
    #[derive(Serialize)]
    struct Row {
        x: f64,
        y: f64,
        value: f64,
    }
    write_rows(&mut w, rows.iter().map(|r| Row { x: r[0], y: r[1], value: r[2] }))
}

/// Any serialisable record type, one row per record.
pub fn write_records<W: Write, T: Serialize>(mut w: W, rows: &[T], meta: &Metadata) -> Result<()> {
    write_metadata(&mut w, meta)?;
    write_rows(&mut w, rows)
}
