//! Result files: error tables, summaries, snapshot and density-path dumps.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::error_metrics::{ErrorKind, ErrorRecord};
use crate::fpe_solver::DensityPath;
use crate::grid::{GridField, GridSpec};
use crate::mollifier::ParticleEnsemble;

pub const RECORD_HEADER: [&str; 10] = ["scenario", "alpha", "theta", "beta", "N", "rep", "t", "kind", "value", "seed"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Writes records in the fixed column order. `rep = None` is an empty field.
pub fn write_records<W: Write>(out: W, records: &[ErrorRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.alpha.to_string(),
            r.theta.to_string(),
            r.beta.to_string(),
            r.n.to_string(),
            r.rep.map(|v| v.to_string()).unwrap_or_default(),
            r.t.to_string(),
            r.kind.to_string(),
            r.value.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ErrorRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(RECORD_HEADER) {
        return Err(Error::Config(format!("unexpected error table header {headers:?}")));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number '{s}': {e}")));
    let parse_u = |s: &str| s.parse::<u64>().map_err(|e| Error::Config(format!("bad integer '{s}': {e}")));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        let kind = match &row[7] {
            "density_sup" => ErrorKind::DensitySup,
            "tv" => ErrorKind::Tv,
            "pathwise" => ErrorKind::Pathwise,
            other => return Err(Error::Config(format!("unknown error kind '{other}'"))),
        };
        out.push(ErrorRecord {
            scenario: row[0].to_string(),
            alpha: parse_f(&row[1])?,
            theta: parse_f(&row[2])?,
            beta: parse_f(&row[3])?,
            n: parse_u(&row[4])? as usize,
            rep: if row[5].is_empty() { None } else { Some(parse_u(&row[5])? as usize) },
            t: parse_f(&row[6])?,
            kind,
            value: parse_f(&row[8])?,
            seed: parse_u(&row[9])?,
        });
    }
    Ok(out)
}

/// One `errors_<kind>.csv` per kind present. Returns the written paths.
pub fn write_error_tables(dir: &Path, records: &[ErrorRecord]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut kinds: Vec<ErrorKind> = records.iter().map(|r| r.kind).collect();
    kinds.sort();
    kinds.dedup();
    let mut paths = Vec::new();
    for kind in kinds {
        let rows: Vec<ErrorRecord> = records.iter().filter(|r| r.kind == kind).cloned().collect();
        let path = dir.join(format!("errors_{kind}.csv"));
        write_records(BufWriter::new(File::create(&path)?), &rows)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Commit of the working tree the binary runs in, if it can be found.
pub fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub git_hash: String,
    pub crate_version: &'static str,
}

impl Provenance {
    pub fn current() -> Self {
        Self { git_hash: git_hash(), crate_version: env!("CARGO_PKG_VERSION") }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Config(format!("json: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub alpha: f64,
    pub theta: f64,
    pub seed: u64,
}

/// Positions as CSV, preceded by a `# t=.. N=.. d=.. L=.. alpha=.. theta=.. seed=..` line.
pub fn write_snapshot_csv<W: Write>(mut out: W, ensemble: &ParticleEnsemble, meta: SnapshotMeta) -> Result<()> {
    let d = ensemble.dim();
    writeln!(
        out,
        "# t={} N={} d={} L={} alpha={} theta={} seed={}",
        ensemble.time(),
        ensemble.len(),
        d,
        ensemble.domain_length(),
        meta.alpha,
        meta.theta,
        meta.seed
    )?;
    let header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in ensemble.positions().chunks_exact(d) {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot_csv<R: Read>(input: R) -> Result<(ParticleEnsemble, SnapshotMeta)> {
    let mut lines = BufReader::new(input).lines();
    let first = lines.next().ok_or_else(|| Error::Config("empty snapshot".into()))??;
    let meta_line = first.strip_prefix("# ").ok_or_else(|| Error::Config("missing snapshot header".into()))?;
    let field = |key: &str| -> Result<String> {
        meta_line
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .map(str::to_string)
            .ok_or_else(|| Error::Config(format!("snapshot header lacks '{key}'")))
    };
    let num = |s: String| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number '{s}': {e}")));
    let t = num(field("t")?)?;
    let n = num(field("N")?)? as usize;
    let d = num(field("d")?)? as usize;
    let l = num(field("L")?)?;
    let meta = SnapshotMeta {
        alpha: num(field("alpha")?)?,
        theta: num(field("theta")?)?,
        seed: field("seed")?.parse().map_err(|e| Error::Config(format!("bad seed: {e}")))?,
    };
    lines.next();
    let mut pos = Vec::with_capacity(n * d);
    for line in lines {
        for v in line?.split(',') {
            pos.push(num(v.to_string())?);
        }
    }
    if pos.len() != n * d {
        return Err(Error::LengthMismatch { expected: n * d, got: pos.len() });
    }
    Ok((ParticleEnsemble::new(pos, d, l, t)?, meta))
}

/// One row per stored time: `t` then the grid values in flat order.
pub fn write_density_path_csv<W: Write>(out: W, path: &DensityPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let len = path.spec().len();
    let mut header = vec!["t".to_string()];
    header.extend((0..len).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (t, f) in path.times.iter().zip(&path.fields) {
        let mut row = vec![t.to_string()];
        row.extend(f.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

const PATH_MAGIC: &[u8; 8] = b"DNSDPATH";
const PATH_VERSION: u32 = 1;

/// Little-endian binary dump: magic, version, `alpha, L, n, d, dt`, the
/// scenario id, then `(t, values)` per step.
pub fn write_density_path_binary<W: Write>(mut out: W, path: &DensityPath) -> Result<()> {
    let spec = path.spec();
    out.write_all(PATH_MAGIC)?;
    out.write_all(&PATH_VERSION.to_le_bytes())?;
    out.write_all(&path.alpha.to_le_bytes())?;
    out.write_all(&spec.domain_length.to_le_bytes())?;
    out.write_all(&(spec.points_per_axis as u64).to_le_bytes())?;
    out.write_all(&(spec.dim as u64).to_le_bytes())?;
    out.write_all(&path.dt.to_le_bytes())?;
    let id = path.scenario_id.as_bytes();
    out.write_all(&(id.len() as u32).to_le_bytes())?;
    out.write_all(id)?;
    out.write_all(&(path.times.len() as u64).to_le_bytes())?;
    for (t, f) in path.times.iter().zip(&path.fields) {
        out.write_all(&t.to_le_bytes())?;
        for v in f.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_density_path_binary<R: Read>(input: R) -> Result<DensityPath> {
    let mut r = BufReader::new(input);
    if &read_array::<8, _>(&mut r)? != PATH_MAGIC {
        return Err(Error::Config("not a density path file".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != PATH_VERSION {
        return Err(Error::Config(format!("unsupported density path version {version}")));
    }
    let f64_at = |r: &mut BufReader<R>| -> Result<f64> { Ok(f64::from_le_bytes(read_array(r)?)) };
    let alpha = f64_at(&mut r)?;
    let l = f64_at(&mut r)?;
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let d = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let dt = f64_at(&mut r)?;
    let id_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id)?;
    let scenario_id = String::from_utf8(id).map_err(|e| Error::Config(format!("scenario id: {e}")))?;
    let steps = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let spec = GridSpec::new(l, n, d)?;
    let mut times = Vec::with_capacity(steps);
    let mut fields = Vec::with_capacity(steps);
    for _ in 0..steps {
        times.push(f64_at(&mut r)?);
        let values = (0..spec.len()).map(|_| f64_at(&mut r)).collect::<Result<Vec<_>>>()?;
        fields.push(GridField::new(spec, values)?);
    }
    if fields.is_empty() {
        return Err(Error::Config("density path has no steps".into()));
    }
    Ok(DensityPath { times, fields, alpha, dt, scenario_id })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_table_layout() {
        let r = ErrorRecord {
            scenario: "zero_drift".into(),
            alpha: 1.5,
            theta: 0.25,
            beta: 0.99,
            n: 256,
            rep: None,
            t: 0.5,
            kind: ErrorKind::Tv,
            value: 0.125,
            seed: 7,
        };
        let mut buf = Vec::new();
        write_records(&mut buf, &[r.clone(), ErrorRecord { rep: Some(3), kind: ErrorKind::Pathwise, ..r.clone() }])
            .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "scenario,alpha,theta,beta,N,rep,t,kind,value,seed\n\
             zero_drift,1.5,0.25,0.99,256,,0.5,tv,0.125,7\n\
             zero_drift,1.5,0.25,0.99,256,3,0.5,pathwise,0.125,7\n"
        );
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back[0], r);
        assert_eq!(back[1].rep, Some(3));
    }
}
