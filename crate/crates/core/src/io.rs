//! On-disk formats.
//!
//! A trajectory directory holds
//!
//! * `trajectory.csv`: one row per save time with columns `t, l2, l4, linf,
//!   mean` followed by the running integrals (`grad_l2_int`, ...);
//! * `fields.bin`: a 16-byte header (`b"OSTR1\0"`, two zero bytes, `u32` n,
//!   `u32` reserved = 0, all little-endian) followed by one row of `n`
//!   little-endian `f64` per save time;
//! * `meta.json`: trajectory kind with its parameters, grid, tail fraction.
//!
//! Floats are written in shortest round-trip form, so reading a directory
//! back reproduces the trajectory bit for bit.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convergence::{ConvergenceTable, ErrorRecord, RowStatus};
use crate::error::{Error, Result};
use crate::spectral::{Field, Grid};
use crate::trajectory::{Integrals, State, Trajectory, TrajectoryKind};

pub const MAGIC: [u8; 8] = *b"OSTR1\0\0\0";
pub const HEADER_LEN: usize = 16;

pub const CSV_FILE: &str = "trajectory.csv";
pub const FIELDS_FILE: &str = "fields.bin";
pub const META_FILE: &str = "meta.json";

const STATE_COLUMNS: [&str; 5] = ["t", "l2", "l4", "linf", "mean"];

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    #[serde(flatten)]
    kind: TrajectoryKind,
    n: usize,
    length: f64,
    saves: usize,
    max_tail_fraction: f64,
}

/// Writes `traj` into `dir`, creating it if needed.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    fs::create_dir_all(dir)?;

    let mut csv = csv::Writer::from_path(dir.join(CSV_FILE))?;
    let header: Vec<&str> = STATE_COLUMNS.iter().chain(Integrals::NAMES.iter()).copied().collect();
    csv.write_record(&header)?;
    for (s, ints) in traj.states.iter().zip(&traj.integrals) {
        let mut row = vec![s.t, s.u.norm_l2(), s.u.norm_l4(), s.u.norm_linf(), s.u.mean()];
        row.extend(ints.to_array());
        csv.write_record(row.iter().map(|v| v.to_string()))?;
    }
    csv.flush()?;

    let mut bin = BufWriter::new(File::create(dir.join(FIELDS_FILE))?);
    bin.write_all(&MAGIC)?;
    bin.write_all(&(traj.grid.n() as u32).to_le_bytes())?;
    bin.write_all(&0u32.to_le_bytes())?;
    for s in &traj.states {
        for v in s.u.values() {
            bin.write_all(&v.to_le_bytes())?;
        }
    }
    bin.flush()?;

    let meta = Meta {
        kind: traj.kind,
        n: traj.grid.n(),
        length: traj.grid.length(),
        saves: traj.states.len(),
        max_tail_fraction: traj.max_tail_fraction,
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn open(dir: &Path, name: &str) -> Result<File> {
    File::open(dir.join(name)).map_err(|e| Error::MissingData(format!("{}: {e}", dir.join(name).display())))
}

/// Reads a directory written by [`write_trajectory`]. Missing files,
/// truncated rows and inconsistent counts are reported as `MissingData`.
pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let mut meta_text = String::new();
    open(dir, META_FILE)?.read_to_string(&mut meta_text)?;
    let meta: Meta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::MissingData(format!("{}: {e}", dir.join(META_FILE).display())))?;
    let grid = Grid::new(meta.n, meta.length)?;

    let mut bytes = Vec::new();
    open(dir, FIELDS_FILE)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || bytes[..8] != MAGIC {
        return Err(Error::MissingData(format!("{FIELDS_FILE}: missing or malformed header")));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if n != meta.n {
        return Err(Error::MissingData(format!("{FIELDS_FILE}: n = {n}, {META_FILE} says {}", meta.n)));
    }
    let body = &bytes[HEADER_LEN..];
    let row_len = 8 * n;
    if body.len() != row_len * meta.saves {
        return Err(Error::MissingData(format!(
            "{FIELDS_FILE}: {} bytes of field data, expected {} rows of {row_len}",
            body.len(),
            meta.saves
        )));
    }

    let mut reader = csv::Reader::from_reader(open(dir, CSV_FILE)?);
    let width = STATE_COLUMNS.len() + Integrals::NAMES.len();
    let mut rows = Vec::with_capacity(meta.saves);
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::MissingData(format!("{CSV_FILE}: {e}")))?;
        if rec.len() != width {
            return Err(Error::MissingData(format!("{CSV_FILE}: row with {} of {width} columns", rec.len())));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MissingData(format!("{CSV_FILE}: {e}")))?;
        rows.push(vals);
    }
    if rows.len() != meta.saves {
        return Err(Error::MissingData(format!(
            "{CSV_FILE}: {} rows, {META_FILE} says {}",
            rows.len(),
            meta.saves
        )));
    }

    let mut states = Vec::with_capacity(rows.len());
    let mut integrals = Vec::with_capacity(rows.len());
    for (row, chunk) in rows.iter().zip(body.chunks_exact(row_len)) {
        let values: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        states.push(State {
            t: row[0],
            u: Field::new(&grid, values)?,
        });
        integrals.push(Integrals::from_array(
            row[STATE_COLUMNS.len()..].try_into().expect("integral columns"),
        ));
    }
    let traj = Trajectory {
        kind: meta.kind,
        grid,
        states,
        integrals,
        max_tail_fraction: meta.max_tail_fraction,
    };
    traj.validate()?;
    Ok(traj)
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

/// Writes `sweep.csv`, `sweep.json` and one two-column `<norm>.dat` file
/// per error norm (ε, error) for successful rows.
pub fn write_sweep(dir: &Path, table: &ConvergenceTable) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = csv::Writer::from_path(dir.join(SWEEP_CSV))?;
    let mut header = vec!["eps".to_owned(), "beta".to_owned(), "status".to_owned()];
    header.extend(ErrorRecord::NAMES.iter().map(|s| (*s).to_owned()));
    header.extend(ErrorRecord::NAMES.iter().map(|s| format!("order_{}", &s[4..])));
    header.extend(["entropy_residual".to_owned(), "max_tail_fraction".to_owned(), "audit_pass".to_owned()]);
    csv.write_record(&header)?;
    for r in &table.rows {
        let status = match r.status {
            RowStatus::Ok => "ok".to_owned(),
            RowStatus::BlowUp { t, .. } => format!("blow-up@{t}"),
        };
        let mut row = vec![r.eps.to_string(), r.beta.to_string(), status];
        row.extend(r.errors.to_array().iter().map(|v| v.to_string()));
        match r.observed_order {
            Some(o) => row.extend(o.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        row.push(r.entropy_residual.map(|v| v.to_string()).unwrap_or_default());
        row.push(r.max_tail_fraction.to_string());
        row.push(r.audit.as_ref().map(|a| a.pass.to_string()).unwrap_or_default());
        csv.write_record(&row)?;
    }
    csv.flush()?;

    fs::write(dir.join(SWEEP_JSON), serde_json::to_string_pretty(table)?)?;

    for (k, name) in ErrorRecord::NAMES.iter().enumerate() {
        let mut out = BufWriter::new(File::create(dir.join(format!("{name}.dat")))?);
        writeln!(out, "# eps {name}")?;
        for r in table.ok_rows() {
            writeln!(out, "{} {}", r.eps, r.errors.to_array()[k])?;
        }
        out.flush()?;
    }
    Ok(())
}

pub fn read_sweep(dir: &Path) -> Result<ConvergenceTable> {
    let text = fs::read_to_string(dir.join(SWEEP_JSON))
        .map_err(|e| Error::MissingData(format!("{}: {e}", dir.join(SWEEP_JSON).display())))?;
    Ok(serde_json::from_str(&text)?)
}
