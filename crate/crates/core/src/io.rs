//! Binary field and particle snapshots and CSV tables.
//!
//! Field snapshots: `"FLRS"`, version, `n1`, `n2`, `n3` (u32 LE), then the
//! values as f64 LE with `x₁` fastest. Particle snapshots: `"FLRP"`,
//! version (u32), `N` (u64), frame (u32, 0 physical, 1 gyro), time (f64),
//! then `x` (3N), `v` (3N) and `w` (N) as f64 LE.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::diagnostics::{DiagnosticsRecord, CSV_COLUMNS};
use crate::ensemble::{Ensemble, Frame};
use crate::error::{FlrError, Result};
use crate::field::{GridSpec, ScalarField};
use crate::geometry::PhasePoint;

pub const FIELD_MAGIC: &[u8; 4] = b"FLRS";
pub const PARTICLE_MAGIC: &[u8; 4] = b"FLRP";
pub const FORMAT_VERSION: u32 = 1;
pub const PARTICLE_HEADER_BYTES: usize = 28;

fn format_err(path: &Path, msg: impl Into<String>) -> FlrError {
    FlrError::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| FlrError::io(path, e))?;
    f.write_all(bytes).map_err(|e| FlrError::io(path, e))
}

/// Sequential little-endian reader over a byte buffer.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err(self.path, format!("truncated at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        let version = self.u32()?;
        if got != magic || version != FORMAT_VERSION {
            return Err(format_err(
                self.path,
                format!(
                    "expected {} version {FORMAT_VERSION}, found magic {:?} version {version}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_err(
                self.path,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FlrError::io(path, e))
}

pub fn encode_field(field: &ScalarField) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * field.values().len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for n in field.spec().dims() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    write_bytes(path, &encode_field(field))
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let bytes = read_all(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.header(FIELD_MAGIC)?;
    let (n1, n2, n3) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let spec = GridSpec::new(n1, n2, n3).map_err(|e| format_err(path, e.to_string()))?;
    let values = (0..spec.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    ScalarField::from_values(spec, values)
}

/// A particle snapshot: the ensemble and its time.
#[derive(Debug, Clone)]
pub struct ParticleSnapshot {
    pub time: f64,
    pub ensemble: Ensemble,
}

pub fn encode_particles(ens: &Ensemble, time: f64) -> Vec<u8> {
    let n = ens.len();
    let mut out = Vec::with_capacity(PARTICLE_HEADER_BYTES + 56 * n);
    out.extend_from_slice(PARTICLE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    let frame: u32 = match ens.frame() {
        Frame::Physical => 0,
        Frame::Gyro => 1,
    };
    out.extend_from_slice(&frame.to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    for p in ens.points() {
        p.x.iter().for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
    }
    for p in ens.points() {
        p.v.iter().for_each(|c| out.extend_from_slice(&c.to_le_bytes()));
    }
    for w in ens.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn write_particles(path: &Path, ens: &Ensemble, time: f64) -> Result<()> {
    write_bytes(path, &encode_particles(ens, time))
}

pub fn read_particles(path: &Path) -> Result<ParticleSnapshot> {
    let bytes = read_all(path)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.header(PARTICLE_MAGIC)?;
    let n = r.u64()? as usize;
    let frame = match r.u32()? {
        0 => Frame::Physical,
        1 => Frame::Gyro,
        f => return Err(format_err(path, format!("unknown frame tag {f}"))),
    };
    let time = r.f64()?;
    if bytes.len() < PARTICLE_HEADER_BYTES + n.saturating_mul(56) {
        return Err(format_err(
            path,
            format!("truncated: {n} particles need {} bytes", PARTICLE_HEADER_BYTES + 56 * n),
        ));
    }
    let triple = |r: &mut Reader| -> Result<[f64; 3]> { Ok([r.f64()?, r.f64()?, r.f64()?]) };
    let xs = (0..n).map(|_| triple(&mut r)).collect::<Result<Vec<_>>>()?;
    let vs = (0..n).map(|_| triple(&mut r)).collect::<Result<Vec<_>>>()?;
    let ws = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    // Stored positions are already wrapped; keep them bit-exact.
    let points = xs.into_iter().zip(vs).map(|(x, v)| PhasePoint { x, v }).collect();
    Ok(ParticleSnapshot {
        time,
        ensemble: Ensemble::new(points, ws, frame)?,
    })
}

/// `{:.16e}`: 17 significant digits, enough for an exact round trip.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_table(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut text = columns.join(",");
    text.push('\n');
    for row in rows {
        if row.len() != columns.len() {
            return Err(FlrError::InvalidArgument(format!(
                "row of {} values for {} columns",
                row.len(),
                columns.len()
            )));
        }
        text.push_str(&row.iter().map(|&v| format_float(v)).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())
}

/// Header and rows of a numeric CSV table.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| FlrError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| format_err(path, "empty table"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let row = line
            .split(',')
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| format_err(path, format!("line {}: bad number {s:?}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(format_err(
                path,
                format!("line {}: {} fields for {} columns", i + 2, row.len(), header.len()),
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Diagnostics CSV: the fixed columns, then the extras of the first record
/// in key order. Every record must carry the same extras.
pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let extras: Vec<&String> = records.first().map(|r| r.extra.keys().collect()).unwrap_or_default();
    let mut columns: Vec<&str> = CSV_COLUMNS.to_vec();
    columns.extend(extras.iter().map(|k| k.as_str()));
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        if r.extra.len() != extras.len() || !extras.iter().all(|k| r.extra.contains_key(*k)) {
            return Err(FlrError::InvalidArgument(format!(
                "record at t={} has different extra columns",
                r.t
            )));
        }
        let mut row = r.fixed_values().to_vec();
        row.extend(r.extra.values());
        rows.push(row);
    }
    write_table(path, &columns, &rows)
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let (header, rows) = read_table(path)?;
    if header.len() < CSV_COLUMNS.len() || header[..CSV_COLUMNS.len()] != CSV_COLUMNS {
        return Err(format_err(
            path,
            format!("expected leading columns {}", CSV_COLUMNS.join(",")),
        ));
    }
    Ok(rows
        .into_iter()
        .map(|row| {
            let extra: BTreeMap<String, f64> = header[CSV_COLUMNS.len()..]
                .iter()
                .cloned()
                .zip(row[CSV_COLUMNS.len()..].iter().copied())
                .collect();
            DiagnosticsRecord {
                t: row[0],
                kinetic: row[1],
                field_l2: row[2],
                field_perp: row[3],
                field_par: row[4],
                energy_total: row[5],
                mass: row[6],
                rho_l32: row[7],
                e_mixed_norm: row[8],
                epar_weak: row[9],
                extra,
            }
        })
        .collect())
}
