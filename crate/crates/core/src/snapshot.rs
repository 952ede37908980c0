//! Binary field snapshots and JSON sidecars.
//!
//! Layout: `b"VESF"`, version `u32`, dim `u8`, rank `u8`, n `u32`, repr `u8`,
//! then little-endian `f64` samples, component-major then row-major.
//! Spectral samples are `(re, im)` pairs.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, Rank, Repr, Samples};
use crate::grid::{Grid, GridError};

pub const MAGIC: &[u8; 4] = b"VESF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a field snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("invalid header: {0}")]
    Header(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn write_field<W: Write>(mut w: W, f: &Field) -> io::Result<()> {
    let g = f.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[g.dim() as u8, f.rank().code()])?;
    w.write_all(&(g.n() as u32).to_le_bytes())?;
    w.write_all(&[f.repr().code()])?;
    match f.samples() {
        Samples::Physical(x) => {
            for v in x {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Samples::Spectral(z) => {
            for c in z {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub fn read_field<R: Read>(mut r: R) -> Result<Field, SnapshotError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let dim = read_u8(&mut r)? as usize;
    let rank_code = read_u8(&mut r)?;
    let n = read_u32(&mut r)? as usize;
    let repr_code = read_u8(&mut r)?;
    let grid = Grid::new(dim, n)?;
    let rank = Rank::from_code(rank_code)
        .ok_or_else(|| SnapshotError::Header(format!("unknown rank code {rank_code}")))?;
    let repr = Repr::from_code(repr_code)
        .ok_or_else(|| SnapshotError::Header(format!("unknown representation code {repr_code}")))?;
    let len = rank.components(dim) * grid.points();
    let scalars = match repr {
        Repr::Physical => len,
        Repr::Spectral => 2 * len,
    };
    let mut bytes = vec![0u8; scalars * 8];
    r.read_exact(&mut bytes)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(SnapshotError::Header("trailing bytes after samples".into()));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(match repr {
        Repr::Physical => Field::from_physical(grid, rank, vals),
        Repr::Spectral => Field::from_spectral(
            grid,
            rank,
            vals.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect(),
        ),
    })
}

pub fn save_field(path: &Path, f: &Field) -> Result<(), SnapshotError> {
    write_field(BufWriter::new(File::create(path)?), f)?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<Field, SnapshotError> {
    read_field(BufReader::new(File::open(path)?))
}

/// Metadata stored next to a snapshot. `created_unix` is the only
/// non-reproducible value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub t: f64,
    pub mu: Option<f64>,
    pub provenance: serde_json::Value,
    pub created_unix: u64,
}

impl Sidecar {
    pub fn new(t: f64, mu: Option<f64>, provenance: serde_json::Value) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Sidecar {
            t,
            mu,
            provenance,
            created_unix,
        }
    }
}

/// `field.vesf` → `field.json`.
pub fn sidecar_path(snapshot: &Path) -> PathBuf {
    snapshot.with_extension("json")
}

pub fn save_sidecar(snapshot: &Path, meta: &Sidecar) -> Result<(), SnapshotError> {
    let mut w = BufWriter::new(File::create(sidecar_path(snapshot))?);
    serde_json::to_writer_pretty(&mut w, meta)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_sidecar(snapshot: &Path) -> Result<Sidecar, SnapshotError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(
        sidecar_path(snapshot),
    )?))?)
}
