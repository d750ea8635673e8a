//! Binary snapshot and operator dumps, written atomically.
//!
//! Snapshot (`DWV1`): magic, `u32` version, `u64 n_r`, `u64 n_s`, `f64 t`,
//! then the `zeta`, `h v1`, `h v2` grids ring-major, then `psi`; all little-endian.
//! Operator (`DTN1`): magic, `u64 n_s`, then the matrix row-major as `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::exterior::{ExteriorField, SimState};
use crate::interior::DtnOperator;
use crate::swe::Params;
use crate::trace::TraceField;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"DWV1";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const DTN_MAGIC: &[u8; 4] = b"DTN1";

/// Write `bytes` to a temporary file next to `path` and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn put_f64s(buf: &mut Vec<u8>, xs: impl IntoIterator<Item = f64>) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
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
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_snapshot(state: &SimState, p: &Params) -> Vec<u8> {
    let f = &state.field;
    let mut buf = Vec::with_capacity(32 + 8 * (3 * f.u.len() + state.psi.len()));
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(f.n_r as u64).to_le_bytes());
    buf.extend_from_slice(&(f.n_s as u64).to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    for comp in f.conserved(p) {
        put_f64s(&mut buf, comp);
    }
    put_f64s(&mut buf, state.psi.values.iter().copied());
    buf
}

/// Decode a snapshot; the curve length is not stored and must be supplied.
pub fn decode_snapshot(bytes: &[u8], p: &Params, curve_length: f64) -> Result<SimState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a DWV1 snapshot".into()));
    }
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let n_r = r.u64()? as usize;
    let n_s = r.u64()? as usize;
    let t = r.f64()?;
    let n = n_r.checked_mul(n_s).ok_or_else(|| Error::Format("grid size overflow".into()))?;
    let zeta = r.f64s(n)?;
    let hv1 = r.f64s(n)?;
    let hv2 = r.f64s(n)?;
    let psi = r.f64s(n_s)?;
    r.finish()?;
    let field = ExteriorField::from_conserved(n_r, n_s, &zeta, &hv1, &hv2, p)?;
    Ok(SimState { field, psi: TraceField::new(psi, curve_length), t, step: 0 })
}

pub fn write_snapshot(path: &Path, state: &SimState, p: &Params) -> Result<()> {
    write_atomic(path, &encode_snapshot(state, p))
}

pub fn read_snapshot(path: &Path, p: &Params, curve_length: f64) -> Result<SimState> {
    decode_snapshot(&fs::read(path)?, p, curve_length)
}

pub fn encode_dtn(op: &DtnOperator) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * op.matrix().len());
    buf.extend_from_slice(DTN_MAGIC);
    buf.extend_from_slice(&(op.n_s() as u64).to_le_bytes());
    put_f64s(&mut buf, op.matrix().iter().copied());
    buf
}

/// Returns `(n_s, row-major matrix)`.
pub fn decode_dtn(bytes: &[u8]) -> Result<(usize, Vec<f64>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != DTN_MAGIC {
        return Err(Error::Format("not a DTN1 dump".into()));
    }
    let n = r.u64()? as usize;
    let m = r.f64s(n.checked_mul(n).ok_or_else(|| Error::Format("size overflow".into()))?)?;
    r.finish()?;
    Ok((n, m))
}

pub fn write_dtn(path: &Path, op: &DtnOperator) -> Result<()> {
    write_atomic(path, &encode_dtn(op))
}
