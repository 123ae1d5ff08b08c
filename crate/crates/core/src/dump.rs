//! Binary path dump.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     8  p          f64
//!      8     8  q          f64
//!     16     8  horizon    u64
//!     24     8  n_paths    u64
//!     32     8  seed       u64
//!     40     …  n_paths records of ceil(horizon / 8) bytes
//! ```
//!
//! Within a record, step `k` (1-based) is bit `(k-1) % 8` of byte
//! `(k-1) / 8`, least significant bit first; a set bit means `X_k = +1`.
//! Unused high bits of the last byte are zero.

use std::io::{Read, Write};

use crate::error::{ErwError, Result};
use crate::walk::PathBatch;

pub const HEADER_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpHeader {
    pub p: f64,
    pub q: f64,
    pub horizon: u64,
    pub n_paths: u64,
    pub seed: u64,
}

impl DumpHeader {
    pub fn record_len(&self) -> usize {
        (self.horizon as usize).div_ceil(8)
    }
}

/// Trajectories read back from a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDump {
    pub header: DumpHeader,
    positions: Vec<i32>,
}

impl PathDump {
    pub fn path(&self, i: usize) -> &[i32] {
        let stride = self.header.horizon as usize + 1;
        &self.positions[i * stride..(i + 1) * stride]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i32]> + '_ {
        self.positions.chunks_exact(self.header.horizon as usize + 1)
    }
}

pub fn pack_steps(path: &[i32], record: &mut [u8]) {
    record.fill(0);
    for (k, w) in path.windows(2).enumerate() {
        if w[1] > w[0] {
            record[k / 8] |= 1 << (k % 8);
        }
    }
}

pub fn write_dump<W: Write>(mut out: W, batch: &PathBatch) -> Result<()> {
    let params = batch.params();
    let header = DumpHeader {
        p: params.p,
        q: params.q,
        horizon: params.horizon as u64,
        n_paths: batch.n_paths() as u64,
        seed: params.master_seed,
    };
    out.write_all(&header.p.to_le_bytes())?;
    out.write_all(&header.q.to_le_bytes())?;
    out.write_all(&header.horizon.to_le_bytes())?;
    out.write_all(&header.n_paths.to_le_bytes())?;
    out.write_all(&header.seed.to_le_bytes())?;
    let mut record = vec![0u8; header.record_len()];
    for path in batch.iter() {
        pack_steps(path, &mut record);
        out.write_all(&record)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_dump<R: Read>(mut input: R) -> Result<PathDump> {
    let header = DumpHeader {
        p: f64::from_bits(read_u64(&mut input)?),
        q: f64::from_bits(read_u64(&mut input)?),
        horizon: read_u64(&mut input)?,
        n_paths: read_u64(&mut input)?,
        seed: read_u64(&mut input)?,
    };
    if header.horizon == 0 {
        return Err(ErwError::Format("horizon must be positive".into()));
    }
    let horizon = header.horizon as usize;
    let mut record = vec![0u8; header.record_len()];
    let mut positions = Vec::with_capacity((horizon + 1) * header.n_paths as usize);
    for i in 0..header.n_paths {
        input
            .read_exact(&mut record)
            .map_err(|e| ErwError::Format(format!("record {i}: {e}")))?;
        let mut s = 0i32;
        positions.push(s);
        for k in 0..horizon {
            s += if record[k / 8] >> (k % 8) & 1 == 1 { 1 } else { -1 };
            positions.push(s);
        }
        let used = horizon % 8;
        if used != 0 && record[record.len() - 1] >> used != 0 {
            return Err(ErwError::Format(format!("record {i}: padding bits set")));
        }
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(ErwError::Format("trailing bytes after last record".into()));
    }
    Ok(PathDump { header, positions })
}
