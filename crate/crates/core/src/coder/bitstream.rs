//! Container layout: magic, version, lattice, volume, bounds, table hash,
//! packed step codes, code count, payload length, payload. Little-endian.

use crate::error::{Error, Result};
use crate::lattice::LatticeKind;

pub const MAGIC: &[u8; 4] = b"LTC1";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub lattice: LatticeKind,
    pub volume: f64,
    /// One `(lo, hi)` pair per lattice dimension.
    pub bounds: Vec<(f64, f64)>,
    pub table_hash: [u8; 32],
    pub step_code_f: u8,
    pub step_code_h: u8,
    pub shifts_enabled: bool,
    pub code_count: u32,
}

impl Header {
    fn packed_steps(&self) -> Result<u8> {
        if self.step_code_f > 7 || self.step_code_h > 7 {
            return Err(Error::InvalidParameter("step codes are 3-bit".into()));
        }
        Ok(self.step_code_f | (self.step_code_h << 3) | ((self.shifts_enabled as u8) << 6))
    }
}

pub fn write_bitstream(header: &Header, payload: &[u8]) -> Result<Vec<u8>> {
    if header.bounds.len() != header.lattice.dim() {
        return Err(Error::InvalidInput);
    }
    let steps = header.packed_steps()?;
    let payload_len = u32::try_from(payload.len()).map_err(|_| Error::InvalidInput)?;
    let mut out = Vec::with_capacity(64 + 16 * header.bounds.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.push(header.lattice.id());
    out.extend_from_slice(&header.volume.to_le_bytes());
    for &(lo, hi) in &header.bounds {
        out.extend_from_slice(&lo.to_le_bytes());
        out.extend_from_slice(&hi.to_le_bytes());
    }
    out.extend_from_slice(&header.table_hash);
    out.push(steps);
    out.extend_from_slice(&header.code_count.to_le_bytes());
    out.extend_from_slice(&payload_len.to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_bitstream(bytes: &[u8]) -> Result<(Header, Vec<u8>)> {
    let (header, payload, used) = read_bitstream_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::InvalidParameter("trailing bytes after payload".into()));
    }
    Ok((header, payload))
}

/// Parses one bitstream at the start of `bytes` and returns how many bytes it spans.
pub fn read_bitstream_prefix(bytes: &[u8]) -> Result<(Header, Vec<u8>, usize)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    if r.u8()? != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion);
    }
    let lattice = LatticeKind::from_id(r.u8()?)?;
    let volume = r.f64()?;
    let mut bounds = Vec::with_capacity(lattice.dim());
    for _ in 0..lattice.dim() {
        let lo = r.f64()?;
        let hi = r.f64()?;
        bounds.push((lo, hi));
    }
    let table_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let steps = r.u8()?;
    if steps & 0x80 != 0 {
        return Err(Error::InvalidParameter("reserved step bit set".into()));
    }
    let code_count = r.u32()?;
    let len = r.u32()? as usize;
    let payload = r.take(len)?.to_vec();
    let header = Header {
        lattice,
        volume,
        bounds,
        table_hash,
        step_code_f: steps & 7,
        step_code_h: (steps >> 3) & 7,
        shifts_enabled: steps & 0x40 != 0,
        code_count,
    };
    Ok((header, payload, r.pos))
}
