use crate::error::{Error, Result};

pub const DEFAULT_PRECISION: u8 = 16;

/// Highest precision the 32-bit rANS coder accepts (keeps `L >> precision ≥ 8`).
pub const MAX_PRECISION: u8 = 20;

const MAGIC: &[u8; 4] = b"PMF1";

/// Fixed-point code probabilities: every entry is at least 1 and the entries
/// sum to exactly `2^precision`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PmfTable {
    freqs: Vec<u32>,
    precision: u8,
}

impl PmfTable {
    /// Largest-remainder apportionment of `2^precision` with a floor of 1.
    pub fn from_probabilities(raw: &[f64], precision: u8) -> Result<Self> {
        check_precision(precision)?;
        let total = 1u64 << precision;
        if raw.is_empty() {
            return Err(Error::EmptySupport);
        }
        if raw.len() as u64 > total {
            return Err(Error::DictionaryTooLarge);
        }
        if raw.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput);
        }
        if !(raw.iter().sum::<f64>() > 0.0) {
            return Err(Error::EmptySupport);
        }

        let n = raw.len();
        let mut fixed = vec![false; n];
        let mut freqs = vec![0u32; n];
        let mut budget = total;
        // Entries whose quota falls below 1 are pinned at 1; pinning lowers the
        // remaining quotas, so repeat until stable.
        loop {
            let mass: f64 = (0..n).filter(|&i| !fixed[i]).map(|i| raw[i]).sum();
            let mut pinned = false;
            for i in 0..n {
                if !fixed[i] && (mass <= 0.0 || raw[i] / mass * (budget as f64) < 1.0) {
                    fixed[i] = true;
                    freqs[i] = 1;
                    budget -= 1;
                    pinned = true;
                }
            }
            if !pinned {
                break;
            }
        }

        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        if free.is_empty() {
            // Only possible when every code is pinned; give the rest to the mode.
            let mode = (0..n).fold(0, |m, i| if raw[i] > raw[m] { i } else { m });
            freqs[mode] += budget as u32;
            return Ok(PmfTable { freqs, precision });
        }
        let mass: f64 = free.iter().map(|&i| raw[i]).sum();
        let mut remainders = Vec::with_capacity(free.len());
        let mut assigned = 0u64;
        for &i in &free {
            let quota = raw[i] / mass * budget as f64;
            let floor = (quota.floor() as u64).max(1);
            freqs[i] = floor as u32;
            assigned += floor;
            remainders.push((quota - floor as f64, i));
        }
        let mut leftover = budget as i64 - assigned as i64;
        if leftover > 0 {
            remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut k = 0;
            while leftover > 0 {
                freqs[remainders[k % remainders.len()].1] += 1;
                leftover -= 1;
                k += 1;
            }
        } else if leftover < 0 {
            remainders.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut k = 0;
            while leftover < 0 {
                let i = remainders[k % remainders.len()].1;
                if freqs[i] > 1 {
                    freqs[i] -= 1;
                    leftover += 1;
                }
                k += 1;
            }
        }
        Ok(PmfTable { freqs, precision })
    }

    /// Wraps frequencies that already satisfy the table invariants.
    pub fn from_frequencies(freqs: Vec<u32>, precision: u8) -> Result<Self> {
        check_precision(precision)?;
        if freqs.is_empty() || freqs.contains(&0) {
            return Err(Error::InvalidInput);
        }
        let sum: u64 = freqs.iter().map(|&f| f as u64).sum();
        if sum != 1u64 << precision {
            return Err(Error::InvalidInput);
        }
        Ok(PmfTable { freqs, precision })
    }

    /// Precision giving at least 16 slots per code, between 16 and the coder maximum.
    pub fn precision_for(codes: usize) -> u8 {
        let bits = usize::BITS - codes.max(1).saturating_sub(1).leading_zeros();
        (bits as u8 + 4).clamp(DEFAULT_PRECISION, MAX_PRECISION)
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    pub fn precision(&self) -> u8 {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn total(&self) -> u32 {
        1u32 << self.precision
    }

    pub fn probability(&self, code: usize) -> f64 {
        self.freqs[code] as f64 / self.total() as f64
    }

    /// Self-information of `code` in bits.
    pub fn bits(&self, code: u32) -> Result<f64> {
        let f = *self.freqs.get(code as usize).ok_or(Error::CodeOutOfRange { code, size: self.len() })?;
        Ok(self.precision as f64 - (f as f64).log2())
    }

    /// Shannon entropy of the fixed-point distribution in bits.
    pub fn entropy_bits(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let p = self.probability(i);
                -p * p.log2()
            })
            .sum()
    }

    /// `"PMF1"`, u8 precision, u32 count, then the frequencies, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * self.len());
        out.extend_from_slice(MAGIC);
        out.push(self.precision);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for f in &self.freqs {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 {
            return Err(Error::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        let precision = bytes[4];
        let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let body = &bytes[9..];
        if body.len() != 4 * count {
            return Err(Error::Truncated);
        }
        let freqs = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        PmfTable::from_frequencies(freqs, precision)
    }
}

fn check_precision(precision: u8) -> Result<()> {
    if precision == 0 || precision > MAX_PRECISION {
        return Err(Error::InvalidParameter(format!("precision {precision} outside 1..={MAX_PRECISION}")));
    }
    Ok(())
}
