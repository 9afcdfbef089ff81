//! Byte-oriented rANS over a pool of fixed-point tables.
//!
//! The state lives in `[L, 256·L)` with `L = 2^23`. The encoder walks the
//! symbols in reverse and emits low bytes; the buffer is reversed at the end
//! so the decoder reads the 4-byte state first and then moves forward.

use sha2::{Digest, Sha256};

use crate::entropy_model::PmfTable;
use crate::error::{Error, Result};

pub const RANS_L: u32 = 1 << 23;

/// Tables addressed by index, with cumulative frequencies and a content hash.
#[derive(Clone, Debug)]
pub struct TablePool {
    tables: Vec<PmfTable>,
    cum: Vec<Vec<u32>>,
    hash: [u8; 32],
}

impl TablePool {
    pub fn new(tables: Vec<PmfTable>) -> Self {
        TablePool::with_salt(&[], tables)
    }

    /// The hash covers `salt` followed by every table's serialization.
    pub fn with_salt(salt: &[u8], tables: Vec<PmfTable>) -> Self {
        let mut h = Sha256::new();
        h.update(salt);
        for t in &tables {
            h.update(t.to_bytes());
        }
        let cum = tables
            .iter()
            .map(|t| {
                let mut c = Vec::with_capacity(t.len() + 1);
                let mut acc = 0u32;
                c.push(0);
                for &f in t.freqs() {
                    acc += f;
                    c.push(acc);
                }
                c
            })
            .collect();
        TablePool { tables, cum, hash: h.finalize().into() }
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn tables(&self) -> &[PmfTable] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Sum of `−log₂ P` over the stream, using the pool's fixed-point tables.
    pub fn cross_entropy_bits(&self, codes: &[u32], table_ids: &[usize]) -> Result<f64> {
        check_stream(codes.len(), table_ids, self)?;
        let mut bits = 0.0;
        for (i, &c) in codes.iter().enumerate() {
            bits += self.tables[table_for(table_ids, i)].bits(c)?;
        }
        Ok(bits)
    }
}

fn table_for(table_ids: &[usize], i: usize) -> usize {
    if table_ids.len() == 1 {
        table_ids[0]
    } else {
        table_ids[i]
    }
}

fn check_stream(count: usize, table_ids: &[usize], pool: &TablePool) -> Result<()> {
    if count > 0 && table_ids.len() != 1 && table_ids.len() != count {
        return Err(Error::InvalidInput);
    }
    if table_ids.iter().any(|&t| t >= pool.len()) {
        return Err(Error::InvalidInput);
    }
    Ok(())
}

/// Encodes `codes`; `table_ids` holds one shared id or one id per code.
pub fn rans_encode(codes: &[u32], table_ids: &[usize], pool: &TablePool) -> Result<Vec<u8>> {
    check_stream(codes.len(), table_ids, pool)?;
    for (i, &c) in codes.iter().enumerate() {
        let t = &pool.tables[table_for(table_ids, i)];
        if c as usize >= t.len() {
            return Err(Error::CodeOutOfRange { code: c, size: t.len() });
        }
    }
    let mut out = Vec::with_capacity(codes.len() / 2 + 4);
    let mut x = RANS_L;
    for (i, &c) in codes.iter().enumerate().rev() {
        let id = table_for(table_ids, i);
        let prec = pool.tables[id].precision() as u32;
        let start = pool.cum[id][c as usize];
        let freq = pool.cum[id][c as usize + 1] - start;
        let x_max = (((RANS_L >> prec) as u64) << 8) * freq as u64;
        while x as u64 >= x_max {
            out.push((x & 0xff) as u8);
            x >>= 8;
        }
        x = ((x / freq) << prec) + (x % freq) + start;
    }
    out.extend_from_slice(&x.to_be_bytes());
    out.reverse();
    Ok(out)
}

/// Decodes `count` codes. A stream that ends early is an underflow; one whose
/// final state or length is inconsistent is corrupt.
pub fn rans_decode(payload: &[u8], count: usize, table_ids: &[usize], pool: &TablePool) -> Result<Vec<u32>> {
    check_stream(count, table_ids, pool)?;
    if payload.len() < 4 {
        return Err(Error::Underflow);
    }
    let mut x = u32::from_le_bytes(payload[..4].try_into().unwrap());
    let mut pos = 4;
    let mut codes = Vec::with_capacity(count);
    for i in 0..count {
        let id = table_for(table_ids, i);
        let prec = pool.tables[id].precision() as u32;
        let cum = &pool.cum[id];
        let slot = x & ((1u32 << prec) - 1);
        let sym = cum.partition_point(|&c| c <= slot) - 1;
        let start = cum[sym];
        let freq = cum[sym + 1] - start;
        x = freq * (x >> prec) + slot - start;
        while x < RANS_L {
            let b = *payload.get(pos).ok_or(Error::Underflow)?;
            x = (x << 8) | b as u32;
            pos += 1;
        }
        codes.push(sym as u32);
    }
    if x != RANS_L || pos != payload.len() {
        return Err(Error::CorruptPayload);
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_codes(t: &PmfTable, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let cum: Vec<u32> = t
            .freqs()
            .iter()
            .scan(0, |s, &f| {
                *s += f;
                Some(*s)
            })
            .collect();
        (0..n).map(|_| cum.partition_point(|&c| c <= rng.gen_range(0..t.total())) as u32).collect()
    }

    #[test]
    fn empty_stream_is_bare_state() {
        let pool = TablePool::new(vec![PmfTable::from_probabilities(&[1.0, 1.0], 16).unwrap()]);
        let bytes = rans_encode(&[], &[0], &pool).unwrap();
        assert_eq!(bytes.len(), 4);
        assert_eq!(rans_decode(&bytes, 0, &[0], &pool).unwrap(), Vec::<u32>::new());
    }

    #[test]
    fn fair_coin_costs_one_bit() {
        let pool = TablePool::new(vec![PmfTable::from_probabilities(&[0.5, 0.5], 16).unwrap()]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let codes: Vec<u32> = (0..8000).map(|_| rng.gen_range(0..2)).collect();
        let bytes = rans_encode(&codes, &[0], &pool).unwrap();
        assert!(bytes.len() as f64 <= 1000.0 * 1.002 + 4.0, "{}", bytes.len());
        assert_eq!(rans_decode(&bytes, codes.len(), &[0], &pool).unwrap(), codes);
    }

    #[test]
    fn single_code_table_emits_nothing() {
        let pool = TablePool::new(vec![PmfTable::from_probabilities(&[1.0], 16).unwrap()]);
        let bytes = rans_encode(&[0; 1000], &[0], &pool).unwrap();
        assert_eq!(bytes.len(), 4);
        assert_eq!(rans_decode(&bytes, 1000, &[0], &pool).unwrap(), vec![0; 1000]);
    }

    #[test]
    fn out_of_range_rejected_before_output() {
        let pool = TablePool::new(vec![PmfTable::from_probabilities(&[1.0, 1.0], 16).unwrap()]);
        assert_eq!(rans_encode(&[0, 2], &[0], &pool).unwrap_err(), Error::CodeOutOfRange { code: 2, size: 2 });
        assert_eq!(rans_encode(&[0], &[1], &pool).unwrap_err(), Error::InvalidInput);
    }

    #[test]
    fn truncation_and_corruption_are_reported() {
        let t = PmfTable::from_probabilities(&[0.7, 0.2, 0.1], 16).unwrap();
        let pool = TablePool::new(vec![t.clone()]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let codes = sample_codes(&t, 5000, &mut rng);
        let bytes = rans_encode(&codes, &[0], &pool).unwrap();
        assert_eq!(rans_decode(&bytes[..bytes.len() / 2], codes.len(), &[0], &pool).unwrap_err(), Error::Underflow);
        assert_eq!(rans_decode(&bytes[..3], codes.len(), &[0], &pool).unwrap_err(), Error::Underflow);
        for pos in [0, 5, bytes.len() / 2, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x5a;
            if let Ok(out) = rans_decode(&bad, codes.len(), &[0], &pool) {
                assert_ne!(out, codes);
            }
        }
    }

    #[test]
    fn mixed_precision_pool() {
        let a = PmfTable::from_probabilities(&[0.9, 0.1], 20).unwrap();
        let b = PmfTable::from_probabilities(&[0.2, 0.3, 0.5], 12).unwrap();
        let pool = TablePool::new(vec![a, b]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ids: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..2)).collect();
        let codes: Vec<u32> = ids.iter().map(|&i| rng.gen_range(0..(2 + i as u32))).collect();
        let bytes = rans_encode(&codes, &ids, &pool).unwrap();
        assert_eq!(rans_decode(&bytes, codes.len(), &ids, &pool).unwrap(), codes);
    }

    #[test]
    fn hash_depends_on_tables_and_salt() {
        let t = PmfTable::from_probabilities(&[0.5, 0.5], 16).unwrap();
        let u = PmfTable::from_probabilities(&[0.6, 0.4], 16).unwrap();
        let a = TablePool::new(vec![t.clone()]).hash();
        assert_eq!(a, TablePool::new(vec![t.clone()]).hash());
        assert_ne!(a, TablePool::new(vec![u]).hash());
        assert_ne!(a, TablePool::with_salt(b"x", vec![t]).hash());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn roundtrip(raw in prop::collection::vec(0.0f64..1.0, 1..64), n in 0usize..3000, seed in any::<u64>()) {
            prop_assume!(raw.iter().sum::<f64>() > 0.0);
            let t = PmfTable::from_probabilities(&raw, 16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let codes = sample_codes(&t, n, &mut rng);
            let pool = TablePool::new(vec![t]);
            let bytes = rans_encode(&codes, &[0], &pool).unwrap();
            prop_assert_eq!(rans_decode(&bytes, codes.len(), &[0], &pool).unwrap(), codes);
        }
    }
}
