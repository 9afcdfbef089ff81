//! Dictionaries and PMF tables shared by every codec instance.
//!
//! Main-latent tables depend only on the lattice, the cell volume and the
//! σ-bin, because main latents are quantized after subtracting μ. Side tables
//! depend on the lattice, the volume and the side bounds. Both are built once
//! per process and reused.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::entropy_model::{pmf_hex, pmf_hex_with, pmf_mc, pmf_mc_gaussian, pmf_scalar, Density1d, FactorizedPdf, Gaussian, PmfTable};
use crate::error::Result;
use crate::lattice::{enumerate_dictionary, Dictionary, LatticeKind, LatticeSpec};

/// Width of a σ-bin in `ln σ`.
pub const LOG_SIGMA_BIN: f64 = 0.1;

/// Dictionary half-width in units of the bin's σ.
pub const DICT_SIGMAS: f64 = 6.0;

/// Smallest dictionary half-width, so latents the model under-predicts still
/// land inside the box.
pub const DICT_MIN_HALF_WIDTH: f64 = 6.0;

/// Upper bound on the box size, in cells.
pub const MAX_BOX_CELLS: f64 = (1u32 << 15) as f64;

/// Samples behind each Monte Carlo table.
pub const MC_TABLE_SAMPLES: usize = 1 << 20;

pub fn sigma_bin(sigma: f64) -> i32 {
    (sigma.ln() / LOG_SIGMA_BIN).floor() as i32
}

/// Representative σ of a bin: the geometric centre of its range.
pub fn bin_sigma(bin: i32) -> f64 {
    (LOG_SIGMA_BIN * (bin as f64 + 0.5)).exp()
}

#[derive(Debug)]
pub struct CodecTable {
    pub dict: Dictionary,
    pub table: PmfTable,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Role {
    Side(Vec<u64>),
    Main(i32),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Key {
    kind: LatticeKind,
    volume: u64,
    role: Role,
}

fn cache() -> &'static Mutex<HashMap<Key, Arc<CodecTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<CodecTable>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cached(key: Key, build: impl FnOnce() -> Result<CodecTable>) -> Result<Arc<CodecTable>> {
    if let Some(t) = cache().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    // Built outside the lock; a racing duplicate is identical and simply dropped.
    let t = Arc::new(build()?);
    Ok(cache().lock().unwrap().entry(key).or_insert(t).clone())
}

fn mc_seed(kind: LatticeKind, volume: f64, tag: u64) -> u64 {
    volume.to_bits() ^ (kind.id() as u64) << 56 ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Half-width of the main dictionary box for a bin.
pub fn main_half_width(kind: LatticeKind, volume: f64, sigma: f64) -> f64 {
    let cap = 0.5 * (MAX_BOX_CELLS * volume).powf(1.0 / kind.dim() as f64);
    (DICT_SIGMAS * sigma).max(DICT_MIN_HALF_WIDTH).min(cap)
}

/// Table for zero-mean main residuals of one σ-bin.
pub fn main_table(kind: LatticeKind, volume: f64, bin: i32) -> Result<Arc<CodecTable>> {
    let key = Key { kind, volume: volume.to_bits(), role: Role::Main(bin) };
    cached(key, || {
        let spec = LatticeSpec::new(kind, volume)?;
        let sigma = bin_sigma(bin);
        let h = main_half_width(kind, volume, sigma);
        let dict = enumerate_dictionary(&spec, &vec![(-h, h); kind.dim()])?;
        let precision = PmfTable::precision_for(dict.len());
        let table = match kind {
            LatticeKind::Integer1D => pmf_scalar(&Gaussian::new(0.0, sigma), volume, &dict, precision)?,
            LatticeKind::Hex2D => pmf_hex([0.0; 2], [sigma; 2], &dict, precision)?,
            LatticeKind::TruncOct3D => {
                pmf_mc_gaussian(&[0.0; 3], &[sigma; 3], &dict, MC_TABLE_SAMPLES, mc_seed(kind, volume, bin as u64), precision)?
            }
        };
        Ok(CodecTable { dict, table })
    })
}

/// Table for side latents under the shared factorized density.
///
/// Every model uses the same side density, so it is not part of the key.
pub fn side_table(kind: LatticeKind, volume: f64, bounds: &[(f64, f64)], pdf: &FactorizedPdf) -> Result<Arc<CodecTable>> {
    let bits = bounds.iter().flat_map(|&(lo, hi)| [lo.to_bits(), hi.to_bits()]).collect();
    let key = Key { kind, volume: volume.to_bits(), role: Role::Side(bits) };
    cached(key, || {
        let spec = LatticeSpec::new(kind, volume)?;
        let dict = enumerate_dictionary(&spec, bounds)?;
        let precision = PmfTable::precision_for(dict.len());
        let table = match kind {
            LatticeKind::Integer1D => pmf_scalar(pdf, volume, &dict, precision)?,
            LatticeKind::Hex2D => pmf_hex_with(pdf, pdf, &dict, precision)?,
            LatticeKind::TruncOct3D => {
                let d: [&dyn Density1d; 3] = [pdf, pdf, pdf];
                pmf_mc(&d, &dict, MC_TABLE_SAMPLES, mc_seed(kind, volume, u64::MAX), precision)?
            }
        };
        Ok(CodecTable { dict, table })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_their_sigma() {
        for s in [0.3, 0.95, 1.0, 2.999, 17.0] {
            let b = sigma_bin(s);
            let lo = (LOG_SIGMA_BIN * b as f64).exp();
            let hi = (LOG_SIGMA_BIN * (b + 1) as f64).exp();
            assert!(lo <= s && s < hi * (1.0 + 1e-12));
            assert!(lo < bin_sigma(b) && bin_sigma(b) < hi);
        }
    }

    #[test]
    fn tables_are_shared() {
        let a = main_table(LatticeKind::Hex2D, 1.0, 3).unwrap();
        let b = main_table(LatticeKind::Hex2D, 1.0, 3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(a.dict.len(), a.table.len());
    }

    #[test]
    fn box_is_capped() {
        let h = main_half_width(LatticeKind::TruncOct3D, 1.0, 30.0);
        assert!((2.0 * h).powi(3) <= MAX_BOX_CELLS * 1.0 + 1e-6);
        assert_eq!(main_half_width(LatticeKind::Integer1D, 1.0, 0.3), DICT_MIN_HALF_WIDTH);
    }
}
