//! Cell probabilities over scalar bins and lattice cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Density1d, Gaussian, PmfTable};
use crate::error::{Error, Result};
use crate::lattice::{Dictionary, LatticeKind};
use crate::quadrature;

const HEX_TOLERANCE: f64 = 1e-8;
const MIN_MC_SAMPLES: usize = 100_000;
const MC_CHUNK: usize = 1 << 16;

/// Raw bin masses `F(c + w/2) − F(c − w/2)` for each 1D center.
pub fn scalar_masses(density: &dyn Density1d, bin_width: f64, dict: &Dictionary) -> Result<Vec<f64>> {
    if !(bin_width.is_finite() && bin_width > 0.0) || dict.lattice().kind() != LatticeKind::Integer1D {
        return Err(Error::InvalidInput);
    }
    let half = 0.5 * bin_width;
    Ok(dict
        .centers()
        .iter()
        .map(|c| {
            let x = c.coords()[0];
            density.mass(x - half, x + half)
        })
        .collect())
}

pub fn pmf_scalar(density: &dyn Density1d, bin_width: f64, dict: &Dictionary, precision: u8) -> Result<PmfTable> {
    PmfTable::from_probabilities(&scalar_masses(density, bin_width, dict)?, precision)
}

/// Raw probabilities of every hexagonal cell under the product density `dx ⊗ dy`.
///
/// Each flat-top hexagon is split into its lower and upper halves. For a fixed
/// height `t` the cell spans `|x − cx| ≤ a − |t|/√3`, so the inner integral is
/// a CDF difference; the outer integral over `t` is adaptive.
pub fn hex_cell_masses(dx: &dyn Density1d, dy: &dyn Density1d, dict: &Dictionary) -> Result<Vec<f64>> {
    hex_masses_about(dx, dy, dict, [0; 3])
}

/// Cell masses with center coordinates taken relative to the lattice point
/// with coefficients `origin`.
fn hex_masses_about(dx: &dyn Density1d, dy: &dyn Density1d, dict: &Dictionary, origin: [i64; 3]) -> Result<Vec<f64>> {
    if dict.lattice().kind() != LatticeKind::Hex2D {
        return Err(Error::InvalidInput);
    }
    let a = dict.lattice().side_length();
    let h = 0.5 * 3f64.sqrt() * a;
    let inv_sqrt3 = 1.0 / 3f64.sqrt();
    let lattice = *dict.lattice();
    dict.centers()
        .par_iter()
        .map(|c| {
            let k = c.coeffs();
            let rel = lattice.point([k[0] - origin[0], k[1] - origin[1], 0]);
            let (cx, cy) = (rel.coords()[0], rel.coords()[1]);
            let breaks: Vec<f64> = dy.breakpoints().iter().map(|b| b - cy).filter(|t| t.abs() < h).collect();
            let slice = |t: f64| {
                let half_width = a - t.abs() * inv_sqrt3;
                dy.pdf(cy + t) * dx.mass(cx - half_width, cx + half_width)
            };
            let lower = quadrature::integrate_pieces(&slice, -h, 0.0, &breaks, 0.5 * HEX_TOLERANCE, quadrature::DEFAULT_MAX_DEPTH)?;
            let upper = quadrature::integrate_pieces(&slice, 0.0, h, &breaks, 0.5 * HEX_TOLERANCE, quadrature::DEFAULT_MAX_DEPTH)?;
            Ok((lower + upper).max(0.0))
        })
        .collect()
}

pub fn pmf_hex_with(dx: &dyn Density1d, dy: &dyn Density1d, dict: &Dictionary, precision: u8) -> Result<PmfTable> {
    PmfTable::from_probabilities(&hex_cell_masses(dx, dy, dict)?, precision)
}

/// Hexagonal table for a product Gaussian.
///
/// The integration runs relative to the lattice point nearest `μ`, so moving
/// `μ` by a lattice vector permutes the table exactly.
pub fn pmf_hex(mu: [f64; 2], sigma: [f64; 2], dict: &Dictionary, precision: u8) -> Result<PmfTable> {
    let anchor = dict.lattice().nearest_point(&mu)?;
    let gx = Gaussian::new(mu[0] - anchor.coords()[0], sigma[0]);
    let gy = Gaussian::new(mu[1] - anchor.coords()[1], sigma[1]);
    PmfTable::from_probabilities(&hex_masses_about(&gx, &gy, dict, anchor.coeffs())?, precision)
}

/// Monte Carlo hit counts of each dictionary cell under a product density.
///
/// Samples are drawn in fixed-size chunks, chunk `k` from ChaCha8 stream `k`
/// of `seed`, so counts do not depend on the thread count.
pub fn mc_cell_counts(densities: &[&dyn Density1d], dict: &Dictionary, samples: usize, seed: u64) -> Result<Vec<u64>> {
    if densities.len() != dict.lattice().dim() {
        return Err(Error::InvalidInput);
    }
    if samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidParameter(format!("at least {MIN_MC_SAMPLES} samples required, got {samples}")));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let m = dict.len();
    (0..chunks)
        .into_par_iter()
        .map(|k| -> Result<Vec<u64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut counts = vec![0u64; m];
            let n = MC_CHUNK.min(samples - k * MC_CHUNK);
            let mut x = [0.0; 3];
            for _ in 0..n {
                for (slot, d) in x.iter_mut().zip(densities) {
                    *slot = d.sample(&mut rng);
                }
                counts[dict.quantize(&x[..densities.len()])?] += 1;
            }
            Ok(counts)
        })
        .try_reduce(
            || vec![0u64; m],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

pub fn pmf_mc(densities: &[&dyn Density1d], dict: &Dictionary, samples: usize, seed: u64, precision: u8) -> Result<PmfTable> {
    let counts = mc_cell_counts(densities, dict, samples, seed)?;
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    PmfTable::from_probabilities(&raw, precision)
}

/// Monte Carlo table for a product Gaussian; `σ` is clamped to `SIGMA_MIN`.
pub fn pmf_mc_gaussian(mu: &[f64], sigma: &[f64], dict: &Dictionary, samples: usize, seed: u64, precision: u8) -> Result<PmfTable> {
    if mu.len() != sigma.len() {
        return Err(Error::InvalidInput);
    }
    let gs: Vec<Gaussian> = mu.iter().zip(sigma).map(|(&m, &s)| Gaussian::new(m, s)).collect();
    let refs: Vec<&dyn Density1d> = gs.iter().map(|g| g as &dyn Density1d).collect();
    pmf_mc(&refs, dict, samples, seed, precision)
}

/// `−Σ log₂ P(code)` under the fixed-point tables. `tables` holds either one
/// shared table or one table per code.
pub fn rate_lower_bound(codes: &[u32], tables: &[&PmfTable]) -> Result<f64> {
    if codes.is_empty() {
        return Ok(0.0);
    }
    if tables.len() != 1 && tables.len() != codes.len() {
        return Err(Error::InvalidInput);
    }
    let mut bits = 0.0;
    for (i, &c) in codes.iter().enumerate() {
        let t = if tables.len() == 1 { tables[0] } else { tables[i] };
        bits += t.bits(c)?;
    }
    Ok(bits)
}
