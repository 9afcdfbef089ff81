//! Rate-distortion simulation of lattice quantizers and Bjøntegaard deltas.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coder::{rans_encode, TablePool};
use crate::entropy_model::{Density1d, Gaussian, PmfTable, Uniform, MAX_PRECISION};
use crate::error::{Error, Result};
use crate::lattice::{LatticeKind, LatticeSpec};
use crate::quadrature::integrate_pieces;

const SIM_CHUNK: usize = 1 << 16;

/// A scalar source, drawn i.i.d. along every lattice axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceKind {
    Uniform { half_width: f64 },
    Gaussian { sigma: f64 },
}

impl SourceKind {
    /// Half-width for uniform sources, `σ` for Gaussian ones.
    pub fn scale(&self) -> f64 {
        match *self {
            SourceKind::Uniform { half_width } => half_width,
            SourceKind::Gaussian { sigma } => sigma,
        }
    }

    pub fn density(&self) -> Result<Box<dyn Density1d>> {
        Ok(match *self {
            SourceKind::Uniform { half_width } => Box::new(Uniform::new(-half_width, half_width)?),
            SourceKind::Gaussian { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidParameter(format!("gaussian scale must be positive, got {sigma}")));
                }
                Box::new(Gaussian::new(0.0, sigma))
            }
        })
    }
}

/// One simulated operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdRow {
    pub lattice: LatticeKind,
    pub scale: f64,
    pub volume: f64,
    /// Bits per scalar sample.
    pub rate_bps: f64,
    /// Per-dimension mean squared error.
    pub mse: f64,
    pub psnr_db: f64,
}

/// PSNR in dB for peak amplitude 1.
pub fn psnr_db(mse: f64) -> f64 {
    -10.0 * mse.log10()
}

/// Rate and per-dimension MSE of quantizing `samples` vectors drawn from
/// `source` to the nearest point of the lattice.
///
/// The rate is the cross-entropy of the emitted codes under a table built from
/// their histogram; with `measured` it is the rANS payload length instead.
pub fn simulate_point(
    kind: LatticeKind,
    volume: f64,
    source: &dyn Density1d,
    samples: usize,
    seed: u64,
    measured: bool,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::EmptySimulation);
    }
    let spec = LatticeSpec::new(kind, volume)?;
    let dim = kind.dim();
    let chunks = samples.div_ceil(SIM_CHUNK);
    type Partial = (HashMap<[i64; 3], u64>, f64, Vec<[i64; 3]>);
    let parts: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|k| -> Result<Partial> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let n = SIM_CHUNK.min(samples - k * SIM_CHUNK);
            let mut counts = HashMap::new();
            let mut sse = 0.0;
            let mut seq = Vec::with_capacity(if measured { n } else { 0 });
            let mut x = [0.0; 3];
            for _ in 0..n {
                for slot in x.iter_mut().take(dim) {
                    *slot = source.sample(&mut rng);
                }
                let p = spec.nearest_point(&x[..dim])?;
                sse += x[..dim].iter().zip(p.coords()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                *counts.entry(p.coeffs()).or_insert(0) += 1;
                if measured {
                    seq.push(p.coeffs());
                }
            }
            Ok((counts, sse, seq))
        })
        .collect::<Result<_>>()?;

    let mut counts: HashMap<[i64; 3], u64> = HashMap::new();
    let mut sse = 0.0;
    for (c, s, _) in &parts {
        sse += s;
        for (k, v) in c {
            *counts.entry(*k).or_insert(0) += v;
        }
    }
    let mut cells: Vec<([i64; 3], u64)> = counts.into_iter().collect();
    cells.sort_unstable();
    let raw: Vec<f64> = cells.iter().map(|c| c.1 as f64).collect();
    let table = PmfTable::from_probabilities(&raw, MAX_PRECISION)?;
    let scalars = (samples * dim) as f64;
    let mse = sse / scalars;
    let rate = if measured {
        let index: HashMap<[i64; 3], u32> = cells.iter().enumerate().map(|(i, c)| (c.0, i as u32)).collect();
        let codes: Vec<u32> = parts.iter().flat_map(|p| p.2.iter().map(|c| index[c])).collect();
        let pool = TablePool::new(vec![table]);
        8.0 * rans_encode(&codes, &[0], &pool)?.len() as f64 / scalars
    } else {
        let mut bits = 0.0;
        for (i, c) in cells.iter().enumerate() {
            bits += c.1 as f64 * table.bits(i as u32)?;
        }
        bits / scalars
    };
    Ok((rate, mse))
}

/// A sweep over sources, lattices and cell volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct RdPlan {
    pub sources: Vec<SourceKind>,
    pub lattices: Vec<LatticeKind>,
    pub volumes: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub measured: bool,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one sweep cell; independent of evaluation order.
pub fn cell_seed(seed: u64, kind: LatticeKind, scale: f64, volume: f64) -> u64 {
    splitmix(splitmix(splitmix(seed ^ kind.id() as u64) ^ scale.to_bits()) ^ volume.to_bits())
}

/// Runs every cell of the plan, sorted by lattice, then scale, then volume.
pub fn simulate_rd(plan: &RdPlan) -> Result<Vec<RdRow>> {
    if plan.samples == 0 {
        return Err(Error::EmptySimulation);
    }
    let mut cells = Vec::new();
    for &lattice in &plan.lattices {
        for source in &plan.sources {
            for &volume in &plan.volumes {
                cells.push((lattice, *source, volume));
            }
        }
    }
    let mut rows: Vec<RdRow> = cells
        .par_iter()
        .map(|&(lattice, source, volume)| {
            let density = source.density()?;
            let seed = cell_seed(plan.seed, lattice, source.scale(), volume);
            let (rate_bps, mse) = simulate_point(lattice, volume, density.as_ref(), plan.samples, seed, plan.measured)?;
            Ok(RdRow { lattice, scale: source.scale(), volume, rate_bps, mse, psnr_db: psnr_db(mse) })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.lattice.cmp(&b.lattice).then(a.scale.total_cmp(&b.scale)).then(a.volume.total_cmp(&b.volume)));
    Ok(rows)
}

/// Rate/quality points of one codec, sorted by rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    pub label: String,
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    /// `points` are `(rate, quality)` pairs; rates must be positive and distinct.
    pub fn new(label: impl Into<String>, mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|&(r, q)| !(r > 0.0 && r.is_finite() && q.is_finite())) {
            return Err(Error::InvalidParameter("rates must be positive and finite".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter("rates must be strictly increasing".into()));
        }
        Ok(RdCurve { label: label.into(), points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Least-squares cubic through `(x, y)`, coefficients in increasing degree.
fn cubic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    let v = DMatrix::from_fn(x.len(), 4, |i, j| x[i].powi(j as i32));
    let svd = v.svd(true, true);
    let c = svd.solve(&DVector::from_column_slice(y), 1e-12).map_err(|_| Error::Degenerate)?;
    Ok([c[0], c[1], c[2], c[3]])
}

fn cubic_integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let prim = |t: f64| c[0] * t + c[1] * t * t / 2.0 + c[2] * t.powi(3) / 3.0 + c[3] * t.powi(4) / 4.0;
    prim(hi) - prim(lo)
}

fn cubic_monotone(c: &[f64; 4], lo: f64, hi: f64) -> bool {
    let d = |t: f64| c[1] + 2.0 * c[2] * t + 3.0 * c[3] * t * t;
    let samples: Vec<f64> = (0..=200).map(|i| d(lo + (hi - lo) * i as f64 / 200.0)).collect();
    samples.iter().all(|&s| s >= 0.0) || samples.iter().all(|&s| s <= 0.0)
}

/// Fritsch–Carlson slopes for monotone cubic Hermite interpolation.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    d
}

fn pchip_eval(x: &[f64], y: &[f64], d: &[f64], t: f64) -> f64 {
    let i = (x.partition_point(|&v| v <= t).max(1) - 1).min(x.len() - 2);
    let h = x[i + 1] - x[i];
    let s = (t - x[i]) / h;
    let (h00, h10, h01, h11) =
        ((1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s), s * (1.0 - s) * (1.0 - s), s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
    h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1]
}

/// Integral of the fitted curve `y(x)` over `[lo, hi]`: the least-squares
/// cubic when it is monotone there, else a monotone Hermite interpolant.
fn fitted_integral(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let c = cubic_fit(x, y)?;
    if cubic_monotone(&c, lo, hi) {
        return Ok(cubic_integral(&c, lo, hi));
    }
    let mut pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Degenerate);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let d = pchip_slopes(&xs, &ys);
    // Simpson is exact on each cubic piece once split at the knots.
    integrate_pieces(&|t| pchip_eval(&xs, &ys, &d, t), lo, hi, &xs, 1e-12, 40)
}

const MIN_BD_POINTS: usize = 4;

fn overlap(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let lo = a.iter().copied().fold(f64::INFINITY, f64::min).max(b.iter().copied().fold(f64::INFINITY, f64::min));
    let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max).min(b.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(Error::NoOverlap)
    }
}

fn check_points(c: &RdCurve) -> Result<()> {
    if c.points.len() < MIN_BD_POINTS {
        return Err(Error::InvalidParameter(format!("curve '{}' needs at least {MIN_BD_POINTS} points", c.label)));
    }
    Ok(())
}

/// Average rate difference of `test` against `anchor` at equal quality, in
/// percent; negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    check_points(anchor)?;
    check_points(test)?;
    let (qa, ra): (Vec<f64>, Vec<f64>) = anchor.points.iter().map(|&(r, q)| (q, r.ln())).unzip();
    let (qt, rt): (Vec<f64>, Vec<f64>) = test.points.iter().map(|&(r, q)| (q, r.ln())).unzip();
    let (lo, hi) = overlap(&qa, &qt)?;
    let avg = (fitted_integral(&qt, &rt, lo, hi)? - fitted_integral(&qa, &ra, lo, hi)?) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}

/// Average quality difference of `test` against `anchor` at equal rate, in dB.
pub fn bd_psnr(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    check_points(anchor)?;
    check_points(test)?;
    let (ra, qa): (Vec<f64>, Vec<f64>) = anchor.points.iter().map(|&(r, q)| (r.ln(), q)).unzip();
    let (rt, qt): (Vec<f64>, Vec<f64>) = test.points.iter().map(|&(r, q)| (r.ln(), q)).unzip();
    let (lo, hi) = overlap(&ra, &rt)?;
    Ok((fitted_integral(&rt, &qt, lo, hi)? - fitted_integral(&ra, &qa, lo, hi)?) / (hi - lo))
}

/// Piecewise-linear interpolation of points sorted by `x`; `None` outside their span.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    let i = (points.partition_point(|p| p.0 <= x).max(1) - 1).min(points.len().saturating_sub(2));
    let (x0, y0) = points[i];
    let Some(&(x1, y1)) = points.get(i + 1) else { return Some(y0) };
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}
