//! Decoder-side latent refinement along entropy gradients.
//!
//! The encoder tries eight step sizes `ρ` for `ŷ ← ŷ + ρ·∇_ŷ(−ln p)` and
//! signals the winner in three bits; the decoder recomputes the gradient from
//! data it already has and replays the same shift. Gradients are in nats.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::entropy_model::{Density1d, GaussianField};
use crate::error::{Error, Result};

/// Step multipliers, in code order. Code 0 is the unshifted latent.
pub const STEP_MULTIPLIERS: [f64; 8] = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 4.0];

/// Central-difference step for the factorized-model gradient.
pub const SIDE_GRADIENT_STEP: f64 = 1e-4;

/// Candidates tried by each baseline, signalled in 10 bits.
pub const BASELINE_BUDGET: usize = 1024;

/// Eight selectable step sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCandidates {
    values: [f64; 8],
}

impl StepCandidates {
    /// `STEP_MULTIPLIERS × scale`.
    pub fn from_scale(scale: f64) -> Self {
        StepCandidates { values: STEP_MULTIPLIERS.map(|m| m * scale) }
    }

    /// Scale `1 / mean(1/σ²)`, the inverse of the mean gradient curvature.
    pub fn for_field(field: &GaussianField) -> Self {
        let n = field.len().max(1) as f64;
        let curvature = field.sigma().iter().map(|s| 1.0 / (s * s)).sum::<f64>() / n;
        StepCandidates::from_scale(finite_or_one(1.0 / curvature))
    }

    /// Scale `1 / mean(g²)` for a gradient with no associated σ; 1 if `g` vanishes.
    pub fn for_gradient(g: &[f64]) -> Self {
        let fisher = g.iter().map(|v| v * v).sum::<f64>() / g.len().max(1) as f64;
        StepCandidates::from_scale(finite_or_one(1.0 / fisher))
    }

    /// Every candidate is zero.
    pub fn zero_only() -> Self {
        StepCandidates { values: [0.0; 8] }
    }

    pub fn values(&self) -> &[f64; 8] {
        &self.values
    }

    pub fn value(&self, code: u8) -> Result<f64> {
        self.values.get(code as usize).copied().ok_or(Error::InvalidParameter(format!("step code {code} out of range")))
    }
}

fn finite_or_one(scale: f64) -> f64 {
    if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientPair {
    /// `∇_ŷ(−ln p_h)` against `∇_ŷ d`.
    MainEntropyVsDistortion,
    /// `∇_ẑ(−ln p_f)` against `∇_ẑ(−ln p_h)`.
    SideEntropyVsMainEntropy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientReport {
    pub pearson_r: f64,
    pub n: usize,
    pub pair: GradientPair,
}

/// A reconstruction map from latents to signal.
pub trait Decoder: Sync {
    fn decode(&self, y: &[f64]) -> Vec<f64>;

    /// Decodes each column of `ys`.
    fn decode_batch(&self, ys: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = ys.column_iter().map(|c| DVector::from_vec(self.decode(c.as_slice()))).collect();
        DMatrix::from_columns(&cols)
    }

    /// `∇_y MSE(x, decode(y))`.
    fn distortion_gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64>;

    /// `MSE(x, decode(y + ρ·d))` for each `ρ`.
    fn line_distortions(&self, x: &[f64], y: &[f64], d: &[f64], rhos: &[f64]) -> Vec<f64> {
        rhos.iter().map(|&r| mse(x, &self.decode(&shift(y, d, r)))).collect()
    }
}

pub struct IdentityDecoder;

impl Decoder for IdentityDecoder {
    fn decode(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn distortion_gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        y.iter().zip(x).map(|(a, b)| 2.0 * (a - b) / n).collect()
    }
}

/// `x̂ = offset + A·y`.
#[derive(Clone, Debug)]
pub struct AffineDecoder {
    a: DMatrix<f64>,
    offset: f64,
}

impl AffineDecoder {
    pub fn new(a: DMatrix<f64>, offset: f64) -> Self {
        AffineDecoder { a, offset }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }
}

impl Decoder for AffineDecoder {
    fn decode(&self, y: &[f64]) -> Vec<f64> {
        let mut out = &self.a * DVector::from_column_slice(y);
        out.add_scalar_mut(self.offset);
        out.data.into()
    }

    fn decode_batch(&self, ys: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.a * ys;
        out.add_scalar_mut(self.offset);
        out
    }

    fn distortion_gradient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let r = DVector::from_vec(self.decode(y)) - DVector::from_column_slice(x);
        (self.a.tr_mul(&r) * (2.0 / n)).data.into()
    }

    /// Closed form: the error is affine in `ρ`, so one product per direction suffices.
    fn line_distortions(&self, x: &[f64], y: &[f64], d: &[f64], rhos: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let r = DVector::from_column_slice(x) - DVector::from_vec(self.decode(y));
        let q = &self.a * DVector::from_column_slice(d);
        let (rr, rq, qq) = (r.dot(&r), r.dot(&q), q.dot(&q));
        rhos.iter().map(|&p| ((rr - 2.0 * p * rq + p * p * qq) / n).max(0.0)).collect()
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len().max(1) as f64
}

/// PSNR in dB for peak 1.
pub fn psnr(mse: f64) -> f64 {
    -10.0 * mse.log10()
}

/// `10·log₁₀(before/after)`; zero when nothing changed.
pub fn gain_db(before: f64, after: f64) -> f64 {
    if before == after {
        0.0
    } else {
        10.0 * (before / after).log10()
    }
}

/// `y + ρ·g`, the single arithmetic path shared by encoder and decoder.
pub fn shift(y: &[f64], g: &[f64], rho: f64) -> Vec<f64> {
    if rho == 0.0 {
        return y.to_vec();
    }
    y.iter().zip(g).map(|(a, b)| a + rho * b).collect()
}

/// `∇_y(−ln p_h)`, element `i` = `(y_i − μ_i)/σ_i²`.
pub fn entropy_gradient(y: &[f64], field: &GaussianField) -> Result<Vec<f64>> {
    if y.len() != field.len() {
        return Err(Error::InvalidInput);
    }
    Ok(y.iter().zip(field.mu()).zip(field.sigma()).map(|((y, m), s)| (y - m) / (s * s)).collect())
}

/// Gradient of `−ln P(bin)` for a side latent, where the bin is `[z − w/2, z + w/2]`
/// under `pdf`, by central differences.
pub fn side_gradient(z: &[f64], pdf: &dyn Density1d, width: f64) -> Vec<f64> {
    let h = SIDE_GRADIENT_STEP;
    let nll = |t: f64| -pdf.mass(t - 0.5 * width, t + 0.5 * width).max(f64::MIN_POSITIVE).ln();
    z.iter().map(|&t| (nll(t + h) - nll(t - h)) / (2.0 * h)).collect()
}

/// Bits of `y` under the field with scalar bins of width `w`.
pub fn gaussian_bits(y: &[f64], field: &GaussianField, width: f64) -> Result<f64> {
    if y.len() != field.len() {
        return Err(Error::InvalidInput);
    }
    Ok((0..y.len()).map(|i| -field.element(i).mass(y[i] - 0.5 * width, y[i] + 0.5 * width).max(f64::MIN_POSITIVE).log2()).sum())
}

/// Index of the smallest value; the lowest index wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Result of the encoder-side main-latent search.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftOutcome {
    pub code: u8,
    pub shifted: Vec<f64>,
    pub distortion_before: f64,
    pub distortion_after: f64,
}

impl ShiftOutcome {
    pub fn gain_db(&self) -> f64 {
        gain_db(self.distortion_before, self.distortion_after)
    }
}

/// Tries every candidate along `g` and keeps the one with least distortion.
pub fn search_along(x: &[f64], y_hat: &[f64], g: &[f64], decoder: &dyn Decoder, candidates: &StepCandidates) -> Result<ShiftOutcome> {
    if y_hat.len() != g.len() {
        return Err(Error::InvalidInput);
    }
    let ys = DMatrix::from_fn(
        y_hat.len(),
        8,
        |i, k| if candidates.values[k] == 0.0 { y_hat[i] } else { y_hat[i] + candidates.values[k] * g[i] },
    );
    let out = decoder.decode_batch(&ys);
    let d: Vec<f64> = out.column_iter().map(|c| mse(x, c.as_slice())).collect();
    let before = mse(x, &decoder.decode(y_hat));
    let code = argmin(&d);
    // The batch product may differ from a single decode in the last bits, so
    // the guard compares what the decoder will actually produce.
    let shifted = shift(y_hat, g, candidates.values[code]);
    let after = mse(x, &decoder.decode(&shifted));
    if code != 0 && after > before {
        return Ok(ShiftOutcome { code: 0, shifted: y_hat.to_vec(), distortion_before: before, distortion_after: before });
    }
    Ok(ShiftOutcome { code: code as u8, shifted, distortion_before: before, distortion_after: after })
}

/// Main-latent search with the entropy-gradient proxy.
pub fn search_step_main(
    x: &[f64],
    y_hat: &[f64],
    field: &GaussianField,
    decoder: &dyn Decoder,
    candidates: &StepCandidates,
) -> Result<(u8, Vec<f64>)> {
    let o = main_shift(x, y_hat, field, decoder, candidates)?;
    Ok((o.code, o.shifted))
}

pub fn main_shift(
    x: &[f64],
    y_hat: &[f64],
    field: &GaussianField,
    decoder: &dyn Decoder,
    candidates: &StepCandidates,
) -> Result<ShiftOutcome> {
    let g = entropy_gradient(y_hat, field)?;
    search_along(x, y_hat, &g, decoder, candidates)
}

/// Decoder-side replay of a main shift.
pub fn apply_shift_decode(y_hat: &[f64], field: &GaussianField, code: u8, candidates: &StepCandidates) -> Result<Vec<f64>> {
    let rho = candidates.value(code)?;
    let g = entropy_gradient(y_hat, field)?;
    Ok(shift(y_hat, &g, rho))
}

/// Side-latent search: shifts `ẑ` along `g` and keeps the candidate with the
/// lowest `cost`, lowest code on ties.
pub fn search_side_by<F>(z_hat: &[f64], g: &[f64], candidates: &StepCandidates, cost: F) -> Result<(u8, Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut costs = Vec::with_capacity(8);
    for &rho in candidates.values() {
        costs.push(cost(&shift(z_hat, g, rho))?);
    }
    let code = argmin(&costs);
    Ok((code as u8, shift(z_hat, g, candidates.values[code]), costs[code]))
}

/// Side-latent search against the main bitlength of `ŷ` under the field the
/// hyper decoder derives from the shifted `ẑ`. `width` is the scalar bin width
/// for both the side gradient and the main bits.
pub fn search_step_side<H>(
    z_hat: &[f64],
    factorized: &dyn Density1d,
    width: f64,
    y_hat: &[f64],
    hyper_decoder: H,
    candidates: &StepCandidates,
) -> Result<(u8, Vec<f64>)>
where
    H: Fn(&[f64]) -> Result<GaussianField>,
{
    let g = side_gradient(z_hat, factorized, width);
    let (code, shifted, _) = search_side_by(z_hat, &g, candidates, |z| gaussian_bits(y_hat, &hyper_decoder(z)?, width))?;
    Ok((code, shifted))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    Scalar,
    Sign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOutcome {
    /// 10-bit candidate index.
    pub signal: u16,
    pub shifted: Vec<f64>,
    pub gain_db: f64,
}

/// Grid step `ρ_k = (k − 512)·span/1024`; `k = 512` is the zero shift.
pub fn baseline_rho(k: usize, span: f64) -> f64 {
    (k as f64 - (BASELINE_BUDGET / 2) as f64) * span / BASELINE_BUDGET as f64
}

fn random_perturbation(len: usize, span: f64, seed: u64, k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let normal = Normal::new(0.0, span).unwrap();
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Candidate `k` of a baseline, exactly as a decoder would rebuild it.
pub fn baseline_candidate(kind: BaselineKind, y_hat: &[f64], field: &GaussianField, span: f64, seed: u64, k: usize) -> Vec<f64> {
    match kind {
        BaselineKind::Scalar => {
            let r = baseline_rho(k, span);
            y_hat.iter().map(|y| y + r).collect()
        }
        BaselineKind::Sign => {
            let r = baseline_rho(k, span);
            y_hat.iter().zip(field.mu()).map(|(y, m)| y - r * sign(y - m)).collect()
        }
        BaselineKind::Random if k == 0 => y_hat.to_vec(),
        BaselineKind::Random => {
            let e = random_perturbation(y_hat.len(), span, seed, k);
            y_hat.iter().zip(&e).map(|(y, e)| y + e).collect()
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const RANDOM_BATCH: usize = 128;

/// Best of [`BASELINE_BUDGET`] candidates of one baseline by distortion.
/// `span` sets the grid range for Scalar/Sign and the noise scale for Random.
pub fn baseline_shifts(
    kind: BaselineKind,
    x: &[f64],
    y_hat: &[f64],
    field: &GaussianField,
    decoder: &dyn Decoder,
    span: f64,
    seed: u64,
) -> Result<BaselineOutcome> {
    if y_hat.len() != field.len() {
        return Err(Error::InvalidInput);
    }
    let identity = match kind {
        BaselineKind::Random => 0,
        _ => BASELINE_BUDGET / 2,
    };
    let d: Vec<f64> = match kind {
        BaselineKind::Scalar | BaselineKind::Sign => {
            let dir: Vec<f64> = match kind {
                BaselineKind::Scalar => vec![1.0; y_hat.len()],
                _ => y_hat.iter().zip(field.mu()).map(|(y, m)| -sign(y - m)).collect(),
            };
            let rhos: Vec<f64> = (0..BASELINE_BUDGET).map(|k| baseline_rho(k, span)).collect();
            decoder.line_distortions(x, y_hat, &dir, &rhos)
        }
        BaselineKind::Random => {
            let mut d = Vec::with_capacity(BASELINE_BUDGET);
            for start in (0..BASELINE_BUDGET).step_by(RANDOM_BATCH) {
                let cols: Vec<DVector<f64>> = (start..start + RANDOM_BATCH)
                    .map(|k| DVector::from_vec(baseline_candidate(kind, y_hat, field, span, seed, k)))
                    .collect();
                let out = decoder.decode_batch(&DMatrix::from_columns(&cols));
                d.extend(out.column_iter().map(|c| mse(x, c.as_slice())));
            }
            d
        }
    };
    let before = mse(x, &decoder.decode(y_hat));
    let mut k = argmin(&d);
    let mut shifted = baseline_candidate(kind, y_hat, field, span, seed, k);
    let mut after = mse(x, &decoder.decode(&shifted));
    if after > before {
        k = identity;
        shifted = y_hat.to_vec();
        after = before;
    }
    Ok(BaselineOutcome { signal: k as u16, shifted, gain_db: gain_db(before, after) })
}

/// Gains of the proxy-gradient shift and of the same search along the true
/// descent direction `−∇_ŷ d`, rescaled to the proxy's RMS.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueGradientReport {
    pub proxy_gain_db: f64,
    pub true_gain_db: f64,
}

pub fn true_gradient_bound(
    x: &[f64],
    y_hat: &[f64],
    field: &GaussianField,
    decoder: &dyn Decoder,
    candidates: &StepCandidates,
) -> Result<TrueGradientReport> {
    let proxy = entropy_gradient(y_hat, field)?;
    let grad = decoder.distortion_gradient(x, y_hat);
    let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len().max(1) as f64).sqrt();
    let (rp, rt) = (rms(&proxy), rms(&grad));
    let scale = if rt > 0.0 {
        if rp > 0.0 {
            rp / rt
        } else {
            1.0 / rt
        }
    } else {
        0.0
    };
    let descent: Vec<f64> = grad.iter().map(|v| -v * scale).collect();
    let p = search_along(x, y_hat, &proxy, decoder, candidates)?;
    let t = search_along(x, y_hat, &descent, decoder, candidates)?;
    Ok(TrueGradientReport { proxy_gain_db: p.gain_db(), true_gain_db: t.gain_db() })
}

/// Pearson correlation of the flattened gradient pairs over all instances.
pub fn correlation_report(instances: &[(Vec<f64>, Vec<f64>)], pair: GradientPair) -> Result<GradientReport> {
    let mut n = 0usize;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (a, b) in instances {
        if a.len() != b.len() {
            return Err(Error::InvalidInput);
        }
        n += a.len();
        sa += a.iter().sum::<f64>();
        sb += b.iter().sum::<f64>();
    }
    if n < 2 {
        return Err(Error::InvalidInput);
    }
    let (ma, mb) = (sa / n as f64, sb / n as f64);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (a, b) in instances {
        for (p, q) in a.iter().zip(b) {
            let (da, db) = (p - ma, q - mb);
            cov += da * db;
            va += da * da;
            vb += db * db;
        }
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Degenerate);
    }
    let pearson_r = (cov / (va * vb).sqrt()).clamp(-1.0, 1.0);
    Ok(GradientReport { pearson_r, n, pair })
}

/// `sign(c)·(|c| + α/|c|)` for nonzero `c`; zeros stay zero.
pub fn dequant_shift_traditional(coeffs: &[i64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be a nonnegative number, got {alpha}")));
    }
    Ok(coeffs
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                let m = c.unsigned_abs() as f64;
                sign(c as f64) * (m + alpha / m)
            }
        })
        .collect())
}

/// Rate under the model `a·ln|ŷ| + b` per nonzero value; zeros cost nothing.
pub fn log_rate_model(values: &[f64], a: f64, b: f64) -> f64 {
    values.iter().filter(|v| **v != 0.0).map(|v| a * v.abs().ln() + b).sum()
}
