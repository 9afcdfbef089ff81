//! Analytic stand-in for a hyperprior image codec.
//!
//! The source is `x = 0.5 + A·y_src` with `A` an `n×m` matrix of orthonormal
//! columns, so the decoder `x̂ = 0.5 + A·ŷ` has latent-domain and signal-domain
//! MSE equal up to the part of `x` outside the range of `A`. Side latents are
//! `z = Qᵀy/c`; the hyper map gives `μ = c·Q·ẑ` and `ln σ = b + W·ẑ`, with the
//! biases `b` spread over `[ln 0.3, ln 3]`. Sources are drawn from the model
//! itself: `z_t ~ N(0, I)`, `(μ_t, σ_t) = H(z_t)`, `y_src ~ N(μ_t, σ_t²)`.
//!
//! Main latents are quantized around `μ` and grouped into lattice tuples by
//! σ-bin; side latents are quantized absolutely under a fixed factorized
//! density. The encoder is rate-aware: it shrinks each latent toward `μ` by
//! `2λσ²/(1 + 2λσ²)` before quantizing.

mod experiments;
mod tables;
pub mod tensor;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::coder::{rans_decode, rans_encode, read_bitstream, write_bitstream, Header, TablePool};
use crate::entropy_model::{FactorizedPdf, GaussianField, SIGMA_MIN};
use crate::error::{Error, Result};
use crate::latent_shift::{apply_shift_decode, main_shift, mse, psnr, shift, side_gradient, AffineDecoder, Decoder, StepCandidates};
use crate::lattice::{LatticeKind, LatticeSpec};

pub use experiments::{baseline_gains, gradient_pairs, vq_vs_sq_bdrate, BaselineGains};
pub use tables::{bin_sigma, sigma_bin, LOG_SIGMA_BIN, MC_TABLE_SAMPLES};
pub use tensor::Tensor;

pub const SOURCE_OFFSET: f64 = 0.5;
/// Gain `c` of the μ-block of the hyper map.
pub const MU_GAIN: f64 = 4.0;
pub const SIGMA_LOW: f64 = 0.3;
pub const SIGMA_HIGH: f64 = 3.0;
pub const SIGMA_MAX: f64 = 1e3;
/// Standard deviation of `W·ẑ` for a unit-variance `ẑ`.
pub const SIGMA_COUPLING: f64 = 0.1;
/// Side latents are coded on `[−6, 6]` per axis.
pub const SIDE_BOUND: f64 = 6.0;
pub const DEFAULT_LAMBDA: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub seed: u64,
    /// Signal length.
    pub n: usize,
    /// Main latent count.
    pub m: usize,
    /// Side latent count.
    pub side: usize,
    /// Rate weight of the encoder; `None` quantizes the latents unshrunk.
    pub lambda: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { seed: 0, n: 4096, m: 1024, side: 64, lambda: Some(DEFAULT_LAMBDA) }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        if self.side == 0 || self.side > self.m || self.m > self.n {
            return Err(Error::InvalidParameter(format!("need 1 ≤ side ≤ m ≤ n, got side={} m={} n={}", self.side, self.m, self.n)));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!("lambda must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Bytes identifying the decoder side of the model; part of every
    /// stream's table hash. λ only steers the encoder and is left out.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut f = b"SYN1".to_vec();
        for v in [self.seed, self.n as u64, self.m as u64, self.side as u64] {
            f.extend_from_slice(&v.to_le_bytes());
        }
        f
    }
}

/// Orthonormal columns from a seeded Gaussian matrix by two CholeskyQR passes.
fn orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let mut q = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    for _ in 0..2 {
        let gram = q.transpose() * &q;
        let l = gram.cholesky().ok_or(Error::Degenerate)?.unpack();
        let l_inv = l.solve_lower_triangular(&DMatrix::identity(cols, cols)).ok_or(Error::Degenerate)?;
        q = &q * l_inv.transpose();
    }
    Ok(q)
}

pub struct SyntheticModel {
    config: ModelConfig,
    decoder: AffineDecoder,
    q: DMatrix<f64>,
    sigma_bias: DVector<f64>,
    sigma_mix: DMatrix<f64>,
    side_pdf: FactorizedPdf,
}

impl SyntheticModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a = orthonormal_columns(config.n, config.m, &mut rng)?;
        let q = orthonormal_columns(config.m, config.side, &mut rng)?;
        let (lo, hi) = (SIGMA_LOW.ln(), SIGMA_HIGH.ln());
        let sigma_bias = DVector::from_fn(config.m, |_, _| rng.gen_range(lo..hi));
        let w = SIGMA_COUPLING / (config.side as f64).sqrt();
        let sigma_mix = DMatrix::from_fn(config.m, config.side, |_, _| w * rng.sample::<f64, _>(StandardNormal));
        Ok(SyntheticModel {
            config,
            decoder: AffineDecoder::new(a, SOURCE_OFFSET),
            q,
            sigma_bias,
            sigma_mix,
            side_pdf: FactorizedPdf::gaussian(0.0, 1.0, SIDE_BOUND)?,
        })
    }

    /// A process-wide instance per configuration; construction costs a few
    /// large matrix products.
    pub fn shared(config: ModelConfig) -> Result<Arc<Self>> {
        static MODELS: OnceLock<Mutex<HashMap<Vec<u8>, Arc<SyntheticModel>>>> = OnceLock::new();
        let mut key = config.fingerprint();
        key.extend_from_slice(&config.lambda.map_or(0, f64::to_bits).to_le_bytes());
        let models = MODELS.get_or_init(Default::default);
        if let Some(m) = models.lock().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let m = Arc::new(SyntheticModel::new(config)?);
        Ok(models.lock().unwrap().entry(key).or_insert(m).clone())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn decoder(&self) -> &AffineDecoder {
        &self.decoder
    }

    pub fn side_pdf(&self) -> &FactorizedPdf {
        &self.side_pdf
    }

    /// `y = Aᵀ(x − 0.5)`, the pseudo-inverse of the decoder.
    pub fn analysis(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.config.n || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput);
        }
        let centred = DVector::from_iterator(x.len(), x.iter().map(|v| v - SOURCE_OFFSET));
        Ok(self.decoder.matrix().tr_mul(&centred).data.into())
    }

    pub fn synthesis(&self, y: &[f64]) -> Vec<f64> {
        self.decoder.decode(y)
    }

    pub fn side_down(&self, y: &[f64]) -> Vec<f64> {
        (self.q.tr_mul(&DVector::from_column_slice(y)) / MU_GAIN).data.into()
    }

    /// `(μ, σ) = H(ẑ)`, σ clamped to `[SIGMA_MIN, SIGMA_MAX]`.
    pub fn hyper(&self, z_hat: &[f64]) -> Result<GaussianField> {
        if z_hat.len() != self.config.side {
            return Err(Error::InvalidInput);
        }
        let z = DVector::from_column_slice(z_hat);
        let mu = &self.q * &z * MU_GAIN;
        let log_sigma = &self.sigma_mix * &z + &self.sigma_bias;
        let sigma = log_sigma.iter().map(|l| l.exp().clamp(SIGMA_MIN, SIGMA_MAX)).collect();
        GaussianField::new(mu.data.into(), sigma)
    }

    /// Latents handed to the quantizer: `μ + (y − μ)·2λσ²/(1 + 2λσ²)`.
    pub fn encoder_latents(&self, y_src: &[f64], field: &GaussianField) -> Vec<f64> {
        let Some(lambda) = self.config.lambda else { return y_src.to_vec() };
        y_src
            .iter()
            .zip(field.mu())
            .zip(field.sigma())
            .map(|((y, m), s)| {
                let k = 2.0 * lambda * s * s;
                m + (y - m) * k / (1.0 + k)
            })
            .collect()
    }

    /// One source signal of the model family.
    pub fn sample_source(&self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let z: Vec<f64> = (0..self.config.side).map(|_| rng.sample(StandardNormal)).collect();
        let field = self.hyper(&z)?;
        let y: Vec<f64> = field.mu().iter().zip(field.sigma()).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(self.synthesis(&y))
    }

    /// `∇_ẑ(−ln p_h(ŷ; H(ẑ)))` for the continuous Gaussian density, ignoring the σ clamp.
    pub fn main_entropy_side_gradient(&self, z_hat: &[f64], y_hat: &[f64]) -> Result<Vec<f64>> {
        let field = self.hyper(z_hat)?;
        if y_hat.len() != field.len() {
            return Err(Error::InvalidInput);
        }
        let mut d_mu = DVector::zeros(field.len());
        let mut d_log_sigma = DVector::zeros(field.len());
        for i in 0..field.len() {
            let r = (y_hat[i] - field.mu()[i]) / field.sigma()[i];
            d_mu[i] = -r / field.sigma()[i];
            d_log_sigma[i] = 1.0 - r * r;
        }
        let g = self.q.tr_mul(&d_mu) * MU_GAIN + self.sigma_mix.tr_mul(&d_log_sigma);
        Ok(g.data.into())
    }
}

/// Latent groups, each coded with one table.
struct Layout {
    groups: Vec<Vec<usize>>,
    slots: Vec<usize>,
    tables: Vec<Arc<tables::CodecTable>>,
}

impl Layout {
    fn push(&mut self, group: Vec<usize>, slot: usize) {
        self.groups.push(group);
        self.slots.push(slot);
    }

    /// Codes and reconstructions of `values − offset`.
    fn quantize(&self, values: &[f64], offset: Option<&[f64]>) -> Result<(Vec<u32>, Vec<f64>)> {
        let mut codes = Vec::with_capacity(self.groups.len());
        let mut recon = vec![0.0; values.len()];
        let mut r = [0.0; 3];
        for (g, &slot) in self.groups.iter().zip(&self.slots) {
            for (k, &i) in g.iter().enumerate() {
                r[k] = values[i] - offset.map_or(0.0, |o| o[i]);
            }
            let t = &self.tables[slot];
            let code = t.dict.quantize(&r[..g.len()])?;
            codes.push(code as u32);
            self.place(g, t, code, offset, &mut recon);
        }
        Ok((codes, recon))
    }

    fn place(&self, g: &[usize], t: &tables::CodecTable, code: usize, offset: Option<&[f64]>, out: &mut [f64]) {
        let c = t.dict.center(code).coords();
        for (k, &i) in g.iter().enumerate() {
            out[i] = offset.map_or(0.0, |o| o[i]) + c[k];
        }
    }

    fn reconstruct(&self, codes: &[u32], offset: Option<&[f64]>, len: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; len];
        for ((g, &slot), &code) in self.groups.iter().zip(&self.slots).zip(codes) {
            let t = &self.tables[slot];
            if code as usize >= t.dict.len() {
                return Err(Error::CorruptPayload);
            }
            self.place(g, t, code as usize, offset, &mut out);
        }
        Ok(out)
    }

    fn bits(&self, codes: &[u32]) -> Result<f64> {
        codes.iter().zip(&self.slots).map(|(&c, &s)| self.tables[s].table.bits(c)).sum()
    }

    fn pool(&self) -> TablePool {
        TablePool::new(self.tables.iter().map(|t| t.table.clone()).collect())
    }
}

/// Per-axis cell size of a lattice of the given volume.
pub fn axis_step(kind: LatticeKind, volume: f64) -> f64 {
    volume.powf(1.0 / kind.dim() as f64)
}

fn side_layout(kind: LatticeKind, volume: f64, bounds: &[(f64, f64)], len: usize, pdf: &FactorizedPdf) -> Result<Layout> {
    let v = kind.dim();
    if bounds.len() != v {
        return Err(Error::InvalidInput);
    }
    let tuple = tables::side_table(kind, volume, bounds, pdf)?;
    let mut layout = Layout { groups: Vec::new(), slots: Vec::new(), tables: vec![tuple] };
    let full = len / v * v;
    for start in (0..full).step_by(v) {
        layout.push((start..start + v).collect(), 0);
    }
    if full < len {
        let single = tables::side_table(LatticeKind::Integer1D, axis_step(kind, volume), &bounds[..1], pdf)?;
        layout.tables.push(single);
        for i in full..len {
            layout.push(vec![i], 1);
        }
    }
    Ok(layout)
}

/// Groups main latents by σ-bin in ascending bin order. Consecutive members
/// of a bin form `v`-tuples; the remainder is coded one latent at a time.
fn main_layout(kind: LatticeKind, volume: f64, sigma: &[f64]) -> Result<Layout> {
    let v = kind.dim();
    let mut bins: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &s) in sigma.iter().enumerate() {
        bins.entry(sigma_bin(s)).or_default().push(i);
    }
    let mut layout = Layout { groups: Vec::new(), slots: Vec::new(), tables: Vec::new() };
    let mut slot_of: HashMap<(i32, bool), usize> = HashMap::new();
    let mut slot = |layout: &mut Layout, bin: i32, single: bool| -> Result<usize> {
        if let Some(&s) = slot_of.get(&(bin, single)) {
            return Ok(s);
        }
        let t = if single {
            tables::main_table(LatticeKind::Integer1D, axis_step(kind, volume), bin)?
        } else {
            tables::main_table(kind, volume, bin)?
        };
        layout.tables.push(t);
        slot_of.insert((bin, single), layout.tables.len() - 1);
        Ok(layout.tables.len() - 1)
    };
    for (bin, members) in bins {
        let chunks = members.chunks_exact(v);
        let rest = chunks.remainder().to_vec();
        for c in chunks {
            let s = slot(&mut layout, bin, false)?;
            layout.push(c.to_vec(), s);
        }
        for i in rest {
            let s = slot(&mut layout, bin, v == 1)?;
            let s = if v == 1 { s } else { slot(&mut layout, bin, true)? };
            layout.push(vec![i], s);
        }
    }
    Ok(layout)
}

struct MainPlan {
    field: GaussianField,
    y: Vec<f64>,
    layout: Layout,
    codes: Vec<u32>,
    y_hat: Vec<f64>,
    bits: f64,
}

fn plan_main(model: &SyntheticModel, y_src: &[f64], z_hat: &[f64], kind: LatticeKind, volume: f64) -> Result<MainPlan> {
    let field = model.hyper(z_hat)?;
    let y = model.encoder_latents(y_src, &field);
    let layout = main_layout(kind, volume, field.sigma())?;
    let (codes, y_hat) = layout.quantize(&y, Some(field.mu()))?;
    let bits = layout.bits(&codes)?;
    Ok(MainPlan { field, y, layout, codes, y_hat, bits })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodeOptions {
    pub lattice: LatticeKind,
    pub volume: f64,
    pub shifts: bool,
}

/// Everything the encoder saw and decided for one signal.
#[derive(Clone, Debug)]
pub struct CodecInstance {
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    /// Latents handed to the quantizer.
    pub y: Vec<f64>,
    /// Main latents before the decoder-side shift.
    pub y_hat_unshifted: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub z: Vec<f64>,
    /// Side latents before the side shift.
    pub z_hat_unshifted: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub field: GaussianField,
    /// Fixed-point cross-entropy of the side and main codes.
    pub side_bits: f64,
    pub main_bits: f64,
    pub side_codes: usize,
    pub main_codes: usize,
    pub step_code_f: u8,
    pub step_code_h: u8,
    pub mse: f64,
    pub psnr_db: f64,
    pub bitstream_bytes: usize,
}

fn table_hash(model: &SyntheticModel, side: &TablePool, main: &TablePool) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(model.config.fingerprint());
    h.update(side.hash());
    h.update(main.hash());
    h.finalize().into()
}

/// Side code, shifted side latents, main plan, main code, shifted main latents, distortion.
type SideChoice = (u8, Vec<f64>, MainPlan, u8, Vec<f64>, f64);

/// Encodes one signal of length `n`.
///
/// With shifts on, the side shift is chosen to minimise the main bitlength
/// among the candidates whose final distortion does not exceed the
/// shifts-off distortion; candidate 0 always qualifies.
pub fn encode_full(x: &[f64], model: &SyntheticModel, opts: &EncodeOptions) -> Result<(Vec<u8>, CodecInstance)> {
    let kind = opts.lattice;
    let volume = opts.volume;
    LatticeSpec::new(kind, volume)?;
    let y_src = model.analysis(x)?;
    let z = model.side_down(&y_src);
    let bounds = vec![(-SIDE_BOUND, SIDE_BOUND); kind.dim()];
    let side = side_layout(kind, volume, &bounds, model.config.side, &model.side_pdf)?;
    let (side_codes, z_hat0) = side.quantize(&z, None)?;
    let off = plan_main(model, &y_src, &z_hat0, kind, volume)?;
    let x_off = model.synthesis(&off.y_hat);
    let d_off = mse(x, &x_off);

    let (code_f, code_h, z_hat, plan, y_hat, x_hat, d) = if !opts.shifts {
        let y_hat = off.y_hat.clone();
        (0, 0, z_hat0.clone(), off, y_hat, x_off, d_off)
    } else {
        let g_f = side_gradient(&z_hat0, &model.side_pdf, axis_step(kind, volume));
        let cand_f = StepCandidates::for_gradient(&g_f);
        let mut best: Option<SideChoice> = None;
        for (k, &rho) in cand_f.values().iter().enumerate() {
            let zk = shift(&z_hat0, &g_f, rho);
            let p = plan_main(model, &y_src, &zk, kind, volume)?;
            let o = main_shift(x, &p.y_hat, &p.field, &model.decoder, &StepCandidates::for_field(&p.field))?;
            if o.distortion_after > d_off {
                continue;
            }
            if best.as_ref().is_none_or(|b| p.bits < b.2.bits) {
                best = Some((k as u8, zk, p, o.code, o.shifted, o.distortion_after));
            }
        }
        let (kf, zk, p, kh, y_hat, d) = best.expect("the zero side candidate never exceeds the unshifted distortion");
        let x_hat = model.synthesis(&y_hat);
        (kf, kh, zk, p, y_hat, x_hat, d)
    };

    let side_pool = side.pool();
    let main_pool = plan.layout.pool();
    let side_bytes = rans_encode(&side_codes, &side.slots, &side_pool)?;
    let main_bytes = rans_encode(&plan.codes, &plan.layout.slots, &main_pool)?;
    let mut payload = Vec::with_capacity(4 + side_bytes.len() + main_bytes.len());
    payload.extend_from_slice(&(side_bytes.len() as u32).to_le_bytes());
    payload.extend_from_slice(&side_bytes);
    payload.extend_from_slice(&main_bytes);
    let header = Header {
        lattice: kind,
        volume,
        bounds,
        table_hash: table_hash(model, &side_pool, &main_pool),
        step_code_f: code_f,
        step_code_h: code_h,
        shifts_enabled: opts.shifts,
        code_count: (side_codes.len() + plan.codes.len()) as u32,
    };
    let bytes = write_bitstream(&header, &payload)?;
    let instance = CodecInstance {
        x: x.to_vec(),
        x_hat,
        y: plan.y.clone(),
        y_hat_unshifted: plan.y_hat.clone(),
        y_hat,
        z,
        z_hat_unshifted: z_hat0,
        z_hat,
        side_bits: side.bits(&side_codes)?,
        main_bits: plan.bits,
        side_codes: side_codes.len(),
        main_codes: plan.codes.len(),
        field: plan.field,
        step_code_f: code_f,
        step_code_h: code_h,
        mse: d,
        psnr_db: psnr(d),
        bitstream_bytes: bytes.len(),
    };
    Ok((bytes, instance))
}

/// Decoder-side reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub header: Header,
    pub z_hat: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
}

pub fn decode_full(bytes: &[u8], model: &SyntheticModel) -> Result<Decoded> {
    let (header, payload) = read_bitstream(bytes)?;
    let kind = header.lattice;
    let volume = header.volume;
    LatticeSpec::new(kind, volume)?;
    let side_len = u32::from_le_bytes(payload.get(..4).ok_or(Error::Truncated)?.try_into().unwrap()) as usize;
    let side_bytes = payload.get(4..4 + side_len).ok_or(Error::Truncated)?;
    let main_bytes = &payload[4 + side_len..];

    let side = side_layout(kind, volume, &header.bounds, model.config.side, &model.side_pdf)?;
    let side_pool = side.pool();
    let side_codes = rans_decode(side_bytes, side.groups.len(), &side.slots, &side_pool)?;
    let z_hat0 = side.reconstruct(&side_codes, None, model.config.side)?;
    let z_hat = if header.shifts_enabled {
        let g_f = side_gradient(&z_hat0, &model.side_pdf, axis_step(kind, volume));
        shift(&z_hat0, &g_f, StepCandidates::for_gradient(&g_f).value(header.step_code_f)?)
    } else {
        z_hat0
    };
    let field = model.hyper(&z_hat)?;
    let layout = main_layout(kind, volume, field.sigma())?;
    let main_pool = layout.pool();
    if table_hash(model, &side_pool, &main_pool) != header.table_hash {
        return Err(Error::ModelMismatch);
    }
    if header.code_count as usize != side.groups.len() + layout.groups.len() {
        return Err(Error::CorruptPayload);
    }
    let main_codes = rans_decode(main_bytes, layout.groups.len(), &layout.slots, &main_pool)?;
    let y_hat0 = layout.reconstruct(&main_codes, Some(field.mu()), field.len())?;
    let y_hat = if header.shifts_enabled {
        apply_shift_decode(&y_hat0, &field, header.step_code_h, &StepCandidates::for_field(&field))?
    } else {
        y_hat0
    };
    let x_hat = model.synthesis(&y_hat);
    Ok(Decoded { header, z_hat, y_hat, x_hat })
}
