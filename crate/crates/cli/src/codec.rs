//! Tensor coding with the square synthetic model.
//!
//! A tensor is cut into blocks of `BLOCK` values in row-major order, the last
//! one padded with the source offset; each block becomes one bitstream. The
//! encoded file is `LTCS`, a rank byte, the little-endian u32 dimensions, a
//! u32 block count and the bitstreams back to back.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use latcodec::coder::read_bitstream_prefix;
use latcodec::latent_shift::{dequant_shift_traditional, log_rate_model, mse};
use latcodec::synthetic_codec::{decode_full, encode_full, EncodeOptions, ModelConfig, SyntheticModel, Tensor, SOURCE_OFFSET};

use crate::io::{read_tensor, write_atomic};
use crate::{Lattice, NumList, Switch};

pub const BLOCK: usize = 1024;
const SIDE: usize = 64;
const FILE_MAGIC: &[u8; 4] = b"LTCS";

fn model(seed: u64, lambda: Option<f64>) -> Result<std::sync::Arc<SyntheticModel>> {
    Ok(SyntheticModel::shared(ModelConfig { seed, n: BLOCK, m: BLOCK, side: SIDE, lambda })?)
}

fn psnr_between(a: &[f32], b: &[f32]) -> f64 {
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    latcodec::latent_shift::psnr(mse(&a, &b))
}

fn summary(file_bytes: usize, values: usize, psnr: Option<f64>) {
    let rate = 8.0 * file_bytes as f64 / values.max(1) as f64;
    match psnr {
        Some(p) => println!("rate_bpp={rate:.6} psnr_db={p:.6}"),
        None => println!("rate_bpp={rate:.6}"),
    }
}

#[derive(Args)]
pub struct EncodeArgs {
    /// TNS1 tensor to code.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Lattice::Sq)]
    lattice: Lattice,
    /// Cell volume of the lattice.
    #[arg(long, default_value_t = 1.0)]
    volume: f64,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    shift: Switch,
    /// Rate weight of a shrinking encoder; latents are coded unshrunk when absent.
    #[arg(long)]
    lambda: Option<f64>,
}

pub fn encode(a: &EncodeArgs, seed: u64) -> Result<()> {
    let tensor = read_tensor(&a.input)?;
    if tensor.is_empty() {
        bail!("{} holds no values", a.input.display());
    }
    let m = model(seed, a.lambda)?;
    let opts = EncodeOptions { lattice: a.lattice.into(), volume: a.volume, shifts: a.shift == Switch::On };
    let blocks = tensor.len().div_ceil(BLOCK);
    let mut out = FILE_MAGIC.to_vec();
    out.push(tensor.dims().len() as u8);
    for d in tensor.dims() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(blocks as u32).to_le_bytes());
    let mut recon = Vec::with_capacity(blocks * BLOCK);
    for chunk in tensor.data().chunks(BLOCK) {
        let mut x: Vec<f64> = chunk.iter().map(|&v| v as f64).collect();
        x.resize(BLOCK, SOURCE_OFFSET);
        let (bytes, inst) = encode_full(&x, &m, &opts).context("encoding failed")?;
        out.extend_from_slice(&bytes);
        recon.extend(inst.x_hat.iter().map(|&v| v as f32));
    }
    recon.truncate(tensor.len());
    write_atomic(&a.output, &out)?;
    summary(out.len(), tensor.len(), Some(psnr_between(tensor.data(), &recon)));
    Ok(())
}

#[derive(Args)]
pub struct DecodeArgs {
    /// File written by `encode`.
    #[arg(long)]
    input: PathBuf,
    /// TNS1 destination.
    #[arg(long)]
    output: PathBuf,
    /// Original tensor; adds its PSNR to the summary.
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn split_file(bytes: &[u8]) -> Result<(Vec<u32>, Vec<&[u8]>)> {
    if bytes.len() < 5 || &bytes[..4] != FILE_MAGIC {
        bail!("bad magic");
    }
    let rank = bytes[4] as usize;
    let mut pos = 5;
    let u32_at = |pos: &mut usize| -> Result<u32> {
        let b = bytes.get(*pos..*pos + 4).context("truncated stream")?;
        *pos += 4;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    };
    let dims = (0..rank).map(|_| u32_at(&mut pos)).collect::<Result<Vec<_>>>()?;
    let blocks = u32_at(&mut pos)? as usize;
    let mut streams = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let (_, _, used) = read_bitstream_prefix(&bytes[pos..])?;
        streams.push(&bytes[pos..pos + used]);
        pos += used;
    }
    if pos != bytes.len() {
        bail!("trailing bytes after the last block");
    }
    Ok((dims, streams))
}

pub fn decode(a: &DecodeArgs, seed: u64) -> Result<()> {
    let bytes = fs::read(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let (dims, streams) = split_file(&bytes)?;
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize)).context("tensor too large")?;
    if count.div_ceil(BLOCK) != streams.len() {
        bail!("block count does not match the tensor shape");
    }
    let m = model(seed, None)?;
    let mut data = Vec::with_capacity(streams.len() * BLOCK);
    for s in streams {
        data.extend(decode_full(s, &m).context("decoding failed")?.x_hat.iter().map(|&v| v as f32));
    }
    data.truncate(count);
    let tensor = Tensor::new(dims, data)?;
    let psnr = match &a.reference {
        Some(r) => {
            let reference = read_tensor(r)?;
            if reference.dims() != tensor.dims() {
                bail!("reference shape {:?} differs from decoded shape {:?}", reference.dims(), tensor.dims());
            }
            Some(psnr_between(reference.data(), tensor.data()))
        }
        None => None,
    };
    write_atomic(&a.output, &tensor.to_bytes())?;
    summary(bytes.len(), tensor.len(), psnr);
    Ok(())
}

#[derive(Args)]
pub struct DequantArgs {
    /// TNS1 tensor of integer-valued coefficients.
    #[arg(long)]
    input: PathBuf,
    /// Shift strengths, as a list or lo:hi:step; one report line each.
    #[arg(long, default_value = "0")]
    alpha: NumList,
    /// Unquantized values, for the MSE columns.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Shifted coefficients as TNS1; needs a single alpha.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Slope of the rate model a·ln|ŷ| + b.
    #[arg(long, default_value_t = 1.0)]
    rate_a: f64,
    #[arg(long, default_value_t = 0.0)]
    rate_b: f64,
}

pub fn dequant_shift(a: &DequantArgs) -> Result<()> {
    let input = read_tensor(&a.input)?;
    let mut coeffs = Vec::with_capacity(input.len());
    for &v in input.data() {
        if v.fract() != 0.0 || !v.is_finite() {
            bail!("coefficient {v} is not an integer");
        }
        coeffs.push(v as i64);
    }
    let reference = match &a.reference {
        Some(p) => {
            let r = read_tensor(p)?;
            if r.dims() != input.dims() {
                bail!("reference shape {:?} differs from input shape {:?}", r.dims(), input.dims());
            }
            Some(r.data().iter().map(|&v| v as f64).collect::<Vec<f64>>())
        }
        None => None,
    };
    if a.output.is_some() && a.alpha.0.len() != 1 {
        bail!("--output needs exactly one alpha");
    }
    for &alpha in &a.alpha.0 {
        let shifted = dequant_shift_traditional(&coeffs, alpha)?;
        let rate = log_rate_model(&shifted, a.rate_a, a.rate_b);
        match &reference {
            Some(r) => println!("alpha={alpha} rate_model={rate:.6} mse={:.9}", mse(r, &shifted)),
            None => println!("alpha={alpha} rate_model={rate:.6}"),
        }
        if let Some(out) = &a.output {
            let t = Tensor::new(input.dims().to_vec(), shifted.iter().map(|&v| v as f32).collect())?;
            write_atomic(out, &t.to_bytes())?;
        }
    }
    Ok(())
}
