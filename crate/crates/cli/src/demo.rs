//! Experiments on synthetic-model instances. Instance `i` is source `i` of the
//! default model seeded with `--seed`.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use latcodec::latent_shift::{correlation_report, GradientPair};
use latcodec::lattice::LatticeKind;
use latcodec::synthetic_codec::{baseline_gains, encode_full, gradient_pairs, EncodeOptions, ModelConfig, SyntheticModel, DEFAULT_LAMBDA};

use crate::io::{csv_bytes, emit};
use crate::Lattice;

fn model(seed: u64, lambda: f64) -> Result<std::sync::Arc<SyntheticModel>> {
    if lambda.is_nan() || lambda <= 0.0 {
        bail!("--lambda must be positive");
    }
    Ok(SyntheticModel::shared(ModelConfig { seed, lambda: Some(lambda), ..ModelConfig::default() })?)
}

#[derive(Args)]
pub struct DemoArgs {
    /// Number of instances.
    #[arg(long, default_value_t = 20)]
    count: u64,
    #[arg(long, value_enum, default_value_t = Lattice::Sq)]
    lattice: Lattice,
    #[arg(long, default_value_t = 1.0)]
    volume: f64,
    /// Rate weight of the encoder.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn shift_demo(a: &DemoArgs, seed: u64) -> Result<()> {
    let m = model(seed, a.lambda)?;
    let kind: LatticeKind = a.lattice.into();
    let mut rows = Vec::new();
    let (mut gain, mut worse) = (0.0, 0);
    for i in 0..a.count {
        let x = m.sample_source(i)?;
        let off = encode_full(&x, &m, &EncodeOptions { lattice: kind, volume: a.volume, shifts: false })?.1;
        let on = encode_full(&x, &m, &EncodeOptions { lattice: kind, volume: a.volume, shifts: true })?.1;
        let g = baseline_gains(&m, &off, kind, a.volume, i)?;
        gain += on.psnr_db - off.psnr_db;
        worse += (on.mse > off.mse) as usize;
        rows.push(vec![
            i.to_string(),
            kind.name().to_string(),
            off.psnr_db.to_string(),
            on.psnr_db.to_string(),
            off.main_bits.to_string(),
            on.main_bits.to_string(),
            on.step_code_f.to_string(),
            on.step_code_h.to_string(),
            g.latent_shift.to_string(),
            g.sign.to_string(),
            g.scalar.to_string(),
            g.random.to_string(),
            g.true_gradient.to_string(),
        ]);
    }
    let header = [
        "instance",
        "lattice",
        "psnr_off_db",
        "psnr_on_db",
        "main_bits_off",
        "main_bits_on",
        "step_code_f",
        "step_code_h",
        "latent_db",
        "sign_db",
        "scalar_db",
        "random_db",
        "true_gradient_db",
    ];
    emit(a.output.as_deref(), &csv_bytes(&header, rows)?)?;
    if a.output.is_some() {
        println!("instances={} mean_gain_db={:.6} worse={worse}", a.count, gain / a.count.max(1) as f64);
    }
    Ok(())
}

#[derive(Args)]
pub struct CorrelationArgs {
    #[arg(long, default_value_t = 30)]
    count: u64,
    #[arg(long, value_enum, default_value_t = Lattice::Sq)]
    lattice: Lattice,
    #[arg(long, default_value_t = 1.0)]
    volume: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn correlation(a: &CorrelationArgs, seed: u64) -> Result<()> {
    let m = model(seed, a.lambda)?;
    let kind: LatticeKind = a.lattice.into();
    let opts = EncodeOptions { lattice: kind, volume: a.volume, shifts: false };
    let mut rows = Vec::new();
    let mut sum = 0.0;
    for i in 0..a.count {
        let inst = encode_full(&m.sample_source(i)?, &m, &opts)?.1;
        let (main, side) = gradient_pairs(&m, &inst, kind, a.volume)?;
        let r_main = correlation_report(&[main], GradientPair::MainEntropyVsDistortion)?.pearson_r;
        // Side gradients vanish when every side latent sits in a flat stretch of the density.
        let r_side = correlation_report(&[side], GradientPair::SideEntropyVsMainEntropy).map_or(f64::NAN, |r| r.pearson_r);
        sum += r_main;
        rows.push(vec![i.to_string(), r_main.to_string(), r_side.to_string()]);
    }
    emit(a.output.as_deref(), &csv_bytes(&["instance", "main_r", "side_r"], rows)?)?;
    if a.output.is_some() {
        println!("instances={} mean_main_r={:.6}", a.count, sum / a.count.max(1) as f64);
    }
    Ok(())
}
