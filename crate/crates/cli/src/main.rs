//! `latcodec`: rate-distortion sweeps, BD metrics, tensor coding with the
//! synthetic codec, and latent-shift experiments.

mod codec;
mod config;
mod demo;
mod io;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use latcodec::lattice::LatticeKind;

#[derive(Parser)]
#[command(name = "latcodec", version, about, args_override_self = true)]
struct Cli {
    /// Flat key=value file with options for the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed of every random choice, including the synthetic model.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rate and MSE of lattice quantizers on i.i.d. sources, as CSV.
    SimulateRd(sim::SimulateArgs),
    /// Bjøntegaard delta between two RD curves.
    Bd(sim::BdArgs),
    /// Codes a TNS1 tensor with the synthetic codec.
    Encode(codec::EncodeArgs),
    /// Reconstructs a tensor from an encoded file.
    Decode(codec::DecodeArgs),
    /// Applies the magnitude-dependent dequantization shift to integer coefficients.
    DequantShift(codec::DequantArgs),
    /// Per-instance gains of latent shift and its baselines, as CSV.
    ShiftDemo(demo::DemoArgs),
    /// Per-instance gradient correlations, as CSV.
    Correlation(demo::CorrelationArgs),
}

/// A list of numbers: `a,b,c` or the inclusive range `lo:hi:step`.
#[derive(Clone, Debug, PartialEq)]
pub struct NumList(pub Vec<f64>);

impl FromStr for NumList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
        let parts: Vec<&str> = s.split(':').collect();
        let values = if parts.len() == 3 {
            let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0 && lo <= hi) {
                return Err(format!("range `{s}` needs lo <= hi and a positive step"));
            }
            // Integer stepping keeps 0.5:2.0:0.1 at exactly 16 decimal-clean values.
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect()
        } else {
            s.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(format!("`{s}` is not a list of finite numbers"));
        }
        Ok(NumList(values))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Lattice {
    Sq,
    Hex,
    Oct,
}

impl From<Lattice> for LatticeKind {
    fn from(l: Lattice) -> Self {
        match l {
            Lattice::Sq => LatticeKind::Integer1D,
            Lattice::Hex => LatticeKind::Hex2D,
            Lattice::Oct => LatticeKind::TruncOct3D,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

fn run() -> Result<()> {
    let args = config::expand(std::env::args_os().collect(), &Cli::command())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit();
        }
        Err(e) => bail!("{}", e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ")),
    };
    let seed = cli.seed;
    match cli.command {
        Cmd::SimulateRd(a) => sim::simulate(&a, seed),
        Cmd::Bd(a) => sim::bd(&a),
        Cmd::Encode(a) => codec::encode(&a, seed),
        Cmd::Decode(a) => codec::decode(&a, seed),
        Cmd::DequantShift(a) => codec::dequant_shift(&a),
        Cmd::ShiftDemo(a) => demo::shift_demo(&a, seed),
        Cmd::Correlation(a) => demo::correlation(&a, seed),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
