use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use latcodec::lattice::LatticeKind;
use latcodec::rd::{bd_psnr, bd_rate, simulate_rd, RdCurve, RdPlan, SourceKind};

use crate::io::{csv_bytes, emit};
use crate::NumList;

pub const CSV_HEADER: [&str; 6] = ["lattice", "scale", "volume", "rate_bps", "mse", "psnr_db"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Uniform,
    Gaussian,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Source::Uniform)]
    source: Source,
    /// Half-width of the uniform source.
    #[arg(long, default_value_t = 4.0)]
    half_width: f64,
    /// Gaussian scales, as a list or lo:hi:step.
    #[arg(long, default_value = "0.5:2.0:0.1")]
    scales: NumList,
    /// Comma-separated lattices out of sq, hex, oct.
    #[arg(long, default_value = "sq,hex,oct")]
    lattices: String,
    /// Cell volumes, as a list or lo:hi:step.
    #[arg(long, default_value = "1")]
    volumes: NumList,
    /// Vectors per sweep cell.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Report the rANS payload length instead of the cross-entropy.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    measured: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_lattices(s: &str) -> Result<Vec<LatticeKind>> {
    let mut out: Vec<LatticeKind> = Vec::new();
    for name in s.split(',').map(str::trim) {
        let k: LatticeKind = name.parse().with_context(|| format!("unknown lattice `{name}`"))?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

pub fn simulate(a: &SimulateArgs, seed: u64) -> Result<()> {
    let sources = match a.source {
        Source::Uniform => vec![SourceKind::Uniform { half_width: a.half_width }],
        Source::Gaussian => a.scales.0.iter().map(|&sigma| SourceKind::Gaussian { sigma }).collect(),
    };
    let plan = RdPlan {
        sources,
        lattices: parse_lattices(&a.lattices)?,
        volumes: a.volumes.0.clone(),
        samples: a.samples,
        seed,
        measured: a.measured,
    };
    let rows = simulate_rd(&plan)?;
    let csv = csv_bytes(
        &CSV_HEADER,
        rows.iter().map(|r| {
            vec![
                r.lattice.name().to_string(),
                r.scale.to_string(),
                r.volume.to_string(),
                r.rate_bps.to_string(),
                r.mse.to_string(),
                r.psnr_db.to_string(),
            ]
        }),
    )?;
    emit(a.output.as_deref(), &csv)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BdMode {
    Rate,
    Psnr,
}

#[derive(Args)]
pub struct BdArgs {
    /// Reference curve: CSV with `rate_bps` and `psnr_db` columns.
    #[arg(long)]
    anchor: PathBuf,
    /// Tested curve, same format.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value_t = BdMode::Rate)]
    mode: BdMode,
    /// Keep only anchor rows of this lattice (needs a `lattice` column).
    #[arg(long)]
    anchor_lattice: Option<String>,
    /// Keep only test rows of this lattice.
    #[arg(long)]
    test_lattice: Option<String>,
}

fn load_curve(path: &Path, lattice: Option<&str>) -> Result<RdCurve> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(rc), Some(qc)) = (col("rate_bps"), col("psnr_db")) else {
        bail!("{} needs rate_bps and psnr_db columns", path.display());
    };
    let lc = match lattice {
        Some(_) => Some(col("lattice").with_context(|| format!("{} has no lattice column", path.display()))?),
        None => None,
    };
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if let (Some(lc), Some(want)) = (lc, lattice) {
            if rec.get(lc).map(str::trim) != Some(want) {
                continue;
            }
        }
        let num = |c: usize| -> Result<f64> {
            let v = rec.get(c).unwrap_or("").trim();
            v.parse().with_context(|| format!("{}: `{v}` is not a number", path.display()))
        };
        points.push((num(rc)?, num(qc)?));
    }
    RdCurve::new(path.display().to_string(), points).with_context(|| format!("bad curve in {}", path.display()))
}

pub fn bd(a: &BdArgs) -> Result<()> {
    let anchor = load_curve(&a.anchor, a.anchor_lattice.as_deref())?;
    let test = load_curve(&a.test, a.test_lattice.as_deref())?;
    match a.mode {
        BdMode::Rate => println!("bd_rate_pct={:.6}", bd_rate(&anchor, &test)?),
        BdMode::Psnr => println!("bd_psnr_db={:.6}", bd_psnr(&anchor, &test)?),
    }
    Ok(())
}
