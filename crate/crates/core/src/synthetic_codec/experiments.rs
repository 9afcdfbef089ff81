//! Measurements on single codec instances and lattice-vs-scalar comparisons.

use crate::entropy_model::Density1d;
use crate::error::{Error, Result};
use crate::latent_shift::{
    baseline_shifts, entropy_gradient, main_shift, side_gradient, true_gradient_bound, BaselineKind, Decoder, StepCandidates,
};
use crate::lattice::LatticeKind;
use crate::rd::{bd_rate, psnr_db, simulate_point, RdCurve};

use super::{axis_step, CodecInstance, SyntheticModel};

/// Per-instance PSNR gains in dB of the decoder-side shifts, all applied to the
/// same unshifted main reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineGains {
    pub latent_shift: f64,
    pub sign: f64,
    pub scalar: f64,
    pub random: f64,
    /// The latent-shift search along the true descent direction.
    pub true_gradient: f64,
}

/// Runs every shift variant on a shifts-off instance coded at `(kind, volume)`.
/// Baseline grids span one axis step.
pub fn baseline_gains(model: &SyntheticModel, inst: &CodecInstance, kind: LatticeKind, volume: f64, seed: u64) -> Result<BaselineGains> {
    let (x, y, field) = (&inst.x, &inst.y_hat_unshifted, &inst.field);
    let dec = model.decoder();
    let cand = StepCandidates::for_field(field);
    let span = axis_step(kind, volume);
    let baseline = |k| baseline_shifts(k, x, y, field, dec, span, seed).map(|o| o.gain_db);
    Ok(BaselineGains {
        latent_shift: main_shift(x, y, field, dec, &cand)?.gain_db(),
        sign: baseline(BaselineKind::Sign)?,
        scalar: baseline(BaselineKind::Scalar)?,
        random: baseline(BaselineKind::Random)?,
        true_gradient: true_gradient_bound(x, y, field, dec, &cand)?.true_gain_db,
    })
}

/// Gradient pairs at the unshifted reconstruction of an instance:
/// main `(∇ŷ(−ln p), ∇ŷ d)` and side `(∇ẑ(−ln p_f), ∇ẑ(−ln p_h(ŷ)))`.
#[allow(clippy::type_complexity)]
pub fn gradient_pairs(
    model: &SyntheticModel,
    inst: &CodecInstance,
    kind: LatticeKind,
    volume: f64,
) -> Result<((Vec<f64>, Vec<f64>), (Vec<f64>, Vec<f64>))> {
    let y = &inst.y_hat_unshifted;
    let main = (entropy_gradient(y, &inst.field)?, model.decoder().distortion_gradient(&inst.x, y));
    let z = &inst.z_hat_unshifted;
    let side = (side_gradient(z, model.side_pdf(), axis_step(kind, volume)), model.main_entropy_side_gradient(z, y)?);
    Ok((main, side))
}

/// BD-rate in percent of a lattice against scalar quantization on an i.i.d.
/// source. `steps` are per-axis cell sizes; the lattice runs at volume `u^v`
/// so both quantizers share a cell density per dimension.
pub fn vq_vs_sq_bdrate(source: &dyn Density1d, kind: LatticeKind, steps: &[f64], samples: usize, seed: u64) -> Result<f64> {
    let (lo, hi) = steps.iter().fold((f64::MAX, 0.0f64), |(a, b), &u| (a.min(u), b.max(u)));
    if steps.len() < 4 || !(lo > 0.0) || hi / lo < 4.0 {
        return Err(Error::InvalidParameter("need at least 4 steps spanning a factor of 4".into()));
    }
    let v = kind.dim() as i32;
    let mut sq = Vec::with_capacity(steps.len());
    let mut vq = Vec::with_capacity(steps.len());
    for &u in steps {
        let (r, d) = simulate_point(LatticeKind::Integer1D, u, source, samples, seed, false)?;
        sq.push((r, psnr_db(d)));
        let (r, d) = simulate_point(kind, u.powi(v), source, samples, seed, false)?;
        vq.push((r, psnr_db(d)));
    }
    bd_rate(&RdCurve::new("sq", sq)?, &RdCurve::new(kind.name(), vq)?)
}
