//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line with
//! its measurements and runtime; the process exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use latcodec::coder::{rans_decode, rans_encode, TablePool};
use latcodec::companding::{equivalence_check, ScalarQuantMap};
use latcodec::entropy_model::{hex_cell_masses, mc_cell_counts, Density1d, Gaussian, GaussianField, Laplace, PmfTable, Uniform};
use latcodec::latent_shift::{correlation_report, entropy_gradient, gain_db, true_gradient_bound, GradientPair, StepCandidates};
use latcodec::lattice::{enumerate_dictionary, LatticeKind, LatticeSpec};
use latcodec::rd::{bd_rate, interpolate, simulate_point, RdCurve, SourceKind};
use latcodec::synthetic_codec::{baseline_gains, encode_full, gradient_pairs, EncodeOptions, ModelConfig, SyntheticModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = std::result::Result<(bool, String), String>;

fn model() -> std::sync::Arc<SyntheticModel> {
    SyntheticModel::shared(ModelConfig::default()).expect("default model")
}

fn unit(kind: LatticeKind, shifts: bool) -> EncodeOptions {
    EncodeOptions { lattice: kind, volume: 1.0, shifts }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn second_moments() -> Check {
    // A wide box keeps cells cut by its edges to a negligible share.
    let src = SourceKind::Uniform { half_width: 40.0 }.density().map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, want) in LatticeKind::ALL.into_iter().zip([0.0833, 0.0801, 0.0785]) {
        let (_, mse) = simulate_point(kind, 1.0, src.as_ref(), 1_000_000, 1, false).map_err(|e| e.to_string())?;
        let rel = mse / want - 1.0;
        ok &= rel.abs() < 0.01;
        parts.push(format!("{} {mse:.5} ({:+.2}%)", kind.name(), 100.0 * rel));
    }
    Ok((ok, parts.join(", ")))
}

fn rd_dominance() -> Check {
    let scales: Vec<f64> = (5..=20).map(|i| i as f64 / 10.0).collect();
    let mut curves = Vec::new();
    for kind in LatticeKind::ALL {
        let mut pts = Vec::new();
        for &s in &scales {
            let src = SourceKind::Gaussian { sigma: s }.density().map_err(|e| e.to_string())?;
            pts.push(simulate_point(kind, 1.0, src.as_ref(), 1_000_000, 2, false).map_err(|e| e.to_string())?);
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        curves.push(pts);
    }
    // Worst ratio of the test curve's MSE to the anchor's at the anchor's interior rates.
    let worst = |anchor: &[(f64, f64)], test: &[(f64, f64)]| {
        let mut w = f64::NEG_INFINITY;
        let mut n = 0;
        for &(r, d) in &anchor[1..anchor.len() - 1] {
            if let Some(t) = interpolate(test, r) {
                w = w.max(t / d);
                n += 1;
            }
        }
        (w, n)
    };
    let (hex, nh) = worst(&curves[0], &curves[1]);
    let (oct, no) = worst(&curves[1], &curves[2]);
    let ok = nh > 0 && no > 0 && hex < 1.0 && oct <= 1.0;
    Ok((ok, format!("max MSE ratio hex/sq {hex:.4} over {nh} rates, oct/hex {oct:.4} over {no} rates")))
}

fn hex_vs_monte_carlo() -> Check {
    const N: usize = 10_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let spec = LatticeSpec::new(LatticeKind::Hex2D, 1.0).map_err(|e| e.to_string())?;
    let (mut entries, mut outside, mut sparse, mut worst) = (0usize, 0usize, 0usize, 0.0f64);
    let (mut chi2, mut dof) = (0.0, 0usize);
    for pair in 0..5u64 {
        let mu = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let sigma = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
        let bounds: Vec<(f64, f64)> = (0..2).map(|i| (mu[i] - 8.0 * sigma[i], mu[i] + 8.0 * sigma[i])).collect();
        let dict = enumerate_dictionary(&spec, &bounds).map_err(|e| e.to_string())?;
        let (gx, gy) = (Gaussian::new(mu[0], sigma[0]), Gaussian::new(mu[1], sigma[1]));
        let p = hex_cell_masses(&gx, &gy, &dict).map_err(|e| e.to_string())?;
        let counts = mc_cell_counts(&[&gx, &gy], &dict, N, 100 + pair).map_err(|e| e.to_string())?;
        for (&pi, &c) in p.iter().zip(&counts) {
            let expected = pi * N as f64;
            let se = (pi * (1.0 - pi) / N as f64).sqrt();
            let z = (c as f64 / N as f64 - pi).abs() / se;
            entries += 1;
            worst = worst.max(z);
            if z > 3.0 {
                outside += 1;
                sparse += (expected < 5.0) as usize;
            }
            if expected >= 5.0 {
                chi2 += (c as f64 - expected).powi(2) / expected;
                dof += 1;
            }
        }
    }
    // Each entry is an independent test; chance alone puts about 0.27% of
    // well-populated entries beyond 3 SE, and more among near-empty cells.
    Ok((
        outside == 0,
        format!(
            "{outside} of {entries} entries beyond 3 SE, {sparse} of them in cells expecting < 5 hits (max {worst:.2} SE; chance expects ~{:.1} among populated cells); chi2/dof over populated cells {:.3} (dof {dof})",
            0.0027 * dof as f64,
            chi2 / dof as f64
        ),
    ))
}

fn companding() -> Check {
    let sources: [Box<dyn Density1d>; 3] = [
        Box::new(Gaussian::new(0.3, 1.2)),
        Box::new(Laplace { mu: -0.2, scale: 0.8 }),
        Box::new(Uniform::new(-2.5, 3.0).map_err(|e| e.to_string())?),
    ];
    let (mut worst, mut exact, mut checked) = (0.0f64, true, 0usize);
    for m in 0..20u64 {
        let map = ScalarQuantMap::random(4 + (m as usize % 13), -3.0, 3.0, 500 + m).map_err(|e| e.to_string())?;
        for (s, src) in sources.iter().enumerate() {
            let r = equivalence_check(&map, src.as_ref(), 20_000, m * 3 + s as u64).map_err(|e| e.to_string())?;
            worst = worst.max(r.pmf_max_abs_diff);
            exact &= r.reconstruction_exact;
            checked += r.samples_checked;
        }
    }
    Ok((worst <= 1e-6 && exact, format!("max PMF diff {worst:.2e}, {checked} reconstructions exact: {exact}")))
}

fn sample_codes(table: &PmfTable, n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut cum = Vec::with_capacity(table.len());
    let mut acc = 0u32;
    for &f in table.freqs() {
        acc += f;
        cum.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.gen_range(0..table.total());
            cum.partition_point(|&c| c <= u) as u32
        })
        .collect()
}

fn coder() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gauss: Vec<f64> = (0..256).map(|i| (-((i as f64 - 128.0) / 20.0).powi(2) / 2.0).exp()).collect();
    let skewed: Vec<f64> = (0..16).map(|i| 0.5f64.powi(i)).collect();
    let flat = vec![1.0; 1000];
    let mut worst = f64::NEG_INFINITY;
    for (raw, precision) in [(gauss, 16u8), (skewed, 12), (flat, 20)] {
        let table = PmfTable::from_probabilities(&raw, precision).map_err(|e| e.to_string())?;
        let codes = sample_codes(&table, 1_000_000, &mut rng);
        let pool = TablePool::new(vec![table]);
        let bytes = rans_encode(&codes, &[0], &pool).map_err(|e| e.to_string())?;
        let ideal = pool.cross_entropy_bits(&codes, &[0]).map_err(|e| e.to_string())? / 8.0;
        if rans_decode(&bytes, codes.len(), &[0], &pool).map_err(|e| e.to_string())? != codes {
            return Ok((false, "1e6-symbol stream did not roundtrip".into()));
        }
        // Excess over the allowance 0.5% + 32 bytes; must stay non-positive.
        worst = worst.max(bytes.len() as f64 - (1.005 * ideal + 32.0));
    }
    let mut lossless = 0;
    for trial in 0..1000 {
        let tables: Vec<PmfTable> = (0..rng.gen_range(1..4))
            .map(|_| {
                let raw: Vec<f64> = (0..rng.gen_range(1..300)).map(|_| rng.gen_range(0.0..1.0f64).powi(3) + 1e-9).collect();
                PmfTable::from_probabilities(&raw, rng.gen_range(9..=20)).unwrap()
            })
            .collect();
        let len = rng.gen_range(0..3000);
        let ids: Vec<usize> = if trial % 2 == 0 { vec![0] } else { (0..len).map(|_| rng.gen_range(0..tables.len())).collect() };
        let codes: Vec<u32> = (0..len).map(|i| rng.gen_range(0..tables[ids[if ids.len() == 1 { 0 } else { i }]].len() as u32)).collect();
        let pool = TablePool::new(tables);
        let bytes = rans_encode(&codes, &ids, &pool).map_err(|e| e.to_string())?;
        if rans_decode(&bytes, len, &ids, &pool).ok().as_ref() == Some(&codes) {
            lossless += 1;
        }
    }
    Ok((
        worst <= 0.0 && lossless == 1000,
        format!("worst excess over allowance {worst:.1} bytes, {lossless}/1000 random roundtrips lossless"),
    ))
}

fn shift_guards() -> Check {
    let m = model();
    let (mut gains, mut worse, mut more_bits) = (Vec::new(), 0, 0);
    for seed in 0..200u64 {
        let kind = LatticeKind::ALL[seed as usize % 3];
        let x = m.sample_source(seed).map_err(|e| e.to_string())?;
        let (_, off) = encode_full(&x, &m, &unit(kind, false)).map_err(|e| e.to_string())?;
        let (_, on) = encode_full(&x, &m, &unit(kind, true)).map_err(|e| e.to_string())?;
        worse += (on.mse > off.mse) as usize;
        more_bits += (on.main_bits > off.main_bits) as usize;
        gains.push(gain_db(off.mse, on.mse));
    }
    let g = mean(&gains);
    Ok((worse == 0 && g > 0.0, format!("{worse}/200 instances worse, {more_bits} with more main bits, mean PSNR gain {g:.3} dB")))
}

fn kkt_sign() -> Check {
    let m = model();
    let mut rs = Vec::new();
    for seed in 3000..3030u64 {
        let x = m.sample_source(seed).map_err(|e| e.to_string())?;
        let (_, inst) = encode_full(&x, &m, &unit(LatticeKind::Integer1D, false)).map_err(|e| e.to_string())?;
        let (main, _) = gradient_pairs(&m, &inst, LatticeKind::Integer1D, 1.0).map_err(|e| e.to_string())?;
        rs.push(correlation_report(&[main], GradientPair::MainEntropyVsDistortion).map_err(|e| e.to_string())?.pearson_r);
    }
    let r = mean(&rs);
    let hi = rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((r < 0.0, format!("mean Pearson r {r:.3} over 30 seeds (largest {hi:.3})")))
}

fn baseline_order() -> Check {
    let m = model();
    let (mut ls, mut sign, mut scalar, mut random) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed in 1000..1100u64 {
        let x = m.sample_source(seed).map_err(|e| e.to_string())?;
        let (_, inst) = encode_full(&x, &m, &unit(LatticeKind::Integer1D, false)).map_err(|e| e.to_string())?;
        let g = baseline_gains(&m, &inst, LatticeKind::Integer1D, 1.0, seed).map_err(|e| e.to_string())?;
        ls.push(g.latent_shift);
        sign.push(g.sign);
        scalar.push(g.scalar);
        random.push(g.random);
    }
    let (a, b, c, d) = (mean(&ls), mean(&sign), mean(&scalar), mean(&random));
    Ok((a > b && b > c && c >= d, format!("mean gains dB: latent {a:.4}, sign {b:.4}, scalar {c:.4}, random {d:.4}")))
}

fn true_gradient() -> Check {
    let m = model();
    let (mut proxy, mut truth) = (Vec::new(), Vec::new());
    for seed in 2000..2100u64 {
        let x = m.sample_source(seed).map_err(|e| e.to_string())?;
        let (_, inst) = encode_full(&x, &m, &unit(LatticeKind::Integer1D, false)).map_err(|e| e.to_string())?;
        let cand = StepCandidates::for_field(&inst.field);
        let r = true_gradient_bound(&inst.x, &inst.y_hat_unshifted, &inst.field, m.decoder(), &cand).map_err(|e| e.to_string())?;
        proxy.push(r.proxy_gain_db);
        truth.push(r.true_gain_db);
    }
    let (p, t) = (mean(&proxy), mean(&truth));
    Ok((t >= p, format!("mean gain true gradient {t:.3} dB, entropy proxy {p:.3} dB")))
}

fn gradient_fd() -> Check {
    let m = model();
    let side = m.config().side;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let nll = |y: f64, mu: f64, s: f64| 0.5 * ((y - mu) / s).powi(2) + s.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z: Vec<f64> = (0..side).map(|_| rng.sample(StandardNormal)).collect();
        let field: GaussianField = m.hyper(&z).map_err(|e| e.to_string())?;
        let y: Vec<f64> =
            field.mu().iter().zip(field.sigma()).map(|(mu, s)| mu + (s * rng.sample::<f64, _>(StandardNormal)).round()).collect();
        let g = entropy_gradient(&y, &field).map_err(|e| e.to_string())?;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..y.len() {
            let (mu, s) = (field.mu()[i], field.sigma()[i]);
            let h = 1e-4 * s;
            let fd = (nll(y[i] + h, mu, s) - nll(y[i] - h, mu, s)) / (2.0 * h);
            num += (g[i] - fd).powi(2);
            den += fd * fd;
        }
        worst = worst.max((num / den).sqrt());
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over 100 instances")))
}

fn bd_sanity() -> Check {
    let pts = vec![(0.12, 27.5), (0.25, 30.9), (0.5, 34.0), (1.0, 36.8), (2.0, 39.6)];
    let anchor = RdCurve::new("anchor", pts.clone()).map_err(|e| e.to_string())?;
    let scaled = RdCurve::new("scaled", pts.iter().map(|&(r, q)| (0.99 * r, q)).collect()).map_err(|e| e.to_string())?;
    let same = bd_rate(&anchor, &anchor).map_err(|e| e.to_string())?;
    let bd = bd_rate(&anchor, &scaled).map_err(|e| e.to_string())?;
    Ok((same.abs() < 1e-9 && (bd + 1.0).abs() <= 0.05, format!("identical {same:.2e}%, rate x0.99 {bd:.4}%")))
}

type Criterion = (&'static str, u64, fn() -> Check);

fn main() -> ExitCode {
    // Warm the shared model so its construction is not charged to one criterion.
    let _ = model();
    let criteria: [Criterion; 11] = [
        ("lattice second moments", 10, second_moments),
        ("RD dominance hex < sq, oct <= hex", 60, rd_dominance),
        ("hex quadrature vs Monte Carlo", 120, hex_vs_monte_carlo),
        ("companded pipeline equivalence", 30, companding),
        ("rANS optimality and roundtrips", 60, coder),
        ("latent shift guards", 120, shift_guards),
        ("entropy/distortion gradient sign", 60, kkt_sign),
        ("shift baseline ordering", 300, baseline_order),
        ("true gradient >= proxy", 120, true_gradient),
        ("entropy gradient vs finite differences", 5, gradient_fd),
        ("BD-rate sanity", 1, bd_sanity),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(limit);
        let (ok, detail) = match result {
            Ok((ok, d)) => (ok && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !ok as usize;
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {detail} [{:.1} s, limit {limit} s]", i + 1, took.as_secs_f64());
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
