//! Probability models over latents and their discretization into PMF tables.

mod cells;
mod pmf;

pub use cells::{
    hex_cell_masses, mc_cell_counts, pmf_hex, pmf_hex_with, pmf_mc, pmf_mc_gaussian, pmf_scalar, rate_lower_bound, scalar_masses,
};
pub use pmf::{PmfTable, DEFAULT_PRECISION, MAX_PRECISION};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quadrature;

/// Lower clamp applied to every scale parameter.
pub const SIGMA_MIN: f64 = 0.01;

/// Knot count of a [`FactorizedPdf`].
pub const FACTORIZED_KNOTS: usize = 1024;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// A one-dimensional density with CDF and sampler.
pub trait Density1d: Send + Sync {
    fn pdf(&self, x: f64) -> f64;

    fn cdf(&self, x: f64) -> f64;

    /// Probability of `[lo, hi]`.
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64;

    /// Points where the density is discontinuous.
    fn breakpoints(&self) -> &[f64] {
        &[]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub mu: f64,
    pub sigma: f64,
}

impl Gaussian {
    /// `σ` is clamped to [`SIGMA_MIN`].
    pub fn new(mu: f64, sigma: f64) -> Self {
        Gaussian { mu, sigma: sigma.max(SIGMA_MIN) }
    }
}

impl Density1d for Gaussian {
    fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn cdf(&self, x: f64) -> f64 {
        0.5 * libm::erfc(-(x - self.mu) / (self.sigma * SQRT2))
    }

    fn mass(&self, lo: f64, hi: f64) -> f64 {
        let a = (lo - self.mu) / (self.sigma * SQRT2);
        let b = (hi - self.mu) / (self.sigma * SQRT2);
        // Difference of the smaller tails keeps precision far from the mean.
        let m = if a > 0.0 {
            0.5 * (libm::erfc(a) - libm::erfc(b))
        } else if b < 0.0 {
            0.5 * (libm::erfc(-b) - libm::erfc(-a))
        } else {
            0.5 * (libm::erf(b) - libm::erf(a))
        };
        m.max(0.0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu + self.sigma * z
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uniform {
    ends: [f64; 2],
}

impl Uniform {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput);
        }
        Ok(Uniform { ends: [lo, hi] })
    }
}

impl Density1d for Uniform {
    fn pdf(&self, x: f64) -> f64 {
        let [lo, hi] = self.ends;
        if x >= lo && x <= hi {
            1.0 / (hi - lo)
        } else {
            0.0
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let [lo, hi] = self.ends;
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(self.ends[0]..self.ends[1])
    }

    fn breakpoints(&self) -> &[f64] {
        &self.ends
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Laplace {
    pub mu: f64,
    pub scale: f64,
}

impl Density1d for Laplace {
    fn pdf(&self, x: f64) -> f64 {
        (-(x - self.mu).abs() / self.scale).exp() / (2.0 * self.scale)
    }

    fn cdf(&self, x: f64) -> f64 {
        let t = (x - self.mu) / self.scale;
        if t < 0.0 {
            0.5 * t.exp()
        } else {
            1.0 - 0.5 * (-t).exp()
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen_range(-0.5..0.5);
        self.mu - self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}

/// Non-parametric density given by a piecewise-linear CDF on evenly spaced knots.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedPdf {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl FactorizedPdf {
    /// Tabulates an analytic density on `[lo, hi]`; the result is renormalized.
    pub fn from_density<F: Fn(f64) -> f64>(pdf: F, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput);
        }
        let knots = even_knots(lo, hi);
        let mut cdf = Vec::with_capacity(knots.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in knots.windows(2) {
            acc += quadrature::adaptive_simpson(&pdf, w[0], w[1], 1e-13, quadrature::DEFAULT_MAX_DEPTH)?.max(0.0);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::EmptySupport);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        *cdf.last_mut().unwrap() = 1.0;
        Ok(FactorizedPdf { knots, cdf })
    }

    /// Empirical CDF of `samples` over their range.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 || samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        if lo >= hi {
            return Err(Error::InvalidInput);
        }
        let knots = even_knots(lo, hi);
        let n = sorted.len() as f64;
        let mut cdf: Vec<f64> = knots.iter().map(|&k| sorted.partition_point(|&s| s <= k) as f64 / n).collect();
        cdf[0] = 0.0;
        *cdf.last_mut().unwrap() = 1.0;
        Ok(FactorizedPdf { knots, cdf })
    }

    /// A Gaussian stand-in tabulated over `±half_width·σ`.
    pub fn gaussian(mu: f64, sigma: f64, half_width: f64) -> Result<Self> {
        let g = Gaussian::new(mu, sigma);
        FactorizedPdf::from_density(|x| g.pdf(x), mu - half_width * g.sigma, mu + half_width * g.sigma)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    fn segment(&self, x: f64) -> usize {
        let (lo, hi) = self.support();
        let step = (hi - lo) / (self.knots.len() - 1) as f64;
        (((x - lo) / step) as usize).min(self.knots.len() - 2)
    }
}

fn even_knots(lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / (FACTORIZED_KNOTS - 1) as f64;
    let mut k: Vec<f64> = (0..FACTORIZED_KNOTS).map(|i| lo + i as f64 * step).collect();
    k[FACTORIZED_KNOTS - 1] = hi;
    k
}

impl Density1d for FactorizedPdf {
    fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        let s = self.segment(x);
        (self.cdf[s + 1] - self.cdf[s]) / (self.knots[s + 1] - self.knots[s])
    }

    fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let s = self.segment(x);
        let t = ((x - self.knots[s]) / (self.knots[s + 1] - self.knots[s])).clamp(0.0, 1.0);
        self.cdf[s] + t * (self.cdf[s + 1] - self.cdf[s])
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen();
        // First segment whose upper CDF value exceeds u; empty segments are skipped.
        let s = (self.cdf.partition_point(|&c| c <= u).max(1) - 1).min(self.knots.len() - 2);
        let span = self.cdf[s + 1] - self.cdf[s];
        let t = if span > 0.0 { ((u - self.cdf[s]) / span).clamp(0.0, 1.0) } else { 0.5 };
        self.knots[s] + t * (self.knots[s + 1] - self.knots[s])
    }

    fn breakpoints(&self) -> &[f64] {
        &self.knots
    }
}

/// Per-element Gaussian parameters of the hyperprior model.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianField {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianField {
    /// `σ` entries are clamped to [`SIGMA_MIN`].
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() || mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput);
        }
        let sigma = sigma.into_iter().map(|s| s.max(SIGMA_MIN)).collect();
        Ok(GaussianField { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn element(&self, i: usize) -> Gaussian {
        Gaussian::new(self.mu[i], self.sigma[i])
    }
}
