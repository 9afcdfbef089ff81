//! Companding: a monotone piecewise-linear map that turns an arbitrary scalar
//! quantizer into integer rounding.
//!
//! The interleaved knots `b_0 < c_1 < b_1 < … < c_n < b_n` of a scalar map are
//! sent to `0.5, 1, 1.5, …, n + 0.5`. Centers land on integers and borders on
//! half-integers, so `f⁻¹(round(f(y)))` reproduces the direct quantizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy_model::Density1d;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_pieces, DEFAULT_MAX_DEPTH};

/// Borders `b_0..=b_n` and centers `c_1..=c_n` of a non-uniform scalar quantizer.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarQuantMap {
    borders: Vec<f64>,
    centers: Vec<f64>,
}

impl ScalarQuantMap {
    pub fn new(borders: Vec<f64>, centers: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || borders.len() != centers.len() + 1 {
            return Err(Error::InvalidInput);
        }
        let map = ScalarQuantMap { borders, centers };
        let knots = map.knots();
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::NonMonotone);
        }
        Ok(map)
    }

    /// A map with `cells` cells whose `2·cells + 1` knots are sorted uniform
    /// draws on `[lo, hi]`.
    pub fn random(cells: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if cells == 0 || !(lo < hi) {
            return Err(Error::InvalidInput);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut knots: Vec<f64> = (0..2 * cells + 1).map(|_| rng.gen_range(lo..hi)).collect();
            knots.sort_by(f64::total_cmp);
            let borders = knots.iter().step_by(2).copied().collect();
            let centers = knots.iter().skip(1).step_by(2).copied().collect();
            // Equal draws are possible in principle; redraw rather than nudge.
            if let Ok(map) = ScalarQuantMap::new(borders, centers) {
                return Ok(map);
            }
        }
    }

    pub fn borders(&self) -> &[f64] {
        &self.borders
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    /// The interleaved knot sequence `b_0, c_1, b_1, …, c_n, b_n`.
    pub fn knots(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(2 * self.centers.len() + 1);
        for (b, c) in self.borders.iter().zip(&self.centers) {
            k.push(*b);
            k.push(*c);
        }
        k.push(*self.borders.last().unwrap());
        k
    }

    /// 1-based cell index of `y`; values outside `[b_0, b_n]` clamp to the end cells.
    pub fn quantize(&self, y: f64) -> usize {
        let inner = &self.borders[1..self.borders.len() - 1];
        inner.partition_point(|&b| b < y) + 1
    }

    pub fn reconstruct(&self, cell: usize) -> f64 {
        self.centers[cell - 1]
    }
}

/// Piecewise-linear `f` through `(𝕄_k, 0.5·(k + 1))`, extended linearly past the ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Compander {
    knots: Vec<f64>,
}

fn image(k: usize) -> f64 {
    0.5 * (k + 1) as f64
}

pub fn build_compander(map: &ScalarQuantMap) -> Compander {
    Compander { knots: map.knots() }
}

impl Compander {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn forward(&self, x: f64) -> f64 {
        let k = &self.knots;
        let j = (k.partition_point(|&t| t <= x).max(1) - 1).min(self.segments() - 1);
        let (lo, hi) = (k[j], k[j + 1]);
        if x == lo {
            return image(j);
        }
        let z = image(j) + 0.5 * (x - lo) / (hi - lo);
        if x > lo && x < hi {
            // Keep open segments open so rounding never lands on the wrong cell.
            z.clamp(image(j).next_up(), image(j + 1).next_down())
        } else {
            z
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        let k = &self.knots;
        let j = ((2.0 * z - 1.0).floor().max(0.0) as usize).min(self.segments() - 1);
        let t = (z - image(j)) / 0.5;
        if t == 0.0 {
            return k[j];
        }
        k[j] + t * (k[j + 1] - k[j])
    }

    /// `df⁻¹/dz` at `z`; constant on each segment.
    pub fn inverse_slope(&self, z: f64) -> f64 {
        let j = ((2.0 * z - 1.0).floor().max(0.0) as usize).min(self.segments() - 1);
        2.0 * (self.knots[j + 1] - self.knots[j])
    }

    /// Integer cell of `y` after companding, clamped to `1..=n`.
    pub fn quantize(&self, y: f64) -> usize {
        let n = self.segments() / 2;
        (self.forward(y).round().max(1.0) as usize).min(n)
    }

    pub fn reconstruct(&self, cell: usize) -> f64 {
        self.inverse(cell as f64)
    }
}

/// Outcome of comparing direct and companded quantization.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub pmf_max_abs_diff: f64,
    pub reconstruction_exact: bool,
    /// Samples compared; those lying exactly on a border are skipped.
    pub samples_checked: usize,
}

const PMF_TOLERANCE: f64 = 1e-13;

/// Per-cell probabilities by integrating the source over `[b_{i−1}, b_i]`.
pub fn direct_pmf(map: &ScalarQuantMap, source: &dyn Density1d) -> Result<Vec<f64>> {
    let pdf = |y: f64| source.pdf(y);
    map.borders.windows(2).map(|w| integrate_pieces(&pdf, w[0], w[1], source.breakpoints(), PMF_TOLERANCE, DEFAULT_MAX_DEPTH)).collect()
}

/// Per-cell probabilities of the pushed-forward density `p(f⁻¹(z))·|df⁻¹/dz|`
/// over `[i − 0.5, i + 0.5]`.
pub fn companded_pmf(compander: &Compander, source: &dyn Density1d) -> Result<Vec<f64>> {
    let pushed = |z: f64| source.pdf(compander.inverse(z)) * compander.inverse_slope(z);
    let mut breaks: Vec<f64> = source.breakpoints().iter().map(|&b| compander.forward(b)).collect();
    let n = compander.segments() / 2;
    (1..=n)
        .map(|i| {
            let c = i as f64;
            breaks.push(c);
            let v = integrate_pieces(&pushed, c - 0.5, c + 0.5, &breaks, PMF_TOLERANCE, DEFAULT_MAX_DEPTH);
            breaks.pop();
            v
        })
        .collect()
}

/// Compares the two pipelines: analytic cell PMFs and, for `samples` draws
/// from the source, the reconstructed values.
pub fn equivalence_check(map: &ScalarQuantMap, source: &dyn Density1d, samples: usize, seed: u64) -> Result<EquivalenceReport> {
    let compander = build_compander(map);
    let direct = direct_pmf(map, source)?;
    let companded = companded_pmf(&compander, source)?;
    let pmf_max_abs_diff = direct.iter().zip(&companded).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exact = true;
    let mut checked = 0;
    for _ in 0..samples {
        let y = source.sample(&mut rng);
        if map.borders.contains(&y) {
            continue;
        }
        checked += 1;
        let direct = map.reconstruct(map.quantize(y));
        let via = compander.reconstruct(compander.quantize(y));
        exact &= direct.to_bits() == via.to_bits();
    }
    Ok(EquivalenceReport { pmf_max_abs_diff, reconstruction_exact: exact, samples_checked: checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy_model::{Gaussian, Laplace, Uniform};
    use proptest::prelude::*;

    #[test]
    fn uniform_map_is_a_shift() {
        let map = ScalarQuantMap::new(vec![-0.5, 0.5, 1.5], vec![0.0, 1.0]).unwrap();
        let f = build_compander(&map);
        for x in [-0.5, -0.2, 0.0, 0.3, 1.0, 1.49] {
            assert!((f.forward(x) - (x + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn knots_map_to_half_integers() {
        let map = ScalarQuantMap::new(vec![0.0, 1.0, 4.0], vec![0.5, 2.0]).unwrap();
        let f = build_compander(&map);
        assert_eq!(f.forward(0.0), 0.5);
        assert_eq!(f.forward(0.5), 1.0);
        assert_eq!(f.forward(1.0), 1.5);
        assert_eq!(f.forward(2.0), 2.0);
        assert_eq!(f.forward(4.0), 2.5);
        // End segments extend linearly.
        assert!((f.forward(-1.0) + 0.5).abs() < 1e-15);
        assert!((f.forward(6.0) - 3.0).abs() < 1e-15);
        assert_eq!(f.inverse(2.0), 2.0);
    }

    #[test]
    fn non_monotone_rejected() {
        assert_eq!(ScalarQuantMap::new(vec![0.0, 1.0, 4.0], vec![0.5, 0.9]), Err(Error::NonMonotone));
        assert_eq!(ScalarQuantMap::new(vec![0.0, 1.0], vec![1.0]), Err(Error::NonMonotone));
        assert_eq!(ScalarQuantMap::new(vec![0.0, 1.0], vec![]), Err(Error::InvalidInput));
    }

    #[test]
    fn random_map_gaussian_pmfs_agree() {
        let map = ScalarQuantMap::random(8, -3.0, 3.0, 11).unwrap();
        let f = build_compander(&map);
        let g = Gaussian::new(0.0, 1.0);
        let a = direct_pmf(&map, &g).unwrap();
        let b = companded_pmf(&f, &g).unwrap();
        for (i, (p, q)) in a.iter().zip(&b).enumerate() {
            // Independent check of the direct side against the closed-form CDF.
            let exact = g.mass(map.borders()[i], map.borders()[i + 1]);
            assert!((p - exact).abs() < 1e-10, "{p} {exact}");
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_map_equivalence_is_tight() {
        let borders: Vec<f64> = (0..=8).map(|i| i as f64 - 4.5).collect();
        let centers: Vec<f64> = (0..8).map(|i| i as f64 - 4.0).collect();
        let map = ScalarQuantMap::new(borders, centers).unwrap();
        let r = equivalence_check(&map, &Gaussian::new(0.0, 1.0), 10_000, 1).unwrap();
        assert!(r.pmf_max_abs_diff < 1e-12, "{}", r.pmf_max_abs_diff);
        assert!(r.reconstruction_exact);
    }

    #[test]
    fn uniform_source_with_jumps() {
        let map = ScalarQuantMap::random(8, -0.5, 4.5, 3).unwrap();
        let r = equivalence_check(&map, &Uniform::new(0.0, 4.0).unwrap(), 10_000, 2).unwrap();
        assert!(r.pmf_max_abs_diff < 1e-6, "{}", r.pmf_max_abs_diff);
        assert!(r.reconstruction_exact);
        let r = equivalence_check(&map, &Laplace { mu: 2.0, scale: 1.0 }, 10_000, 2).unwrap();
        assert!(r.pmf_max_abs_diff < 1e-6);
        assert!(r.reconstruction_exact);
    }

    #[test]
    fn borders_quantize_consistently() {
        // Open-segment clamping: the largest value below a border stays in its cell.
        let map = ScalarQuantMap::new(vec![0.0, 0.1, 0.3, 1.0], vec![0.05, 0.2, 0.7]).unwrap();
        let f = build_compander(&map);
        for &b in &map.borders()[1..3] {
            let below = b.next_down();
            assert_eq!(f.quantize(below), map.quantize(below));
            let above = b.next_up();
            assert_eq!(f.quantize(above), map.quantize(above));
        }
    }

    proptest! {
        #[test]
        fn roundtrip_and_monotone(seed in any::<u64>(), cells in 1usize..20, xs in prop::collection::vec(-4.0f64..4.0, 1..50)) {
            let map = ScalarQuantMap::random(cells, -3.0, 3.0, seed).unwrap();
            let f = build_compander(&map);
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            for w in sorted.windows(2) {
                if w[0] < w[1] {
                    prop_assert!(f.forward(w[0]) <= f.forward(w[1]));
                }
            }
            for &x in &xs {
                prop_assert!((f.inverse(f.forward(x)) - x).abs() < 1e-12);
                if !map.borders().contains(&x) {
                    prop_assert_eq!(f.reconstruct(f.quantize(x)), map.reconstruct(map.quantize(x)));
                }
            }
        }
    }
}
