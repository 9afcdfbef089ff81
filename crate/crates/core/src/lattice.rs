//! Uniform quantization lattices in one to three dimensions.
//!
//! Three lattices are supported: the integer lattice, the hexagonal lattice
//! (flat-top cells, vertices at `(±a, 0)`) and the body-centred cubic lattice,
//! whose Voronoi cell is the truncated octahedron. Nearest-point search rounds
//! in the two cosets of a rectangular sublattice and keeps the closer result.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest dictionary the coder can address at 16-bit precision.
pub const MAX_DICTIONARY: usize = 1 << 16;

/// Default per-axis dictionary half-width for Gaussian sources, in units of σ.
pub const DEFAULT_SIGMA_BOUND: f64 = 6.0;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LatticeKind {
    Integer1D,
    Hex2D,
    TruncOct3D,
}

impl LatticeKind {
    pub const ALL: [LatticeKind; 3] = [LatticeKind::Integer1D, LatticeKind::Hex2D, LatticeKind::TruncOct3D];

    pub fn dim(self) -> usize {
        match self {
            LatticeKind::Integer1D => 1,
            LatticeKind::Hex2D => 2,
            LatticeKind::TruncOct3D => 3,
        }
    }

    /// Identifier stored in bitstream headers.
    pub fn id(self) -> u8 {
        match self {
            LatticeKind::Integer1D => 0,
            LatticeKind::Hex2D => 1,
            LatticeKind::TruncOct3D => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(LatticeKind::Integer1D),
            1 => Ok(LatticeKind::Hex2D),
            2 => Ok(LatticeKind::TruncOct3D),
            _ => Err(Error::InvalidParameter(format!("unknown lattice id {id}"))),
        }
    }

    /// Short name used in CSV output and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            LatticeKind::Integer1D => "sq",
            LatticeKind::Hex2D => "hex",
            LatticeKind::TruncOct3D => "oct",
        }
    }
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sq" | "int" | "integer1d" => Ok(LatticeKind::Integer1D),
            "hex" | "hex2d" => Ok(LatticeKind::Hex2D),
            "oct" | "bcc" | "truncoct3d" => Ok(LatticeKind::TruncOct3D),
            other => Err(Error::InvalidParameter(format!("unknown lattice '{other}'"))),
        }
    }
}

/// A lattice kind scaled so that each Voronoi cell has the given volume.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeSpec {
    kind: LatticeKind,
    volume: f64,
}

/// A lattice center, stored both as integer basis coefficients and as coordinates.
///
/// Coordinates are always recomputed from the coefficients, so two points with
/// equal coefficients have bit-identical coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticePoint {
    coeffs: [i64; 3],
    coords: [f64; 3],
    dim: u8,
}

impl LatticePoint {
    pub fn coeffs(&self) -> [i64; 3] {
        self.coeffs
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }
}

/// Reconstruction value of a quantized point.
pub fn dequantize(p: &LatticePoint) -> &[f64] {
    p.coords()
}

/// Per-dimension mean squared error of a uniform source over one cell.
pub fn second_moment(kind: LatticeKind, volume: f64) -> f64 {
    match kind {
        LatticeKind::Integer1D => volume * volume / 12.0,
        LatticeKind::Hex2D => 5.0 * SQRT3 * volume / 108.0,
        LatticeKind::TruncOct3D => {
            let norm = (8.0 * std::f64::consts::SQRT_2).powf(2.0 / 3.0);
            19.0 * volume.powf(2.0 / 3.0) / (48.0 * norm)
        }
    }
}

/// Nearest lattice center to `x`.
pub fn nearest_point(x: &[f64], lattice: &LatticeSpec) -> Result<LatticePoint> {
    lattice.nearest_point(x)
}

impl LatticeSpec {
    pub fn new(kind: LatticeKind, volume: f64) -> Result<Self> {
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::InvalidParameter(format!("volume must be positive, got {volume}")));
        }
        Ok(LatticeSpec { kind, volume })
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Per-axis step of a cubic grid with the same cell volume.
    pub fn unit_step(&self) -> f64 {
        self.volume.powf(1.0 / self.dim() as f64)
    }

    /// Edge length `a` of the cell (the interval width in 1D).
    pub fn side_length(&self) -> f64 {
        match self.kind {
            LatticeKind::Integer1D => self.volume,
            LatticeKind::Hex2D => (2.0 * self.volume / (3.0 * SQRT3)).sqrt(),
            LatticeKind::TruncOct3D => self.cube_side() / (2.0 * std::f64::consts::SQRT_2),
        }
    }

    /// Side of the cubic sublattice of the BCC realization.
    fn cube_side(&self) -> f64 {
        (2.0 * self.volume).cbrt()
    }

    /// Basis vectors as rows; integer coefficients refer to this basis.
    pub fn basis(&self) -> Vec<Vec<f64>> {
        match self.kind {
            LatticeKind::Integer1D => vec![vec![self.volume]],
            LatticeKind::Hex2D => {
                let a = self.side_length();
                vec![vec![1.5 * a, 0.5 * SQRT3 * a], vec![0.0, SQRT3 * a]]
            }
            LatticeKind::TruncOct3D => {
                let l = self.cube_side();
                vec![vec![l, 0.0, 0.0], vec![0.0, l, 0.0], vec![0.5 * l, 0.5 * l, 0.5 * l]]
            }
        }
    }

    /// Lattice point with the given basis coefficients.
    pub fn point(&self, coeffs: [i64; 3]) -> LatticePoint {
        let [i, j, k] = coeffs;
        let coords = match self.kind {
            LatticeKind::Integer1D => [i as f64 * self.volume, 0.0, 0.0],
            LatticeKind::Hex2D => {
                let a = self.side_length();
                [i as f64 * (1.5 * a), (i + 2 * j) as f64 * (0.5 * SQRT3 * a), 0.0]
            }
            LatticeKind::TruncOct3D => {
                let half = 0.5 * self.cube_side();
                [(2 * i + k) as f64 * half, (2 * j + k) as f64 * half, k as f64 * half]
            }
        };
        LatticePoint { coeffs, coords, dim: self.dim() as u8 }
    }

    /// Largest distance from a cell's center to its boundary.
    pub fn covering_radius(&self) -> f64 {
        match self.kind {
            LatticeKind::Integer1D => 0.5 * self.volume,
            LatticeKind::Hex2D => self.side_length(),
            LatticeKind::TruncOct3D => self.cube_side() * 5f64.sqrt() / 4.0,
        }
    }

    pub fn second_moment(&self) -> f64 {
        second_moment(self.kind, self.volume)
    }

    /// Vertices of the cell around the origin.
    pub fn cell_vertices(&self) -> Vec<[f64; 3]> {
        match self.kind {
            LatticeKind::Integer1D => vec![[-0.5 * self.volume, 0.0, 0.0], [0.5 * self.volume, 0.0, 0.0]],
            LatticeKind::Hex2D => {
                let a = self.side_length();
                let h = 0.5 * SQRT3 * a;
                vec![[a, 0.0, 0.0], [0.5 * a, h, 0.0], [-0.5 * a, h, 0.0], [-a, 0.0, 0.0], [-0.5 * a, -h, 0.0], [0.5 * a, -h, 0.0]]
            }
            LatticeKind::TruncOct3D => {
                // All permutations of (0, ±L/4, ±L/2).
                let q = 0.25 * self.cube_side();
                let mut out = Vec::with_capacity(24);
                for &(zero, small, big) in &[(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)] {
                    for s1 in [-1.0, 1.0] {
                        for s2 in [-1.0, 1.0] {
                            let mut v = [0.0; 3];
                            v[zero] = 0.0;
                            v[small] = s1 * q;
                            v[big] = s2 * 2.0 * q;
                            out.push(v);
                        }
                    }
                }
                out
            }
        }
    }

    /// Axes that separate the cell from any axis-aligned box when disjoint.
    fn separating_axes(&self) -> Vec<[f64; 3]> {
        match self.kind {
            LatticeKind::Integer1D => vec![[1.0, 0.0, 0.0]],
            LatticeKind::Hex2D => vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5 * SQRT3, 0.5, 0.0], [-0.5 * SQRT3, 0.5, 0.0]],
            LatticeKind::TruncOct3D => vec![
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 1.0],
                [1.0, 1.0, -1.0],
                [1.0, -1.0, 1.0],
                [-1.0, 1.0, 1.0],
                [1.0, 1.0, 0.0],
                [1.0, -1.0, 0.0],
                [1.0, 0.0, 1.0],
                [1.0, 0.0, -1.0],
                [0.0, 1.0, 1.0],
                [0.0, 1.0, -1.0],
            ],
        }
    }

    pub fn nearest_point(&self, x: &[f64]) -> Result<LatticePoint> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput);
        }
        Ok(match self.kind {
            LatticeKind::Integer1D => self.point([(x[0] / self.volume).round() as i64, 0, 0]),
            LatticeKind::Hex2D => {
                let a = self.side_length();
                let (w, h) = (3.0 * a, SQRT3 * a);
                let p0 = (x[0] / w).round() as i64;
                let q0 = (x[1] / h).round() as i64;
                let c0 = self.point([2 * p0, q0 - p0, 0]);
                let p1 = ((x[0] - 1.5 * a) / w).round() as i64;
                let q1 = ((x[1] - 0.5 * h) / h).round() as i64;
                let c1 = self.point([2 * p1 + 1, q1 - p1, 0]);
                closer(x, c0, c1)
            }
            LatticeKind::TruncOct3D => {
                let l = self.cube_side();
                let r0: [i64; 3] = std::array::from_fn(|d| (x[d] / l).round() as i64);
                let c0 = self.point([r0[0] - r0[2], r0[1] - r0[2], 2 * r0[2]]);
                let r1: [i64; 3] = std::array::from_fn(|d| ((x[d] - 0.5 * l) / l).round() as i64);
                let c1 = self.point([r1[0] - r1[2], r1[1] - r1[2], 2 * r1[2] + 1]);
                closer(x, c0, c1)
            }
        })
    }
}

/// Ties go to the first argument, which is always the coset holding the origin.
fn closer(x: &[f64], c0: LatticePoint, c1: LatticePoint) -> LatticePoint {
    if dist2(x, c0.coords()) <= dist2(x, c1.coords()) {
        c0
    } else {
        c1
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Per-axis `μ ± kσ` bounds.
pub fn gaussian_bounds(mu: &[f64], sigma: &[f64], k: f64) -> Vec<(f64, f64)> {
    mu.iter().zip(sigma).map(|(&m, &s)| (m - k * s, m + k * s)).collect()
}

/// The finite set of lattice centers whose cells meet a bounding box.
#[derive(Clone, Debug)]
pub struct Dictionary {
    lattice: LatticeSpec,
    bounds: Vec<(f64, f64)>,
    centers: Vec<LatticePoint>,
    index: HashMap<[i64; 3], usize>,
}

impl Dictionary {
    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn centers(&self) -> &[LatticePoint] {
        &self.centers
    }

    pub fn center(&self, index: usize) -> &LatticePoint {
        &self.centers[index]
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn index_of(&self, p: &LatticePoint) -> Option<usize> {
        self.index.get(&p.coeffs).copied()
    }

    /// Code of the dictionary cell for `x`; values outside the box are
    /// clamped onto it first.
    pub fn quantize(&self, x: &[f64]) -> Result<usize> {
        let dim = self.lattice.dim();
        if x.len() != dim || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput);
        }
        let mut clamped = [0.0; 3];
        for d in 0..dim {
            let (lo, hi) = self.bounds[d];
            clamped[d] = x[d].clamp(lo, hi);
        }
        let clamped = &clamped[..dim];
        let p = self.lattice.nearest_point(clamped)?;
        if let Some(i) = self.index_of(&p) {
            return Ok(i);
        }
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.centers.iter().enumerate() {
            let d = dist2(clamped, c.coords());
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best.1)
    }
}

/// Lists every center whose cell has a positive-measure intersection with
/// `bounds`, sorted by integer coefficients.
pub fn enumerate_dictionary(lattice: &LatticeSpec, bounds: &[(f64, f64)]) -> Result<Dictionary> {
    let dim = lattice.dim();
    if bounds.len() != dim || bounds.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
        return Err(Error::InvalidInput);
    }
    // Cells covering the box have total volume at least the box volume.
    let box_volume: f64 = bounds.iter().map(|(lo, hi)| hi - lo).product();
    if box_volume / lattice.volume() > MAX_DICTIONARY as f64 {
        return Err(Error::DictionaryTooLarge);
    }

    let r = lattice.covering_radius();
    let expanded: Vec<(f64, f64)> = bounds.iter().map(|&(lo, hi)| (lo - r, hi + r)).collect();
    let (periods, cosets): (Vec<f64>, Vec<Vec<f64>>) = match lattice.kind() {
        LatticeKind::Integer1D => (vec![lattice.volume()], vec![vec![0.0]]),
        LatticeKind::Hex2D => {
            let a = lattice.side_length();
            (vec![3.0 * a, SQRT3 * a], vec![vec![0.0, 0.0], vec![1.5 * a, 0.5 * SQRT3 * a]])
        }
        LatticeKind::TruncOct3D => {
            let l = lattice.cube_side();
            (vec![l; 3], vec![vec![0.0; 3], vec![0.5 * l; 3]])
        }
    };

    let mut ranges = Vec::new();
    let mut candidates = 0f64;
    for offset in &cosets {
        let r: Vec<(i64, i64)> = (0..dim)
            .map(|d| {
                let lo = ((expanded[d].0 - offset[d]) / periods[d]).floor() as i64;
                let hi = ((expanded[d].1 - offset[d]) / periods[d]).ceil() as i64;
                (lo, hi)
            })
            .collect();
        candidates += r.iter().map(|(lo, hi)| (hi - lo + 1) as f64).product::<f64>();
        ranges.push(r);
    }
    if candidates > 64.0 * MAX_DICTIONARY as f64 {
        return Err(Error::DictionaryTooLarge);
    }

    let axes = lattice.separating_axes();
    let vertices = lattice.cell_vertices();
    let cell_extent: Vec<(f64, f64)> = axes
        .iter()
        .map(|n| vertices.iter().map(|v| dot(v, n)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p))))
        .collect();
    let box_extent: Vec<(f64, f64)> = axes
        .iter()
        .map(|n| {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for d in 0..dim {
                let a = bounds[d].0 * n[d];
                let b = bounds[d].1 * n[d];
                lo += a.min(b);
                hi += a.max(b);
            }
            (lo, hi)
        })
        .collect();
    let scale = bounds.iter().fold(lattice.covering_radius(), |m, &(lo, hi)| m.max(lo.abs()).max(hi.abs()));
    let eps = 1e-12 * scale;

    let meets = |p: &LatticePoint| {
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(p.coords());
        axes.iter().zip(cell_extent.iter().zip(&box_extent)).all(|(n, (&(clo, chi), &(blo, bhi)))| {
            let s = dot(&c, n);
            s + chi > blo + eps && bhi > s + clo + eps
        })
    };

    let mut centers = Vec::new();
    for (coset, r) in ranges.iter().enumerate() {
        let (r0, r1, r2) = (r[0], *r.get(1).unwrap_or(&(0, 0)), *r.get(2).unwrap_or(&(0, 0)));
        for p in r0.0..=r0.1 {
            for q in r1.0..=r1.1 {
                for s in r2.0..=r2.1 {
                    let coeffs = match lattice.kind() {
                        LatticeKind::Integer1D => [p, 0, 0],
                        LatticeKind::Hex2D => [2 * p + coset as i64, q - p, 0],
                        LatticeKind::TruncOct3D => [p - s, q - s, 2 * s + coset as i64],
                    };
                    let point = lattice.point(coeffs);
                    if meets(&point) {
                        centers.push(point);
                    }
                }
            }
        }
    }
    if centers.len() > MAX_DICTIONARY {
        return Err(Error::DictionaryTooLarge);
    }
    centers.sort_by_key(|p| p.coeffs);
    let index = centers.iter().enumerate().map(|(i, p)| (p.coeffs, i)).collect();
    Ok(Dictionary { lattice: *lattice, bounds: bounds.to_vec(), centers, index })
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
