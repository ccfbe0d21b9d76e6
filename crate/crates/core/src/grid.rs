//! Functions on the n-torus `[0,1)^n` sampled on a dyadic grid.
//!
//! A [`GridFunction`] stores one value vector per grid cell; the cell at
//! multi-index `(i_1, …, i_n)` is `Π [i_a 2^{-J}, (i_a+1) 2^{-J})` and the
//! function is treated as constant on it, so the quadratures below are exact
//! for the piecewise-constant model.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dyadic::{haar_function, haar_synthesis, DyadicCube, HaarCoefficients, SignPattern};
use crate::error::{Error, Result};
use crate::ring::{ring_cover, FaceMode};

pub const MAX_DIM: usize = 3;
/// Upper bound on `n·J`, keeping a dense grid below 2^26 cells.
pub const MAX_CELLS_LOG2: u32 = 26;

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    dim: usize,
    level: u32,
    value_dim: usize,
    value_exponent: f64,
    samples: Vec<f64>,
}

fn check_shape(dim: usize, level: u32, value_dim: usize) -> Result<()> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::OutOfRange(format!("dimension {dim} not in 1..={MAX_DIM}")));
    }
    if value_dim == 0 {
        return Err(Error::OutOfRange("value dimension must be positive".into()));
    }
    if level as usize * dim > MAX_CELLS_LOG2 as usize {
        return Err(Error::OutOfRange(format!(
            "grid 2^({level}·{dim}) exceeds 2^{MAX_CELLS_LOG2} cells"
        )));
    }
    Ok(())
}

impl GridFunction {
    /// Scalar function from row-major samples (first axis slowest).
    pub fn new(dim: usize, level: u32, samples: Vec<f64>) -> Result<Self> {
        Self::with_values(dim, level, 1, 2.0, samples)
    }

    /// `ℝ^d`-valued function with the `ℓ^q` norm on the value space.
    pub fn with_values(
        dim: usize,
        level: u32,
        value_dim: usize,
        value_exponent: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        check_shape(dim, level, value_dim)?;
        if !(value_exponent >= 1.0) {
            return Err(Error::OutOfRange(format!("value exponent {value_exponent} < 1")));
        }
        let expected = value_dim << (level as usize * dim);
        if samples.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} samples, got {}",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction("non-finite sample".into()));
        }
        Ok(Self { dim, level, value_dim, value_exponent, samples })
    }

    pub fn zeros(dim: usize, level: u32) -> Self {
        Self::constant(dim, level, 0.0)
    }

    pub fn constant(dim: usize, level: u32, value: f64) -> Self {
        check_shape(dim, level, 1).expect("invalid grid shape");
        Self { dim, level, value_dim: 1, value_exponent: 2.0, samples: vec![value; 1 << (level as usize * dim)] }
    }

    /// Scalar function defined cell by cell from the cell multi-index.
    pub fn from_cells(dim: usize, level: u32, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        check_shape(dim, level, 1)?;
        let side = 1usize << level;
        let len = 1usize << (level as usize * dim);
        let mut idx = [0usize; MAX_DIM];
        let mut samples = Vec::with_capacity(len);
        for flat in 0..len {
            unflatten(flat, dim, side, &mut idx);
            samples.push(f(&idx[..dim]));
        }
        Self::new(dim, level, samples)
    }

    /// Scalar function sampled at cell centres.
    pub fn from_points(dim: usize, level: u32, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let h = (-(level as f64)).exp2();
        Self::from_cells(dim, level, |idx| {
            let mut x = [0.0; MAX_DIM];
            for (a, &i) in idx.iter().enumerate() {
                x[a] = (i as f64 + 0.5) * h;
            }
            f(&x[..idx.len()])
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn value_exponent(&self) -> f64 {
        self.value_exponent
    }

    /// Cells per axis, `2^J`.
    pub fn side(&self) -> usize {
        1 << self.level
    }

    pub fn cell_count(&self) -> usize {
        1 << (self.level as usize * self.dim)
    }

    /// Grid spacing `2^{-J}`.
    pub fn spacing(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn cell_volume(&self) -> f64 {
        (-((self.level as usize * self.dim) as f64)).exp2()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn cell_coords(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        unflatten(flat, self.dim, self.side(), &mut idx);
        idx
    }

    pub fn cell_index(&self, coords: &[usize]) -> usize {
        flatten(coords, self.side())
    }

    /// Value of a scalar function at a cell.
    pub fn at(&self, coords: &[usize]) -> f64 {
        self.samples[self.cell_index(coords) * self.value_dim]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.level == other.level && self.value_dim == other.value_dim
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "(n={}, J={}, d={}) vs (n={}, J={}, d={})",
                self.dim, self.level, self.value_dim, other.dim, other.level, other.value_dim
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidFunction("non-finite sample".into()))
        }
    }

    /// Same shape, new samples. Panics on a length mismatch.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), self.samples.len(), "sample length mismatch");
        Self {
            dim: self.dim,
            level: self.level,
            value_dim: self.value_dim,
            value_exponent: self.value_exponent,
            samples,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_samples(self.samples.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(self.with_samples(self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(self.with_samples(self.samples.iter().zip(&other.samples).map(|(a, b)| a - b).collect()))
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(self.with_samples(self.samples.iter().zip(&other.samples).map(|(a, b)| a + c * b).collect()))
    }

    /// Scalar component `c` of a vector-valued function.
    pub fn component(&self, c: usize) -> Self {
        assert!(c < self.value_dim);
        let samples = self.samples.iter().skip(c).step_by(self.value_dim).copied().collect();
        Self { dim: self.dim, level: self.level, value_dim: 1, value_exponent: 2.0, samples }
    }

    /// Interleave scalar components into an `ℝ^d`-valued function.
    pub fn from_components(components: &[GridFunction], value_exponent: f64) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::ShapeMismatch("no components".into()))?;
        for c in components {
            if c.value_dim != 1 || c.dim != first.dim || c.level != first.level {
                return Err(Error::ShapeMismatch("components must be scalar and share (n, J)".into()));
            }
        }
        let d = components.len();
        let mut samples = vec![0.0; first.cell_count() * d];
        for (c, comp) in components.iter().enumerate() {
            for (x, &v) in comp.samples.iter().enumerate() {
                samples[x * d + c] = v;
            }
        }
        Self::with_values(first.dim, first.level, d, value_exponent, samples)
    }

    /// Apply a scalar linear map to every component.
    pub fn map_components(&self, f: impl Fn(&GridFunction) -> Result<GridFunction>) -> Result<Self> {
        if self.value_dim == 1 {
            let mut out = f(self)?;
            out.value_exponent = self.value_exponent;
            return Ok(out);
        }
        let parts = (0..self.value_dim).map(|c| f(&self.component(c))).collect::<Result<Vec<_>>>()?;
        Self::from_components(&parts, self.value_exponent)
    }

    fn value_norm(&self, v: &[f64]) -> f64 {
        if v.len() == 1 {
            return v[0].abs();
        }
        let q = self.value_exponent;
        if q.is_infinite() {
            v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        } else {
            v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q)
        }
    }

    /// `(2^{-Jn} Σ_x ‖u(x)‖_q^p)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        self.validate()?;
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::OutOfRange(format!("exponent p = {p} must be finite and ≥ 1")));
        }
        let scale = self.sup_norm();
        if scale == 0.0 {
            return Ok(0.0);
        }
        // normalise by the sup norm so large p cannot overflow
        let sum = compensated_sum(self.samples.chunks_exact(self.value_dim).map(|v| (self.value_norm(v) / scale).powf(p)));
        Ok(scale * (sum * self.cell_volume()).powf(1.0 / p))
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.chunks_exact(self.value_dim).map(|v| self.value_norm(v)).fold(0.0, f64::max)
    }

    /// `2^{-Jn} Σ_x ⟨u(x), v(x)⟩`, componentwise for vector values.
    pub fn inner_product(&self, other: &Self) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let s: f64 = self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).sum();
        Ok(s * self.cell_volume())
    }

    /// Mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.value_dim];
        for v in self.samples.chunks_exact(self.value_dim) {
            for (acc, x) in m.iter_mut().zip(v) {
                *acc += x;
            }
        }
        let w = self.cell_volume();
        m.iter_mut().for_each(|x| *x *= w);
        m
    }

    /// Flat binary encoding: `n, J, d` as little-endian u32, `q` as f64, then samples as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.samples.len());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.level.to_le_bytes());
        out.extend_from_slice(&(self.value_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.value_exponent.to_le_bytes());
        for v in &self.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 {
            return Err(Error::Parse("truncated header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let dim = u32_at(0) as usize;
        let level = u32_at(4);
        let value_dim = u32_at(8) as usize;
        let q = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        check_shape(dim, level, value_dim)?;
        let body = &bytes[20..];
        let expected = value_dim << (level as usize * dim);
        if body.len() != 8 * expected {
            return Err(Error::Parse(format!("expected {expected} samples, got {} bytes", body.len())));
        }
        let samples = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::with_values(dim, level, value_dim, q, samples)
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// CSV with columns `i1..in, v1..vd`. Meant for small grids.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let head: Vec<String> = (1..=self.dim)
            .map(|a| format!("i{a}"))
            .chain((1..=self.value_dim).map(|c| format!("v{c}")))
            .collect();
        s.push_str(&head.join(","));
        s.push('\n');
        for (flat, v) in self.samples.chunks_exact(self.value_dim).enumerate() {
            let idx = self.cell_coords(flat);
            let row: Vec<String> = idx[..self.dim]
                .iter()
                .map(|i| i.to_string())
                .chain(v.iter().map(|x| format!("{x:e}")))
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

pub(crate) fn unflatten(mut flat: usize, dim: usize, side: usize, idx: &mut [usize; MAX_DIM]) {
    for a in (0..dim).rev() {
        idx[a] = flat % side;
        flat /= side;
    }
}

/// Neumaier summation; plain summation drifts by ~1e-12 over 2^18 equal terms.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn flatten(coords: &[usize], side: usize) -> usize {
    coords.iter().fold(0, |acc, &i| acc * side + i)
}

/// Probe families used to drive norm estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProbeKind {
    /// i.i.d. standard normal cell values.
    WhiteNoise,
    /// Exactly `h_Q^(ε)`.
    SingleHaar { cube: DyadicCube, pattern: SignPattern },
    /// `Σ_Q r_Q h_Q^(ε)` over all cubes with scale in `lo..=hi`, random signs `r_Q`.
    ScaleRademacher { lo: u32, hi: u32, pattern: SignPattern },
    /// `cos(2π k x_axis + φ)` times a random ±1 pattern at `fast_scale` in the other axes.
    AnisotropicLowFreq { axis: usize, frequency: u32, fast_scale: u32 },
    /// `Σ_{E ∈ U_λ(Q)} r_E h_E^(ε)` with random signs over a ring cover.
    RingSupported { cube: DyadicCube, pattern: SignPattern, lambda: u32, face_mode: FaceMode },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub seed: u64,
}

impl ProbeSpec {
    pub fn new(kind: ProbeKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Deterministic probe generation: the seed fixes every random draw.
pub fn generate_probe(spec: &ProbeSpec, dim: usize, level: u32) -> Result<GridFunction> {
    check_shape(dim, level, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.kind {
        ProbeKind::WhiteNoise => {
            let len = 1usize << (level as usize * dim);
            let samples = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            GridFunction::new(dim, level, samples)
        }
        ProbeKind::SingleHaar { cube, pattern } => {
            if cube.dim() != dim {
                return Err(Error::ShapeMismatch(format!("cube dimension {} vs grid {dim}", cube.dim())));
            }
            haar_function(cube, *pattern, level)
        }
        ProbeKind::ScaleRademacher { lo, hi, pattern } => {
            if lo > hi || *hi >= level {
                return Err(Error::OutOfRange(format!("scales {lo}..={hi} not resolvable at level {level}")));
            }
            pattern.check(dim)?;
            let mut c = HaarCoefficients::zeros(dim, 1, *lo, hi + 1);
            for j in *lo..=*hi {
                for idx in 0..(1usize << (j as usize * dim)) {
                    let cube = DyadicCube::from_index(j, idx, dim);
                    c.set(&cube, *pattern, 0, random_sign(&mut rng));
                }
            }
            haar_synthesis(&c, level)
        }
        ProbeKind::AnisotropicLowFreq { axis, frequency, fast_scale } => {
            if *axis >= dim || *fast_scale > level {
                return Err(Error::OutOfRange("anisotropic probe parameters".into()));
            }
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let blocks = 1usize << (*fast_scale as usize * (dim - 1));
            let signs: Vec<f64> = (0..blocks).map(|_| random_sign(&mut rng)).collect();
            let shift = level - fast_scale;
            let side_fast = 1usize << fast_scale;
            let h = (-(level as f64)).exp2();
            GridFunction::from_cells(dim, level, |idx| {
                let t = (idx[*axis] as f64 + 0.5) * h;
                let block = idx
                    .iter()
                    .enumerate()
                    .filter(|(a, _)| a != axis)
                    .fold(0usize, |acc, (_, &i)| acc * side_fast + (i >> shift));
                (std::f64::consts::TAU * (*frequency as f64) * t + phase).cos() * signs[block]
            })
        }
        ProbeKind::RingSupported { cube, pattern, lambda, face_mode } => {
            let dom = ring_cover(cube, *pattern, *lambda, level, *face_mode)?;
            let mut c = HaarCoefficients::zeros(dim, 1, 0, level);
            for e in &dom.cover {
                c.set(e, *pattern, 0, random_sign(&mut rng));
            }
            haar_synthesis(&c, level)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_of_equal_terms() {
        let x = 1.0 / 36.0;
        let n = 1 << 18;
        assert_eq!(compensated_sum(std::iter::repeat(x).take(n)), n as f64 * x);
        assert_eq!(compensated_sum([1e100, 1.0, -1e100]), 1.0);
    }
    use approx::assert_abs_diff_eq;

    fn noise(dim: usize, level: u32, seed: u64) -> GridFunction {
        generate_probe(&ProbeSpec::new(ProbeKind::WhiteNoise, seed), dim, level).unwrap()
    }

    #[test]
    fn constant_norm() {
        for (n, j) in [(1, 3), (2, 4), (3, 2)] {
            let u = GridFunction::constant(n, j, 1.0);
            assert_abs_diff_eq!(u.lp_norm(3.0).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn haar_norm_one_dim() {
        let u = GridFunction::new(1, 1, vec![1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(u.lp_norm(2.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_matches_direct_loop() {
        let u = noise(2, 3, 11);
        let mut acc = 0.0;
        for i in 0..8 {
            for k in 0..8 {
                acc += u.at(&[i, k]).powi(2);
            }
        }
        let direct = (acc / 64.0).sqrt();
        assert_abs_diff_eq!(u.lp_norm(2.0).unwrap(), direct, epsilon = 1e-14);
    }

    #[test]
    fn inner_product_matches_direct_sum() {
        let u = noise(2, 2, 1);
        let v = noise(2, 2, 2);
        let direct: f64 = (0..16).map(|x| u.samples()[x] * v.samples()[x]).sum::<f64>() / 16.0;
        assert_abs_diff_eq!(u.inner_product(&v).unwrap(), direct, epsilon = 1e-14);
        assert_abs_diff_eq!(u.inner_product(&v).unwrap(), v.inner_product(&u).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let u = GridFunction::zeros(2, 3);
        let v = GridFunction::zeros(2, 4);
        assert!(matches!(u.inner_product(&v), Err(Error::ShapeMismatch(_))));
        assert!(u.add(&v).is_err());
    }

    #[test]
    fn non_finite_samples_rejected() {
        assert!(matches!(GridFunction::new(1, 1, vec![1.0, f64::NAN]), Err(Error::InvalidFunction(_))));
    }

    #[test]
    fn zero_norm_iff_zero() {
        assert_eq!(GridFunction::zeros(2, 3).lp_norm(1.5).unwrap(), 0.0);
        assert!(noise(2, 3, 5).lp_norm(1.5).unwrap() > 0.0);
    }

    #[test]
    fn vector_valued_norm_uses_value_exponent() {
        // one cell of four carries (3, 4); ℓ^2 value norm 5, ℓ^1 value norm 7
        let samples = vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let u2 = GridFunction::with_values(2, 1, 2, 2.0, samples.clone()).unwrap();
        let u1 = GridFunction::with_values(2, 1, 2, 1.0, samples).unwrap();
        assert_abs_diff_eq!(u2.lp_norm(2.0).unwrap(), (25.0f64 / 4.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(u1.lp_norm(2.0).unwrap(), (49.0f64 / 4.0).sqrt(), epsilon = 1e-14);
        let parts = [u2.component(0), u2.component(1)];
        assert_eq!(GridFunction::from_components(&parts, 2.0).unwrap(), u2);
    }

    #[test]
    fn holder_inequality_on_probes() {
        for seed in 0..10 {
            let u = noise(2, 4, seed);
            let v = noise(2, 4, seed + 100);
            for p in [1.5, 2.0, 3.0] {
                let lhs = u.inner_product(&v).unwrap().abs();
                let rhs = u.lp_norm(p).unwrap() * v.lp_norm(p / (p - 1.0)).unwrap();
                assert!(lhs <= rhs * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn single_haar_probe_is_tensor_product() {
        let spec = ProbeSpec::new(
            ProbeKind::SingleHaar { cube: DyadicCube::root(2), pattern: SignPattern::from_bits(&[1, 0]) },
            0,
        );
        let u = generate_probe(&spec, 2, 2).unwrap();
        let expected = GridFunction::from_cells(2, 2, |i| if i[0] < 2 { 1.0 } else { -1.0 }).unwrap();
        assert_eq!(u, expected);
    }

    #[test]
    fn probes_are_deterministic() {
        let kinds = vec![
            ProbeKind::WhiteNoise,
            ProbeKind::ScaleRademacher { lo: 1, hi: 3, pattern: SignPattern::from_bits(&[1, 1]) },
            ProbeKind::AnisotropicLowFreq { axis: 0, frequency: 1, fast_scale: 3 },
        ];
        for kind in kinds {
            let spec = ProbeSpec::new(kind, 42);
            let a = generate_probe(&spec, 2, 5).unwrap();
            let b = generate_probe(&spec, 2, 5).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
        }
    }

    #[test]
    fn white_noise_mean_is_small() {
        let level = 4;
        let u = noise(2, level, 9);
        let n = u.cell_count() as f64;
        // unit variance samples: mean within 4σ/√N
        assert!(u.mean()[0].abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn probe_cube_outside_grid_is_an_error() {
        let spec = ProbeSpec::new(
            ProbeKind::SingleHaar { cube: DyadicCube::new(4, &[0, 0]).unwrap(), pattern: SignPattern::from_bits(&[1, 0]) },
            0,
        );
        assert!(generate_probe(&spec, 2, 3).is_err());
    }

    #[test]
    fn binary_format_roundtrip_and_header() {
        let u = GridFunction::with_values(2, 2, 2, 4.0, (0..32).map(|i| i as f64 * 0.25).collect()).unwrap();
        let bytes = u.to_bytes();
        assert_eq!(&bytes[0..4], &2u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &4.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 32 * 8);
        assert_eq!(GridFunction::from_bytes(&bytes).unwrap(), u);
        assert!(GridFunction::from_bytes(&bytes[..30]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let u = GridFunction::new(1, 1, vec![1.0, -1.0]).unwrap();
        let csv = u.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i1,v1");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,-1"));
    }
}
