//! Dyadic cubes on the torus, the directional Haar system and its pyramid transform.
//!
//! `h_Q^(ε)(x) = Π_i h_{I_i}^{ε_i}(x_i)` where `h_I^1` is `+1` on the left half of
//! `I`, `-1` on the right half, and `h_I^0 = 1_I`. On the child of `Q` with
//! offset bits `c` (bit `i` set means the upper half along axis `i`) the sign is
//! `(-1)^{popcount(ε & c)}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    scale: u32,
    coords: [u32; MAX_DIM],
    dim: u8,
}

impl DyadicCube {
    pub fn new(scale: u32, coords: &[u32]) -> Result<Self> {
        let dim = coords.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::OutOfRange(format!("cube dimension {dim}")));
        }
        if scale > 30 {
            return Err(Error::OutOfRange(format!("cube scale {scale} > 30")));
        }
        if coords.iter().any(|&k| k >= 1 << scale) {
            return Err(Error::OutOfRange(format!("coordinates {coords:?} outside scale {scale}")));
        }
        let mut c = [0; MAX_DIM];
        c[..dim].copy_from_slice(coords);
        Ok(Self { scale, coords: c, dim: dim as u8 })
    }

    /// The whole torus `[0,1)^n`.
    pub fn root(dim: usize) -> Self {
        Self::new(0, &vec![0; dim]).expect("valid dimension")
    }

    /// Cube at `scale` with row-major linear index `idx`.
    pub fn from_index(scale: u32, mut idx: usize, dim: usize) -> Self {
        let side = 1usize << scale;
        let mut coords = [0u32; MAX_DIM];
        for a in (0..dim).rev() {
            coords[a] = (idx % side) as u32;
            idx /= side;
        }
        Self { scale, coords, dim: dim as u8 }
    }

    pub fn index(&self) -> usize {
        self.coords().iter().fold(0usize, |acc, &k| (acc << self.scale) | k as usize)
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords[..self.dim as usize]
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn side(&self) -> f64 {
        (-(self.scale as f64)).exp2()
    }

    pub fn measure(&self) -> f64 {
        (-((self.scale as usize * self.dim()) as f64)).exp2()
    }

    pub fn diameter(&self) -> f64 {
        self.side() * (self.dim() as f64).sqrt()
    }

    pub fn parent(&self) -> Option<Self> {
        if self.scale == 0 {
            return None;
        }
        let mut p = *self;
        p.scale -= 1;
        for k in &mut p.coords[..self.dim()] {
            *k >>= 1;
        }
        Some(p)
    }

    /// Child with offset bits `bits` (bit `a` selects the upper half along axis `a`).
    pub fn child(&self, bits: u8) -> Self {
        let mut c = *self;
        c.scale += 1;
        for a in 0..self.dim() {
            c.coords[a] = 2 * self.coords[a] + ((bits >> a) & 1) as u32;
        }
        c
    }

    pub fn children(&self) -> impl Iterator<Item = Self> + '_ {
        (0..1u8 << self.dim).map(move |b| self.child(b))
    }

    /// Whether `other` is contained in `self`.
    pub fn contains(&self, other: &Self) -> bool {
        if other.dim != self.dim || other.scale < self.scale {
            return false;
        }
        let s = other.scale - self.scale;
        self.coords().iter().zip(other.coords()).all(|(&a, &b)| b >> s == a)
    }

    /// `Q + m·side(Q)` on the torus.
    pub fn translate(&self, m: &[i64]) -> Self {
        let side = 1i64 << self.scale;
        let mut c = *self;
        for (a, &ma) in m.iter().enumerate().take(self.dim()) {
            c.coords[a] = (self.coords[a] as i64 + ma).rem_euclid(side) as u32;
        }
        c
    }

    /// Half-open grid index range of the cube along `axis` at level `J ≥ scale`.
    pub fn cell_range(&self, axis: usize, level: u32) -> std::ops::Range<usize> {
        let w = 1usize << (level - self.scale);
        let lo = self.coords[axis] as usize * w;
        lo..lo + w
    }

    /// Whether grid cell `idx` at `level` lies in the cube.
    pub fn contains_cell(&self, idx: &[usize], level: u32) -> bool {
        let s = level - self.scale;
        self.coords().iter().zip(idx).all(|(&k, &i)| (i >> s) as u32 == k)
    }
}

impl std::fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q(j={}, k={:?})", self.scale, self.coords())
    }
}

/// `ε ∈ {0,1}^n`, bit `i` for axis `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignPattern(u8);

impl SignPattern {
    pub fn from_mask(mask: u8) -> Self {
        Self(mask)
    }

    /// From a list of 0/1 entries, axis 0 first.
    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().enumerate().fold(0, |m, (a, &b)| m | ((b & 1) << a)))
    }

    pub fn mask(&self) -> u8 {
        self.0
    }

    pub fn bits(&self, dim: usize) -> Vec<u8> {
        (0..dim).map(|a| (self.0 >> a) & 1).collect()
    }

    pub fn get(&self, axis: usize) -> bool {
        (self.0 >> axis) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }

    /// Nonzero and within `n` bits.
    pub fn check(&self, dim: usize) -> Result<()> {
        if self.0 == 0 {
            Err(Error::InvalidPattern("ε = 0 does not select a Haar function".into()))
        } else if self.0 >> dim != 0 {
            Err(Error::InvalidPattern(format!("pattern {:#b} has bits beyond dimension {dim}", self.0)))
        } else {
            Ok(())
        }
    }

    /// All nonzero patterns in dimension `n`.
    pub fn all(dim: usize) -> impl Iterator<Item = Self> {
        (1..1u8 << dim).map(Self)
    }

    /// Sign of `h^(ε)` on the child with offset bits `child`.
    pub fn sign(&self, child: u8) -> f64 {
        if (self.0 & child).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl std::fmt::Display for SignPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let bits: Vec<String> = (0..8).take_while(|a| self.0 >> a != 0).map(|a| ((self.0 >> a) & 1).to_string()).collect();
        write!(f, "({})", bits.join(","))
    }
}

/// Haar expansion coefficients `u_Q^(ε) = ⟨u, h_Q^(ε)⟩ |Q|^{-1}` for scales in
/// `scale_lo..scale_hi`, plus the mean.
///
/// Storage is dense per scale, laid out `[cube][ε-1][component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoefficients {
    dim: usize,
    value_dim: usize,
    scale_lo: u32,
    scale_hi: u32,
    mean: Vec<f64>,
    data: Vec<Vec<f64>>,
}

impl HaarCoefficients {
    pub fn zeros(dim: usize, value_dim: usize, scale_lo: u32, scale_hi: u32) -> Self {
        assert!((1..=MAX_DIM).contains(&dim) && scale_lo <= scale_hi);
        let np = (1usize << dim) - 1;
        let data = (scale_lo..scale_hi).map(|j| vec![0.0; (np * value_dim) << (j as usize * dim)]).collect();
        Self { dim, value_dim, scale_lo, scale_hi, mean: vec![0.0; value_dim], data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    /// Stored scales, half-open.
    pub fn scale_range(&self) -> std::ops::Range<u32> {
        self.scale_lo..self.scale_hi
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn set_mean(&mut self, mean: &[f64]) {
        self.mean.copy_from_slice(mean);
    }

    fn num_patterns(&self) -> usize {
        (1 << self.dim) - 1
    }

    fn offset(&self, cube: &DyadicCube, eps: SignPattern, comp: usize) -> usize {
        (cube.index() * self.num_patterns() + eps.0 as usize - 1) * self.value_dim + comp
    }

    fn in_range(&self, cube: &DyadicCube, eps: SignPattern) -> bool {
        cube.dim() == self.dim && self.scale_range().contains(&cube.scale) && eps.check(self.dim).is_ok()
    }

    /// Coefficient of `h_Q^(ε)` in component `comp`; zero outside the stored range.
    pub fn get(&self, cube: &DyadicCube, eps: SignPattern, comp: usize) -> f64 {
        if !self.in_range(cube, eps) {
            return 0.0;
        }
        self.data[(cube.scale - self.scale_lo) as usize][self.offset(cube, eps, comp)]
    }

    /// Panics if `(Q, ε)` is outside the stored range.
    pub fn set(&mut self, cube: &DyadicCube, eps: SignPattern, comp: usize, value: f64) {
        assert!(self.in_range(cube, eps), "{cube} {eps} outside coefficient range");
        let o = self.offset(cube, eps, comp);
        self.data[(cube.scale - self.scale_lo) as usize][o] = value;
    }

    pub fn add_to(&mut self, cube: &DyadicCube, eps: SignPattern, comp: usize, value: f64) {
        assert!(self.in_range(cube, eps), "{cube} {eps} outside coefficient range");
        let o = self.offset(cube, eps, comp);
        self.data[(cube.scale - self.scale_lo) as usize][o] += value;
    }

    /// Raw storage of one scale, `[cube][ε-1][component]`.
    pub fn scale_data(&self, scale: u32) -> &[f64] {
        &self.data[(scale - self.scale_lo) as usize]
    }

    pub fn scale_data_mut(&mut self, scale: u32) -> &mut [f64] {
        &mut self.data[(scale - self.scale_lo) as usize]
    }

    /// All entries in scale, cube-index, pattern, component order.
    pub fn iter(&self) -> impl Iterator<Item = (DyadicCube, SignPattern, usize, f64)> + '_ {
        let np = self.num_patterns();
        let d = self.value_dim;
        self.scale_range().flat_map(move |j| {
            self.scale_data(j).iter().enumerate().map(move |(o, &v)| {
                let comp = o % d;
                let eps = SignPattern(((o / d) % np + 1) as u8);
                let cube = DyadicCube::from_index(j, o / d / np, self.dim);
                (cube, eps, comp, v)
            })
        })
    }

    /// Entries with `|value| > tol`.
    pub fn nonzero(&self, tol: f64) -> Vec<(DyadicCube, SignPattern, usize, f64)> {
        self.iter().filter(|e| e.3.abs() > tol).collect()
    }

    /// Zero every pattern other than `eps` and drop the mean.
    pub fn restrict_pattern(&self, eps: SignPattern) -> Self {
        let mut out = self.clone();
        out.mean.iter_mut().for_each(|m| *m = 0.0);
        let np = self.num_patterns();
        let d = self.value_dim;
        for block in &mut out.data {
            for (o, v) in block.iter_mut().enumerate() {
                if (o / d) % np + 1 != eps.0 as usize {
                    *v = 0.0;
                }
            }
        }
        out
    }

    /// `Σ |c(Q,ε)|² |Q| + |mean|²`, summed over components.
    pub fn energy(&self) -> f64 {
        let mut e: f64 = self.mean.iter().map(|m| m * m).sum();
        for j in self.scale_range() {
            let vol = (-((j as usize * self.dim) as f64)).exp2();
            e += vol * self.scale_data(j).iter().map(|v| v * v).sum::<f64>();
        }
        e
    }

    /// CSV with columns `j, k1..kn, e1..en[, c], value`; nonzero entries only.
    pub fn to_csv(&self) -> String {
        let mut head: Vec<String> = vec!["j".into()];
        head.extend((1..=self.dim).map(|a| format!("k{a}")));
        head.extend((1..=self.dim).map(|a| format!("e{a}")));
        if self.value_dim > 1 {
            head.push("c".into());
        }
        head.push("value".into());
        let mut s = head.join(",");
        s.push('\n');
        for (cube, eps, comp, v) in self.iter().filter(|e| e.3 != 0.0) {
            let mut row: Vec<String> = vec![cube.scale().to_string()];
            row.extend(cube.coords().iter().map(|k| k.to_string()));
            row.extend(eps.bits(self.dim).iter().map(|b| b.to_string()));
            if self.value_dim > 1 {
                row.push(comp.to_string());
            }
            row.push(format!("{v:e}"));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// `h_Q^(ε)` sampled at level `J`.
pub fn haar_function(cube: &DyadicCube, eps: SignPattern, level: u32) -> Result<GridFunction> {
    eps.check(cube.dim())?;
    if cube.scale >= level {
        return Err(Error::UnresolvableScale { scale: cube.scale, level });
    }
    let s = level - cube.scale - 1;
    GridFunction::from_cells(cube.dim(), level, |idx| {
        if !cube.contains_cell(idx, level) {
            return 0.0;
        }
        let child = idx.iter().enumerate().fold(0u8, |b, (a, &i)| b | ((((i >> s) & 1) as u8) << a));
        eps.sign(child)
    })
}

/// Child flat indices of every parent at `scale` (row-major at `scale + 1`).
fn child_offsets(dim: usize, scale: u32) -> (Vec<usize>, usize) {
    // flat child index = base(parent) + offset(c)
    let side_child = 1usize << (scale + 1);
    let offsets = (0..1usize << dim)
        .map(|c| (0..dim).fold(0usize, |acc, a| acc * side_child + ((c >> a) & 1)))
        .collect();
    (offsets, side_child)
}

fn parent_base(parent: usize, dim: usize, scale: u32, side_child: usize) -> usize {
    let side = 1usize << scale;
    let mut p = parent;
    let mut coords = [0usize; MAX_DIM];
    for a in (0..dim).rev() {
        coords[a] = p % side;
        p /= side;
    }
    coords[..dim].iter().fold(0usize, |acc, &k| acc * side_child + 2 * k)
}

/// In-place Walsh–Hadamard transform of length `2^n`; entry `ε` becomes `Σ_c (-1)^{|ε&c|} v_c`.
fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for k in i..i + h {
                let (a, b) = (v[k], v[k + h]);
                v[k] = a + b;
                v[k + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Full Haar analysis over scales `0..J` by the averaging pyramid.
pub fn haar_analysis(u: &GridFunction) -> HaarCoefficients {
    let n = u.dim();
    let d = u.value_dim();
    let level = u.level();
    let nc = 1usize << n;
    let inv = 1.0 / nc as f64;
    let mut out = HaarCoefficients::zeros(n, d, 0, level);
    let mut avg = u.samples().to_vec();
    let mut buf = vec![0.0; nc];
    for j in (0..level).rev() {
        let (offsets, side_child) = child_offsets(n, j);
        let parents = 1usize << (j as usize * n);
        let mut next = vec![0.0; parents * d];
        let coeffs = out.scale_data_mut(j);
        for p in 0..parents {
            let base = parent_base(p, n, j, side_child);
            for c in 0..d {
                for (slot, off) in buf.iter_mut().zip(&offsets) {
                    *slot = avg[(base + off) * d + c];
                }
                walsh_hadamard(&mut buf);
                next[p * d + c] = buf[0] * inv;
                for e in 1..nc {
                    coeffs[(p * (nc - 1) + e - 1) * d + c] = buf[e] * inv;
                }
            }
        }
        avg = next;
    }
    out.set_mean(&avg);
    out
}

/// `Σ c(Q,ε) h_Q^(ε) + mean` at level `J`.
pub fn haar_synthesis(c: &HaarCoefficients, level: u32) -> Result<GridFunction> {
    if c.scale_hi > level {
        return Err(Error::UnresolvableScale { scale: c.scale_hi - 1, level });
    }
    let n = c.dim;
    let d = c.value_dim;
    let nc = 1usize << n;
    let mut avg = c.mean.clone();
    let mut buf = vec![0.0; nc];
    for j in 0..level {
        let (offsets, side_child) = child_offsets(n, j);
        let parents = 1usize << (j as usize * n);
        let mut next = vec![0.0; parents * nc * d];
        let coeffs = c.scale_range().contains(&j).then(|| c.scale_data(j));
        for p in 0..parents {
            let base = parent_base(p, n, j, side_child);
            for comp in 0..d {
                buf[0] = avg[p * d + comp];
                for e in 1..nc {
                    buf[e] = coeffs.map_or(0.0, |cf| cf[(p * (nc - 1) + e - 1) * d + comp]);
                }
                walsh_hadamard(&mut buf);
                for (v, off) in buf.iter().zip(&offsets) {
                    next[(base + off) * d + comp] = *v;
                }
            }
        }
        avg = next;
    }
    GridFunction::with_values(n, level, d, 2.0, avg)
}

/// Same as [`haar_synthesis`] but keeps the value exponent of `like`.
pub(crate) fn synthesize_like(c: &HaarCoefficients, like: &GridFunction) -> Result<GridFunction> {
    let out = haar_synthesis(c, like.level())?;
    Ok(like.with_samples(out.into_samples()))
}

/// `E_j u`: averages over the cubes of scale `j`.
pub fn conditional_expectation(u: &GridFunction, scale: u32) -> Result<GridFunction> {
    let level = u.level();
    if scale > level {
        return Err(Error::OutOfRange(format!("scale {scale} > level {level}")));
    }
    let n = u.dim();
    let d = u.value_dim();
    let shift = level - scale;
    let coarse_side = 1usize << scale;
    let mut sums = vec![0.0; d << (scale as usize * n)];
    let block = |flat: usize| {
        let idx = u.cell_coords(flat);
        idx[..n].iter().fold(0usize, |acc, &i| acc * coarse_side + (i >> shift))
    };
    for flat in 0..u.cell_count() {
        let b = block(flat);
        for c in 0..d {
            sums[b * d + c] += u.samples()[flat * d + c];
        }
    }
    let w = (-((shift as usize * n) as f64)).exp2();
    let mut out = vec![0.0; u.samples().len()];
    for flat in 0..u.cell_count() {
        let b = block(flat);
        for c in 0..d {
            out[flat * d + c] = sums[b * d + c] * w;
        }
    }
    Ok(u.with_samples(out))
}
