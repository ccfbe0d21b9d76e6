//! Ring domains `U_λ(Q)`, blocks `g_{Q,λ}`, the ring operators `S_λ`, `S_λ^m`
//! and the tiling identity of the face-aligned variant.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dyadic::{haar_analysis, synthesize_like, DyadicCube, HaarCoefficients, SignPattern};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, MAX_DIM};

/// Which cover to use for `U_λ(Q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceMode {
    /// Every cube of diameter `2^{-λ} diam(Q)` within distance `2^{-λ} diam(Q)` of the
    /// discontinuity set of `h_Q`.
    Full,
    /// The leftmost slab of `Q` orthogonal to `e_1`, thickness `2^{-λ} side(Q)`.
    SlabLeft,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RingDomain {
    pub cube: DyadicCube,
    pub pattern: SignPattern,
    pub lambda: u32,
    pub face_mode: FaceMode,
    /// Cubes at scale `j(Q) + λ`, sorted and pairwise distinct.
    pub cover: Vec<DyadicCube>,
}

impl RingDomain {
    pub fn cover_scale(&self) -> u32 {
        self.cube.scale() + self.lambda
    }

    /// `Σ_E |E|`.
    pub fn cover_measure(&self) -> f64 {
        self.cover.iter().map(|e| e.measure()).sum()
    }
}

type Offset = [i64; MAX_DIM];

/// Cover offsets of `E` relative to the corner of `Q`, in units of `side(E)`, before wrapping.
fn template(dim: usize, eps: SignPattern, lambda: u32, mode: FaceMode) -> Vec<Offset> {
    let w = 1i64 << lambda;
    let mut out = Vec::new();
    match mode {
        FaceMode::SlabLeft => {
            let count = 1usize << (lambda as usize * (dim - 1));
            for t in 0..count {
                let mut o = [0i64; MAX_DIM];
                let mut r = t;
                for a in (1..dim).rev() {
                    o[a] = (r % w as usize) as i64;
                    r /= w as usize;
                }
                out.push(o);
            }
        }
        FaceMode::Full => {
            // half-units of side(E): Q = [0, 2w)^n, E = [2o, 2o + 2], threshold diam(E)² = 4n
            let lo = -3i64;
            let hi = w + 3;
            let span = (hi - lo) as usize;
            let total = span.pow(dim as u32);
            for t in 0..total {
                let mut o = [0i64; MAX_DIM];
                let mut r = t;
                for a in (0..dim).rev() {
                    o[a] = lo + (r % span) as i64;
                    r /= span;
                }
                if near_discontinuity(&o[..dim], eps, w) {
                    out.push(o);
                }
            }
        }
    }
    out
}

fn interval_gap(a: (i64, i64), b: (i64, i64)) -> i64 {
    (b.0 - a.1).max(a.0 - b.1).max(0)
}

/// Whether the closed cube `E = [2o, 2o+2]` (half-units) lies within `diam(E)` of `D(Q)`.
fn near_discontinuity(o: &[i64], eps: SignPattern, w: i64) -> bool {
    let dim = o.len();
    let e: Vec<(i64, i64)> = o.iter().map(|&x| (2 * x, 2 * x + 2)).collect();
    let q = (0, 2 * w);
    let threshold = 4 * dim as i64;
    for axis in 0..dim {
        let mut planes = vec![0, 2 * w];
        if eps.get(axis) {
            planes.push(w);
        }
        for t in planes {
            let d2: i64 = (0..dim)
                .map(|b| {
                    let g = if b == axis { interval_gap(e[b], (t, t)) } else { interval_gap(e[b], q) };
                    g * g
                })
                .sum();
            if d2 <= threshold {
                return true;
            }
        }
    }
    false
}

/// Wrap template offsets to the torus at cover scale `s` and drop duplicates.
fn wrapped_template(tpl: &[Offset], dim: usize, cover_scale: u32) -> Vec<Offset> {
    let side = 1i64 << cover_scale;
    let set: BTreeSet<Offset> = tpl
        .iter()
        .map(|o| {
            let mut w = [0i64; MAX_DIM];
            for a in 0..dim {
                w[a] = o[a].rem_euclid(side);
            }
            w
        })
        .collect();
    set.into_iter().collect()
}

fn place(cube: &DyadicCube, lambda: u32, offset: &Offset, shift: i64) -> DyadicCube {
    let side = 1i64 << (cube.scale() + lambda);
    let mut coords = [0u32; MAX_DIM];
    for a in 0..cube.dim() {
        let base = (cube.coords()[a] as i64) << lambda;
        let s = if a == 0 { shift } else { 0 };
        coords[a] = (base + offset[a] + s).rem_euclid(side) as u32;
    }
    DyadicCube::new(cube.scale() + lambda, &coords[..cube.dim()]).expect("wrapped coordinates")
}

/// `U_λ(Q)` in the requested mode.
pub fn ring_cover(
    cube: &DyadicCube,
    eps: SignPattern,
    lambda: u32,
    level: u32,
    mode: FaceMode,
) -> Result<RingDomain> {
    let dim = cube.dim();
    eps.check(dim)?;
    if cube.scale() + lambda > level {
        return Err(Error::UnresolvableScale { scale: cube.scale() + lambda, level });
    }
    let tpl = wrapped_template(&template(dim, eps, lambda, mode), dim, cube.scale() + lambda);
    let mut cover: Vec<DyadicCube> = tpl.iter().map(|o| place(cube, lambda, o, 0)).collect();
    cover.sort();
    cover.dedup();
    Ok(RingDomain { cube: *cube, pattern: eps, lambda, face_mode: mode, cover })
}

/// `g_{Q,λ} = Σ_{E ∈ U_λ(Q)} h_E^(ε)`.
pub fn ring_block(dom: &RingDomain, level: u32) -> Result<GridFunction> {
    let s = dom.cover_scale();
    if s >= level {
        return Err(Error::UnresolvableScale { scale: s, level });
    }
    let dim = dom.cube.dim();
    let mut c = HaarCoefficients::zeros(dim, 1, s, s + 1);
    for e in &dom.cover {
        c.add_to(e, dom.pattern, 0, 1.0);
    }
    synthesize_like(&c, &GridFunction::zeros(dim, level))
}

/// Output of a ring operator together with the input scales that had to be dropped.
#[derive(Clone, Debug)]
pub struct RingOutput {
    pub function: GridFunction,
    pub dropped_scales: Vec<u32>,
}

fn ring_apply(
    u: &GridFunction,
    eps: SignPattern,
    lambda: u32,
    shifts: &[i64],
    mode: FaceMode,
) -> Result<RingOutput> {
    u.validate()?;
    let dim = u.dim();
    eps.check(dim)?;
    let level = u.level();
    let d = u.value_dim();
    let cu = haar_analysis(u);
    let mut out = HaarCoefficients::zeros(dim, d, 0, level);
    let tpl = template(dim, eps, lambda, mode);
    let mut dropped = Vec::new();
    for j in 0..level {
        if j + lambda >= level {
            dropped.push(j);
            continue;
        }
        let offsets = wrapped_template(&tpl, dim, j + lambda);
        for q in 0..1usize << (j as usize * dim) {
            let cube = DyadicCube::from_index(j, q, dim);
            for comp in 0..d {
                let v = cu.get(&cube, eps, comp);
                if v == 0.0 {
                    continue;
                }
                for &m in shifts {
                    for o in &offsets {
                        out.add_to(&place(&cube, lambda, o, m), eps, comp, v);
                    }
                }
            }
        }
    }
    Ok(RingOutput { function: synthesize_like(&out, u)?, dropped_scales: dropped })
}

/// `S_λ u = Σ_Q u_Q^(ε) g_{Q,λ}`, with scales `j + λ ≥ J` dropped and reported.
pub fn ring_operator_with_report(
    u: &GridFunction,
    eps: SignPattern,
    lambda: u32,
    mode: FaceMode,
) -> Result<RingOutput> {
    ring_apply(u, eps, lambda, &[0], mode)
}

pub fn ring_operator(u: &GridFunction, eps: SignPattern, lambda: u32, mode: FaceMode) -> Result<GridFunction> {
    Ok(ring_operator_with_report(u, eps, lambda, mode)?.function)
}

fn check_shift(lambda: u32, m: u64) -> Result<()> {
    if lambda >= 63 || m >= 1u64 << lambda {
        return Err(Error::OutOfRange(format!("shift m = {m} not in 0..2^{lambda}")));
    }
    Ok(())
}

/// `S_λ^m u = T_{m e_1} S_λ u`.
pub fn shifted_ring_operator(
    u: &GridFunction,
    eps: SignPattern,
    lambda: u32,
    m: u64,
    mode: FaceMode,
) -> Result<GridFunction> {
    check_shift(lambda, m)?;
    Ok(ring_apply(u, eps, lambda, &[m as i64], mode)?.function)
}

/// `Σ_{m ∈ shifts} S_λ^m u` in one pass.
pub fn summed_ring_operator(
    u: &GridFunction,
    eps: SignPattern,
    lambda: u32,
    shifts: &[u64],
    mode: FaceMode,
) -> Result<GridFunction> {
    for &m in shifts {
        check_shift(lambda, m)?;
    }
    let s: Vec<i64> = shifts.iter().map(|&m| m as i64).collect();
    Ok(ring_apply(u, eps, lambda, &s, mode)?.function)
}

#[derive(Clone, Debug)]
pub struct TilingReport {
    pub lambda: u32,
    /// `max_Q max_{x ∈ Q} ||c_Q(x)| - 1|`.
    pub modulus_error: f64,
    /// `‖v - Σ_Q c_Q u_Q h_Q‖_2` with `v = Σ_m S_λ^m u`.
    pub residual: f64,
    /// Number of cubes `Q` checked.
    pub cubes_checked: usize,
    /// Haar spectrum of `v`.
    pub spectrum: HaarCoefficients,
}

/// Checks `Σ_{m<2^λ} S_λ^m u = Σ_Q c_Q u_Q h_Q` in slab mode, where
/// `c_Q = h_Q · Σ_m T_{m e_1} g_{Q,λ}` is evaluated pointwise from the cover
/// geometry and must have modulus one on `Q`.
pub fn tiling_identity_check(u: &GridFunction, eps: SignPattern, lambda: u32) -> Result<TilingReport> {
    let dim = u.dim();
    let level = u.level();
    if u.value_dim() != 1 {
        return Err(Error::ShapeMismatch("tiling check expects a scalar function".into()));
    }
    if lambda >= level {
        return Err(Error::UnresolvableScale { scale: lambda, level });
    }
    let shifts: Vec<u64> = (0..1u64 << lambda).collect();
    let v = summed_ring_operator(u, eps, lambda, &shifts, FaceMode::SlabLeft)?;

    let cu = haar_analysis(u);
    let tpl = template(dim, eps, lambda, FaceMode::SlabLeft);
    let mut w = vec![0.0; u.cell_count()];
    let mut modulus_error: f64 = 0.0;
    let mut cubes_checked = 0;
    let w_side = 1i64 << lambda;
    for j in 0..level - lambda {
        let side_e = 1i64 << (j + lambda);
        let offsets: BTreeSet<Offset> = wrapped_template(&tpl, dim, j + lambda).into_iter().collect();
        let sh_q = level - j - 1;
        let sh_e = level - j - lambda - 1;
        for flat in 0..u.cell_count() {
            let idx = u.cell_coords(flat);
            let mut q_coords = [0u32; MAX_DIM];
            let mut q_child = 0u8;
            let mut e_child = 0u8;
            let mut e_coords = [0i64; MAX_DIM];
            for a in 0..dim {
                q_coords[a] = (idx[a] >> (sh_q + 1)) as u32;
                q_child |= (((idx[a] >> sh_q) & 1) as u8) << a;
                e_coords[a] = (idx[a] >> (sh_e + 1)) as i64;
                e_child |= (((idx[a] >> sh_e) & 1) as u8) << a;
            }
            let cube = DyadicCube::new(j, &q_coords[..dim])?;
            // multiplicity of the cell's E among the shifted covers of Q
            let mut count = 0i64;
            for m in 0..w_side {
                let mut rel = [0i64; MAX_DIM];
                for a in 0..dim {
                    let base = (q_coords[a] as i64) << lambda;
                    let s = if a == 0 { m } else { 0 };
                    rel[a] = (e_coords[a] - base - s).rem_euclid(side_e);
                }
                if offsets.contains(&rel) {
                    count += 1;
                }
            }
            let hq = eps.sign(q_child);
            let he = eps.sign(e_child);
            let c = hq * he * count as f64;
            modulus_error = modulus_error.max((c.abs() - 1.0).abs());
            w[flat] += cu.get(&cube, eps, 0) * c * hq;
        }
        cubes_checked += 1usize << (j as usize * dim);
    }
    let w = u.with_samples(w);
    let residual = v.sub(&w)?.lp_norm(2.0)?;
    Ok(TilingReport { lambda, modulus_error, residual, cubes_checked, spectrum: haar_analysis(&v) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::haar_function;
    use crate::grid::{generate_probe, ProbeKind, ProbeSpec};

    fn noise(dim: usize, level: u32, seed: u64) -> GridFunction {
        generate_probe(&ProbeSpec::new(ProbeKind::WhiteNoise, seed), dim, level).unwrap()
    }

    fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
        a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Floating-point periodic distance oracle over all cubes of the torus.
    fn enumerate_cover(cube: &DyadicCube, eps: SignPattern, lambda: u32) -> Vec<DyadicCube> {
        let dim = cube.dim();
        let s = cube.scale() + lambda;
        let side_q = cube.side();
        let side_e = (-(s as f64)).exp2();
        let threshold = side_e * (dim as f64).sqrt();
        let corner: Vec<f64> = cube.coords().iter().map(|&k| k as f64 * side_q).collect();
        // discontinuity faces: (axis, position, lifted image)
        let mut out = Vec::new();
        for idx in 0..1usize << (s as usize * dim) {
            let e = DyadicCube::from_index(s, idx, dim);
            let mut near = false;
            for img in 0..3usize.pow(dim as u32) {
                let mut lo = vec![0.0; dim];
                let mut r = img;
                for a in 0..dim {
                    let shift = (r % 3) as f64 - 1.0;
                    r /= 3;
                    lo[a] = e.coords()[a] as f64 * side_e + shift;
                }
                for axis in 0..dim {
                    let mut planes = vec![corner[axis], corner[axis] + side_q];
                    if eps.get(axis) {
                        planes.push(corner[axis] + side_q / 2.0);
                    }
                    for t in planes {
                        let mut d2 = 0.0;
                        for b in 0..dim {
                            let (a0, a1) = (lo[b], lo[b] + side_e);
                            let (b0, b1) = if b == axis { (t, t) } else { (corner[b], corner[b] + side_q) };
                            let g = (b0 - a1).max(a0 - b1).max(0.0);
                            d2 += g * g;
                        }
                        if d2.sqrt() <= threshold + 1e-12 {
                            near = true;
                        }
                    }
                }
            }
            if near {
                out.push(e);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn full_cover_matches_enumeration() {
        let cases = [
            (DyadicCube::root(2), [1u8, 1], 0u32),
            (DyadicCube::new(1, &[1, 0]).unwrap(), [1, 0], 2),
            (DyadicCube::new(2, &[1, 2]).unwrap(), [1, 1], 3),
            (DyadicCube::new(3, &[5, 7]).unwrap(), [0, 1], 1),
        ];
        for (q, bits, lambda) in cases {
            let eps = SignPattern::from_bits(&bits);
            let dom = ring_cover(&q, eps, lambda, 8, FaceMode::Full).unwrap();
            assert_eq!(dom.cover, enumerate_cover(&q, eps, lambda), "{q} λ={lambda}");
        }
    }

    #[test]
    fn full_cover_cardinality_scales_like_surface() {
        for dim in [2usize, 3] {
            let q = DyadicCube::new(1, &vec![0; dim]).unwrap();
            let eps = SignPattern::from_mask(1);
            let mut ratios = Vec::new();
            for lambda in 1..=5u32 {
                if dim == 3 && lambda > 4 {
                    break;
                }
                let card = ring_cover(&q, eps, lambda, 1 + lambda, FaceMode::Full).unwrap().cover.len() as f64;
                ratios.push(card / (lambda as f64 * (dim as f64 - 1.0)).exp2());
            }
            let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
            assert!(hi / lo < 4.0, "{ratios:?}");
            assert!(lo > 1.0);
        }
    }

    #[test]
    fn slab_cover_is_left_strip() {
        let dom = ring_cover(&DyadicCube::root(2), SignPattern::from_bits(&[1, 1]), 2, 4, FaceMode::SlabLeft).unwrap();
        let expected: Vec<DyadicCube> = (0..4).map(|t| DyadicCube::new(2, &[0, t]).unwrap()).collect();
        assert_eq!(dom.cover, expected);
        assert!(ring_cover(&DyadicCube::root(2), SignPattern::from_mask(1), 5, 4, FaceMode::SlabLeft).is_err());
    }

    #[test]
    fn block_energy_and_support() {
        let q = DyadicCube::new(1, &[1, 1]).unwrap();
        let eps = SignPattern::from_bits(&[1, 0]);
        let mut supports = Vec::new();
        for lambda in 0..=5u32 {
            let dom = ring_cover(&q, eps, lambda, 8, FaceMode::Full).unwrap();
            let g = ring_block(&dom, 8).unwrap();
            let e = g.inner_product(&g).unwrap();
            assert!((e - dom.cover_measure()).abs() < 1e-12);
            let supp = g.samples().iter().filter(|v| **v != 0.0).count() as f64 * g.cell_volume();
            supports.push(supp * (lambda as f64).exp2() / q.measure());
        }
        // |supp g| ≲ 2^{-λ}|Q|: the normalised support stays in a fixed band
        let max = supports[1..].iter().cloned().fold(0.0, f64::max);
        let min = supports[1..].iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 2.5, "{supports:?}");
    }

    #[test]
    fn lambda_zero_single_cube_is_haar_function() {
        let q = DyadicCube::new(2, &[1, 2]).unwrap();
        let eps = SignPattern::from_bits(&[1, 1]);
        let dom = ring_cover(&q, eps, 0, 5, FaceMode::SlabLeft).unwrap();
        assert_eq!(dom.cover, vec![q]);
        assert!(max_diff(&ring_block(&dom, 5).unwrap(), &haar_function(&q, eps, 5).unwrap()) < 1e-14);
    }

    #[test]
    fn operator_on_haar_function_gives_block() {
        let q = DyadicCube::new(2, &[3, 0]).unwrap();
        let eps = SignPattern::from_bits(&[0, 1]);
        let h = haar_function(&q, eps, 7).unwrap();
        for mode in [FaceMode::Full, FaceMode::SlabLeft] {
            for lambda in 0..=3 {
                let dom = ring_cover(&q, eps, lambda, 7, mode).unwrap();
                let s = ring_operator(&h, eps, lambda, mode).unwrap();
                assert!(max_diff(&s, &ring_block(&dom, 7).unwrap()) < 1e-13);
                let ratio = s.lp_norm(2.0).unwrap() / h.lp_norm(2.0).unwrap();
                let expected = (dom.cover_measure() / q.measure()).sqrt();
                assert!((ratio - expected).abs() < 1e-12);
                if mode == FaceMode::SlabLeft {
                    assert!((ratio - (-(lambda as f64) / 2.0).exp2()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dropped_scales_are_reported() {
        let u = noise(2, 5, 1);
        let out = ring_operator_with_report(&u, SignPattern::from_mask(1), 2, FaceMode::SlabLeft).unwrap();
        assert_eq!(out.dropped_scales, vec![3, 4]);
    }

    #[test]
    fn shifted_slab_geometry() {
        let eps = SignPattern::from_bits(&[1, 1]);
        let lambda = 2;
        let q = DyadicCube::new(1, &[0, 1]).unwrap();
        let h = haar_function(&q, eps, 6).unwrap();
        let m = (1u64 << lambda) - 1;
        let s = shifted_ring_operator(&h, eps, lambda, m, FaceMode::SlabLeft).unwrap();
        let c = haar_analysis(&s);
        // rightmost slab: first coordinate of every E is 2^λ k_1 + 2^λ - 1
        for (e, _, _, _) in c.nonzero(1e-12) {
            assert_eq!(e.coords()[0], 3);
            assert!(q.contains(&e));
        }
        assert!(max_diff(
            &shifted_ring_operator(&h, eps, lambda, 0, FaceMode::SlabLeft).unwrap(),
            &ring_operator(&h, eps, lambda, FaceMode::SlabLeft).unwrap()
        ) < 1e-14);
        assert!(shifted_ring_operator(&h, eps, lambda, 4, FaceMode::SlabLeft).is_err());
    }

    #[test]
    fn shifted_spectra_are_disjoint() {
        let u = noise(2, 6, 3);
        let eps = SignPattern::from_bits(&[1, 0]);
        let lambda = 2;
        let supports: Vec<BTreeSet<DyadicCube>> = (0..4)
            .map(|m| {
                let s = shifted_ring_operator(&u, eps, lambda, m, FaceMode::SlabLeft).unwrap();
                haar_analysis(&s).nonzero(1e-12).into_iter().map(|e| e.0).collect()
            })
            .collect();
        for k in 0..4 {
            for m in 0..4 {
                if k != m {
                    assert!(supports[k].is_disjoint(&supports[m]));
                }
            }
        }
    }

    #[test]
    fn slab_shifts_have_equal_l2_norm_on_haar() {
        let q = DyadicCube::new(2, &[1, 1]).unwrap();
        let eps = SignPattern::from_bits(&[1, 1]);
        let h = haar_function(&q, eps, 7).unwrap();
        let norms: Vec<f64> = (0..8)
            .map(|m| shifted_ring_operator(&h, eps, 3, m, FaceMode::SlabLeft).unwrap().lp_norm(2.0).unwrap())
            .collect();
        assert!(norms.iter().all(|v| (v - norms[0]).abs() < 1e-14));
    }

    #[test]
    fn tiling_identity() {
        let q = DyadicCube::new(1, &[1, 0]).unwrap();
        let eps = SignPattern::from_bits(&[1, 1]);
        let h = haar_function(&q, eps, 6).unwrap();
        let r = tiling_identity_check(&h, eps, 2).unwrap();
        assert!(r.modulus_error < 1e-12 && r.residual < 1e-12);
        let u = noise(2, 6, 4);
        let r0 = tiling_identity_check(&u, eps, 0).unwrap();
        assert!(r0.modulus_error == 0.0 && r0.residual < 1e-12);
        let r3 = tiling_identity_check(&u, SignPattern::from_bits(&[1, 0]), 3).unwrap();
        assert!(r3.modulus_error < 1e-10 && r3.residual < 1e-10);
    }

    #[test]
    fn vector_valued_operator_acts_componentwise() {
        let parts = [noise(2, 4, 1), noise(2, 4, 2)];
        let u = GridFunction::from_components(&parts, 3.0).unwrap();
        let eps = SignPattern::from_mask(3);
        let s = ring_operator(&u, eps, 1, FaceMode::Full).unwrap();
        let s1 = ring_operator(&parts[1], eps, 1, FaceMode::Full).unwrap();
        assert!(max_diff(&s.component(1), &s1) < 1e-13);
        assert_eq!(s.value_exponent(), 3.0);
    }
}
