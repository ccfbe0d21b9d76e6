//! Riesz transforms on the torus, the inversion formula in terms of a single
//! component, and the Riesz-adapted mollified Haar kernels `k_{Q,l,i}`.
//!
//! `R_i` has symbol `-i k_i / |k|`. The symbol is set to zero at `k = 0` and
//! whenever `k_i` is the Nyquist frequency `-N/2`, where no real-valued odd
//! multiplier exists.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::TAU;

use crate::dyadic::{haar_function, DyadicCube, SignPattern};
use crate::error::{Error, Result};
use crate::fourier::{apply_multiplier, forward, frequency_vector};
use crate::grid::GridFunction;
use crate::mollify::{convolve, layer_scales, LayerOutput, ScaleOperator, SeparableMultiplier, DEFAULT_MARGIN};

fn check_axis(u: &GridFunction, axis: usize) -> Result<()> {
    if axis >= u.dim() {
        return Err(Error::OutOfRange(format!("axis {axis} in dimension {}", u.dim())));
    }
    Ok(())
}

fn nyquist(k: i64, side: usize) -> bool {
    k == -(side as i64 / 2)
}

/// `R_i u`.
pub fn riesz_transform(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    u.validate()?;
    check_axis(u, axis)?;
    let side = u.side();
    apply_multiplier(u, |k| {
        let norm2: i64 = k.iter().map(|v| v * v).sum();
        if norm2 == 0 || nyquist(k[axis], side) {
            Complex64::default()
        } else {
            Complex64::new(0.0, -(k[axis] as f64) / (norm2 as f64).sqrt())
        }
    })
}

/// Spectral derivative `∂_i`.
pub fn spectral_derivative(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    check_axis(u, axis)?;
    let side = u.side();
    apply_multiplier(u, |k| {
        if nyquist(k[axis], side) {
            Complex64::default()
        } else {
            Complex64::new(0.0, TAU * k[axis] as f64)
        }
    })
}

/// Spectral antiderivative along `axis`, zero on modes with `k_axis = 0`.
pub fn spectral_antiderivative(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    check_axis(u, axis)?;
    let side = u.side();
    apply_multiplier(u, |k| {
        if k[axis] == 0 || nyquist(k[axis], side) {
            Complex64::default()
        } else {
            Complex64::new(0.0, -1.0 / (TAU * k[axis] as f64))
        }
    })
}

/// Fraction of the `L²` energy of `u` on modes where `R_i` is not invertible
/// from the `axis` component: `k_axis = 0` or a Nyquist coordinate.
pub fn inversion_leakage(u: &GridFunction, axis: usize) -> Result<f64> {
    leakage(u, axis, InverseMethod::Composition)
}

/// The composition chain also loses Nyquist modes of the other axes; the
/// direct symbol only those with `k_axis` zero or Nyquist.
fn leakage(u: &GridFunction, axis: usize, method: InverseMethod) -> Result<f64> {
    check_axis(u, axis)?;
    let (dim, side) = (u.dim(), u.side());
    let (mut lost, mut total) = (0.0, 0.0);
    for c in 0..u.value_dim() {
        let spec = forward(&u.component(c));
        for (flat, z) in spec.iter().enumerate() {
            let k = frequency_vector(flat, dim, side);
            let e = z.norm_sqr();
            total += e;
            let nyq = match method {
                InverseMethod::Composition => k[..dim].iter().any(|&v| nyquist(v, side)),
                InverseMethod::Direct => nyquist(k[axis], side),
            };
            if k[axis] == 0 || nyq {
                lost += e;
            }
        }
    }
    Ok(if total == 0.0 { 0.0 } else { lost / total })
}

/// Removes the modes counted by [`inversion_leakage`].
pub fn invertible_part(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    check_axis(u, axis)?;
    let side = u.side();
    apply_multiplier(u, |k| {
        if k[axis] == 0 || k.iter().any(|&v| nyquist(v, side)) {
            Complex64::default()
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// How `u` is recovered from `v = R_{i0} u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseMethod {
    /// `-(R_{i0} v + Σ_{i≠i0} E_{i0} ∂_i R_i v)` as a chain of operators.
    Composition,
    /// The symbol `i |k| / k_{i0}`.
    Direct,
}

#[derive(Clone, Debug)]
pub struct RieszInverse {
    pub function: GridFunction,
    /// Energy fraction of `v` on modes the chosen method cannot invert.
    pub leakage: f64,
}

/// Sign in `R_{i0}^{-1} = σ (R_{i0} + Σ_{i≠i0} E_{i0} ∂_i R_i)`.
pub const INVERSE_SIGN: f64 = -1.0;

/// Recovers `u` from `v = R_{axis} u` up to modes with `k_axis = 0`.
pub fn riesz_inverse(v: &GridFunction, axis: usize, method: InverseMethod) -> Result<RieszInverse> {
    v.validate()?;
    check_axis(v, axis)?;
    let leakage = leakage(v, axis, method)?;
    if leakage > 1e-12 {
        log::warn!("riesz inverse: {leakage:.3e} of the energy lies on non-invertible modes");
    }
    let function = match method {
        InverseMethod::Composition => {
            let mut acc = riesz_transform(v, axis)?;
            for i in (0..v.dim()).filter(|&i| i != axis) {
                let t = spectral_antiderivative(&spectral_derivative(&riesz_transform(v, i)?, i)?, axis)?;
                acc = acc.add(&t)?;
            }
            acc.scale(INVERSE_SIGN)
        }
        InverseMethod::Direct => {
            let side = v.side();
            apply_multiplier(v, |k| {
                if k[axis] == 0 || nyquist(k[axis], side) {
                    return Complex64::default();
                }
                let norm = (k.iter().map(|x| x * x).sum::<i64>() as f64).sqrt();
                Complex64::new(0.0, norm / k[axis] as f64)
            })?
        }
    };
    Ok(RieszInverse { function, leakage })
}

fn line_sums(u: &GridFunction, axis: usize) -> f64 {
    let (dim, side) = (u.dim(), u.side());
    let stride = side.pow((dim - 1 - axis) as u32);
    let mut worst = 0.0f64;
    for flat in 0..u.samples().len() {
        if (flat / stride) % side != 0 {
            continue;
        }
        let s: f64 = (0..side).map(|t| u.samples()[flat + t * stride]).sum();
        worst = worst.max(s.abs());
    }
    worst * u.spacing()
}

fn cumulative(u: &GridFunction, axis: usize, reverse: bool) -> GridFunction {
    let (dim, side) = (u.dim(), u.side());
    let stride = side.pow((dim - 1 - axis) as u32);
    let h = u.spacing();
    let mut out = u.samples().to_vec();
    let d = u.value_dim();
    for flat in 0..u.cell_count() {
        if (flat / stride) % side != 0 {
            continue;
        }
        for c in 0..d {
            let mut acc = 0.0;
            for t in 0..side {
                let t = if reverse { side - 1 - t } else { t };
                let i = (flat + t * stride) * d + c;
                acc += out[i] * h;
                out[i] = acc;
            }
        }
    }
    u.with_samples(out)
}

/// Inclusive running integral `E_{axis} u` from the lower face of the torus;
/// requires zero means on every line along `axis`.
pub fn antiderivative(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    u.validate()?;
    check_axis(u, axis)?;
    let scale = u.sup_norm().max(1.0);
    for c in 0..u.value_dim() {
        let s = line_sums(&u.component(c), axis);
        if s > 1e-10 * scale {
            return Err(Error::NotIntegrable(format!("line mean {s:.3e} along axis {axis}")));
        }
    }
    Ok(cumulative(u, axis, false))
}

/// The transpose of the running integral, `h Σ_{s ≥ x} u(s)`.
pub fn antiderivative_transpose(u: &GridFunction, axis: usize) -> GridFunction {
    cumulative(u, axis, true)
}

fn check_pattern(eps: SignPattern, i0: usize, dim: usize) -> Result<()> {
    eps.check(dim)?;
    if i0 >= dim {
        return Err(Error::OutOfRange(format!("axis {i0} in dimension {dim}")));
    }
    if !eps.get(i0) {
        return Err(Error::UnboundedSupport(format!("pattern {eps} has no oscillation along axis {i0}")));
    }
    Ok(())
}

/// `k_{Q,l,i} = Δ_{j+l} ∂_i E_{i0} h_Q`; the antiderivative of `h_Q` is the
/// compactly supported tent, the derivative falls on the mollifier.
pub fn mollified_haar_riesz(
    cube: &DyadicCube,
    eps: SignPattern,
    l: i32,
    axis: usize,
    i0: usize,
    level: u32,
) -> Result<GridFunction> {
    check_pattern(eps, i0, cube.dim())?;
    let k = cube.scale() as i32 + l;
    if k > level as i32 - DEFAULT_MARGIN as i32 {
        return Err(Error::UnderResolved { layer: k, level, margin: DEFAULT_MARGIN });
    }
    let tent = antiderivative(&haar_function(cube, eps, level)?, i0)?;
    convolve(&tent, &SeparableMultiplier::difference(cube.dim(), level, k).derivative(axis), false)
}

/// Aggregate `Σ_{l<0} k_{Q,l,i} = ∂_i E_{i0} h_Q * b_j`.
pub fn aggregated_mollified_haar_riesz(
    cube: &DyadicCube,
    eps: SignPattern,
    axis: usize,
    i0: usize,
    level: u32,
) -> Result<GridFunction> {
    check_pattern(eps, i0, cube.dim())?;
    let tent = antiderivative(&haar_function(cube, eps, level)?, i0)?;
    convolve(&tent, &SeparableMultiplier::smoothing(cube.dim(), level, cube.scale() as i32).derivative(axis), false)
}

/// Which scale kernels a Riesz layer operator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RieszLayer {
    /// `K_{l,i}`.
    Layer(i32),
    /// `K_{-,i} = Σ_{l<0} K_{l,i}`.
    Negative,
}

fn riesz_scales(dim: usize, level: u32, layer: RieszLayer, axis: usize, margin: u32) -> (Vec<(u32, SeparableMultiplier)>, Vec<u32>) {
    match layer {
        RieszLayer::Layer(l) => {
            let (keep, dropped) = layer_scales(l, level, margin);
            let s = keep
                .into_iter()
                .map(|j| (j, SeparableMultiplier::difference(dim, level, j as i32 + l).derivative(axis)))
                .collect();
            (s, dropped)
        }
        RieszLayer::Negative => {
            let (keep, dropped) = layer_scales(0, level, margin);
            let s = keep
                .into_iter()
                .map(|j| (j, SeparableMultiplier::smoothing(dim, level, j as i32).derivative(axis)))
                .collect();
            (s, dropped)
        }
    }
}

/// `K u = Σ_Q ⟨u, k_{Q}⟩ h_Q |Q|^{-1}` with the compact tent kernels.
pub fn riesz_layer_operator(
    u: &GridFunction,
    eps: SignPattern,
    layer: RieszLayer,
    axis: usize,
    i0: usize,
) -> Result<LayerOutput> {
    check_pattern(eps, i0, u.dim())?;
    check_axis(u, axis)?;
    let (scales, dropped) = riesz_scales(u.dim(), u.level(), layer, axis, DEFAULT_MARGIN);
    let post = move |w: &GridFunction| antiderivative_transpose(w, i0);
    let op = ScaleOperator { eps, scales, post: Some(&post), pre_adjoint: None };
    Ok(LayerOutput { function: op.apply(u)?, dropped_scales: dropped })
}

/// Adjoint of [`riesz_layer_operator`].
pub fn riesz_layer_adjoint(v: &GridFunction, eps: SignPattern, layer: RieszLayer, axis: usize, i0: usize) -> Result<GridFunction> {
    check_pattern(eps, i0, v.dim())?;
    check_axis(v, axis)?;
    let (scales, _) = riesz_scales(v.dim(), v.level(), layer, axis, DEFAULT_MARGIN);
    let pre = move |w: &GridFunction| cumulative(w, i0, false);
    let op = ScaleOperator { eps, scales, post: None, pre_adjoint: Some(&pre) };
    op.adjoint(v)
}

/// Symbol `k_i / k_{i0}` of the periodic `E_{i0} ∂_i`.
fn periodic_factor(u: &GridFunction, axis: usize, i0: usize) -> Result<GridFunction> {
    let side = u.side();
    apply_multiplier(u, |k| {
        if k[i0] == 0 || nyquist(k[i0], side) || nyquist(k[axis], side) {
            Complex64::default()
        } else {
            Complex64::new(k[axis] as f64 / k[i0] as f64, 0.0)
        }
    })
}

/// Parts of `P_l R_{i0}^{-1} v` on the periodic torus: `-P_l R_{i0} v` and
/// `-K^per_{l,i} R_i v` for `i ≠ i0`, where `K^per` uses the mean-free
/// periodic antiderivative.
#[derive(Clone, Debug)]
pub struct CompositionSplit {
    pub total: GridFunction,
    pub principal: GridFunction,
    pub riesz_terms: Vec<(usize, GridFunction)>,
    /// `max |P_l R_{i0}^{-1} v - (principal + Σ riesz_terms)|`.
    pub residual: f64,
}

pub fn layer_riesz_composition(v: &GridFunction, eps: SignPattern, l: i32, i0: usize) -> Result<CompositionSplit> {
    check_pattern(eps, i0, v.dim())?;
    let inv = riesz_inverse(v, i0, InverseMethod::Direct)?.function;
    let total = crate::mollify::layer_projection(&inv, eps, l)?.function;
    let principal = crate::mollify::layer_projection(&riesz_transform(v, i0)?, eps, l)?.function.scale(INVERSE_SIGN);
    let mut sum = principal.clone();
    let mut riesz_terms = Vec::new();
    let (keep, _) = layer_scales(l, v.level(), DEFAULT_MARGIN);
    for axis in (0..v.dim()).filter(|&i| i != i0) {
        let scales = keep.iter().map(|&j| (j, SeparableMultiplier::difference(v.dim(), v.level(), j as i32 + l))).collect();
        let post = move |w: &GridFunction| periodic_factor(w, axis, i0).expect("axes checked");
        let op = ScaleOperator { eps, scales, post: Some(&post), pre_adjoint: None };
        let term = op.apply(&riesz_transform(v, axis)?)?.scale(INVERSE_SIGN);
        sum = sum.add(&term)?;
        riesz_terms.push((axis, term));
    }
    let residual = total.samples().iter().zip(sum.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(CompositionSplit { total, principal, riesz_terms, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_probe, ProbeKind, ProbeSpec};
    use crate::mollify::scan_cube;

    fn noise(dim: usize, level: u32, seed: u64) -> GridFunction {
        generate_probe(&ProbeSpec::new(ProbeKind::WhiteNoise, seed), dim, level).unwrap()
    }

    fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
        a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn sum_of_squares_is_minus_identity() {
        for (n, level) in [(2, 6), (3, 4)] {
            let u = invertible_part(&noise(n, level, 1), 0).unwrap();
            let mut acc = GridFunction::zeros(n, level);
            for i in 0..n {
                acc = acc.add(&riesz_transform(&riesz_transform(&u, i).unwrap(), i).unwrap()).unwrap();
            }
            assert!(max_diff(&acc, &u.scale(-1.0)) < 1e-10);
        }
    }

    #[test]
    fn riesz_of_plane_wave() {
        // R_1 cos(2π k·x) = (k_1/|k|) sin(2π k·x)
        let k = [3.0, 4.0];
        let u = GridFunction::from_points(2, 5, |x| (TAU * (k[0] * x[0] + k[1] * x[1])).cos()).unwrap();
        let r = riesz_transform(&u, 0).unwrap();
        let expected = GridFunction::from_points(2, 5, |x| 0.6 * (TAU * (k[0] * x[0] + k[1] * x[1])).sin()).unwrap();
        assert!(max_diff(&r, &expected) < 1e-12);
    }

    #[test]
    fn inverse_methods_agree_and_invert() {
        for (n, level, axis) in [(2, 6, 0), (2, 6, 1), (3, 4, 2)] {
            let u = invertible_part(&noise(n, level, 2), axis).unwrap();
            let v = riesz_transform(&u, axis).unwrap();
            let a = riesz_inverse(&v, axis, InverseMethod::Composition).unwrap();
            let b = riesz_inverse(&v, axis, InverseMethod::Direct).unwrap();
            assert!(a.leakage < 1e-20);
            assert!(max_diff(&a.function, &u) < 1e-10);
            assert!(max_diff(&b.function, &u) < 1e-10);
        }
    }

    #[test]
    fn inverse_sign_is_forced() {
        let u = invertible_part(&noise(2, 5, 3), 0).unwrap();
        let v = riesz_transform(&u, 0).unwrap();
        let inv = riesz_inverse(&v, 0, InverseMethod::Composition).unwrap().function;
        // the opposite sign would give -u
        assert!(max_diff(&inv.scale(-1.0), &u) > 0.1);
    }

    #[test]
    fn leakage_reported_for_line_constant_modes() {
        let u = GridFunction::from_points(2, 5, |x| (TAU * x[1]).sin()).unwrap();
        assert!((inversion_leakage(&u, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antiderivative_roundtrip_and_errors() {
        let q = DyadicCube::new(2, &[1, 2]).unwrap();
        let h = haar_function(&q, SignPattern::from_bits(&[1, 0]), 6).unwrap();
        let t = antiderivative(&h, 0).unwrap();
        // backward difference recovers h
        let side = t.side();
        for x0 in 0..side {
            for x1 in 0..side {
                let prev = if x0 == 0 { 0.0 } else { t.at(&[x0 - 1, x1]) };
                assert!(((t.at(&[x0, x1]) - prev) / t.spacing() - h.at(&[x0, x1])).abs() < 1e-12);
            }
        }
        // compact tent: zero outside Q
        for (flat, &v) in t.samples().iter().enumerate() {
            let c = t.cell_coords(flat);
            if !q.contains_cell(&c[..2], 6) {
                assert!(v.abs() < 1e-14);
            }
        }
        assert!(matches!(antiderivative(&h, 1), Err(Error::NotIntegrable(_))));
        let v = noise(2, 4, 1);
        let w = noise(2, 4, 2);
        let lhs = cumulative(&v, 1, false).inner_product(&w).unwrap();
        let rhs = v.inner_product(&antiderivative_transpose(&w, 1)).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn riesz_kernel_requires_oscillating_axis() {
        let q = scan_cube(2, 2);
        let e = SignPattern::from_bits(&[0, 1]);
        assert!(matches!(mollified_haar_riesz(&q, e, 1, 0, 0, 8), Err(Error::UnboundedSupport(_))));
        assert!(mollified_haar_riesz(&q, e, 1, 0, 1, 8).is_ok());
    }

    #[test]
    fn riesz_kernel_matches_finite_difference() {
        // ∂_i (tent * d) against a central difference of the smooth convolution
        let level = 9;
        let q = scan_cube(2, 2);
        let e = SignPattern::from_bits(&[1, 1]);
        let k = mollified_haar_riesz(&q, e, 0, 1, 0, level).unwrap();
        let tent = antiderivative(&haar_function(&q, e, level).unwrap(), 0).unwrap();
        let smooth = convolve(&tent, &SeparableMultiplier::difference(2, level, 2), false).unwrap();
        let side = smooth.side();
        let h = smooth.spacing();
        let mut worst = 0.0f64;
        for x0 in 0..side {
            for x1 in 0..side {
                let fd = (smooth.at(&[x0, (x1 + 1) % side]) - smooth.at(&[x0, (x1 + side - 1) % side])) / (2.0 * h);
                worst = worst.max((fd - k.at(&[x0, x1])).abs());
            }
        }
        assert!(worst < 0.02 * k.sup_norm(), "{worst} vs {}", k.sup_norm());
    }

    #[test]
    fn riesz_layer_adjoint_consistent() {
        let u = noise(2, 7, 4);
        let v = noise(2, 7, 5);
        let e = SignPattern::from_bits(&[1, 0]);
        for layer in [RieszLayer::Layer(1), RieszLayer::Layer(-1), RieszLayer::Negative] {
            let ku = riesz_layer_operator(&u, e, layer, 1, 0).unwrap().function;
            let kv = riesz_layer_adjoint(&v, e, layer, 1, 0).unwrap();
            let (a, b) = (ku.inner_product(&v).unwrap(), u.inner_product(&kv).unwrap());
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{layer:?}: {a} vs {b}");
        }
    }

    #[test]
    fn riesz_layer_matches_dense_kernels() {
        let level = 5;
        let u = noise(2, level, 8);
        let e = SignPattern::from_bits(&[1, 1]);
        let l = 0;
        let op = riesz_layer_operator(&u, e, RieszLayer::Layer(l), 1, 0).unwrap().function;
        let mut direct = GridFunction::zeros(2, level);
        for j in layer_scales(l, level, DEFAULT_MARGIN).0 {
            for idx in 0..1usize << (2 * j) {
                let q = DyadicCube::from_index(j, idx, 2);
                let k = mollified_haar_riesz(&q, e, l, 1, 0, level).unwrap();
                let c = u.inner_product(&k).unwrap() / q.measure();
                direct = direct.axpy(c, &haar_function(&q, e, level).unwrap()).unwrap();
            }
        }
        assert!(max_diff(&op, &direct) < 1e-10);
    }

    #[test]
    fn composition_split_is_exact() {
        let u = invertible_part(&noise(2, 7, 6), 0).unwrap();
        let v = riesz_transform(&u, 0).unwrap();
        let split = layer_riesz_composition(&v, SignPattern::from_bits(&[1, 0]), 1, 0).unwrap();
        assert!(split.residual < 1e-10, "{}", split.residual);
        assert_eq!(split.riesz_terms.len(), 1);
    }
}
