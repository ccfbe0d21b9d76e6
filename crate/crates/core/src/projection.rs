//! Directional Haar projections `P^(ε)` and Figiel shifts `T_m`.

use std::ops::Range;

use crate::dyadic::{haar_analysis, synthesize_like, DyadicCube, HaarCoefficients, SignPattern};
use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// `P^(ε) u = Σ_Q u_Q^(ε) h_Q^(ε)`.
pub fn directional_projection(u: &GridFunction, eps: SignPattern) -> Result<GridFunction> {
    eps.check(u.dim())?;
    let c = haar_analysis(u).restrict_pattern(eps);
    synthesize_like(&c, u)
}

/// Move every coefficient at `Q` to `τ_m(Q) = Q + m·side(Q)` (torus wrap) for
/// scales in `scales`; other scales and the mean are unchanged.
pub fn shift_coefficients(c: &HaarCoefficients, m: &[i64], scales: Range<u32>) -> Result<HaarCoefficients> {
    if m.len() != c.dim() {
        return Err(Error::ShapeMismatch(format!("shift of length {} in dimension {}", m.len(), c.dim())));
    }
    let mut out = c.clone();
    let np = (1usize << c.dim()) - 1;
    let d = c.value_dim();
    let stride = np * d;
    for j in c.scale_range().filter(|j| scales.contains(j)) {
        let src = c.scale_data(j);
        let dst = out.scale_data_mut(j);
        for q in 0..1usize << (j as usize * c.dim()) {
            let target = DyadicCube::from_index(j, q, c.dim()).translate(m).index();
            dst[target * stride..(target + 1) * stride].copy_from_slice(&src[q * stride..(q + 1) * stride]);
        }
    }
    Ok(out)
}

/// `T_m u` restricted to the given scale range.
pub fn figiel_shift(u: &GridFunction, m: &[i64], scales: Range<u32>) -> Result<GridFunction> {
    u.validate()?;
    let c = shift_coefficients(&haar_analysis(u), m, scales)?;
    synthesize_like(&c, u)
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

    #[test]
    fn eigenfunction_and_orthogonality() {
        let q = DyadicCube::new(2, &[1, 3]).unwrap();
        let e = SignPattern::from_bits(&[1, 0]);
        let h = haar_function(&q, e, 4).unwrap();
        assert!(max_diff(&directional_projection(&h, e).unwrap(), &h) < 1e-14);
        let other = directional_projection(&h, SignPattern::from_bits(&[1, 1])).unwrap();
        assert!(other.sup_norm() < 1e-14);
        assert!(directional_projection(&h, SignPattern::from_mask(0)).is_err());
    }

    #[test]
    fn completeness_idempotence_annihilation() {
        for (n, level) in [(2, 6), (3, 3)] {
            let u = noise(n, level, 21);
            let mut sum = GridFunction::constant(n, level, u.mean()[0]);
            for e in SignPattern::all(n) {
                let pu = directional_projection(&u, e).unwrap();
                assert!(max_diff(&directional_projection(&pu, e).unwrap(), &pu) < 1e-12);
                for e2 in SignPattern::all(n).filter(|&e2| e2 != e) {
                    assert!(directional_projection(&pu, e2).unwrap().sup_norm() < 1e-12);
                }
                sum = sum.add(&pu).unwrap();
            }
            assert!(max_diff(&sum, &u) < 1e-12);
        }
    }

    #[test]
    fn shift_moves_haar_function() {
        let q = DyadicCube::new(2, &[3, 1]).unwrap();
        let e = SignPattern::from_bits(&[1, 1]);
        let h = haar_function(&q, e, 5).unwrap();
        let shifted = figiel_shift(&h, &[1, 0], 0..5).unwrap();
        let expected = haar_function(&q.translate(&[1, 0]), e, 5).unwrap();
        assert!(max_diff(&shifted, &expected) < 1e-14);
        assert!(max_diff(&figiel_shift(&h, &[0, 0], 0..5).unwrap(), &h) < 1e-14);
    }

    #[test]
    fn shift_is_l2_isometry_and_composes() {
        let u = noise(2, 5, 2);
        for m in [[1i64, 0], [3, -2], [7, 5]] {
            let t = figiel_shift(&u, &m, 0..5).unwrap();
            assert!((t.lp_norm(2.0).unwrap() - u.lp_norm(2.0).unwrap()).abs() < 1e-12);
            let tt = figiel_shift(&t, &[2, 1], 0..5).unwrap();
            let direct = figiel_shift(&u, &[m[0] + 2, m[1] + 1], 0..5).unwrap();
            assert!(max_diff(&tt, &direct) < 1e-12);
        }
    }

    #[test]
    fn shift_leaves_other_scales() {
        let u = noise(2, 4, 3);
        let t = figiel_shift(&u, &[1, 0], 2..3).unwrap();
        let (cu, ct) = (haar_analysis(&u), haar_analysis(&t));
        for j in [0u32, 1, 3] {
            for (a, b) in cu.scale_data(j).iter().zip(ct.scale_data(j)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }
}
