//! Multidimensional FFT helpers on the dyadic torus grid.
//!
//! Convention: `û(k) = Σ_x u(x) e^{-2πi k·x}` over grid points (no
//! normalisation); the inverse divides by the number of cells. Integer
//! frequencies are signed, `k ∈ [-N/2, N/2)` per axis.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{GridFunction, MAX_DIM};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place unnormalised n-D transform of a row-major `side^dim` array.
pub fn fft_nd(data: &mut [Complex64], dim: usize, side: usize, inverse: bool) {
    debug_assert_eq!(data.len(), side.pow(dim as u32));
    let fft = plan(side, inverse);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); side];
    for axis in 0..dim {
        let stride = side.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        let block = stride * side;
        for start in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + t * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (t, v) in line.iter().enumerate() {
                    data[base + t * stride] = *v;
                }
            }
        }
    }
}

/// Signed frequency of DFT index `i` on an axis of length `side`.
pub fn frequency(i: usize, side: usize) -> i64 {
    if i < side / 2 {
        i as i64
    } else {
        i as i64 - side as i64
    }
}

/// Spectrum of a scalar grid function.
pub fn forward(u: &GridFunction) -> Vec<Complex64> {
    assert_eq!(u.value_dim(), 1, "scalar function expected");
    let mut data: Vec<Complex64> = u.samples().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, u.dim(), u.side(), false);
    data
}

/// Real part of the inverse transform, shaped like `like`.
pub fn inverse_real(mut spectrum: Vec<Complex64>, like: &GridFunction) -> GridFunction {
    fft_nd(&mut spectrum, like.dim(), like.side(), true);
    let scale = 1.0 / spectrum.len() as f64;
    like.with_samples(spectrum.iter().map(|z| z.re * scale).collect())
}

/// Signed frequency vector of flat spectrum index `flat`.
pub fn frequency_vector(flat: usize, dim: usize, side: usize) -> [i64; MAX_DIM] {
    let mut k = [0i64; MAX_DIM];
    let mut f = flat;
    for a in (0..dim).rev() {
        k[a] = frequency(f % side, side);
        f /= side;
    }
    k
}

/// Apply the Fourier multiplier `m(k)` to every component of `u`.
pub fn apply_multiplier(u: &GridFunction, m: impl Fn(&[i64]) -> Complex64) -> Result<GridFunction> {
    let (dim, side) = (u.dim(), u.side());
    u.map_components(|c| {
        let mut spec = forward(c);
        for (flat, z) in spec.iter_mut().enumerate() {
            let k = frequency_vector(flat, dim, side);
            *z *= m(&k[..dim]);
        }
        Ok(inverse_real(spec, c))
    })
}

/// Apply a precomputed multiplier table (flat spectrum order) to a scalar function.
pub fn apply_table(u: &GridFunction, table: &[Complex64]) -> GridFunction {
    let mut spec = forward(u);
    for (z, m) in spec.iter_mut().zip(table) {
        *z *= m;
    }
    inverse_real(spec, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_probe, ProbeKind, ProbeSpec};

    #[test]
    fn matches_naive_dft() {
        let u = generate_probe(&ProbeSpec::new(ProbeKind::WhiteNoise, 4), 2, 2).unwrap();
        let spec = forward(&u);
        let side = 4;
        for k1 in 0..side {
            for k2 in 0..side {
                let mut acc = Complex64::default();
                for x1 in 0..side {
                    for x2 in 0..side {
                        let phase = -std::f64::consts::TAU * ((k1 * x1 + k2 * x2) as f64) / side as f64;
                        acc += u.at(&[x1, x2]) * Complex64::from_polar(1.0, phase);
                    }
                }
                assert!((acc - spec[k1 * side + k2]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn roundtrip() {
        let u = generate_probe(&ProbeSpec::new(ProbeKind::WhiteNoise, 5), 3, 3).unwrap();
        let back = inverse_real(forward(&u), &u);
        for (a, b) in u.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn signed_frequencies() {
        assert_eq!((0..4).map(|i| frequency(i, 4)).collect::<Vec<_>>(), vec![0, 1, -2, -1]);
    }
}
