//! Probe corpora for the norm experiments.
//!
//! Every corpus mixes white noise with the extremizer family of its operator:
//! single Haar functions for ring operators, scale-Rademacher sums for the
//! layers, anisotropic low-frequency probes for the interpolation inequality.
//! Probe ids are stable across runs and levels.

use hrl_core::opnorm::Probe;
use hrl_core::ring::FaceMode;
use hrl_core::{DyadicCube, ProbeKind, ProbeSpec, Result, SignPattern};

fn probe(kind: ProbeKind, seed: u64, id: String, dim: usize, level: u32) -> Result<Probe> {
    Probe::from_spec(id, &ProbeSpec::new(kind, seed), dim, level)
}

/// Cube at `scale` touching the centre of the torus from below.
fn central_cube(dim: usize, scale: u32) -> DyadicCube {
    hrl_core::mollify::scan_cube(dim, scale)
}

fn noise(dim: usize, level: u32, seed: u64, count: u64) -> Result<Vec<Probe>> {
    (0..count).map(|k| probe(ProbeKind::WhiteNoise, seed + k, format!("noise-{k}"), dim, level)).collect()
}

fn rademacher(dim: usize, level: u32, eps: SignPattern, seed: u64, ranges: &[(u32, u32)]) -> Result<Vec<Probe>> {
    ranges
        .iter()
        .filter(|(lo, hi)| lo <= hi && *hi < level)
        .enumerate()
        .map(|(k, &(lo, hi))| {
            let kind = ProbeKind::ScaleRademacher { lo, hi, pattern: eps };
            probe(kind, seed + 100 + k as u64, format!("rademacher-{lo}-{hi}"), dim, level)
        })
        .collect()
}

fn single_haar(dim: usize, level: u32, eps: SignPattern, scales: &[u32]) -> Result<Vec<Probe>> {
    scales
        .iter()
        .filter(|&&s| s < level)
        .map(|&s| {
            let cube = central_cube(dim, s);
            probe(ProbeKind::SingleHaar { cube, pattern: eps }, 0, format!("haar-{s}"), dim, level)
        })
        .collect()
}

/// Probes for `S_λ`: single Haar functions at coarse scales, ring-supported sums, noise.
pub fn ring_corpus(dim: usize, level: u32, eps: SignPattern, seed: u64) -> Result<Vec<Probe>> {
    let mut out = single_haar(dim, level, eps, &[0, 1, 2, 3])?;
    for (k, (s, lambda)) in [(1u32, 1u32), (1, 2), (2, 2)].into_iter().enumerate() {
        if s + lambda < level {
            let kind = ProbeKind::RingSupported {
                cube: central_cube(dim, s),
                pattern: eps,
                lambda,
                face_mode: FaceMode::SlabLeft,
            };
            out.push(probe(kind, seed + 200 + k as u64, format!("ring-{s}-{lambda}"), dim, level)?);
        }
    }
    out.extend(rademacher(dim, level, eps, seed, &[(0, 2), (0, level - 1)])?);
    out.extend(noise(dim, level, seed, 2)?);
    Ok(out)
}

/// Probes for `P_l`, `K_{l,i}` and their negative-layer aggregates.
pub fn layer_corpus(dim: usize, level: u32, eps: SignPattern, seed: u64) -> Result<Vec<Probe>> {
    let mid = level / 2;
    let mut out = rademacher(dim, level, eps, seed, &[(0, level - 1), (0, mid), (mid - 1, mid + 1), (1, 3)])?;
    out.extend(single_haar(dim, level, eps, &[1, mid])?);
    out.extend(noise(dim, level, seed, 2)?);
    Ok(out)
}

/// Adversarial probes for the interpolation inequality: anisotropic
/// low-frequency functions that are nearly constant along one axis, plus
/// Haar atoms, scale-Rademacher sums and noise. Scales are fixed, so the
/// corpus at a finer level contains the same families as at a coarser one.
pub fn interpolation_corpus(dim: usize, level: u32, eps: SignPattern, seed: u64) -> Result<Vec<Probe>> {
    let mut out = Vec::new();
    let mut k = 0u64;
    for axis in 0..dim {
        for frequency in [1u32, 2] {
            for fast_scale in [2u32, 4, level.saturating_sub(1)] {
                if fast_scale == 0 || fast_scale >= level {
                    continue;
                }
                let kind = ProbeKind::AnisotropicLowFreq { axis, frequency, fast_scale };
                out.push(probe(kind, seed + 300 + k, format!("aniso-{axis}-{frequency}-{fast_scale}"), dim, level)?);
                k += 1;
            }
        }
    }
    out.extend(single_haar(dim, level, eps, &[0, 1, 2, 3])?);
    out.extend(rademacher(dim, level, eps, seed, &[(0, 2), (2, 4)])?);
    out.extend(noise(dim, level, seed, 2)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpora_are_deterministic_and_nonzero() {
        let eps = SignPattern::from_bits(&[1, 0]);
        for build in [ring_corpus, layer_corpus, interpolation_corpus] {
            let a = build(2, 6, eps, 7).unwrap();
            let b = build(2, 6, eps, 7).unwrap();
            assert!(!a.is_empty());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.id, y.id);
                assert_eq!(x.function, y.function);
                assert!(x.function.lp_norm(2.0).unwrap() > 0.0, "{}", x.id);
            }
            let ids: std::collections::BTreeSet<_> = a.iter().map(|p| p.id.clone()).collect();
            assert_eq!(ids.len(), a.len(), "duplicate probe ids");
        }
    }

    #[test]
    fn ring_corpus_contains_haar_atoms() {
        let eps = SignPattern::from_bits(&[1, 0]);
        let c = ring_corpus(2, 8, eps, 1).unwrap();
        assert!(c.iter().any(|p| p.id == "haar-0"));
        assert!(c.iter().any(|p| p.id.starts_with("ring-")));
    }
}
