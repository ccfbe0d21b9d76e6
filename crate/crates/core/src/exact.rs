//! Exact dyadic intervals on the real line and finite unions of them.
//!
//! An [`IntervalSet`] keeps its endpoints as integers in units of `2^{-E}` for a
//! fixed resolution `E`, so unions, intersections, differences and measures
//! are exact. Measures are returned as [`BigRational`].

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

/// `[k 2^{-j}, (k+1) 2^{-j})`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactInterval {
    pub scale: u32,
    pub index: BigInt,
}

impl PartialOrd for ExactInterval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactInterval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.scale.cmp(&other.scale).then_with(|| self.index.cmp(&other.index))
    }
}

pub fn pow2(e: u32) -> BigInt {
    BigInt::one() << e as usize
}

impl ExactInterval {
    pub fn new(scale: u32, index: impl Into<BigInt>) -> Self {
        Self { scale, index: index.into() }
    }

    /// `|I| = 2^{-j}`.
    pub fn measure(&self) -> BigRational {
        BigRational::new(BigInt::one(), pow2(self.scale))
    }

    pub fn left(&self) -> BigRational {
        BigRational::new(self.index.clone(), pow2(self.scale))
    }

    /// `I + m|I|`.
    pub fn shift(&self, m: i64) -> Self {
        Self { scale: self.scale, index: &self.index + m }
    }

    /// The ancestor `J ⊃ I` with `|J| = 2^λ |I|`, or `None` if it would lie
    /// above scale 0 (negative scales are not represented).
    pub fn pred(&self, lambda: u32) -> Option<Self> {
        (lambda <= self.scale).then(|| Self { scale: self.scale - lambda, index: self.index.div_floor(&pow2(lambda)) })
    }

    /// `inf I = inf pred_λ(I)`, i.e. the index is a multiple of `2^λ`.
    pub fn is_leftmost(&self, lambda: u32) -> bool {
        self.index.mod_floor(&pow2(lambda)).is_zero()
    }

    pub fn contains(&self, other: &Self) -> bool {
        other.scale >= self.scale && (&other.index >> (other.scale - self.scale) as usize) == self.index
    }

    /// Endpoints in units of `2^{-unit}`; requires `unit ≥ scale`.
    pub fn endpoints(&self, unit: u32) -> (BigInt, BigInt) {
        assert!(unit >= self.scale, "interval finer than the set resolution");
        let w = pow2(unit - self.scale);
        let lo = &self.index * &w;
        let hi = &lo + w;
        (lo, hi)
    }
}

impl std::fmt::Display for ExactInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}·2^-{}, {}·2^-{})", self.index, self.scale, &self.index + 1, self.scale)
    }
}

/// Finite disjoint union of half-open intervals with endpoints in `2^{-unit} ℤ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalSet {
    unit: u32,
    /// Sorted, disjoint and non-adjacent.
    spans: Vec<(BigInt, BigInt)>,
}

impl IntervalSet {
    pub fn empty(unit: u32) -> Self {
        Self { unit, spans: Vec::new() }
    }

    pub fn from_interval(i: &ExactInterval, unit: u32) -> Self {
        Self { unit, spans: vec![i.endpoints(unit)] }
    }

    /// Union of the given intervals.
    pub fn from_intervals<'a>(items: impl IntoIterator<Item = &'a ExactInterval>, unit: u32) -> Self {
        Self::normalize(items.into_iter().map(|i| i.endpoints(unit)).collect(), unit)
    }

    pub fn unit(&self) -> u32 {
        self.unit
    }

    pub fn spans(&self) -> &[(BigInt, BigInt)] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    fn normalize(mut raw: Vec<(BigInt, BigInt)>, unit: u32) -> Self {
        raw.retain(|(a, b)| a < b);
        raw.sort();
        let mut spans: Vec<(BigInt, BigInt)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match spans.last_mut() {
                Some(last) if a <= last.1 => {
                    if b > last.1 {
                        last.1 = b;
                    }
                }
                _ => spans.push((a, b)),
            }
        }
        Self { unit, spans }
    }

    fn check_unit(&self, other: &Self) {
        assert_eq!(self.unit, other.unit, "interval sets at different resolutions");
    }

    pub fn union(&self, other: &Self) -> Self {
        self.check_unit(other);
        Self::normalize(self.spans.iter().chain(&other.spans).cloned().collect(), self.unit)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.check_unit(other);
        let mut out = Vec::new();
        let (mut i, mut k) = (0, 0);
        while i < self.spans.len() && k < other.spans.len() {
            let (a0, a1) = &self.spans[i];
            let (b0, b1) = &other.spans[k];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo < hi {
                out.push((lo.clone(), hi.clone()));
            }
            if a1 < b1 {
                i += 1;
            } else {
                k += 1;
            }
        }
        Self { unit: self.unit, spans: out }
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.check_unit(other);
        let mut out = Vec::new();
        let mut k = 0;
        for (a0, a1) in &self.spans {
            let mut cur = a0.clone();
            while k < other.spans.len() && other.spans[k].1 <= cur {
                k += 1;
            }
            let mut t = k;
            while t < other.spans.len() && other.spans[t].0 < *a1 {
                let (b0, b1) = &other.spans[t];
                if *b0 > cur {
                    out.push((cur.clone(), b0.clone()));
                }
                if *b1 > cur {
                    cur = b1.clone();
                }
                t += 1;
            }
            if cur < *a1 {
                out.push((cur, a1.clone()));
            }
        }
        Self { unit: self.unit, spans: out }
    }

    /// Total length in units of `2^{-unit}`.
    pub fn length(&self) -> BigInt {
        self.spans.iter().map(|(a, b)| b - a).sum()
    }

    pub fn measure(&self) -> BigRational {
        BigRational::new(self.length(), pow2(self.unit))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.difference(other).is_empty()
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.intersection(other).is_empty()
    }

    /// Smallest and largest endpoint.
    pub fn hull(&self) -> Option<(BigInt, BigInt)> {
        Some((self.spans.first()?.0.clone(), self.spans.last()?.1.clone()))
    }
}

/// Numerator/denominator strings of a rational, for JSON reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RationalRepr {
    pub num: String,
    pub den: String,
}

impl From<&BigRational> for RationalRepr {
    fn from(r: &BigRational) -> Self {
        Self { num: r.numer().to_string(), den: r.denom().to_string() }
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}
