//! Admissible interval collections, the shift lemma and the atom construction
//! behind the norm equivalence of shifted ring operators, verified in exact
//! rational arithmetic on the real line.
//!
//! Shifts are `τ_m(I) = I + m|I|`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{pow2, rational_to_f64, ExactInterval, IntervalSet, RationalRepr};
use crate::grid::GridFunction;

/// Which of the four level families a generated collection uses: levels
/// `2jλ + k` (`Odd0`/`Even0`) or `(2j+1)λ + k` (`Odd1`/`Even1`), `k = 0..λ-1`,
/// keeping odd or even `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockPattern {
    Odd0,
    Even0,
    Odd1,
    Even1,
}

impl BlockPattern {
    pub const ALL: [BlockPattern; 4] = [Self::Odd0, Self::Even0, Self::Odd1, Self::Even1];

    fn odd(self) -> bool {
        matches!(self, Self::Odd0 | Self::Odd1)
    }

    fn base(self, lambda: u32) -> u32 {
        match self {
            Self::Odd0 | Self::Even0 => 0,
            Self::Odd1 | Self::Even1 => lambda,
        }
    }

    /// Retained offsets `k` within a block.
    pub fn offsets(self, lambda: u32) -> Vec<u32> {
        (0..lambda).filter(|k| (k % 2 == 1) == self.odd()).collect()
    }

    /// Levels of block `b`.
    pub fn block_levels(self, lambda: u32, block: u32) -> Vec<u32> {
        let start = 2 * block * lambda + self.base(lambda);
        self.offsets(lambda).into_iter().map(|k| start + k).collect()
    }
}

/// A finite collection `B` of dyadic intervals with `inf I = inf pred_λ(I)` and
/// sizes pairwise equal or differing by a factor of at least four.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleCollection {
    lambda: u32,
    pattern: Option<BlockPattern>,
    /// scale → sorted distinct indices
    by_scale: BTreeMap<u32, Vec<BigInt>>,
}

impl AdmissibleCollection {
    /// Validating constructor.
    pub fn new(lambda: u32, intervals: Vec<ExactInterval>, pattern: Option<BlockPattern>) -> Result<Self> {
        if lambda == 0 {
            return Err(Error::InvalidCollection("λ must be at least 1".into()));
        }
        let mut by_scale: BTreeMap<u32, Vec<BigInt>> = BTreeMap::new();
        for i in intervals {
            if !i.is_leftmost(lambda) {
                return Err(Error::InvalidCollection(format!("{i} is not the leftmost descendant of its λ-ancestor")));
            }
            by_scale.entry(i.scale).or_default().push(i.index);
        }
        let scales: Vec<u32> = by_scale.keys().copied().collect();
        for w in scales.windows(2) {
            if w[1] - w[0] < 2 {
                return Err(Error::InvalidCollection(format!(
                    "scales {} and {} differ by less than a factor 4 in size",
                    w[0], w[1]
                )));
            }
        }
        for v in by_scale.values_mut() {
            v.sort();
            v.dedup();
        }
        Ok(Self { lambda, pattern, by_scale })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn pattern(&self) -> Option<BlockPattern> {
        self.pattern
    }

    pub fn scales(&self) -> Vec<u32> {
        self.by_scale.keys().copied().collect()
    }

    pub fn at_scale(&self, scale: u32) -> &[BigInt] {
        self.by_scale.get(&scale).map_or(&[], |v| v.as_slice())
    }

    pub fn intervals(&self) -> impl Iterator<Item = ExactInterval> + '_ {
        self.by_scale.iter().flat_map(|(&s, v)| v.iter().map(move |k| ExactInterval::new(s, k.clone())))
    }

    pub fn len(&self) -> usize {
        self.by_scale.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: &ExactInterval) -> bool {
        self.at_scale(i.scale).binary_search(&i.index).is_ok()
    }

    /// Finest scale present, the natural resolution for exact set algebra.
    pub fn finest_scale(&self) -> u32 {
        self.by_scale.keys().next_back().copied().unwrap_or(0)
    }
}

const PER_SCALE_CAP: usize = 6;
const BLOCKS: u32 = 2;

/// Seeded generator of admissible collections following a block pattern.
///
/// Each of two blocks keeps `depth` of its retained levels; intervals are drawn
/// on a window `[0, 2^{λ+1})`, finer ones preferentially near coarser picks so
/// that the shifted unions actually overlap.
pub fn build_admissible_collection(
    lambda: u32,
    depth: u32,
    pattern: BlockPattern,
    seed: u64,
) -> Result<AdmissibleCollection> {
    if lambda == 0 {
        return Err(Error::Infeasible("λ must be at least 1".into()));
    }
    if lambda > 16 {
        return Err(Error::Infeasible(format!("λ = {lambda} too large for the generator")));
    }
    let available = pattern.offsets(lambda).len() as u32;
    if depth == 0 || depth > available {
        return Err(Error::Infeasible(format!(
            "depth {depth} not in 1..={available} for pattern {pattern:?} at λ = {lambda}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = Vec::new();
    for b in 0..BLOCKS {
        let cand = pattern.block_levels(lambda, b);
        let mut chosen: Vec<u32> = cand.clone();
        while chosen.len() > depth as usize {
            let k = rng.random_range(0..chosen.len());
            chosen.remove(k);
        }
        levels.extend(chosen);
    }
    levels.sort();
    let window_log2 = lambda + 1;
    let step = 1i64 << lambda;
    let mut picked: Vec<(u32, i64)> = Vec::new();
    for &s in &levels {
        let total = 1i64 << (s + window_log2);
        let slots = (total / step).max(1);
        let count = rng.random_range(1..=PER_SCALE_CAP);
        let mut here = Vec::new();
        for _ in 0..count {
            let coarser: Vec<&(u32, i64)> = picked.iter().filter(|(t, _)| *t < s).collect();
            let k = if !coarser.is_empty() && rng.random_bool(0.75) {
                // near a coarser interval J, within reach of J ∪ τ_m(J) for every admissible m
                let &&(t, kj) = &coarser[rng.random_range(0..coarser.len())];
                let f = 1i64 << (s - t);
                let reach = ((1i64 << (lambda - 1)) + 2) * f;
                let lo = kj * f - f;
                let raw = lo + rng.random_range(0..reach + f);
                raw.div_euclid(step) * step
            } else {
                rng.random_range(0..slots) * step
            };
            here.push(k);
        }
        picked.extend(here.into_iter().map(|k| (s, k)));
    }
    let intervals = picked.into_iter().map(|(s, k)| ExactInterval::new(s, k)).collect();
    AdmissibleCollection::new(lambda, intervals, Some(pattern))
}

fn check_shift(lambda: u32, m: u64) -> Result<()> {
    if lambda == 0 || m > 1u64 << (lambda - 1) {
        return Err(Error::LemmaHypothesis(format!("shift m = {m} outside 0..=2^(λ-1) for λ = {lambda}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub interval: ExactInterval,
    pub m: u64,
    /// `|I ∩ ⋃_d ⋃_{J ∈ B, |J| = 2^{-d}|I|} (J ∪ τ_m J)|`.
    pub measure: BigRational,
    /// `(2/3)|I|`.
    pub bound: BigRational,
    pub holds: bool,
    /// At most one `J` per size class meets `I`.
    pub unique: bool,
}

/// Intervals `J ∈ B` at `scale` with `(J ∪ τ_m J) ∩ I ≠ ∅`.
fn meeting(b: &AdmissibleCollection, i: &ExactInterval, scale: u32, m: u64) -> Vec<ExactInterval> {
    let d = scale - i.scale;
    let f = pow2(d);
    let lo = &i.index * &f - BigInt::from(m);
    let hi = (&i.index + 1) * &f;
    let v = b.at_scale(scale);
    let start = v.partition_point(|k| *k < lo);
    v[start..].iter().take_while(|k| **k < hi).map(|k| ExactInterval::new(scale, k.clone())).collect()
}

/// Exact overlap measure of the shift lemma for `I ∈ B ∪ τ_m(B)`.
pub fn lemma_overlap_measure(b: &AdmissibleCollection, i: &ExactInterval, m: u64) -> Result<LemmaReport> {
    let lambda = b.lambda();
    check_shift(lambda, m)?;
    if !b.contains(i) && !b.contains(&i.shift(-(m as i64))) {
        return Err(Error::LemmaHypothesis(format!("{i} is not in B ∪ τ_m(B)")));
    }
    let unit = b.finest_scale().max(i.scale);
    let mut union = IntervalSet::empty(unit);
    let mut unique = true;
    for d in 1..lambda {
        let s = i.scale + d;
        if s > unit {
            break;
        }
        let js = meeting(b, i, s, m);
        unique &= js.len() <= 1;
        for j in &js {
            union = union
                .union(&IntervalSet::from_interval(j, unit))
                .union(&IntervalSet::from_interval(&j.shift(m as i64), unit));
        }
    }
    let measure = IntervalSet::from_interval(i, unit).intersection(&union).measure();
    let bound = i.measure() * BigRational::new(2.into(), 3.into());
    Ok(LemmaReport { interval: i.clone(), m, holds: measure <= bound, measure, bound, unique })
}

#[derive(Clone, Debug)]
pub struct Atom {
    pub cube: ExactInterval,
    pub points: IntervalSet,
    pub measure: BigRational,
    /// Index of the `λ-1` block, finest block first.
    pub block: usize,
}

#[derive(Clone, Debug)]
pub struct Filtration {
    pub lambda: u32,
    pub m: u64,
    pub unit: u32,
    /// scale → atoms at that scale, in index order.
    pub levels: BTreeMap<u32, Vec<Atom>>,
}

impl Filtration {
    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.levels.values().flatten()
    }
}

/// Group scales into blocks of `λ` consecutive levels, starting from the finest.
fn blocks(scales: &[u32], lambda: u32) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    let mut desc: Vec<u32> = scales.to_vec();
    desc.sort_by(|a, b| b.cmp(a));
    let mut top: Option<u32> = None;
    for s in desc {
        match top {
            Some(b) if b - s < lambda => out.last_mut().unwrap().push(s),
            _ => {
                top = Some(s);
                out.push(vec![s]);
            }
        }
    }
    out
}

/// `A(Q) = (Q ∪ τ_m Q) \ ⋃ {A(M) : M finer than Q in the same block}`.
pub fn build_atoms(b: &AdmissibleCollection, m: u64) -> Result<Filtration> {
    check_shift(b.lambda(), m)?;
    let unit = b.finest_scale();
    let mut levels = BTreeMap::new();
    for (block_id, scales) in blocks(&b.scales(), b.lambda()).into_iter().enumerate() {
        let mut taken = IntervalSet::empty(unit);
        for s in scales {
            let mut atoms = Vec::new();
            for k in b.at_scale(s) {
                let q = ExactInterval::new(s, k.clone());
                let base = IntervalSet::from_interval(&q, unit).union(&IntervalSet::from_interval(&q.shift(m as i64), unit));
                let points = base.difference(&taken);
                atoms.push(Atom { measure: points.measure(), cube: q, points, block: block_id });
            }
            for a in &atoms {
                taken = taken.union(&a.points);
            }
            levels.insert(s, atoms);
        }
    }
    Ok(Filtration { lambda: b.lambda(), m, unit, levels })
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomViolation {
    pub cube: String,
    pub lambda: u32,
    pub m: u64,
    pub property: String,
    pub lhs: RationalRepr,
    pub rhs: RationalRepr,
}

#[derive(Clone, Debug)]
pub struct AtomReport {
    pub atoms_checked: usize,
    pub violations: Vec<AtomViolation>,
    pub max_atom_ratio: BigRational,
    pub min_base_ratio: BigRational,
    pub min_shift_ratio: BigRational,
}

impl AtomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exact checks of `|A(Q)| ≤ 2|Q|`, `3|Q ∩ A(Q)| ≥ |Q|`, `3|τ_m Q ∩ A(Q)| ≥ |Q|`,
/// disjointness within a level and nestedness across levels.
pub fn verify_atom_properties(f: &Filtration, b: &AdmissibleCollection, m: u64) -> Result<AtomReport> {
    if f.m != m || f.lambda != b.lambda() {
        return Err(Error::InvalidCollection("filtration was built from different parameters".into()));
    }
    let lambda = b.lambda();
    let unit = f.unit;
    let two = BigRational::from_integer(2.into());
    let third = BigRational::new(1.into(), 3.into());
    let mut violations = Vec::new();
    let mut report = |cube: &ExactInterval, property: &str, lhs: &BigRational, rhs: &BigRational| {
        violations.push(AtomViolation {
            cube: cube.to_string(),
            lambda,
            m,
            property: property.into(),
            lhs: lhs.into(),
            rhs: rhs.into(),
        })
    };
    let mut max_atom = BigRational::zero();
    let mut min_base = two.clone();
    let mut min_shift = two.clone();
    let mut count = 0;
    for atom in f.atoms() {
        count += 1;
        let q = &atom.cube;
        let qm = q.measure();
        let size = &atom.measure / &qm;
        let base = IntervalSet::from_interval(q, unit).intersection(&atom.points).measure() / &qm;
        let shifted = IntervalSet::from_interval(&q.shift(m as i64), unit).intersection(&atom.points).measure() / &qm;
        if size > two {
            report(q, "|A(Q)| <= 2|Q|", &size, &two);
        }
        if base < third {
            report(q, "|Q ∩ A(Q)| >= |Q|/3", &base, &third);
        }
        if shifted < third {
            report(q, "|τ_m(Q) ∩ A(Q)| >= |Q|/3", &shifted, &third);
        }
        max_atom = max_atom.max(size);
        min_base = min_base.min(base);
        min_shift = min_shift.min(shifted);
    }
    // disjoint within a level, nested-or-disjoint across levels; prefilter by hull
    let all: Vec<(&u32, &Atom)> = f.levels.iter().flat_map(|(s, v)| v.iter().map(move |a| (s, a))).collect();
    let hulls: Vec<Option<(BigInt, BigInt)>> = all.iter().map(|(_, a)| a.points.hull()).collect();
    let zero = BigRational::zero();
    for x in 0..all.len() {
        for y in x + 1..all.len() {
            let (Some(hx), Some(hy)) = (&hulls[x], &hulls[y]) else { continue };
            if hx.1 <= hy.0 || hy.1 <= hx.0 {
                continue;
            }
            let (sx, ax) = all[x];
            let (sy, ay) = all[y];
            let inter = ax.points.intersection(&ay.points);
            if inter.is_empty() {
                continue;
            }
            if sx == sy {
                report(&ay.cube, &format!("disjoint from atom of {}", ax.cube), &inter.measure(), &zero);
            } else {
                // sy > sx: the finer atom must lie inside the coarser one
                let (coarse, fine) = if sx < sy { (ax, ay) } else { (ay, ax) };
                if !fine.points.is_subset(&coarse.points) {
                    let outside = fine.points.difference(&coarse.points).measure();
                    report(&fine.cube, &format!("nested in atom of {}", coarse.cube), &outside, &zero);
                }
            }
        }
    }
    Ok(AtomReport {
        atoms_checked: count,
        violations,
        max_atom_ratio: max_atom,
        min_base_ratio: min_base,
        min_shift_ratio: min_shift,
    })
}

/// Aggregate of the exact sweep over `λ`, seeds and shifts.
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub lambda_max: u32,
    pub collections: usize,
    pub cases: usize,
    pub lemma_checks: usize,
    pub atoms_checked: usize,
    pub lemma_violations: Vec<String>,
    pub uniqueness_violations: Vec<String>,
    pub atom_violations: Vec<AtomViolation>,
    /// `max |I ∩ ⋃(J ∪ τ J)| / |I|` per `λ`.
    pub max_lemma_ratio: BTreeMap<u32, BigRational>,
    pub max_atom_ratio: BigRational,
    pub min_base_ratio: BigRational,
    pub min_shift_ratio: BigRational,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.lemma_violations.is_empty() && self.uniqueness_violations.is_empty() && self.atom_violations.is_empty()
    }
}

struct CaseResult {
    lemma_checks: usize,
    atoms_checked: usize,
    lemma_violations: Vec<String>,
    uniqueness_violations: Vec<String>,
    atom_violations: Vec<AtomViolation>,
    max_lemma_ratio: BigRational,
    atoms: Option<(BigRational, BigRational, BigRational)>,
}

/// Pattern and depth for the `c`-th collection at `λ`, cycling through the feasible patterns.
pub fn sweep_parameters(lambda: u32, seed: u64) -> (BlockPattern, u32) {
    let feasible: Vec<BlockPattern> =
        BlockPattern::ALL.iter().copied().filter(|p| !p.offsets(lambda).is_empty()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let pattern = feasible[rng.random_range(0..feasible.len())];
    let depth = rng.random_range(1..=pattern.offsets(lambda).len() as u32);
    (pattern, depth)
}

fn run_case(lambda: u32, seed: u64) -> Result<Vec<CaseResult>> {
    let (pattern, depth) = sweep_parameters(lambda, seed);
    let b = build_admissible_collection(lambda, depth, pattern, seed)?;
    let mut out = Vec::new();
    for m in 0..=(1u64 << (lambda - 1)) {
        let mut r = CaseResult {
            lemma_checks: 0,
            atoms_checked: 0,
            lemma_violations: Vec::new(),
            uniqueness_violations: Vec::new(),
            atom_violations: Vec::new(),
            max_lemma_ratio: BigRational::zero(),
            atoms: None,
        };
        for i in b.intervals() {
            for target in [i.clone(), i.shift(m as i64)] {
                let rep = lemma_overlap_measure(&b, &target, m)?;
                r.lemma_checks += 1;
                if !rep.holds {
                    r.lemma_violations.push(format!("λ={lambda} seed={seed} m={m} I={target}: {}", rep.measure));
                }
                if !rep.unique {
                    r.uniqueness_violations.push(format!("λ={lambda} seed={seed} m={m} I={target}"));
                }
                r.max_lemma_ratio = r.max_lemma_ratio.clone().max(&rep.measure / target.measure());
            }
        }
        let f = build_atoms(&b, m)?;
        let a = verify_atom_properties(&f, &b, m)?;
        r.atoms_checked = a.atoms_checked;
        r.atom_violations = a.violations;
        r.atoms = Some((a.max_atom_ratio, a.min_base_ratio, a.min_shift_ratio));
        out.push(r);
    }
    Ok(out)
}

/// Lemma and atom checks for every `λ ≤ lambda_max`, `collections` seeded
/// collections per `λ` and every `0 ≤ m ≤ 2^{λ-1}`.
pub fn exact_sweep(lambda_max: u32, collections: usize, seed: u64) -> Result<SweepReport> {
    let jobs: Vec<(u32, u64)> = (1..=lambda_max)
        .flat_map(|l| (0..collections as u64).map(move |c| (l, seed.wrapping_mul(1_000_003).wrapping_add(c))))
        .collect();
    let results: Vec<(u32, Vec<CaseResult>)> =
        jobs.par_iter().map(|&(l, s)| run_case(l, s).map(|r| (l, r))).collect::<Result<_>>()?;
    let two = BigRational::from_integer(2.into());
    let mut rep = SweepReport {
        lambda_max,
        collections,
        cases: 0,
        lemma_checks: 0,
        atoms_checked: 0,
        lemma_violations: Vec::new(),
        uniqueness_violations: Vec::new(),
        atom_violations: Vec::new(),
        max_lemma_ratio: BTreeMap::new(),
        max_atom_ratio: BigRational::zero(),
        min_base_ratio: two.clone(),
        min_shift_ratio: two,
    };
    for (lambda, cases) in results {
        for c in cases {
            rep.cases += 1;
            rep.lemma_checks += c.lemma_checks;
            rep.atoms_checked += c.atoms_checked;
            rep.lemma_violations.extend(c.lemma_violations);
            rep.uniqueness_violations.extend(c.uniqueness_violations);
            rep.atom_violations.extend(c.atom_violations);
            let e = rep.max_lemma_ratio.entry(lambda).or_insert_with(BigRational::zero);
            if c.max_lemma_ratio > *e {
                *e = c.max_lemma_ratio;
            }
            if let Some((a, b, s)) = c.atoms {
                if a > rep.max_atom_ratio {
                    rep.max_atom_ratio = a;
                }
                if b < rep.min_base_ratio {
                    rep.min_base_ratio = b;
                }
                if s < rep.min_shift_ratio {
                    rep.min_shift_ratio = s;
                }
            }
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteinReport {
    pub trials: usize,
    /// `max_t ‖Σ r_j E(f_j|F_j)‖_p / ‖Σ r_j f_j‖_p`.
    pub max_ratio: f64,
    /// Ratio of the trial means of both sides.
    pub mean_ratio: f64,
}

/// Partition labels of the grid cells for `F_t`, `t` indexing levels coarse to fine.
fn stein_labels(f: &Filtration, level: u32) -> Result<Vec<Vec<usize>>> {
    let hull = f
        .atoms()
        .filter_map(|a| a.points.hull())
        .fold(None::<(BigInt, BigInt)>, |acc, (a, b)| match acc {
            None => Some((a, b)),
            Some((x, y)) => Some((x.min(a), y.max(b))),
        })
        .ok_or_else(|| Error::Degenerate("filtration has no points".into()))?;
    let span = (&hull.1 - &hull.0).to_u64().unwrap_or(u64::MAX);
    let span_log2 = 64 - (span.max(1) - 1).leading_zeros();
    if span_log2 > level {
        return Err(Error::UnresolvableScale { scale: span_log2, level });
    }
    let cells = 1usize << level;
    let sub = level - span_log2;
    // unit index of every cell, relative to the hull start
    let unit_of = |c: usize| BigInt::from(c >> sub) + &hull.0;
    let mut labels = Vec::new();
    // minimal containing atom so far (id 0 = none)
    let mut current = vec![0usize; cells];
    let mut next_id = 1;
    for atoms in f.levels.values() {
        for a in atoms {
            for (c, lab) in current.iter_mut().enumerate() {
                let x = unit_of(c);
                if a.points.spans().iter().any(|(lo, hi)| *lo <= x && x < *hi) {
                    *lab = next_id;
                }
            }
            next_id += 1;
        }
        labels.push(current.clone());
    }
    Ok(labels)
}

fn average_by_label(values: &[f64], labels: &[usize]) -> Vec<f64> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (v, l) in values.iter().zip(labels) {
        let e = sums.entry(*l).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    labels.iter().map(|l| sums[l].0 / sums[l].1 as f64).collect()
}

/// Monte-Carlo comparison of `E‖Σ r_j E(f_j|F_j)‖_p` with `E‖Σ r_j f_j‖_p`.
///
/// The filtration is rasterised onto the 1-D grid of the functions by mapping
/// the hull of all atoms onto `[0,1)`; `f_t` is paired with the `t`-th level.
pub fn stein_spotcheck(
    fs: &[GridFunction],
    f: &Filtration,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<SteinReport> {
    let first = fs.first().ok_or_else(|| Error::ShapeMismatch("no functions".into()))?;
    if first.dim() != 1 || first.value_dim() != 1 {
        return Err(Error::ShapeMismatch("scalar 1-D functions expected".into()));
    }
    for g in fs {
        first.ensure_same_shape(g)?;
    }
    let labels = stein_labels(f, first.level())?;
    if fs.len() > labels.len() {
        return Err(Error::ShapeMismatch(format!("{} functions for {} filtration levels", fs.len(), labels.len())));
    }
    let conditioned: Vec<Vec<f64>> =
        fs.iter().zip(&labels).map(|(g, lab)| average_by_label(g.samples(), lab)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_ratio, mut lhs_sum, mut rhs_sum) = (0.0f64, 0.0, 0.0);
    let n = first.cell_count();
    for _ in 0..trials.max(1) {
        let signs: Vec<f64> = fs.iter().map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let mut lhs = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for (t, s) in signs.iter().enumerate() {
            for x in 0..n {
                lhs[x] += s * conditioned[t][x];
                rhs[x] += s * fs[t].samples()[x];
            }
        }
        let l = first.with_samples(lhs).lp_norm(p)?;
        let r = first.with_samples(rhs).lp_norm(p)?;
        if r > 0.0 {
            max_ratio = max_ratio.max(l / r);
        }
        lhs_sum += l;
        rhs_sum += r;
    }
    let mean_ratio = if rhs_sum > 0.0 { lhs_sum / rhs_sum } else { 0.0 };
    Ok(SteinReport { trials: trials.max(1), max_ratio, mean_ratio })
}

/// Floating view of a rational for summaries.
pub fn ratio_f64(r: &BigRational) -> f64 {
    rational_to_f64(r)
}
