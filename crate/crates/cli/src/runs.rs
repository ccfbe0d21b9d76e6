//! One function per subcommand. Each returns a [`Report`] whose `pass` flag
//! reflects every acceptance band the run checks.

use std::str::FromStr;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde_json::json;

use hrl_core::dyadic::{haar_analysis, haar_synthesis};
use hrl_core::filtration::{exact_sweep, ratio_f64};
use hrl_core::mollify::{
    coefficient_scan, kernel_expansion_check, layer_projection, layer_projection_adjoint,
    negative_coefficient_scan, negative_layer_projection, negative_layer_projection_adjoint,
    vanishing_configuration, Regime, ScanRow, DEFAULT_MARGIN, VANISHING_TOL,
};
use hrl_core::opnorm::{
    estimate_norm, fit_decay, interpolation_experiment, FnOperator, InterpolationConfig, NormEstimate,
    PowerIteration, Probe,
};
use hrl_core::projection::{directional_projection, figiel_shift};
use hrl_core::riesz::{
    invertible_part, layer_riesz_composition, riesz_inverse, riesz_layer_adjoint, riesz_layer_operator,
    riesz_transform, InverseMethod, RieszLayer,
};
use hrl_core::ring::{ring_operator, shifted_ring_operator, tiling_identity_check, FaceMode};
use hrl_core::{GridFunction, ProbeKind, ProbeSpec, SignPattern};

use crate::corpus::{interpolation_corpus, layer_corpus, ring_corpus};
use crate::report::{cell, num, Report, Table};
use crate::settings::Settings;

pub const DEFAULT_SEED: u64 = 7;

/// Power-iteration steps for the `p = 2` layer norms.
const POWER_STEPS: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    HaarRoundtrip,
    RingDecay,
    RingEquivalence,
    Tiling,
    AtomsVerify,
    ShiftNorm,
    LayerDecay,
    NegativeLayer,
    CoeffScan,
    KernelCheck,
    RieszIdentity,
    RieszLayer,
    Interpolation,
}

impl Experiment {
    pub const ALL: [Experiment; 13] = [
        Self::HaarRoundtrip,
        Self::AtomsVerify,
        Self::Tiling,
        Self::ShiftNorm,
        Self::RingDecay,
        Self::RingEquivalence,
        Self::KernelCheck,
        Self::CoeffScan,
        Self::RieszIdentity,
        Self::LayerDecay,
        Self::NegativeLayer,
        Self::RieszLayer,
        Self::Interpolation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::HaarRoundtrip => "haar-roundtrip",
            Self::RingDecay => "ring-decay",
            Self::RingEquivalence => "ring-equivalence",
            Self::Tiling => "tiling",
            Self::AtomsVerify => "atoms-verify",
            Self::ShiftNorm => "shift-norm",
            Self::LayerDecay => "layer-decay",
            Self::NegativeLayer => "negative-layer",
            Self::CoeffScan => "coeff-scan",
            Self::KernelCheck => "kernel-check",
            Self::RieszIdentity => "riesz-identity",
            Self::RieszLayer => "riesz-layer",
            Self::Interpolation => "interpolation",
        }
    }

    pub fn run(self, s: &Settings) -> anyhow::Result<Report> {
        let r = match self {
            Self::HaarRoundtrip => haar_roundtrip(s),
            Self::RingDecay => ring_decay(s),
            Self::RingEquivalence => ring_equivalence(s),
            Self::Tiling => tiling(s),
            Self::AtomsVerify => atoms_verify(s),
            Self::ShiftNorm => shift_norm(s),
            Self::LayerDecay => layer_decay(s),
            Self::NegativeLayer => negative_layer(s),
            Self::CoeffScan => coeff_scan(s),
            Self::KernelCheck => kernel_check(s),
            Self::RieszIdentity => riesz_identity(s),
            Self::RieszLayer => riesz_layer(s),
            Self::Interpolation => interpolation(s),
        };
        r.with_context(|| format!("{} failed", self.name()))
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).with_context(|| format!("unknown subcommand {s:?}"))
    }
}

/// Runs every experiment and adds an `all` summary report at the end.
pub fn run_all(s: &Settings, mut progress: impl FnMut(&Report)) -> anyhow::Result<Vec<Report>> {
    let mut out = Vec::new();
    let mut summary = Report::new("all");
    summary.params = base_params(s);
    for e in Experiment::ALL {
        let r = e.run(s)?;
        progress(&r);
        summary.metric(e.name(), r.pass);
        for v in &r.violations {
            summary.violations.push(format!("{}: {v}", e.name()));
        }
        out.push(r);
    }
    summary.pass = summary.violations.is_empty();
    out.push(summary);
    Ok(out)
}

fn base_params(s: &Settings) -> std::collections::BTreeMap<String, serde_json::Value> {
    let mut r = Report::new("");
    r.param("seed", seed(s));
    r.params
}

fn seed(s: &Settings) -> u64 {
    s.seed.unwrap_or(DEFAULT_SEED)
}

/// `(1, 0, …, 0)`.
fn first_axis() -> SignPattern {
    SignPattern::from_mask(1)
}

fn full_pattern(dim: usize) -> SignPattern {
    SignPattern::from_mask(((1u16 << dim) - 1) as u8)
}

fn max_abs_diff(a: &GridFunction, b: &GridFunction) -> anyhow::Result<f64> {
    Ok(a.sub(b)?.sup_norm())
}

fn estimate_row(t: &mut Table, key: &[String], est: &NormEstimate) {
    let mut row = key.to_vec();
    row.extend([
        cell(est.value),
        est.argmax.clone(),
        est.power_iteration.map_or(String::new(), cell),
        cell(est.probe_count),
        cell(est.skipped),
    ]);
    t.push(row);
}

const ESTIMATE_COLUMNS: [&str; 5] = ["norm", "argmax", "power_iteration", "probes", "skipped"];

fn estimate_table(name: &str, keys: &[&str]) -> Table {
    let mut header: Vec<&str> = keys.to_vec();
    header.extend(ESTIMATE_COLUMNS);
    Table::new(name, &header)
}

fn power(p: f64, seed: u64) -> Option<PowerIteration> {
    (p == 2.0).then_some(PowerIteration { iterations: POWER_STEPS, seed })
}

fn fit_metrics(r: &mut Report, key: &str, pts: &[(f64, f64)]) -> anyhow::Result<f64> {
    let fit = fit_decay(pts)?;
    r.metric(key, json!({"slope": num(fit.slope), "intercept": num(fit.intercept), "residual_rms": num(fit.residual_rms), "points": fit.points}));
    Ok(fit.slope)
}

pub fn haar_roundtrip(s: &Settings) -> anyhow::Result<Report> {
    const TOL: f64 = 1e-12;
    let mut r = Report::new("haar-roundtrip");
    let seed = seed(s);
    let dims: Vec<usize> = s.n.map_or(vec![2, 3], |n| vec![n]);
    let cap = s.level.unwrap_or(8).min(8);
    let shapes: Vec<(usize, u32)> = dims.iter().map(|&n| (n, if n == 3 { cap.min(6) } else { cap })).collect();
    r.param("shapes", &shapes);
    r.param("seed", seed);
    r.param("tolerance", TOL);
    let mut t = Table::new(
        "errors",
        &["n", "J", "probe", "roundtrip", "parseval", "idempotence", "annihilation", "completeness"],
    );
    let mut worst = [0.0f64; 5];
    for &(n, level) in &shapes {
        let probes = vec![
            Probe::from_spec("noise", &ProbeSpec::new(ProbeKind::WhiteNoise, seed), n, level)?,
            Probe::from_spec(
                "rademacher",
                &ProbeSpec::new(ProbeKind::ScaleRademacher { lo: 0, hi: level - 1, pattern: full_pattern(n) }, seed + 1),
                n,
                level,
            )?,
        ];
        for pr in &probes {
            let u = &pr.function;
            let c = haar_analysis(u);
            let roundtrip = max_abs_diff(&haar_synthesis(&c, level)?, u)?;
            let l2 = u.lp_norm(2.0)?.powi(2);
            let parseval = (l2 - c.energy()).abs() / l2;
            let patterns: Vec<SignPattern> = SignPattern::all(n).collect();
            let parts: Vec<GridFunction> =
                patterns.iter().map(|&e| directional_projection(u, e)).collect::<hrl_core::Result<_>>()?;
            let (mut idem, mut annih) = (0.0f64, 0.0f64);
            for (i, &e) in patterns.iter().enumerate() {
                idem = idem.max(max_abs_diff(&directional_projection(&parts[i], e)?, &parts[i])?);
                for (k, &d) in patterns.iter().enumerate() {
                    if k != i {
                        annih = annih.max(directional_projection(&parts[i], d)?.sup_norm());
                    }
                }
            }
            let mut sum = GridFunction::constant(n, level, c.mean()[0]);
            for p in &parts {
                sum = sum.add(p)?;
            }
            let complete = max_abs_diff(&sum, u)?;
            let errs = [roundtrip, parseval, idem, annih, complete];
            for (w, e) in worst.iter_mut().zip(errs) {
                *w = w.max(e);
            }
            let mut row = vec![cell(n), cell(level), pr.id.clone()];
            row.extend(errs.iter().map(|e| cell(e)));
            t.push(row);
        }
    }
    for (name, w) in ["roundtrip", "parseval", "idempotence", "annihilation", "completeness"].iter().zip(worst) {
        r.metric(&format!("max_{name}"), num(w));
        r.check(w < TOL, || format!("{name} error {w:.3e} ≥ {TOL:e}"));
    }
    r.table(t);
    Ok(r)
}

fn lambda_range(s: &Settings, lo: u32, hi: u32) -> (u32, u32) {
    (s.lambda_min.unwrap_or(lo), s.lambda_max.unwrap_or(hi))
}

fn p_list(s: &Settings, default: &[f64]) -> Vec<f64> {
    s.p.map_or_else(|| default.to_vec(), |p| vec![p])
}

pub fn ring_decay(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("ring-decay");
    let (n, level, seed) = (s.n.unwrap_or(2), s.level.unwrap_or(10), seed(s));
    let (lo, hi) = lambda_range(s, 1, 5);
    let ps = p_list(s, &[2.0, 4.0]);
    if hi >= level {
        bail!("lambda {hi} needs J > {hi}");
    }
    r.param("n", n);
    r.param("J", level);
    r.param("lambda", [lo, hi]);
    r.param("p", &ps);
    r.param("face_mode", FaceMode::SlabLeft);
    r.param("seed", seed);
    let eps = first_axis();
    let probes = ring_corpus(n, level, eps, seed)?;
    let mut t = estimate_table("norms", &["p", "lambda"]);
    for &p in &ps {
        let mut pts = Vec::new();
        for lambda in lo..=hi {
            let op = FnOperator::new(format!("S_{lambda}"), move |u: &GridFunction| {
                ring_operator(u, eps, lambda, FaceMode::SlabLeft)
            });
            let est = estimate_norm(&op, &probes, p, None)?;
            estimate_row(&mut t, &[cell(p), cell(lambda)], &est);
            pts.push((lambda as f64, est.value.log2()));
        }
        let slope = fit_metrics(&mut r, &format!("fit_p{p}"), &pts)?;
        // ‖S_λ‖ ≲ 2^{-λ/max(2,p)}
        let target = -1.0 / p.max(2.0);
        r.check(slope <= target + 0.1, || format!("p = {p}: slope {slope:.4} > {:.4}", target + 0.1));
        if p == 2.0 {
            r.check(slope >= -0.6, || format!("p = 2: slope {slope:.4} < -0.6"));
        }
    }
    r.table(t);
    Ok(r)
}

pub fn ring_equivalence(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("ring-equivalence");
    let (n, level, seed) = (s.n.unwrap_or(2), s.level.unwrap_or(8), seed(s));
    let (lo, hi) = lambda_range(s, 1, 5);
    let ps = p_list(s, &[2.0, 4.0]);
    if hi >= level {
        bail!("lambda {hi} needs J > {hi}");
    }
    r.param("n", n);
    r.param("J", level);
    r.param("lambda", [lo, hi]);
    r.param("p", &ps);
    r.param("seed", seed);
    let eps = first_axis();
    let probes = ring_corpus(n, level, eps, seed)?;
    let mut t = Table::new("constants", &["p", "lambda", "constant", "argmax"]);
    for &p in &ps {
        let mut per_lambda = Vec::new();
        for lambda in lo..=hi {
            let ratios: Vec<(f64, String)> = probes
                .par_iter()
                .map(|pr| {
                    let norms = (0..1u64 << lambda)
                        .map(|m| shifted_ring_operator(&pr.function, eps, lambda, m, FaceMode::SlabLeft)?.lp_norm(p))
                        .collect::<hrl_core::Result<Vec<f64>>>()?;
                    let max = norms.iter().cloned().fold(0.0, f64::max);
                    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
                    Ok((if max == 0.0 { 1.0 } else { max / min }, pr.id.clone()))
                })
                .collect::<hrl_core::Result<_>>()?;
            let (c, arg) = ratios.into_iter().fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a });
            t.push(vec![cell(p), cell(lambda), cell(c), arg]);
            per_lambda.push((lambda, c));
        }
        r.metric(&format!("constants_p{p}"), per_lambda.iter().map(|&(l, c)| (l.to_string(), num(c))).collect::<std::collections::BTreeMap<_, _>>());
        let at = |l: u32| per_lambda.iter().find(|x| x.0 == l).map(|x| x.1);
        if let (Some(c2), Some(ch)) = (at(2), at(hi)) {
            if hi > 2 {
                r.check(ch <= 2.0 * c2, || format!("p = {p}: constant {ch:.4} at λ = {hi} exceeds 2 × {c2:.4} at λ = 2"));
            }
        }
        r.check(per_lambda.iter().all(|x| x.1.is_finite()), || format!("p = {p}: some shifted operator annihilated a probe"));
    }
    r.table(t);
    Ok(r)
}

pub fn tiling(s: &Settings) -> anyhow::Result<Report> {
    const TOL: f64 = 1e-10;
    let mut r = Report::new("tiling");
    let (n, level, seed) = (s.n.unwrap_or(2), s.level.unwrap_or(8), seed(s));
    let (lo, hi) = lambda_range(s, 1, 4);
    if hi >= level {
        bail!("lambda {hi} needs J > {hi}");
    }
    r.param("n", n);
    r.param("J", level);
    r.param("lambda", [lo, hi]);
    r.param("seed", seed);
    let probes = vec![
        Probe::from_spec("noise", &ProbeSpec::new(ProbeKind::WhiteNoise, seed), n, level)?,
        Probe::from_spec(
            "rademacher",
            &ProbeSpec::new(ProbeKind::ScaleRademacher { lo: 0, hi: level - 1, pattern: full_pattern(n) }, seed + 1),
            n,
            level,
        )?,
    ];
    let mut t = Table::new("checks", &["probe", "pattern", "lambda", "modulus_error", "residual", "cubes"]);
    let (mut worst_mod, mut worst_res) = (0.0f64, 0.0f64);
    for pr in &probes {
        for eps in SignPattern::all(n) {
            for lambda in lo..=hi {
                let rep = tiling_identity_check(&pr.function, eps, lambda)?;
                worst_mod = worst_mod.max(rep.modulus_error);
                worst_res = worst_res.max(rep.residual);
                t.push(vec![
                    pr.id.clone(),
                    eps.to_string(),
                    cell(lambda),
                    cell(rep.modulus_error),
                    cell(rep.residual),
                    cell(rep.cubes_checked),
                ]);
            }
        }
    }
    r.metric("max_modulus_error", num(worst_mod));
    r.metric("max_residual", num(worst_res));
    r.check(worst_mod < TOL, || format!("max ||c_Q| - 1| = {worst_mod:.3e}"));
    r.check(worst_res < TOL, || format!("max residual = {worst_res:.3e}"));
    r.table(t);
    Ok(r)
}

pub const SWEEP_COLLECTIONS: usize = 200;

pub fn atoms_verify(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("atoms-verify");
    let lambda_max = s.lambda_max.unwrap_or(6);
    let seed = seed(s);
    r.param("lambda_max", lambda_max);
    r.param("collections", SWEEP_COLLECTIONS);
    r.param("seed", seed);
    let rep = exact_sweep(lambda_max, SWEEP_COLLECTIONS, seed)?;
    r.metric("cases", rep.cases);
    r.metric("lemma_checks", rep.lemma_checks);
    r.metric("atoms_checked", rep.atoms_checked);
    r.metric("max_atom_ratio", rep.max_atom_ratio.to_string());
    r.metric("min_base_ratio", rep.min_base_ratio.to_string());
    r.metric("min_shift_ratio", rep.min_shift_ratio.to_string());
    let mut t = Table::new("lemma", &["lambda", "max_ratio", "max_ratio_float"]);
    for (l, ratio) in &rep.max_lemma_ratio {
        t.push(vec![cell(l), ratio.to_string(), cell(ratio_f64(ratio))]);
    }
    r.table(t);
    for v in &rep.lemma_violations {
        r.check(false, || format!("lemma: {v}"));
    }
    for v in &rep.uniqueness_violations {
        r.check(false, || format!("uniqueness: {v}"));
    }
    for v in &rep.atom_violations {
        r.check(false, || format!("atom: {v:?}"));
    }
    r.check(rep.cases > 0, || "no cases were checked".into());
    Ok(r)
}

pub fn shift_norm(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("shift-norm");
    let (n, level, seed) = (s.n.unwrap_or(2), s.level.unwrap_or(8), seed(s));
    let p = s.p.unwrap_or(4.0);
    let shifts: Vec<i64> = (0..=6).map(|k| 1i64 << k).collect();
    r.param("n", n);
    r.param("J", level);
    r.param("p", p);
    r.param("shifts", &shifts);
    r.param("seed", seed);
    let eps = first_axis();
    let probes = layer_corpus(n, level, eps, seed)?;
    let mut t = estimate_table("norms", &["m"]);
    let mut pts = Vec::new();
    for &m in &shifts {
        let mut v = vec![0i64; n];
        v[0] = m;
        let op = FnOperator::new(format!("T_{m}"), move |u: &GridFunction| figiel_shift(u, &v, 0..level));
        let est = estimate_norm(&op, &probes, p, None)?;
        estimate_row(&mut t, &[cell(m)], &est);
        r.check(est.value >= 1.0 - 1e-10, || format!("‖T_{m}‖ estimate {:.6} < 1", est.value));
        pts.push(((2.0 + m as f64).log2().log2(), est.value.log2()));
    }
    // ‖T_m‖ ≲ log(2 + |m|): log-log slope against log(2 + m) at most one
    let slope = fit_metrics(&mut r, "fit_loglog", &pts)?;
    r.check(slope <= 1.15, || format!("growth exponent {slope:.4} against log(2+m) exceeds 1"));
    r.table(t);
    Ok(r)
}

fn layer_operator(eps: SignPattern, l: i32) -> FnOperator {
    FnOperator::new(format!("P_{l}"), move |u: &GridFunction| Ok(layer_projection(u, eps, l)?.function))
        .with_adjoint(move |v: &GridFunction| layer_projection_adjoint(v, eps, l, DEFAULT_MARGIN))
}

fn riesz_operator(eps: SignPattern, layer: RieszLayer, axis: usize, i0: usize) -> FnOperator {
    FnOperator::new(format!("K_{layer:?}_{axis}"), move |u: &GridFunction| {
        Ok(riesz_layer_operator(u, eps, layer, axis, i0)?.function)
    })
    .with_adjoint(move |v: &GridFunction| riesz_layer_adjoint(v, eps, layer, axis, i0))
}

pub fn layer_decay(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("layer-decay");
    let (n, level, seed) = (s.n.unwrap_or(2), s.level.unwrap_or(10), seed(s));
    let p = s.p.unwrap_or(2.0);
    let l_max = s.l_max.unwrap_or(4);
    r.param("n", n);
    r.param("J", level);
    r.param("p", p);
    r.param("l", [1, l_max]);
    r.param("margin", DEFAULT_MARGIN);
    r.param("seed", seed);
    let eps = first_axis();
    let probes = layer_corpus(n, level, eps, seed)?;
    let mut t = estimate_table("norms", &["l", "dropped_scales"]);
    let mut pts = Vec::new();
    for l in 1..=l_max {
        let dropped = hrl_core::mollify::layer_scales(l, level, DEFAULT_MARGIN).1;
        let est = estimate_norm(&layer_operator(eps, l), &probes, p, power(p, seed))?;
        estimate_row(&mut t, &[cell(l), cell(dropped.len())], &est);
        pts.push((l as f64, est.value.log2()));
    }
    let slope = fit_metrics(&mut r, "fit", &pts)?;
    if p == 2.0 {
        r.check((-0.65..=-0.35).contains(&slope), || format!("slope {slope:.4} outside [-0.65, -0.35]"));
    } else {
        r.check(slope < 0.0, || format!("slope {slope:.4} is not decaying"));
    }
    r.table(t);
    Ok(r)
}

pub fn negative_layer(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("negative-layer");
    let (n, seed) = (s.n.unwrap_or(2), seed(s));
    let top = s.level.unwrap_or(10);
    let levels: Vec<u32> = [6, 8, 10].into_iter().filter(|&j| j <= top).collect();
    let p = s.p.unwrap_or(2.0);
    let (i0, axis) = (0usize, 1usize.min(n - 1));
    r.param("n", n);
    r.param("J", &levels);
    r.param("p", p);
    r.param("i0", i0);
    r.param("axis", axis);
    r.param("seed", seed);
    let eps = first_axis();
    let mut t = estimate_table("norms", &["operator", "J"]);
    let mut values: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for &level in &levels {
        let probes = layer_corpus(n, level, eps, seed)?;
        let pm = FnOperator::new("P_-", move |u: &GridFunction| Ok(negative_layer_projection(u, eps)?.function))
            .with_adjoint(move |v: &GridFunction| negative_layer_projection_adjoint(v, eps, DEFAULT_MARGIN));
        let km = riesz_operator(eps, RieszLayer::Negative, axis, i0);
        for (k, op) in [pm, km].iter().enumerate() {
            let est = estimate_norm(op, &probes, p, power(p, seed))?;
            estimate_row(&mut t, &[["P_-", "K_-"][k].to_string(), cell(level)], &est);
            values[k].push(est.value);
        }
    }
    for (k, name) in ["P_-", "K_-"].iter().enumerate() {
        let v = &values[k];
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let spread = hi / lo - 1.0;
        r.metric(&format!("spread_{name}"), num(spread));
        r.check(spread < 0.2, || format!("{name} norms vary by {:.1}% across J", 100.0 * spread));
    }
    r.table(t);
    Ok(r)
}

struct RegimeFit {
    regime: Regime,
    l: Option<i32>,
    q_scale: u32,
    lambdas: std::ops::RangeInclusive<i32>,
}

/// Fitted exponent of `measured` against `λ`, compared with the exponent of the prediction.
pub fn coeff_scan(s: &Settings) -> anyhow::Result<Report> {
    const TOL: f64 = 0.15;
    let mut r = Report::new("coeff-scan");
    let (n, level) = (s.n.unwrap_or(2), s.level.unwrap_or(10));
    // case 1/2 use Q at scale 4 with l = 3, resolvable only for J ≥ 7 + margin
    if level < 10 {
        bail!("coeff-scan needs J ≥ 10");
    }
    let j = level as i32;
    r.param("n", n);
    r.param("J", level);
    r.param("margin", DEFAULT_MARGIN);
    let eps = first_axis();
    // the root cube (λ = -j(Q)) is excluded: its Haar function has a jump of 2 at the torus seam
    let fits = [
        RegimeFit { regime: Regime::Case1, l: Some(3), q_scale: 4, lambdas: -3..=0 },
        RegimeFit { regime: Regime::Case2, l: Some(3), q_scale: 4, lambdas: 1..=3 },
        RegimeFit { regime: Regime::Case3, l: Some(1), q_scale: 1, lambdas: 5..=j - 2 },
        RegimeFit { regime: Regime::NegativeCase1, l: None, q_scale: 3, lambdas: 3..=j - 4 },
        RegimeFit { regime: Regime::NegativeCase2, l: None, q_scale: 5, lambdas: -4..=-1 },
    ];
    let mut t = Table::new("rows", &["regime", "l", "q_scale", "lambda", "measured", "predicted", "vanishing"]);
    let mut cache: std::collections::BTreeMap<(Option<i32>, u32), Vec<ScanRow>> = Default::default();
    for f in &fits {
        if !cache.contains_key(&(f.l, f.q_scale)) {
            let rows = match f.l {
                Some(l) => coefficient_scan(eps, l, f.q_scale, n, level, DEFAULT_MARGIN)?,
                None => negative_coefficient_scan(eps, f.q_scale, n, level)?,
            };
            cache.insert((f.l, f.q_scale), rows);
        }
        let rows: Vec<&ScanRow> = cache[&(f.l, f.q_scale)].iter().filter(|x| f.lambdas.contains(&x.lambda)).collect();
        let name = serde_json::to_value(f.regime)?.as_str().unwrap_or_default().to_string();
        for x in &rows {
            t.push(vec![
                name.clone(),
                f.l.map_or("aggregate".into(), cell),
                cell(f.q_scale),
                cell(x.lambda),
                cell(x.measured),
                cell(x.predicted),
                cell(x.vanishing),
            ]);
        }
        let live: Vec<&&ScanRow> = rows.iter().filter(|x| !x.vanishing).collect();
        let largest = rows.iter().map(|x| x.measured).fold(0.0, f64::max);
        if !r.check(live.len() >= 3, || {
            format!(
                "{name}: {} of {} coefficients are below {VANISHING_TOL:e}·|Q| (largest {largest:.3e}); no exponent to fit",
                rows.len() - live.len(),
                rows.len()
            )
        }) {
            r.metric(&name, json!({"fitted": null, "largest": num(largest)}));
            continue;
        }
        let measured = fit_decay(&live.iter().map(|x| (x.lambda as f64, x.measured.log2())).collect::<Vec<_>>())?;
        let predicted = fit_decay(&live.iter().map(|x| (x.lambda as f64, x.predicted.log2())).collect::<Vec<_>>())?;
        r.metric(&name, json!({"fitted": num(measured.slope), "predicted": num(predicted.slope), "residual_rms": num(measured.residual_rms)}));
        let gap = (measured.slope - predicted.slope).abs();
        r.check(gap <= TOL, || {
            format!("{name}: exponent {:.4} vs predicted {:.4}", measured.slope, predicted.slope)
        });
    }
    let vanishing = vanishing_configuration(eps, n, level, DEFAULT_MARGIN)?;
    r.metric("vanishing", num(vanishing));
    r.check(vanishing < VANISHING_TOL, || format!("vanishing configuration gives {vanishing:.3e}"));
    r.table(t);
    Ok(r)
}

/// Margin used for the dense kernel check; `J = 4` leaves no room for the default.
pub const KERNEL_MARGIN: u32 = 1;

pub fn kernel_check(s: &Settings) -> anyhow::Result<Report> {
    const TOL: f64 = 1e-10;
    let mut r = Report::new("kernel-check");
    let (n, level, seed) = (s.n.unwrap_or(2), s.level.unwrap_or(4).min(4), seed(s));
    let layers: [Option<i32>; 5] = [Some(0), Some(1), Some(2), Some(-1), None];
    r.param("n", n);
    r.param("J", level);
    r.param("margin", KERNEL_MARGIN);
    r.param("layers", layers.map(|l| l.map_or("aggregate".to_string(), |l| l.to_string())));
    r.param("seed", seed);
    let eps = first_axis();
    let u = hrl_core::grid::generate_probe(&ProbeSpec::new(ProbeKind::WhiteNoise, seed), n, level)?;
    let mut t = Table::new(
        "checks",
        &["l", "size", "matrix_residual", "direct_vs_operator", "expansion_vs_operator", "kernel_max"],
    );
    let checks: Vec<_> = layers.par_iter().map(|&l| kernel_expansion_check(&u, eps, l, KERNEL_MARGIN)).collect::<hrl_core::Result<_>>()?;
    let mut worst = 0.0f64;
    for (l, k) in layers.iter().zip(&checks) {
        let label = l.map_or("aggregate".to_string(), |l| l.to_string());
        let e = k.matrix_residual.max(k.direct_vs_operator).max(k.expansion_vs_operator);
        worst = worst.max(e);
        r.check(e < TOL, || format!("l = {label}: kernel mismatch {e:.3e}"));
        r.check(k.kernel_max > 0.0, || format!("l = {label}: kernel is identically zero"));
        t.push(vec![
            label,
            cell(k.size),
            cell(k.matrix_residual),
            cell(k.direct_vs_operator),
            cell(k.expansion_vs_operator),
            cell(k.kernel_max),
        ]);
    }
    r.metric("max_residual", num(worst));
    r.table(t);
    Ok(r)
}

pub fn riesz_identity(s: &Settings) -> anyhow::Result<Report> {
    const TOL: f64 = 1e-10;
    let mut r = Report::new("riesz-identity");
    let seed = seed(s);
    let shapes: Vec<(usize, u32)> = match s.n {
        Some(n) => vec![(n, s.level.unwrap_or(8).min(if n == 3 { 5 } else { 8 }))],
        None => vec![(2, 8), (3, 5)],
    };
    r.param("shapes", &shapes);
    r.param("seed", seed);
    r.param("tolerance", TOL);
    let mut t = Table::new(
        "errors",
        &["n", "J", "probe", "axis", "inverse_composition", "inverse_direct", "methods", "sum_of_squares", "layer_split"],
    );
    let mut worst = [0.0f64; 5];
    for &(n, level) in &shapes {
        let probes = [
            Probe::from_spec("noise", &ProbeSpec::new(ProbeKind::WhiteNoise, seed), n, level)?,
            Probe::from_spec(
                "rademacher",
                &ProbeSpec::new(ProbeKind::ScaleRademacher { lo: 0, hi: level - 1, pattern: full_pattern(n) }, seed + 1),
                n,
                level,
            )?,
        ];
        for pr in &probes {
            // zero mean and no Nyquist modes: the range where Σ R_i² = -Id
            let mut w = pr.function.clone();
            for a in 0..n {
                w = invertible_part(&w, a)?;
            }
            let mut sq = w.clone();
            for a in 0..n {
                sq = sq.add(&riesz_transform(&riesz_transform(&w, a)?, a)?)?;
            }
            let sum_sq = sq.sup_norm();
            for axis in 0..n {
                let u = invertible_part(&pr.function, axis)?;
                let v = riesz_transform(&u, axis)?;
                let comp = riesz_inverse(&v, axis, InverseMethod::Composition)?.function;
                let direct = riesz_inverse(&v, axis, InverseMethod::Direct)?.function;
                let mut pattern = vec![0u8; n];
                pattern[axis] = 1;
                let split = layer_riesz_composition(&v, SignPattern::from_bits(&pattern), 1, axis)?.residual;
                let errs = [max_abs_diff(&comp, &u)?, max_abs_diff(&direct, &u)?, max_abs_diff(&comp, &direct)?, sum_sq, split];
                for (x, e) in worst.iter_mut().zip(errs) {
                    *x = x.max(e);
                }
                let mut row = vec![cell(n), cell(level), pr.id.clone(), cell(axis)];
                row.extend(errs.iter().map(|e| cell(e)));
                t.push(row);
            }
        }
    }
    for (name, w) in ["inverse_composition", "inverse_direct", "methods", "sum_of_squares", "layer_split"].iter().zip(worst) {
        r.metric(&format!("max_{name}"), num(w));
        r.check(w < TOL, || format!("{name} error {w:.3e} ≥ {TOL:e}"));
    }
    r.table(t);
    Ok(r)
}

pub fn riesz_layer(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("riesz-layer");
    let (n, level, seed) = (s.n.unwrap_or(2), s.level.unwrap_or(10), seed(s));
    if n < 2 {
        bail!("riesz-layer needs n ≥ 2 (i ≠ i0)");
    }
    let p = s.p.unwrap_or(2.0);
    let l_max = s.l_max.unwrap_or(4);
    let (i0, axis) = (0usize, 1usize);
    r.param("n", n);
    r.param("J", level);
    r.param("p", p);
    r.param("l", [0, l_max]);
    r.param("i0", i0);
    r.param("axis", axis);
    r.param("seed", seed);
    let eps = first_axis();
    let probes = layer_corpus(n, level, eps, seed)?;
    let mut t = estimate_table("norms", &["l"]);
    let mut pts = Vec::new();
    for l in 0..=l_max {
        let est = estimate_norm(&riesz_operator(eps, RieszLayer::Layer(l), axis, i0), &probes, p, power(p, seed))?;
        estimate_row(&mut t, &[cell(l)], &est);
        pts.push((l as f64, est.value.log2()));
    }
    let slope = fit_metrics(&mut r, "fit", &pts)?;
    if p == 2.0 {
        r.check((slope - 0.5).abs() <= 0.15, || format!("slope {slope:.4} outside 0.5 ± 0.15"));
    }
    r.table(t);
    Ok(r)
}

/// `(p, ε, i0)` with `i0` zero-based.
pub const INTERPOLATION_CASES: [(f64, [u8; 2], usize); 3] = [(2.0, [1, 0], 0), (4.0, [1, 1], 0), (1.5, [1, 0], 0)];

pub fn interpolation(s: &Settings) -> anyhow::Result<Report> {
    let mut r = Report::new("interpolation");
    let seed = seed(s);
    let top = s.level.unwrap_or(10);
    let levels: Vec<u32> = [6, 8, 10].into_iter().filter(|&j| j <= top).collect();
    if levels.len() < 2 {
        bail!("interpolation needs J ≥ 8");
    }
    let cases: Vec<(f64, [u8; 2], usize)> = match s.p {
        Some(p) => vec![(p, [1, 0], 0)],
        None => INTERPOLATION_CASES.to_vec(),
    };
    let layers: Vec<i32> = (-1..=2).collect();
    r.param("n", 2);
    r.param("J", &levels);
    r.param("cases", cases.iter().map(|(p, e, i0)| json!({"p": p, "eps": e, "i0": i0 + 1})).collect::<Vec<_>>());
    r.param("layers", &layers);
    r.param("seed", seed);
    let mut summary = Table::new("max-ratio", &["p", "eps", "i0", "J", "max_ratio", "argmax", "probes", "skipped"]);
    let mut rows = Table::new(
        "probes",
        &["p", "eps", "i0", "J", "probe", "norm_u", "norm_ru", "norm_pu", "ratio", "split_index"],
    );
    let mut layer_rows = Table::new("layers", &["p", "eps", "i0", "J", "probe", "l", "through_riesz", "norm"]);
    for &(p, bits, i0) in &cases {
        let eps = SignPattern::from_bits(&bits);
        let tag = format!("{}{}", bits[0], bits[1]);
        let mut maxima = Vec::new();
        for &level in &levels {
            let probes = interpolation_corpus(2, level, eps, seed)?;
            let cfg = InterpolationConfig { p, pattern: eps, axis: i0, layers: layers.clone() };
            let rep = interpolation_experiment(&cfg, &probes)?;
            let key = [cell(p), tag.clone(), cell(i0 + 1), cell(level)];
            let mut row = key.to_vec();
            row.extend([cell(rep.max_ratio), rep.argmax.clone(), cell(rep.rows.len()), cell(rep.skipped)]);
            summary.push(row);
            for x in &rep.rows {
                let mut row = key.to_vec();
                row.extend([
                    x.probe.clone(),
                    cell(x.norm_u),
                    cell(x.norm_ru),
                    cell(x.norm_pu),
                    cell(x.ratio),
                    cell(x.split_index),
                ]);
                rows.push(row);
                for e in &x.layers {
                    let mut row = key.to_vec();
                    row.extend([x.probe.clone(), cell(e.l), cell(e.through_riesz), cell(e.norm)]);
                    layer_rows.push(row);
                }
            }
            maxima.push((level, rep.max_ratio));
        }
        let first = maxima[0].1;
        let last = maxima[maxima.len() - 1].1;
        let growth = last / first - 1.0;
        r.metric(
            &format!("p{p}_eps{tag}_i0{}", i0 + 1),
            json!({"max_ratio": maxima.iter().map(|&(j, v)| (j.to_string(), num(v))).collect::<std::collections::BTreeMap<_, _>>(), "growth": num(growth)}),
        );
        r.check(growth < 0.1, || {
            format!(
                "p = {p}, ε = {tag}: max ratio grows {:.1}% from J = {} to J = {}",
                100.0 * growth,
                maxima[0].0,
                maxima[maxima.len() - 1].0
            )
        });
    }
    r.table(summary);
    r.table(rows);
    r.table(layer_rows);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("bogus".parse::<Experiment>().is_err());
        let names: std::collections::BTreeSet<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
        assert_eq!(names.len(), 13);
    }

    #[test]
    fn small_runs_pass() {
        let s = Settings { level: Some(6), ..Default::default() };
        for e in [Experiment::HaarRoundtrip, Experiment::Tiling, Experiment::KernelCheck, Experiment::RieszIdentity] {
            let r = e.run(&s).unwrap();
            assert!(r.pass, "{}: {:?}", e.name(), r.violations);
        }
    }

    #[test]
    fn atoms_small_sweep() {
        let s = Settings { lambda_max: Some(3), ..Default::default() };
        let r = atoms_verify(&s).unwrap();
        assert!(r.pass, "{:?}", r.violations);
        assert!(r.metrics["cases"].as_u64().unwrap() > 0);
    }
}
