//! Lower bounds for operator norms on `L^p` from probe families, power-law fits
//! and the interpolation ratio.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::SignPattern;
use crate::error::{Error, Result};
use crate::grid::{generate_probe, GridFunction, ProbeSpec};
use crate::mollify::layer_projection;
use crate::projection::directional_projection;
use crate::riesz::{riesz_inverse, riesz_transform, InverseMethod};

/// A linear map on grid functions of one fixed shape.
pub trait LinearOperator: Sync {
    fn name(&self) -> String;
    fn apply(&self, u: &GridFunction) -> Result<GridFunction>;
    /// `None` when no adjoint is available.
    fn apply_adjoint(&self, _v: &GridFunction) -> Option<Result<GridFunction>> {
        None
    }
}

type OpFn = Box<dyn Fn(&GridFunction) -> Result<GridFunction> + Send + Sync>;

/// Operator built from closures.
pub struct FnOperator {
    name: String,
    forward: OpFn,
    adjoint: Option<OpFn>,
}

impl FnOperator {
    pub fn new(name: impl Into<String>, forward: impl Fn(&GridFunction) -> Result<GridFunction> + Send + Sync + 'static) -> Self {
        Self { name: name.into(), forward: Box::new(forward), adjoint: None }
    }

    pub fn with_adjoint(mut self, adjoint: impl Fn(&GridFunction) -> Result<GridFunction> + Send + Sync + 'static) -> Self {
        self.adjoint = Some(Box::new(adjoint));
        self
    }
}

impl LinearOperator for FnOperator {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        (self.forward)(u)
    }

    fn apply_adjoint(&self, v: &GridFunction) -> Option<Result<GridFunction>> {
        self.adjoint.as_ref().map(|a| a(v))
    }
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub id: String,
    pub function: GridFunction,
}

impl Probe {
    pub fn new(id: impl Into<String>, function: GridFunction) -> Self {
        Self { id: id.into(), function }
    }

    pub fn from_spec(id: impl Into<String>, spec: &ProbeSpec, dim: usize, level: u32) -> Result<Self> {
        Ok(Self::new(id, generate_probe(spec, dim, level)?))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub operator: String,
    pub p: f64,
    /// `max ‖T u‖_p / ‖u‖_p` over probes and the power iterate.
    pub value: f64,
    pub argmax: String,
    pub probe_count: usize,
    /// Probes with vanishing norm or non-finite output.
    pub skipped: usize,
    /// Ratio reached by power iteration on `T^*T` (`p = 2` with an adjoint).
    pub power_iteration: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct PowerIteration {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { iterations: 30, seed: 0x5eed }
    }
}

fn ratio(op: &dyn LinearOperator, u: &GridFunction, p: f64) -> Result<Option<f64>> {
    let nu = u.lp_norm(p)?;
    if !(nu > 1e-300) {
        return Ok(None);
    }
    let tu = op.apply(u)?;
    if tu.samples().iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    Ok(Some(tu.lp_norm(p)? / nu))
}

fn power_iterate(op: &dyn LinearOperator, like: &GridFunction, cfg: PowerIteration) -> Result<Option<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start: Vec<f64> = (0..like.samples().len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut v = like.with_samples(start);
    let mut best = 0.0f64;
    for _ in 0..cfg.iterations {
        let nv = v.lp_norm(2.0)?;
        if nv == 0.0 {
            return Ok(Some(best));
        }
        v = v.scale(1.0 / nv);
        let tv = op.apply(&v)?;
        best = best.max(tv.lp_norm(2.0)?);
        match op.apply_adjoint(&tv) {
            Some(w) => v = w?,
            None => return Ok(None),
        }
    }
    Ok(Some(best))
}

/// `max ‖T u‖_p / ‖u‖_p` over the probes; with `p = 2` and an adjoint the
/// power iterate of `T^*T` is added as one more probe.
pub fn estimate_norm(op: &dyn LinearOperator, probes: &[Probe], p: f64, power: Option<PowerIteration>) -> Result<NormEstimate> {
    if probes.is_empty() {
        return Err(Error::Degenerate("no probes".into()));
    }
    let ratios: Vec<Option<f64>> = probes.par_iter().map(|pr| ratio(op, &pr.function, p)).collect::<Result<_>>()?;
    let mut value = 0.0f64;
    let mut argmax = String::new();
    let mut skipped = 0;
    for (pr, r) in probes.iter().zip(&ratios) {
        match r {
            Some(r) if *r > value || argmax.is_empty() => {
                value = *r;
                argmax = pr.id.clone();
            }
            Some(_) => {}
            None => skipped += 1,
        }
    }
    let mut power_iteration = None;
    if p == 2.0 && probes[0].function.value_dim() == 1 {
        if let Some(cfg) = power {
            power_iteration = power_iterate(op, &probes[0].function, cfg)?;
            if let Some(r) = power_iteration {
                if r > value {
                    value = r;
                    argmax = "power-iteration".into();
                }
            }
        }
    }
    if skipped == probes.len() && power_iteration.is_none() {
        return Err(Error::Degenerate("every probe was skipped".into()));
    }
    Ok(NormEstimate { operator: op.name(), p, value, argmax, probe_count: probes.len(), skipped, power_iteration })
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub points: usize,
}

pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{} points, at least 3 needed", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Degenerate("non-finite point".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx < 1e-24 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_rms = (points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { slope, intercept, residual_rms, points: points.len() })
}

/// Type `T` and cotype `S` exponents used for the space `L^p(ℓ^q_d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentPair {
    pub type_exponent: f64,
    pub cotype_exponent: f64,
}

pub fn exponents(p: f64, q: f64, d: usize) -> Result<ExponentPair> {
    if !(p > 1.0 && p.is_finite()) || !(q >= 1.0) || d == 0 {
        return Err(Error::OutOfRange(format!("p = {p}, q = {q}, d = {d}")));
    }
    let (t, s) = if d == 1 { (p.min(2.0), p.max(2.0)) } else { (p.min(q).min(2.0), p.max(q).max(2.0)) };
    Ok(ExponentPair { type_exponent: t, cotype_exponent: s })
}

#[derive(Clone, Debug)]
pub struct InterpolationConfig {
    pub p: f64,
    pub pattern: SignPattern,
    /// Axis `i0` with `ε_{i0} = 1`, zero-based.
    pub axis: usize,
    /// Layers `l` tabulated in [`InterpolationRow::layers`].
    pub layers: Vec<i32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationRow {
    pub probe: String,
    pub norm_u: f64,
    pub norm_ru: f64,
    pub norm_pu: f64,
    /// `‖P^(ε) u‖_p / (‖u‖_p^{1/T} ‖R_{i0} u‖_p^{1-1/T})`.
    pub ratio: f64,
    /// `round(log2(‖u‖ / ‖R_{i0} u‖))`, the layer where the two bounds cross.
    pub split_index: i32,
    pub layers: Vec<LayerEntry>,
}

/// One row of the per-layer table: `‖P_l R^{-1} R u‖` for `l ≤ M`, `‖P_l u‖` above.
#[derive(Clone, Debug, Serialize)]
pub struct LayerEntry {
    pub l: i32,
    pub through_riesz: bool,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationReport {
    pub p: f64,
    pub type_exponent: f64,
    pub max_ratio: f64,
    pub argmax: String,
    pub rows: Vec<InterpolationRow>,
    pub skipped: usize,
}

/// Relative size below which `‖R_{i0} u‖` counts as zero.
const TINY_RIESZ: f64 = 1e-12;

pub fn interpolation_experiment(cfg: &InterpolationConfig, probes: &[Probe]) -> Result<InterpolationReport> {
    let first = probes.first().ok_or_else(|| Error::Degenerate("no probes".into()))?;
    let dim = first.function.dim();
    cfg.pattern.check(dim)?;
    if cfg.axis >= dim || !cfg.pattern.get(cfg.axis) {
        return Err(Error::InvalidPattern(format!("pattern {} must oscillate along axis {}", cfg.pattern, cfg.axis)));
    }
    let ex = exponents(cfg.p, first.function.value_exponent(), first.function.value_dim())?;
    let t = ex.type_exponent;
    let rows: Vec<Option<InterpolationRow>> = probes
        .par_iter()
        .map(|pr| {
            let u = &pr.function;
            let norm_u = u.lp_norm(cfg.p)?;
            let norm_ru = riesz_transform(u, cfg.axis)?.lp_norm(cfg.p)?;
            if norm_u == 0.0 || norm_ru <= TINY_RIESZ * norm_u {
                return Ok(None);
            }
            let norm_pu = directional_projection(u, cfg.pattern)?.lp_norm(cfg.p)?;
            let ratio = norm_pu / (norm_u.powf(1.0 / t) * norm_ru.powf(1.0 - 1.0 / t));
            let split_index = (norm_u / norm_ru).log2().round() as i32;
            let recovered = if cfg.layers.iter().any(|&l| l <= split_index) {
                let ru = riesz_transform(u, cfg.axis)?;
                Some(riesz_inverse(&ru, cfg.axis, InverseMethod::Direct)?.function)
            } else {
                None
            };
            let layers = cfg
                .layers
                .iter()
                .map(|&l| {
                    let through_riesz = l <= split_index;
                    let src = if through_riesz { recovered.as_ref().unwrap_or(u) } else { u };
                    let norm = layer_projection(src, cfg.pattern, l)?.function.lp_norm(cfg.p)?;
                    Ok(LayerEntry { l, through_riesz, norm })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(InterpolationRow {
                probe: pr.id.clone(),
                norm_u,
                norm_ru,
                norm_pu,
                ratio,
                split_index,
                layers,
            }))
        })
        .collect::<Result<_>>()?;
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let rows: Vec<InterpolationRow> = rows.into_iter().flatten().collect();
    let best = rows
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .ok_or_else(|| Error::Degenerate("every probe has vanishing Riesz component".into()))?;
    Ok(InterpolationReport { p: cfg.p, type_exponent: t, max_ratio: best.ratio, argmax: best.probe.clone(), skipped, rows: rows.clone() })
}
