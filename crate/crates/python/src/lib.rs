//! Python bindings: grid functions, the Haar toolkit, ring and layer
//! operators, Riesz transforms and the experiment runner.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use hrl_core::dyadic::{haar_analysis, haar_function, haar_synthesis};
use hrl_core::grid::generate_probe;
use hrl_core::mollify::{layer_projection, negative_layer_projection};
use hrl_core::riesz::{riesz_inverse, riesz_transform, InverseMethod};
use hrl_core::ring::{ring_operator, shifted_ring_operator, FaceMode};
use hrl_core::{DyadicCube, GridFunction, ProbeKind, ProbeSpec, SignPattern};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pattern(bits: &[u8]) -> PyResult<SignPattern> {
    if bits.iter().any(|&b| b > 1) {
        return Err(err(format!("sign pattern bits must be 0 or 1, got {bits:?}")));
    }
    Ok(SignPattern::from_bits(bits))
}

/// Scalar function on the dyadic grid of `[0,1)^dim` with `2^level` cells per axis.
#[pyclass(name = "Grid", module = "hrl", frozen)]
struct PyGrid {
    inner: GridFunction,
}

impl From<GridFunction> for PyGrid {
    fn from(inner: GridFunction) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyGrid {
    /// Cell values in row-major order (last axis fastest).
    #[new]
    fn new(dim: usize, level: u32, samples: Vec<f64>) -> PyResult<Self> {
        Ok(GridFunction::new(dim, level, samples).map_err(err)?.into())
    }

    #[staticmethod]
    fn zeros(dim: usize, level: u32) -> Self {
        GridFunction::zeros(dim, level).into()
    }

    #[staticmethod]
    fn white_noise(dim: usize, level: u32, seed: u64) -> PyResult<Self> {
        Ok(generate_probe(&ProbeSpec::new(ProbeKind::WhiteNoise, seed), dim, level).map_err(err)?.into())
    }

    /// `h_Q^(ε)` for the cube at `scale` with integer `coords`.
    #[staticmethod]
    fn haar(scale: u32, coords: Vec<u32>, eps: Vec<u8>, level: u32) -> PyResult<Self> {
        let cube = DyadicCube::new(scale, &coords).map_err(err)?;
        Ok(haar_function(&cube, pattern(&eps)?, level).map_err(err)?.into())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level()
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    fn lp_norm(&self, p: f64) -> PyResult<f64> {
        self.inner.lp_norm(p).map_err(err)
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn __add__(&self, other: &PyGrid) -> PyResult<PyGrid> {
        Ok(self.inner.add(&other.inner).map_err(err)?.into())
    }

    fn __sub__(&self, other: &PyGrid) -> PyResult<PyGrid> {
        Ok(self.inner.sub(&other.inner).map_err(err)?.into())
    }

    fn __mul__(&self, c: f64) -> PyGrid {
        self.inner.scale(c).into()
    }

    fn __len__(&self) -> usize {
        self.inner.cell_count()
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, level={})", self.inner.dim(), self.inner.level())
    }
}

/// Analysis followed by synthesis; returns the reconstruction.
#[pyfunction]
fn haar_roundtrip(u: &PyGrid) -> PyResult<PyGrid> {
    let c = haar_analysis(&u.inner);
    Ok(haar_synthesis(&c, u.inner.level()).map_err(err)?.into())
}

/// `Σ |c_Q|² |Q| + mean²`, equal to `‖u‖₂²`.
#[pyfunction]
fn haar_energy(u: &PyGrid) -> f64 {
    haar_analysis(&u.inner).energy()
}

#[pyfunction]
fn directional_projection(u: &PyGrid, eps: Vec<u8>) -> PyResult<PyGrid> {
    Ok(hrl_core::projection::directional_projection(&u.inner, pattern(&eps)?).map_err(err)?.into())
}

/// Shifts every Haar coefficient at scales `0..level` by `m` cube sides.
#[pyfunction]
fn figiel_shift(u: &PyGrid, m: Vec<i64>) -> PyResult<PyGrid> {
    let level = u.inner.level();
    Ok(hrl_core::projection::figiel_shift(&u.inner, &m, 0..level).map_err(err)?.into())
}

fn face_mode(mode: &str) -> PyResult<FaceMode> {
    match mode {
        "slab" | "slab-left" => Ok(FaceMode::SlabLeft),
        "full" => Ok(FaceMode::Full),
        _ => Err(err(format!("unknown face mode {mode:?}; expected \"slab\" or \"full\""))),
    }
}

/// `S_λ u`, or `S_λ^m u` when `m` is given.
#[pyfunction]
#[pyo3(signature = (u, eps, lam, mode = "slab", m = None))]
fn ring(u: &PyGrid, eps: Vec<u8>, lam: u32, mode: &str, m: Option<u64>) -> PyResult<PyGrid> {
    let (eps, mode) = (pattern(&eps)?, face_mode(mode)?);
    let out = match m {
        Some(m) => shifted_ring_operator(&u.inner, eps, lam, m, mode),
        None => ring_operator(&u.inner, eps, lam, mode),
    };
    Ok(out.map_err(err)?.into())
}

/// `P_l u`; `l = None` gives the aggregated negative layer `P_-`.
#[pyfunction]
#[pyo3(signature = (u, eps, l = None))]
fn layer(u: &PyGrid, eps: Vec<u8>, l: Option<i32>) -> PyResult<PyGrid> {
    let eps = pattern(&eps)?;
    let out = match l {
        Some(l) => layer_projection(&u.inner, eps, l),
        None => negative_layer_projection(&u.inner, eps),
    };
    Ok(out.map_err(err)?.function.into())
}

#[pyfunction]
fn riesz(u: &PyGrid, axis: usize) -> PyResult<PyGrid> {
    Ok(riesz_transform(&u.inner, axis).map_err(err)?.into())
}

/// Recovers `u` from `v = R_axis u` (modes with `k_axis = 0` are lost).
#[pyfunction]
#[pyo3(signature = (v, axis, method = "direct"))]
fn riesz_inv(v: &PyGrid, axis: usize, method: &str) -> PyResult<PyGrid> {
    let method = match method {
        "direct" => InverseMethod::Direct,
        "composition" => InverseMethod::Composition,
        _ => return Err(err(format!("unknown method {method:?}"))),
    };
    Ok(riesz_inverse(&v.inner, axis, method).map_err(err)?.function.into())
}

/// `(type, cotype)` exponents of `L^p(ℓ^q_d)`.
#[pyfunction]
#[pyo3(signature = (p, q = 2.0, d = 1))]
fn exponents(p: f64, q: f64, d: usize) -> PyResult<(f64, f64)> {
    let e = hrl_core::opnorm::exponents(p, q, d).map_err(err)?;
    Ok((e.type_exponent, e.cotype_exponent))
}

/// Least-squares `(slope, intercept, residual_rms)`.
#[pyfunction]
fn fit_decay(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = hrl_core::opnorm::fit_decay(&points).map_err(err)?;
    Ok((f.slope, f.intercept, f.residual_rms))
}

/// Runs a subcommand of the experiment runner and returns its JSON summary.
/// Keyword arguments use the config-file keys (`n`, `J`, `p`, `seed`, ...).
#[pyfunction]
#[pyo3(signature = (name, **params))]
fn run_experiment(name: &str, params: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<String> {
    let mut text = String::new();
    if let Some(d) = params {
        for (k, v) in d.iter() {
            text.push_str(&format!("{} = {}\n", k.str()?, v.str()?));
        }
    }
    let settings = experiments::Settings::parse_config(&text).map_err(err)?;
    let e: experiments::Experiment = name.parse().map_err(err)?;
    let report = e.run(&settings).map_err(|e| err(format!("{e:#}")))?;
    serde_json::to_string(&report).map_err(err)
}

#[pymodule]
fn hrl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_function(wrap_pyfunction!(haar_roundtrip, m)?)?;
    m.add_function(wrap_pyfunction!(haar_energy, m)?)?;
    m.add_function(wrap_pyfunction!(directional_projection, m)?)?;
    m.add_function(wrap_pyfunction!(figiel_shift, m)?)?;
    m.add_function(wrap_pyfunction!(ring, m)?)?;
    m.add_function(wrap_pyfunction!(layer, m)?)?;
    m.add_function(wrap_pyfunction!(riesz, m)?)?;
    m.add_function(wrap_pyfunction!(riesz_inv, m)?)?;
    m.add_function(wrap_pyfunction!(exponents, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
