//! Python bindings: resonators, ladders, sweeps, metrics, extraction,
//! fitting, dispersion and Touchstone I/O.

use std::collections::BTreeMap;

use a1filter::dispersion::{Anchor, DispersionModel};
use a1filter::fitting::{self, FitOptions, FreeParam, Observed, Template};
use a1filter::ladder::{self, LadderParams, StageKind};
use a1filter::metrics;
use a1filter::netcore::{group_delay, SMatrix};
use a1filter::resonator::{self, ResonatorSpec};
use a1filter::tsio::{self, DataFormat, FreqUnit};
use a1filter::{Error, FrequencyGrid, C64};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Singular { .. } | Error::Analysis(_) | Error::Extraction(_) => {
            PyArithmeticError::new_err(e.to_string())
        }
        Error::Fit(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn grid(freqs: Vec<f64>) -> PyResult<FrequencyGrid> {
    FrequencyGrid::new(freqs).map_err(to_py)
}

fn kind(name: &str) -> PyResult<StageKind> {
    match name {
        "series" => Ok(StageKind::Series),
        "shunt" => Ok(StageKind::Shunt),
        _ => Err(PyValueError::new_err(format!(
            "stage kind must be 'series' or 'shunt', got '{name}'"
        ))),
    }
}

fn unit(name: &str) -> PyResult<FreqUnit> {
    FreqUnit::ALL
        .into_iter()
        .find(|u| u.to_string().eq_ignore_ascii_case(name))
        .ok_or_else(|| PyValueError::new_err(format!("unknown frequency unit '{name}'")))
}

/// Behavioral resonator: fs (Hz), kt2, Q and C0 (F).
#[pyclass(name = "Resonator", from_py_object)]
#[derive(Clone)]
struct PyResonator {
    spec: ResonatorSpec,
    #[pyo3(get)]
    rs: f64,
    #[pyo3(get)]
    ls: f64,
}

#[pymethods]
impl PyResonator {
    #[new]
    #[pyo3(signature = (fs, kt2, q, c0, rs=0.0, ls=0.0))]
    fn new(fs: f64, kt2: f64, q: f64, c0: f64, rs: f64, ls: f64) -> PyResult<Self> {
        let spec = ResonatorSpec::new(fs, kt2, q, c0).map_err(to_py)?;
        resonator::derive_mbvd(&spec)
            .and_then(|m| m.with_parasitics(rs, ls))
            .map_err(to_py)?;
        Ok(Self { spec, rs, ls })
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.spec.fs
    }

    #[getter]
    fn kt2(&self) -> f64 {
        self.spec.kt2
    }

    #[getter]
    fn q(&self) -> f64 {
        self.spec.q
    }

    #[getter]
    fn c0(&self) -> f64 {
        self.spec.c0
    }

    fn fp(&self) -> PyResult<f64> {
        self.spec.fp().map_err(to_py)
    }

    /// Motional elements as a dict with keys rm, lm, cm, c0.
    fn elements(&self) -> PyResult<BTreeMap<&'static str, f64>> {
        let m = resonator::derive_mbvd(&self.spec).map_err(to_py)?;
        let b = m.main.expect("derived models have a motional branch");
        Ok(BTreeMap::from([
            ("rm", b.r),
            ("lm", b.l),
            ("cm", b.c),
            ("c0", m.c0),
        ]))
    }

    fn admittance(&self, freqs: Vec<f64>) -> PyResult<Vec<C64>> {
        let g = grid(freqs)?;
        let m = resonator::derive_mbvd(&self.spec)
            .and_then(|m| m.with_parasitics(self.rs, self.ls))
            .map_err(to_py)?;
        Ok(resonator::admittance(&m, &g))
    }

    fn __repr__(&self) -> String {
        format!(
            "Resonator(fs={}, kt2={}, q={}, c0={}, rs={}, ls={})",
            self.spec.fs, self.spec.kt2, self.spec.q, self.spec.c0, self.rs, self.ls
        )
    }
}

/// Two-port S-parameter sweep.
#[pyclass(name = "Network", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    s: SMatrix,
}

#[pymethods]
impl PyNetwork {
    #[getter]
    fn freqs(&self) -> Vec<f64> {
        self.s.grid().points().to_vec()
    }

    #[getter]
    fn z0(&self) -> f64 {
        self.s.z0()
    }

    #[getter]
    fn s11(&self) -> Vec<C64> {
        self.s.s11()
    }

    #[getter]
    fn s21(&self) -> Vec<C64> {
        self.s.s21()
    }

    #[getter]
    fn s12(&self) -> Vec<C64> {
        self.s.points().iter().map(|p| p.s12).collect()
    }

    #[getter]
    fn s22(&self) -> Vec<C64> {
        self.s.points().iter().map(|p| p.s22).collect()
    }

    fn s21_db(&self) -> Vec<f64> {
        self.s.s21_db()
    }

    /// Group delay in seconds; None where undefined.
    fn group_delay(&self) -> PyResult<Vec<Option<f64>>> {
        group_delay(&self.s).map_err(to_py)
    }

    /// Figures of merit as (key, value) string pairs in report order.
    fn metrics(&self) -> PyResult<Vec<(String, String)>> {
        Ok(metrics::analyze(&self.s)
            .map_err(to_py)?
            .report()
            .entries()
            .to_vec())
    }

    #[pyo3(signature = (format="RI", unit="Hz"))]
    fn to_touchstone(&self, format: &str, unit: &str) -> PyResult<String> {
        let f: DataFormat = format.parse().map_err(to_py)?;
        Ok(tsio::write(&self.s, f, self::unit(unit)?))
    }

    fn to_csv(&self) -> PyResult<String> {
        tsio::export_csv(&self.s, true).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.s.grid().len()
    }
}

/// Shared parameters of an alternating ladder; keyword arguments override
/// the reference values.
#[pyclass(name = "LadderParams", from_py_object)]
#[derive(Clone)]
struct PyLadderParams {
    p: LadderParams,
}

#[pymethods]
impl PyLadderParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let mut t = Template::Ladder {
            params: LadderParams::default(),
            stages: 1,
            first: StageKind::Series,
        };
        for (k, v) in kwargs.unwrap_or_default() {
            t.set(&k, v)
                .map_err(|e| PyValueError::new_err(e.to_string()))?;
        }
        let Template::Ladder { params, .. } = t else {
            unreachable!()
        };
        Ok(Self { p: params })
    }

    fn get(&self, name: &str) -> PyResult<f64> {
        Template::Ladder {
            params: self.p,
            stages: 1,
            first: StageKind::Series,
        }
        .get(name)
        .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Sweep an alternating ladder of `stages` resonant stages.
    #[pyo3(signature = (stages, freqs, first="series"))]
    fn simulate(&self, stages: usize, freqs: Vec<f64>, first: &str) -> PyResult<PyNetwork> {
        let spec = self.p.ladder(stages, kind(first)?).map_err(to_py)?;
        let s = ladder::build_network(&spec, &grid(freqs)?).map_err(to_py)?;
        Ok(PyNetwork { s })
    }
}

/// Sweep reference design "A" or "B"; the default grid when `freqs` is None.
#[pyfunction]
#[pyo3(signature = (name, freqs=None))]
fn simulate_design(name: &str, freqs: Option<Vec<f64>>) -> PyResult<PyNetwork> {
    let spec = match name {
        "A" | "a" => ladder::preset_design_a(),
        "B" | "b" => ladder::preset_design_b(),
        _ => {
            return Err(PyValueError::new_err(format!(
                "design must be A or B, got '{name}'"
            )))
        }
    };
    let g = match freqs {
        Some(f) => grid(f)?,
        None => ladder::default_grid(),
    };
    Ok(PyNetwork {
        s: ladder::build_network(&spec, &g).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (start, stop, n))]
fn linspace(start: f64, stop: f64, n: usize) -> PyResult<Vec<f64>> {
    Ok(FrequencyGrid::linspace(start, stop, n)
        .map_err(to_py)?
        .points()
        .to_vec())
}

#[pyfunction]
fn parse_touchstone(text: &str) -> PyResult<PyNetwork> {
    let (s, _) = tsio::parse(text).map_err(to_py)?;
    Ok(PyNetwork { s })
}

/// fs, fp, kt2 and Q from a resonator admittance sweep.
#[pyfunction]
fn extract(freqs: Vec<f64>, y: Vec<C64>) -> PyResult<BTreeMap<&'static str, f64>> {
    let g = grid(freqs)?;
    if y.len() != g.len() {
        return Err(PyValueError::new_err("freqs and y differ in length"));
    }
    let e = fitting::extract_all(&y, &g).map_err(to_py)?;
    let mut out = BTreeMap::from([
        ("fs", e.fs),
        ("fp", e.fp),
        ("kt2", e.kt2),
        ("kt2_extrema", e.kt2_extrema),
        ("q", e.q.q),
        ("c0", e.motional.c0),
    ]);
    if let Some(w) = e.q.q_width {
        out.insert("q_width", w);
    }
    Ok(out)
}

/// Result of a fit: parameter values plus residual and convergence data.
#[pyclass(name = "FitResult", skip_from_py_object)]
struct PyFitResult {
    #[pyo3(get)]
    values: BTreeMap<String, f64>,
    #[pyo3(get)]
    residual: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    history: Vec<f64>,
    #[pyo3(get)]
    saturated: Vec<String>,
}

fn options(algorithm: &str, restarts: usize, max_iter: usize, seed: u64) -> PyResult<FitOptions> {
    let algorithm = match algorithm {
        "lm" | "levenberg-marquardt" => fitting::Algorithm::LevenbergMarquardt,
        "nm" | "nelder-mead" => fitting::Algorithm::NelderMead { restarts },
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm '{algorithm}'"
            )))
        }
    };
    Ok(FitOptions {
        algorithm,
        max_iter,
        seed,
        ..FitOptions::default()
    })
}

fn run_fit(
    observed: Observed,
    template: Template,
    free: Vec<String>,
    weights: Option<Vec<f64>>,
    opts: FitOptions,
) -> PyResult<PyFitResult> {
    let free = free
        .into_iter()
        .map(|n| {
            Ok(FreeParam::around(
                n.clone(),
                template.get(&n).map_err(to_py)?,
            ))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let r = fitting::fit_model(&observed, &template, &free, weights.as_deref(), &opts)
        .map_err(to_py)?;
    Ok(PyFitResult {
        values: r
            .names
            .iter()
            .cloned()
            .zip(r.values.iter().copied())
            .collect(),
        residual: r.residual,
        iterations: r.iterations,
        converged: r.converged,
        history: r.history.clone(),
        saturated: r
            .names
            .iter()
            .zip(&r.saturated)
            .filter(|(_, s)| **s)
            .map(|(n, _)| n.clone())
            .collect(),
    })
}

/// Fit an alternating ladder to a measured network.
#[pyfunction]
#[pyo3(signature = (network, start, stages, free, first="series", weights=None, algorithm="lm", restarts=4, max_iter=200, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_ladder(
    network: &PyNetwork,
    start: &PyLadderParams,
    stages: usize,
    free: Vec<String>,
    first: &str,
    weights: Option<Vec<f64>>,
    algorithm: &str,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> PyResult<PyFitResult> {
    let t = Template::Ladder {
        params: start.p,
        stages,
        first: kind(first)?,
    };
    run_fit(
        Observed::Network(network.s.clone()),
        t,
        free,
        weights,
        options(algorithm, restarts, max_iter, seed)?,
    )
}

/// Fit a resonator to an admittance sweep.
#[pyfunction]
#[pyo3(signature = (freqs, y, start, free, algorithm="lm", restarts=4, max_iter=200, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_resonator(
    freqs: Vec<f64>,
    y: Vec<C64>,
    start: &PyResonator,
    free: Vec<String>,
    algorithm: &str,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> PyResult<PyFitResult> {
    let g = grid(freqs)?;
    if y.len() != g.len() {
        return Err(PyValueError::new_err("freqs and y differ in length"));
    }
    let t = Template::Resonator {
        spec: start.spec,
        rs: start.rs,
        ls: start.ls,
    };
    run_fit(
        Observed::Admittance { grid: g, y },
        t,
        free,
        None,
        options(algorithm, restarts, max_iter, seed)?,
    )
}

/// Gap (um) to series resonance (Hz) mapping.
#[pyclass(name = "Dispersion", from_py_object)]
#[derive(Clone)]
struct PyDispersion {
    m: DispersionModel,
}

#[pymethods]
impl PyDispersion {
    #[new]
    fn new(f_t: f64, c_lat: f64) -> PyResult<Self> {
        Ok(Self {
            m: DispersionModel::new(f_t, c_lat).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn calibrate(g1: f64, f1: f64, g2: f64, f2: f64) -> PyResult<Self> {
        let m = DispersionModel::calibrate(
            Anchor { gap_um: g1, fs: f1 },
            Anchor { gap_um: g2, fs: f2 },
        )
        .map_err(to_py)?;
        Ok(Self { m })
    }

    #[getter]
    fn f_t(&self) -> f64 {
        self.m.f_t
    }

    #[getter]
    fn c_lat(&self) -> f64 {
        self.m.c_lat
    }

    fn fs_from_gap(&self, gap_um: f64) -> PyResult<f64> {
        self.m.fs_from_gap(gap_um).map_err(to_py)
    }

    fn gap_for_target(&self, fs: f64) -> PyResult<f64> {
        self.m.gap_for_target(fs).map_err(to_py)
    }
}

#[pymodule]
#[pyo3(name = "a1filter")]
fn a1filter_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyResonator>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyLadderParams>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PyDispersion>()?;
    m.add_function(wrap_pyfunction!(simulate_design, m)?)?;
    m.add_function(wrap_pyfunction!(linspace, m)?)?;
    m.add_function(wrap_pyfunction!(parse_touchstone, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(fit_resonator, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
