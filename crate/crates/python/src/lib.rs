//! Python bindings. Complex vectors cross the boundary as lists of Python
//! `complex`, matrices as lists of rows.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ris_isac::admm::{self, FinalPoint, OuterStatus, SolveReport};
use ris_isac::channel::{synthesize_channels, ChannelSet};
use ris_isac::config_io::{make_rng, parse_config, RngFactory, ScenarioConfig};
use ris_isac::detection::{self, default_p_fa_grid};
use ris_isac::experiments::{apply_override, solve_method as solve_method_rs, MethodTag};
use ris_isac::manifold::riemannian_ascent;
use ris_isac::signal;
use ris_isac::{CMat, CVec, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vec_out(v: &CVec) -> Vec<Complex64> {
    v.iter().copied().collect()
}

fn mat_out(m: &CMat) -> Vec<Vec<Complex64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn mat_in(rows: &[Vec<Complex64>]) -> PyResult<CMat> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMat::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// One simulation scenario.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// The built-in reference scenario.
    #[staticmethod]
    fn reference() -> Self {
        Self { inner: ScenarioConfig::reference() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        parse_config(text)
            .map(|inner| Self { inner })
            .map_err(|e| to_py(e.into()))
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    /// Applies a sweep override (`rcs.sigma1_sq`, `power.P_watts`,
    /// `power.gamma_db`, `system.N`) and revalidates.
    fn set(&mut self, key: &str, value: f64) -> PyResult<()> {
        let mut c = self.inner.clone();
        apply_override(&mut c, key, value).map_err(to_py)?;
        c.validate().map_err(|e| to_py(e.into()))?;
        self.inner = c;
        Ok(())
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l
    }

    #[getter]
    fn tau(&self) -> usize {
        self.inner.tau
    }

    #[getter]
    fn power_w(&self) -> f64 {
        self.inner.power_w
    }

    #[getter]
    fn gamma_db(&self) -> Vec<f64> {
        self.inner.gamma_db.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("Scenario(M={}, N={}, K={}, L={}, tau={}, P={} W, seed={})", c.m, c.n, c.k, c.l, c.tau, c.power_w, c.seed)
    }
}

/// One channel realisation.
#[pyclass(name = "Channels")]
struct PyChannels {
    inner: ChannelSet,
}

#[pymethods]
impl PyChannels {
    /// Draws the channels of `scenario` under its seed.
    #[new]
    fn new(scenario: PyRef<'_, PyScenario>) -> PyResult<Self> {
        let inner = synthesize_channels(&scenario.inner, &RngFactory::new(scenario.inner.seed)).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn without_ris(&self) -> Self {
        Self { inner: self.inner.without_ris() }
    }

    #[getter]
    fn h_dt(&self) -> Vec<Complex64> {
        vec_out(&self.inner.h_dt)
    }

    #[getter]
    fn h_rt(&self) -> Vec<Complex64> {
        vec_out(&self.inner.h_rt)
    }

    #[getter]
    fn g(&self) -> Vec<Vec<Complex64>> {
        mat_out(&self.inner.g)
    }

    fn __repr__(&self) -> String {
        format!("Channels(M={}, N={}, K={})", self.inner.m(), self.inner.n(), self.inner.k())
    }
}

/// A beamformer `W` (`M x (K+M)`) and RIS phases `phi`.
#[pyclass(name = "Design")]
struct PyDesign {
    w: CMat,
    phi: CVec,
}

#[pymethods]
impl PyDesign {
    #[new]
    fn new(w: Vec<Vec<Complex64>>, phi: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self {
            w: mat_in(&w)?,
            phi: CVec::from_vec(phi),
        })
    }

    #[getter]
    fn w(&self) -> Vec<Vec<Complex64>> {
        mat_out(&self.w)
    }

    #[getter]
    fn phi(&self) -> Vec<Complex64> {
        vec_out(&self.phi)
    }

    fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    /// Expected radar SNR (linear).
    fn radar_snr(&self, scenario: PyRef<'_, PyScenario>, channels: PyRef<'_, PyChannels>) -> PyResult<f64> {
        check_shapes(&self.w, &self.phi, &scenario.inner, &channels.inner)?;
        Ok(signal::radar_snr(&self.w, &self.phi, &scenario.inner, &channels.inner))
    }

    /// SINR (linear) of every user.
    fn sinr(&self, scenario: PyRef<'_, PyScenario>, channels: PyRef<'_, PyChannels>) -> PyResult<Vec<f64>> {
        check_shapes(&self.w, &self.phi, &scenario.inner, &channels.inner)?;
        Ok((0..scenario.inner.k)
            .map(|k| signal::comm_sinr(k, &self.w, &self.phi, &scenario.inner, &channels.inner))
            .collect())
    }

    fn is_feasible(&self, scenario: PyRef<'_, PyScenario>, channels: PyRef<'_, PyChannels>) -> PyResult<bool> {
        check_shapes(&self.w, &self.phi, &scenario.inner, &channels.inner)?;
        Ok(admm::is_feasible(&self.w, &self.phi, &scenario.inner, &channels.inner))
    }

    fn __repr__(&self) -> String {
        format!("Design(W={}x{}, N={})", self.w.nrows(), self.w.ncols(), self.phi.len())
    }
}

fn check_shapes(w: &CMat, phi: &CVec, cfg: &ScenarioConfig, ch: &ChannelSet) -> PyResult<()> {
    if w.nrows() != ch.m() || w.ncols() != ch.k() + ch.m() || phi.len() != ch.n() || cfg.m != ch.m() || cfg.k != ch.k() {
        return Err(PyValueError::new_err(format!(
            "shape mismatch: W is {}x{}, phi has {} entries, channels are M={}, N={}, K={}",
            w.nrows(),
            w.ncols(),
            phi.len(),
            ch.m(),
            ch.n(),
            ch.k()
        )));
    }
    Ok(())
}

fn report_dict<'py>(py: Python<'py>, r: &SolveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("iterations", r.iterations())?;
    d.set_item("converged", r.status == OuterStatus::Converged)?;
    d.set_item(
        "final_point",
        match r.final_point {
            FinalPoint::Snapped => "snapped",
            FinalPoint::LastFeasible => "last_feasible",
            FinalPoint::Repaired => "repaired",
        },
    )?;
    d.set_item("snr_db", r.final_snr_db())?;
    d.set_item("snr_db_trace", r.snr_db_trace())?;
    d.set_item("consensus_gap", r.records.iter().map(|x| x.consensus_gap).collect::<Vec<_>>())?;
    d.set_item("wall_time_s", r.wall_time_s)?;
    Ok(d)
}

/// Unit-modulus initial phases from Riemannian conjugate-gradient ascent.
#[pyfunction]
fn riemannian_init(scenario: PyRef<'_, PyScenario>, channels: PyRef<'_, PyChannels>) -> Vec<Complex64> {
    let mut rng = RngFactory::new(scenario.inner.seed).stream("manifold_init");
    vec_out(&riemannian_ascent(&channels.inner, &scenario.inner, &mut rng).phi)
}

/// Joint design from `phi_init` (Riemannian initialiser when omitted).
/// Returns `(Design, report)`.
#[pyfunction]
#[pyo3(signature = (scenario, channels, phi_init = None))]
fn optimize<'py>(
    py: Python<'py>,
    scenario: PyRef<'py, PyScenario>,
    channels: PyRef<'py, PyChannels>,
    phi_init: Option<Vec<Complex64>>,
) -> PyResult<(PyDesign, Bound<'py, PyDict>)> {
    let (cfg, ch) = (scenario.inner.clone(), channels.inner.clone());
    let phi0 = match phi_init {
        Some(v) if v.len() != ch.n() => return Err(PyValueError::new_err("phi_init length differs from N")),
        Some(v) => CVec::from_vec(v),
        None => riemannian_ascent(&ch, &cfg, &mut RngFactory::new(cfg.seed).stream("manifold_init")).phi,
    };
    let (state, report) = py.detach(|| admm::optimize(&cfg, &ch, &phi0)).map_err(to_py)?;
    Ok((PyDesign { w: state.w, phi: state.phi }, report_dict(py, &report)?))
}

/// Beamformer-only design at fixed phases. Returns `(Design, report)`.
#[pyfunction]
fn optimize_w_only<'py>(
    py: Python<'py>,
    scenario: PyRef<'py, PyScenario>,
    channels: PyRef<'py, PyChannels>,
    phi: Vec<Complex64>,
) -> PyResult<(PyDesign, Bound<'py, PyDict>)> {
    let (cfg, ch) = (scenario.inner.clone(), channels.inner.clone());
    let phi = CVec::from_vec(phi);
    let (w, report) = py.detach(|| admm::optimize_w_only(&cfg, &ch, &phi)).map_err(to_py)?;
    Ok((PyDesign { w, phi }, report_dict(py, &report)?))
}

/// Runs `proposed`, `random_ris` or `no_ris`; returns `(snr_db, designs)`.
#[pyfunction]
fn solve_method(
    py: Python<'_>,
    scenario: PyRef<'_, PyScenario>,
    channels: PyRef<'_, PyChannels>,
    method: &str,
) -> PyResult<(f64, Vec<PyDesign>)> {
    let tag: MethodTag = method.parse().map_err(to_py)?;
    let (cfg, ch) = (scenario.inner.clone(), channels.inner.clone());
    let out = py.detach(|| solve_method_rs(&cfg, &ch, tag)).map_err(to_py)?;
    Ok((out.snr_db(), out.designs.into_iter().map(|(w, phi)| PyDesign { w, phi }).collect()))
}

/// Monte Carlo ROC of one design: a list of
/// `(p_fa, threshold, p_d_empirical, p_d_analytic)`.
#[pyfunction]
#[pyo3(signature = (scenario, channels, design, trials = 10_000, p_fa = None))]
fn roc(
    py: Python<'_>,
    scenario: PyRef<'_, PyScenario>,
    channels: PyRef<'_, PyChannels>,
    design: PyRef<'_, PyDesign>,
    trials: usize,
    p_fa: Option<Vec<f64>>,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let (cfg, ch) = (scenario.inner.clone(), channels.inner.clone());
    check_shapes(&design.w, &design.phi, &cfg, &ch)?;
    let grid = p_fa.unwrap_or_else(default_p_fa_grid);
    let (w, phi) = (design.w.clone(), design.phi.clone());
    let curve = py
        .detach(|| detection::run_roc(&w, &phi, &cfg, &ch, &grid, trials, &RngFactory::new(cfg.seed)))
        .map_err(to_py)?;
    Ok(curve.rows.iter().map(|r| (r.p_fa, r.threshold, r.p_d_empirical, r.p_d_analytic)).collect())
}

/// Monte Carlo radar SNR: `(mean, standard error)`.
#[pyfunction]
#[pyo3(signature = (scenario, channels, design, trials = 10_000))]
fn mc_snr(
    scenario: PyRef<'_, PyScenario>,
    channels: PyRef<'_, PyChannels>,
    design: PyRef<'_, PyDesign>,
    trials: usize,
) -> PyResult<(f64, f64)> {
    check_shapes(&design.w, &design.phi, &scenario.inner, &channels.inner)?;
    let e = detection::mc_snr_estimate(
        &design.w,
        &design.phi,
        &scenario.inner,
        &channels.inner,
        trials,
        &RngFactory::new(scenario.inner.seed),
    );
    Ok((e.mean, e.std_error))
}

#[pyfunction]
fn np_threshold(p_fa: f64, sigma_z_sq: f64) -> PyResult<f64> {
    detection::np_threshold(p_fa, sigma_z_sq).map_err(to_py)
}

#[pyfunction]
fn analytic_pd(p_fa: f64, snr_eff: f64) -> f64 {
    detection::analytic_pd(p_fa, snr_eff)
}

#[pyfunction]
fn update_psi(phi: Vec<Complex64>, lam: Vec<Complex64>, rho: f64) -> PyResult<Vec<Complex64>> {
    if phi.len() != lam.len() {
        return Err(PyValueError::new_err("phi and lambda lengths differ"));
    }
    Ok(vec_out(&admm::update_psi(&CVec::from_vec(phi), &CVec::from_vec(lam), rho)))
}

#[pyfunction]
fn update_lambda(lam: Vec<Complex64>, phi: Vec<Complex64>, psi: Vec<Complex64>, rho: f64) -> PyResult<Vec<Complex64>> {
    if phi.len() != lam.len() || psi.len() != lam.len() {
        return Err(PyValueError::new_err("vector lengths differ"));
    }
    Ok(vec_out(&admm::update_lambda(
        &CVec::from_vec(lam),
        &CVec::from_vec(phi),
        &CVec::from_vec(psi),
        rho,
    )))
}

/// Uniform random unit-modulus phases from the labelled stream of `seed`.
#[pyfunction]
#[pyo3(signature = (n, seed, label = "random_ris"))]
fn random_phases(n: usize, seed: u64, label: &str) -> Vec<Complex64> {
    vec_out(&ris_isac::manifold::random_phases(&mut make_rng(seed, label), n))
}

#[pymodule]
fn ris_isac_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyChannels>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(riemannian_init, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_w_only, m)?)?;
    m.add_function(wrap_pyfunction!(solve_method, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(mc_snr, m)?)?;
    m.add_function(wrap_pyfunction!(np_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_pd, m)?)?;
    m.add_function(wrap_pyfunction!(update_psi, m)?)?;
    m.add_function(wrap_pyfunction!(update_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(random_phases, m)?)?;
    Ok(())
}
