//! Python bindings for the `tbcluster` simulator.

use num_complex::Complex64 as C64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use tbcluster::analysis as an;
use tbcluster::config as cf;
use tbcluster::modes::{JointTwoPhotonState, TimeFreqMode};
use tbcluster::{bessel, cpm, pipeline};

type Entry = ((i64, i64), (i64, i64), C64);
type DriftSeries = (Vec<f64>, Vec<f64>, Vec<f64>, f64);

fn py_err(e: tbcluster::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "RunConfig", module = "tbcluster_py", from_py_object)]
#[derive(Clone)]
struct RunConfig {
    inner: cf::RunConfig,
}

#[pymethods]
impl RunConfig {
    #[new]
    fn new() -> Self {
        RunConfig { inner: cf::RunConfig::default() }
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        cf::RunConfig::preset(name).map(|inner| RunConfig { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        cf::RunConfig::from_json(text).map(|inner| RunConfig { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn white_noise(&self) -> f64 {
        self.inner.detection.conditions.white_noise
    }

    #[setter]
    fn set_white_noise(&mut self, p: f64) {
        self.inner.detection.conditions.white_noise = p;
    }

    #[getter]
    fn pairs_per_setting(&self) -> u64 {
        self.inner.detection.pairs_per_setting
    }

    #[setter]
    fn set_pairs_per_setting(&mut self, n: u64) {
        self.inner.detection.pairs_per_setting = n;
    }

    #[getter]
    fn mc_samples(&self) -> usize {
        self.inner.analysis.mc_samples
    }

    #[setter]
    fn set_mc_samples(&mut self, n: usize) {
        self.inner.analysis.mc_samples = n;
    }

    #[getter]
    fn dispersions(&self) -> Vec<f64> {
        self.inner.waveform.dispersions_ns_per_nm.clone()
    }

    #[setter]
    fn set_dispersions(&mut self, d: Vec<f64>) {
        self.inner.waveform.dispersions_ns_per_nm = d;
    }

    /// Ideal detector, no penalties, no noise.
    fn make_ideal(&mut self) {
        self.inner.detection.detector = tbcluster::detection::DetectorModel::ideal();
        self.inner.detection.conditions = Default::default();
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(seed={}, white_noise={}, pairs_per_setting={})",
            self.inner.seed, self.inner.detection.conditions.white_noise, self.inner.detection.pairs_per_setting
        )
    }
}

#[pyclass(name = "TwoPhotonState", module = "tbcluster_py", from_py_object)]
#[derive(Clone)]
struct TwoPhotonState {
    inner: JointTwoPhotonState,
}

#[pymethods]
impl TwoPhotonState {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        JointTwoPhotonState::from_json(text).map(|inner| TwoPhotonState { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn total_probability(&self) -> f64 {
        self.inner.total_probability()
    }

    fn normalize(&self) -> PyResult<Self> {
        self.inner.normalize().map(|inner| TwoPhotonState { inner }).map_err(py_err)
    }

    /// Amplitude of `|t_s, f_s⟩|t_i, f_i⟩` in grid units.
    fn amplitude(&self, t_s: i64, f_s: i64, t_i: i64, f_i: i64) -> C64 {
        self.inner.amplitude(TimeFreqMode::new(t_s, f_s), TimeFreqMode::new(t_i, f_i))
    }

    fn entries(&self) -> Vec<Entry> {
        self.inner.iter().map(|(s, i, a)| ((s.t_index, s.f_index), (i.t_index, i.f_index), a)).collect()
    }

    fn inner_product(&self, other: &TwoPhotonState) -> C64 {
        self.inner.inner(&other.inner)
    }
}

#[pyclass(name = "WitnessReport", module = "tbcluster_py", get_all, skip_from_py_object)]
struct WitnessReport {
    terms: Vec<String>,
    expectations: Vec<f64>,
    witness: f64,
    stderr: f64,
    fidelity_bound: f64,
    significance: f64,
    entangled: bool,
}

#[pymethods]
impl WitnessReport {
    fn __repr__(&self) -> String {
        format!("WitnessReport(witness={:.6}, stderr={:.6})", self.witness, self.stderr)
    }
}

impl From<&an::WitnessReport> for WitnessReport {
    fn from(r: &an::WitnessReport) -> Self {
        WitnessReport {
            terms: r.terms.iter().map(|t| t.to_string()).collect(),
            expectations: r.expectations.clone(),
            witness: r.witness,
            stderr: r.stderr,
            fidelity_bound: r.fidelity_bound,
            significance: r.significance(),
            entangled: r.is_entangled(),
        }
    }
}

#[pyclass(name = "FringeScan", module = "tbcluster_py", get_all, skip_from_py_object)]
struct FringeScan {
    family: String,
    description: String,
    alphas: Vec<f64>,
    rates: Vec<f64>,
    visibility: f64,
    phase_offset: f64,
    sign: i8,
    expected_sign: i8,
    chsh_pass: bool,
}

#[pyclass(name = "CapacityReport", module = "tbcluster_py", get_all, skip_from_py_object)]
struct CapacityReport {
    channels: u64,
    rep_rate_hz: f64,
    qubits_per_second: f64,
}

/// Returns the generated state and its fidelity with the cluster state.
#[pyfunction]
fn generate(cfg: &RunConfig) -> PyResult<(TwoPhotonState, f64)> {
    let g = pipeline::generate(&cfg.inner).map_err(py_err)?;
    Ok((TwoPhotonState { inner: g.state }, g.check.fidelity))
}

#[pyfunction]
fn transmit(cfg: &RunConfig, state: &TwoPhotonState) -> PyResult<(TwoPhotonState, f64)> {
    let ch = pipeline::transmit_state(&cfg.inner, &state.inner).map_err(py_err)?;
    Ok((TwoPhotonState { inner: ch.transmission.state }, ch.transmission.arrival_offset_ps))
}

#[pyfunction]
#[pyo3(signature = (cfg, exact = false))]
fn witness(py: Python<'_>, cfg: &RunConfig, exact: bool) -> PyResult<WitnessReport> {
    let inner = cfg.inner.clone();
    let run = py.detach(move || pipeline::witness_run(&inner, exact)).map_err(py_err)?;
    Ok(WitnessReport::from(&run.report))
}

/// Normalized probabilities per basis, outcome index `b_Ts b_Ti b_ts b_ti`.
#[pyfunction]
#[pyo3(signature = (cfg, exact = false))]
fn projections(py: Python<'_>, cfg: &RunConfig, exact: bool) -> PyResult<Vec<(String, Vec<f64>)>> {
    let inner = cfg.inner.clone();
    let run = py.detach(move || pipeline::witness_run(&inner, exact)).map_err(py_err)?;
    Ok(run.projections.bases.into_iter().collect())
}

#[pyfunction]
#[pyo3(signature = (cfg, exact = false))]
fn fringe(py: Python<'_>, cfg: &RunConfig, exact: bool) -> PyResult<Vec<FringeScan>> {
    let inner = cfg.inner.clone();
    let scans = py.detach(move || pipeline::fringe_run(&inner, exact)).map_err(py_err)?;
    Ok(scans
        .into_iter()
        .map(|s| FringeScan {
            family: s.family.name,
            description: s.description,
            visibility: s.fit.visibility,
            phase_offset: s.fit.phase_offset,
            sign: s.sign,
            expected_sign: s.family.expected_sign,
            chsh_pass: s.fit.chsh_pass,
            alphas: s.fit.alphas,
            rates: s.fit.rates,
        })
        .collect())
}

/// `(dispersion, V_short, V_long)` per configured dispersion.
#[pyfunction]
fn visibility_sweep(py: Python<'_>, cfg: &RunConfig) -> PyResult<Vec<(f64, f64, f64)>> {
    let inner = cfg.inner.clone();
    let pts = py.detach(move || pipeline::visibility_sweep(&inner)).map_err(py_err)?;
    Ok(pts.into_iter().map(|p| (p.dispersion_ns_per_nm, p.short, p.long)).collect())
}

/// `(times_s, input_ps, residual_ps, residual_rms_ps)`.
#[pyfunction]
fn drift(cfg: &RunConfig) -> PyResult<DriftSeries> {
    let st = pipeline::drift(&cfg.inner).map_err(py_err)?;
    Ok((st.input.times_s, st.input.offsets_ps, st.residual.offsets_ps, st.rms_ps))
}

#[pyfunction]
fn multiplex_capacity(total_bandwidth_ghz: f64, qubit_spectral_width_ghz: f64, stretched_bin_length_ps: f64) -> PyResult<CapacityReport> {
    let c = an::multiplex_capacity(total_bandwidth_ghz, qubit_spectral_width_ghz, stretched_bin_length_ps).map_err(py_err)?;
    Ok(CapacityReport { channels: c.channels, rep_rate_hz: c.rep_rate_hz, qubits_per_second: c.qubits_per_second })
}

#[pyfunction]
fn fit_interference(alphas: Vec<f64>, rates: Vec<f64>, k: u32) -> PyResult<(f64, f64, u32, bool)> {
    let f = an::fit_interference(&alphas, &rates, k).map_err(py_err)?;
    Ok((f.visibility, f.phase_offset, f.best_k, f.chsh_pass))
}

#[pyfunction]
fn bessel_j(order: i64, x: f64) -> f64 {
    bessel::bessel_j(order, x)
}

#[pyfunction]
fn solve_balanced_depth() -> f64 {
    cpm::solve_balanced_depth()
}

#[pyfunction]
fn efficiency(g: f64) -> f64 {
    cpm::efficiency(g)
}

#[pyfunction]
fn rf_for_shift(shift_ps: f64, dispersion_ns_per_nm: f64, wavelength_nm: f64) -> f64 {
    cpm::rf_for_shift(shift_ps, dispersion_ns_per_nm, wavelength_nm)
}

#[pymodule]
fn tbcluster_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RunConfig>()?;
    m.add_class::<TwoPhotonState>()?;
    m.add_class::<WitnessReport>()?;
    m.add_class::<FringeScan>()?;
    m.add_class::<CapacityReport>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(transmit, m)?)?;
    m.add_function(wrap_pyfunction!(witness, m)?)?;
    m.add_function(wrap_pyfunction!(projections, m)?)?;
    m.add_function(wrap_pyfunction!(fringe, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(drift, m)?)?;
    m.add_function(wrap_pyfunction!(multiplex_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_interference, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_j, m)?)?;
    m.add_function(wrap_pyfunction!(solve_balanced_depth, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(rf_for_shift, m)?)?;
    m.add("CALIBRATED_WHITE_NOISE", cf::CALIBRATED_WHITE_NOISE)?;
    m.add("CHSH_THRESHOLD", an::CHSH_THRESHOLD)?;
    Ok(())
}
