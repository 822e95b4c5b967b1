//! Python bindings for the fluxmag magnetometry toolkit.
//!
//! The module mirrors the main types and operations of the core crate:
//! protocol parameter sets with the bundled table columns, the sensitivity
//! budget and improvement ledger, concentrator and modulation-efficiency
//! models, photon budgets, ensemble contrast under Gaussian dispersion,
//! fringe synthesis with slope extraction, decay fitting, and the
//! record-synthesis plus Welch ASD pipeline. Scalars cross the boundary as
//! plain floats and lists; sampled records stay in Rust behind `TimeSeries`
//! and `Spectrum` handles. Domain and validation failures raise `ValueError`,
//! i/o failures raise `IOError`.

use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fluxmag::consts::PhysicalConstants;
use fluxmag::spindyn::fit::{fit_decay as fit_decay_impl, DecayModel};
use fluxmag::{dsp, fluxmod, inhomogeneity, params, photon, scenario, sensitivity, spindyn};

fn to_py(e: fluxmag::Error) -> PyErr {
    match e {
        fluxmag::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_sequence(kind: &str, tau: f64) -> PyResult<spindyn::PulseSequence> {
    let k = match kind {
        "ramsey" => spindyn::SequenceKind::Ramsey,
        "echo" | "spin_echo" => spindyn::SequenceKind::SpinEcho,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown sequence {other:?}: use \"ramsey\" or \"echo\""
            )))
        }
    };
    spindyn::PulseSequence::new(k, tau).map_err(to_py)
}

fn parse_model(model: &str) -> PyResult<DecayModel> {
    match model {
        "exponential" => Ok(DecayModel::Exponential),
        "stretched" => Ok(DecayModel::Stretched),
        "triplet" => Ok(DecayModel::TripletModulated),
        other => Err(PyValueError::new_err(format!(
            "unknown decay model {other:?}: use \"exponential\", \"stretched\" or \"triplet\""
        ))),
    }
}

fn parse_setup(setup: &str) -> PyResult<photon::OpticalParams> {
    match setup {
        "current" => Ok(photon::OpticalParams::current()),
        "improved" => Ok(photon::OpticalParams::improved()),
        other => Err(PyValueError::new_err(format!(
            "unknown setup {other:?}: use \"current\" or \"improved\""
        ))),
    }
}

/// Parameters of one pulsed-magnetometry configuration.
///
/// Times are seconds, everything else dimensionless. Fields are readable and
/// writable; `ProtocolParams()` starts from the plain-Ramsey column of the
/// bundled `table_s1` scenario and keyword arguments override single fields.
#[pyclass(module = "fluxmag_py", name = "ProtocolParams", from_py_object)]
#[derive(Clone)]
pub struct PyProtocolParams {
    /// Protocol coefficient A: 1 for Ramsey, pi/2 for spin echo.
    #[pyo3(get, set)]
    pub a_coeff: f64,
    /// Flux-concentrator magnification G (1 = no concentrators).
    #[pyo3(get, set)]
    pub magnification: f64,
    /// Angle factor alpha between field and NV axis.
    #[pyo3(get, set)]
    pub angle_factor: f64,
    /// Modulation efficiency E_F in (0, 1].
    #[pyo3(get, set)]
    pub mod_efficiency: f64,
    /// Measurement contrast C in (0, 1).
    #[pyo3(get, set)]
    pub contrast: f64,
    /// Average photons detected per measurement, N.
    #[pyo3(get, set)]
    pub photons: f64,
    /// Coherence time T_coh in s.
    #[pyo3(get, set)]
    pub coherence_time: f64,
    /// Stretched-exponential exponent p of the decay envelope.
    #[pyo3(get, set)]
    pub stretch_exp: f64,
    /// Free-evolution time tau in s.
    #[pyo3(get, set)]
    pub evolution_time: f64,
    /// Overhead time t_m per measurement cycle in s.
    #[pyo3(get, set)]
    pub overhead_time: f64,
    /// Ratio of total system noise to photon shot noise, n_f >= 1.
    #[pyo3(get, set)]
    pub noise_ratio: f64,
    /// Spin quantum number difference between the interferometry states.
    #[pyo3(get, set)]
    pub delta_ms: f64,
}

impl PyProtocolParams {
    fn core(&self) -> params::ProtocolParams {
        params::ProtocolParams {
            a_coeff: self.a_coeff,
            magnification: self.magnification,
            angle_factor: self.angle_factor,
            mod_efficiency: self.mod_efficiency,
            contrast: self.contrast,
            photons: self.photons,
            coherence_time: self.coherence_time,
            stretch_exp: self.stretch_exp,
            evolution_time: self.evolution_time,
            overhead_time: self.overhead_time,
            noise_ratio: self.noise_ratio,
            delta_ms: self.delta_ms,
        }
    }

    fn from_core(p: params::ProtocolParams) -> Self {
        PyProtocolParams {
            a_coeff: p.a_coeff,
            magnification: p.magnification,
            angle_factor: p.angle_factor,
            mod_efficiency: p.mod_efficiency,
            contrast: p.contrast,
            photons: p.photons,
            coherence_time: p.coherence_time,
            stretch_exp: p.stretch_exp,
            evolution_time: p.evolution_time,
            overhead_time: p.overhead_time,
            noise_ratio: p.noise_ratio,
            delta_ms: p.delta_ms,
        }
    }
}

#[pymethods]
impl PyProtocolParams {
    #[new]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (*, a_coeff=None, magnification=None, angle_factor=None,
        mod_efficiency=None, contrast=None, photons=None, coherence_time=None,
        stretch_exp=None, evolution_time=None, overhead_time=None,
        noise_ratio=None, delta_ms=None))]
    fn new(
        a_coeff: Option<f64>,
        magnification: Option<f64>,
        angle_factor: Option<f64>,
        mod_efficiency: Option<f64>,
        contrast: Option<f64>,
        photons: Option<f64>,
        coherence_time: Option<f64>,
        stretch_exp: Option<f64>,
        evolution_time: Option<f64>,
        overhead_time: Option<f64>,
        noise_ratio: Option<f64>,
        delta_ms: Option<f64>,
    ) -> Self {
        let b = params::ProtocolParams::table_s1_ramsey();
        PyProtocolParams {
            a_coeff: a_coeff.unwrap_or(b.a_coeff),
            magnification: magnification.unwrap_or(b.magnification),
            angle_factor: angle_factor.unwrap_or(b.angle_factor),
            mod_efficiency: mod_efficiency.unwrap_or(b.mod_efficiency),
            contrast: contrast.unwrap_or(b.contrast),
            photons: photons.unwrap_or(b.photons),
            coherence_time: coherence_time.unwrap_or(b.coherence_time),
            stretch_exp: stretch_exp.unwrap_or(b.stretch_exp),
            evolution_time: evolution_time.unwrap_or(b.evolution_time),
            overhead_time: overhead_time.unwrap_or(b.overhead_time),
            noise_ratio: noise_ratio.unwrap_or(b.noise_ratio),
            delta_ms: delta_ms.unwrap_or(b.delta_ms),
        }
    }

    /// Plain Ramsey configuration (no concentrators, no modulation).
    #[staticmethod]
    fn table_s1_ramsey() -> Self {
        Self::from_core(params::ProtocolParams::table_s1_ramsey())
    }

    /// Ramsey with flux concentrators installed (static magnification).
    #[staticmethod]
    fn table_s1_ramsey_fc() -> Self {
        Self::from_core(params::ProtocolParams::table_s1_ramsey_fc())
    }

    /// Spin echo with flux concentration and modulation.
    #[staticmethod]
    fn table_s1_fcm() -> Self {
        Self::from_core(params::ProtocolParams::table_s1_fcm())
    }

    /// Projected FCM configuration with the improved gap, modulation
    /// amplitude, diamond and collection optics.
    #[staticmethod]
    fn table_s3_improved() -> Self {
        Self::from_core(params::ProtocolParams::table_s3_improved())
    }

    /// Raises ValueError listing every violated parameter invariant.
    fn validate(&self) -> PyResult<()> {
        let report = self.core().validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(PyValueError::new_err(report.to_string()))
        }
    }

    /// Violated invariants as strings; empty when the set is valid.
    fn violations(&self) -> Vec<String> {
        self.core()
            .validate()
            .violations
            .iter()
            .map(|v| format!("{} = {} violates {}", v.field, v.value, v.constraint))
            .collect()
    }

    /// dc sensitivity eta in T/sqrt(Hz) under the default constants.
    fn sensitivity(&self) -> PyResult<f64> {
        sensitivity::evaluate_sensitivity(&self.core(), &PhysicalConstants::default())
            .map_err(to_py)
    }

    /// Fraction of the cycle spent evolving, tau / (t_m + tau).
    fn duty_cycle(&self) -> PyResult<f64> {
        sensitivity::duty_cycle(&self.core()).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "ProtocolParams(a_coeff={}, magnification={}, angle_factor={}, \
             mod_efficiency={}, contrast={}, photons={}, coherence_time={}, \
             stretch_exp={}, evolution_time={}, overhead_time={}, \
             noise_ratio={}, delta_ms={})",
            self.a_coeff,
            self.magnification,
            self.angle_factor,
            self.mod_efficiency,
            self.contrast,
            self.photons,
            self.coherence_time,
            self.stretch_exp,
            self.evolution_time,
            self.overhead_time,
            self.noise_ratio,
            self.delta_ms,
        )
    }
}

/// Factorized improvement budget between two parameter sets.
#[pyclass(module = "fluxmag_py", name = "Ledger")]
pub struct PyLedger {
    inner: sensitivity::ImprovementLedger,
}

#[pymethods]
impl PyLedger {
    /// Rows as (parameter, present, improved, factor) tuples, in budget
    /// table order.
    fn entries(&self) -> Vec<(String, f64, f64, f64)> {
        self.inner
            .entries
            .iter()
            .map(|e| (e.parameter.to_string(), e.present, e.improved, e.factor))
            .collect()
    }

    /// Enhancement factor attributed to one parameter group.
    fn factor(&self, parameter: &str) -> PyResult<f64> {
        self.inner
            .entries
            .iter()
            .find(|e| e.parameter == parameter)
            .map(|e| e.factor)
            .ok_or_else(|| PyKeyError::new_err(parameter.to_string()))
    }

    #[getter]
    fn eta_present(&self) -> f64 {
        self.inner.eta_present
    }

    #[getter]
    fn eta_improved(&self) -> f64 {
        self.inner.eta_improved
    }

    /// Direct ratio eta_present / eta_improved.
    #[getter]
    fn total_ratio(&self) -> f64 {
        self.inner.total_ratio
    }

    /// Product of the per-entry factors after rounding each to one decimal
    /// place, the convention budget tables print.
    #[getter]
    fn rounded_factor_product(&self) -> f64 {
        self.inner.rounded_factor_product
    }

    fn __repr__(&self) -> String {
        format!(
            "Ledger({} entries, total_ratio={:.1})",
            self.inner.entries.len(),
            self.inner.total_ratio
        )
    }
}

/// Uniformly sampled field record in tesla.
#[pyclass(module = "fluxmag_py", name = "TimeSeries")]
pub struct PyTimeSeries {
    inner: dsp::TimeSeries,
}

#[pymethods]
impl PyTimeSeries {
    /// Field samples in T.
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    /// Sample times in s, starting at 0.
    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs()
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TimeSeries({} samples at {} Hz)",
            self.inner.len(),
            self.inner.fs()
        )
    }
}

/// One-sided amplitude spectral density from the Welch pipeline.
#[pyclass(module = "fluxmag_py", name = "Spectrum")]
pub struct PySpectrum {
    inner: dsp::Spectrum,
}

#[pymethods]
impl PySpectrum {
    /// Frequency grid in Hz, 0 to fs/2.
    fn frequency(&self) -> Vec<f64> {
        self.inner.frequency.clone()
    }

    /// ASD in T/sqrt(Hz), one value per frequency bin.
    fn asd(&self) -> Vec<f64> {
        self.inner.asd.clone()
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs
    }

    #[getter]
    fn segments(&self) -> usize {
        self.inner.meta.segments
    }

    #[getter]
    fn window_len(&self) -> usize {
        self.inner.meta.len
    }

    /// Frequency resolution fs / window_len, Hz.
    #[getter]
    fn bin_width(&self) -> f64 {
        self.inner.bin_width()
    }

    /// Median-based white floor over the (lo, hi) band in T/sqrt(Hz), with
    /// declared tone bins masked out.
    #[pyo3(signature = (lo=0.02, hi=0.5))]
    fn noise_floor(&self, lo: f64, hi: f64) -> PyResult<f64> {
        dsp::noise_floor(&self.inner, (lo, hi)).map_err(to_py)
    }

    /// Amplitude of the tone at `frequency` in T, from the windowed peak.
    fn recover_tone(&self, frequency: f64) -> PyResult<f64> {
        dsp::recover_tone(&self.inner, frequency).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum({} bins, {} segments of {})",
            self.inner.frequency.len(),
            self.inner.meta.segments,
            self.inner.meta.len
        )
    }
}

/// dc sensitivity eta in T/sqrt(Hz) under the default constants.
#[pyfunction]
fn evaluate_sensitivity(p: PyProtocolParams) -> PyResult<f64> {
    sensitivity::evaluate_sensitivity(&p.core(), &PhysicalConstants::default()).map_err(to_py)
}

/// Fraction of the cycle spent evolving, tau / (t_m + tau).
#[pyfunction]
fn duty_cycle(p: PyProtocolParams) -> PyResult<f64> {
    sensitivity::duty_cycle(&p.core()).map_err(to_py)
}

/// Improvement ledger between two parameter sets: per-parameter enhancement
/// factors whose product equals the direct sensitivity ratio.
#[pyfunction]
fn improvement_ledger(present: PyProtocolParams, improved: PyProtocolParams) -> PyResult<PyLedger> {
    sensitivity::improvement_ledger(
        &present.core(),
        &improved.core(),
        &PhysicalConstants::default(),
    )
    .map(|inner| PyLedger { inner })
    .map_err(to_py)
}

/// Loads a scenario by bundled name or file path, returning the protocol
/// sets as (name, params) pairs in file order.
#[pyfunction]
fn load_scenario(reference: &str) -> PyResult<Vec<(String, PyProtocolParams)>> {
    let cfg = scenario::ScenarioConfig::resolve(reference).map_err(to_py)?;
    Ok(cfg
        .protocols
        .into_iter()
        .map(|np| (np.name, PyProtocolParams::from_core(np.params)))
        .collect())
}

/// Concentrator magnification G at tip gap `gap` (m) from the power-law fit;
/// `fit` selects the "simulated" or "measured" anchor pair.
#[pyfunction]
#[pyo3(signature = (gap, fit="simulated"))]
fn magnification(gap: f64, fit: &str) -> PyResult<f64> {
    let f = match fit {
        "simulated" => fluxmod::ConcentratorFit::simulated(),
        "measured" => fluxmod::ConcentratorFit::measured(),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown fit {other:?}: use \"simulated\" or \"measured\""
            )))
        }
    };
    f.magnification(gap).map_err(to_py)
}

/// Modulation efficiency E_F = (B_max - B_min) / (2 B_init).
#[pyfunction]
fn modulation_efficiency(b_max: f64, b_min: f64, b_init: f64) -> PyResult<f64> {
    fluxmod::modulation_efficiency(b_max, b_min, b_init).map_err(to_py)
}

/// Photons detected per measurement for the "current" or "improved" optics.
#[pyfunction]
#[pyo3(signature = (setup="current"))]
fn photon_number(setup: &str) -> PyResult<f64> {
    photon::photon_number(&parse_setup(setup)?, &PhysicalConstants::default()).map_err(to_py)
}

/// Absorption coefficient beta of the illuminated NV layer, in 1/m.
#[pyfunction]
#[pyo3(signature = (setup="current"))]
fn beta(setup: &str) -> PyResult<f64> {
    Ok(parse_setup(setup)?.beta(&PhysicalConstants::default()))
}

/// Ensemble-averaged echo contrast under the practical Gaussian dispersion
/// of magnification and remanence; `remanence` overrides the mean offset.
#[pyfunction]
#[pyo3(signature = (remanence=None, nodes=64))]
fn effective_contrast(remanence: Option<f64>, nodes: usize) -> PyResult<f64> {
    let consts = PhysicalConstants::default();
    let mut d = inhomogeneity::DispersionParams::practical(&consts);
    if let Some(b) = remanence {
        d.remanence = b;
    }
    let opts = inhomogeneity::QuadratureOptions {
        nodes,
        ..Default::default()
    };
    inhomogeneity::effective_contrast(&d, &opts).map_err(to_py)
}

/// Coherence envelope e^(-(tau/T_coh)^p).
#[pyfunction]
fn decay_envelope(tau: f64, t_coh: f64, p: f64) -> PyResult<f64> {
    spindyn::decay_envelope(tau, t_coh, p).map_err(to_py)
}

/// Fringe period in T for the parameter set under a "ramsey" or "echo"
/// sequence at its own evolution time.
#[pyfunction]
#[pyo3(signature = (p, sequence="echo"))]
fn fringe_period(p: PyProtocolParams, sequence: &str) -> PyResult<f64> {
    let core = p.core();
    let seq = parse_sequence(sequence, core.evolution_time)?;
    spindyn::fringe_period(&core, &seq, &PhysicalConstants::default()).map_err(to_py)
}

/// Differential fringe signal over an applied-field grid in T.
#[pyfunction]
#[pyo3(signature = (p, fields, sequence="echo"))]
fn fringe_curve(p: PyProtocolParams, fields: Vec<f64>, sequence: &str) -> PyResult<Vec<f64>> {
    let core = p.core();
    let seq = parse_sequence(sequence, core.evolution_time)?;
    spindyn::fringe_curve(&core, &seq, &PhysicalConstants::default(), &fields)
        .map(|c| c.signal)
        .map_err(to_py)
}

/// Maximum absolute fringe slope by central differences, returned as
/// (slope in 1/T, field where it occurs in T).
#[pyfunction]
fn max_slope(fields: Vec<f64>, signal: Vec<f64>) -> PyResult<(f64, f64)> {
    let curve = spindyn::FringeCurve::new(fields, signal).map_err(to_py)?;
    spindyn::max_slope(&curve)
        .map(|s| (s.slope, s.at_field))
        .map_err(to_py)
}

/// Fits a decay model to (time, signal) data by damped Gauss-Newton.
///
/// `model` is "exponential", "stretched" or "triplet"; `init` overrides the
/// starting-point heuristics and `sigma` supplies per-point noise estimates.
/// Returns a dict with per-parameter estimates and one-sigma uncertainties,
/// the residual sum of squares, and the iteration count.
#[pyfunction]
#[pyo3(signature = (time, signal, model="stretched", init=None, sigma=None))]
fn fit_decay<'py>(
    py: Python<'py>,
    time: Vec<f64>,
    signal: Vec<f64>,
    model: &str,
    init: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = parse_model(model)?;
    let curve = spindyn::DecayCurve::new(time, signal, sigma).map_err(to_py)?;
    let fit = fit_decay_impl(&curve, m, init.as_deref()).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("model", model)?;
    let names = m.param_names();
    let estimates = PyDict::new(py);
    let uncertainties = PyDict::new(py);
    for ((name, value), unc) in names.iter().zip(&fit.params).zip(&fit.uncertainties) {
        estimates.set_item(name, value)?;
        uncertainties.set_item(name, unc)?;
    }
    out.set_item("params", estimates)?;
    out.set_item("uncertainties", uncertainties)?;
    out.set_item("rss", fit.residual_sum_squares)?;
    out.set_item("iterations", fit.iterations)?;
    Ok(out)
}

/// Synthesizes a field record with a white floor, injected tones given as
/// (frequency Hz, amplitude T) pairs, and optional 1/f drift below
/// `drift_corner` Hz. Deterministic per seed.
#[pyfunction]
#[pyo3(signature = (target_floor=32e-12, fs=1.15, duration=3600.0,
    tones=vec![(0.1, 12e-9)], seed=0, drift_corner=None))]
fn synthesize_timeseries(
    target_floor: f64,
    fs: f64,
    duration: f64,
    tones: Vec<(f64, f64)>,
    seed: u64,
    drift_corner: Option<f64>,
) -> PyResult<PyTimeSeries> {
    let cfg = dsp::SynthesisConfig {
        target_floor,
        fs,
        duration,
        tones: tones
            .into_iter()
            .map(|(f, a)| dsp::Tone::new(f, a))
            .collect(),
        seed,
        drift: drift_corner.map(|corner_hz| dsp::DriftModel { corner_hz }),
    };
    dsp::synthesize_timeseries(&cfg)
        .map(|inner| PyTimeSeries { inner })
        .map_err(to_py)
}

/// Welch ASD of a record: Blackman-Harris windows of `window_len` samples
/// at fractional `overlap`, averaged and amplitude-normalized.
#[pyfunction]
#[pyo3(signature = (record, window_len=1380, overlap=0.5))]
fn welch_asd(
    record: PyRef<'_, PyTimeSeries>,
    window_len: usize,
    overlap: f64,
) -> PyResult<PySpectrum> {
    let cfg = dsp::WelchConfig {
        window_len,
        overlap,
    };
    dsp::welch_asd(&record.inner, &cfg)
        .map(|inner| PySpectrum { inner })
        .map_err(to_py)
}

/// Simulation and analysis toolkit for dc magnetometry with modulated flux
/// concentrators.
#[pymodule]
fn fluxmag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProtocolParams>()?;
    m.add_class::<PyLedger>()?;
    m.add_class::<PyTimeSeries>()?;
    m.add_class::<PySpectrum>()?;
    m.add_function(wrap_pyfunction!(evaluate_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(duty_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(improvement_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(magnification, m)?)?;
    m.add_function(wrap_pyfunction!(modulation_efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(photon_number, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(effective_contrast, m)?)?;
    m.add_function(wrap_pyfunction!(decay_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(fringe_period, m)?)?;
    m.add_function(wrap_pyfunction!(fringe_curve, m)?)?;
    m.add_function(wrap_pyfunction!(max_slope, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_timeseries, m)?)?;
    m.add_function(wrap_pyfunction!(welch_asd, m)?)?;
    m.add("GAMMA_E", fluxmag::consts::GAMMA_E)?;
    m.add("ALPHA_100", params::ALPHA_100)?;
    m.add("GAUSS", fluxmod::GAUSS)?;
    m.add("DEFAULT_TRIPLET_SPACING", spindyn::DEFAULT_TRIPLET_SPACING)?;
    Ok(())
}
