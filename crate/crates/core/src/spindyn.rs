//! Signal models for pulsed magnetometry: stretched-exponential decay
//! envelopes, phase accumulation under time-dependent fields, fringe curves
//! with their maximum slope, and decay-curve fitting.
//!
//! A spin-echo sequence (π/2 - π - π/2) inverts the sign of phase
//! accumulation at τ/2, so a dc field contributes nothing while a field
//! component synchronous with the sequence adds up coherently. That toggling
//! integral is the heart of everything here.

pub mod fit;

use std::f64::consts::TAU;

use crate::consts::PhysicalConstants;
use crate::error::{ensure_domain, Error, Result};
use crate::numeric::{max_abs_slope, simpson_uniform};
use crate::params::ProtocolParams;

/// Default angular spacing of the three Ramsey oscillation components,
/// 2π x 2.16 MHz (the host-nitrogen hyperfine splitting).
pub const DEFAULT_TRIPLET_SPACING: f64 = TAU * 2.16e6;

/// Pulse-sequence family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SequenceKind {
    /// π/2 - τ - π/2: accumulates phase from static fields.
    Ramsey,
    /// π/2 - τ/2 - π - τ/2 - π/2: cancels static fields, senses fields
    /// varying at ~1/τ. The π pulse sits exactly at τ/2 (ideal,
    /// zero-duration pulses).
    SpinEcho,
}

/// Phase of the final π/2 pulse, selecting the sign of the readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ReadoutPhase {
    PlusX,
    MinusX,
}

/// One pulse sequence: kind, free-evolution time, and readout phase.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    /// Free-evolution time τ in s.
    pub tau: f64,
    pub readout_phase: ReadoutPhase,
}

impl PulseSequence {
    pub fn new(kind: SequenceKind, tau: f64) -> Result<Self> {
        ensure_domain!(
            tau.is_finite() && tau > 0.0,
            "tau must be positive, got {tau}"
        );
        Ok(PulseSequence {
            kind,
            tau,
            readout_phase: ReadoutPhase::PlusX,
        })
    }

    /// Sign conventionally attached to the readout phase.
    pub fn readout_sign(&self) -> f64 {
        match self.readout_phase {
            ReadoutPhase::PlusX => 1.0,
            ReadoutPhase::MinusX => -1.0,
        }
    }
}

/// Uniformly sampled field-vs-time record B(t), in tesla.
///
/// Uniformity is structural: the record stores a start time, a step, and the
/// sample values, so resampling artifacts cannot sneak in.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldWaveform {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl FieldWaveform {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        ensure_domain!(
            dt.is_finite() && dt > 0.0,
            "waveform step must be positive, got {dt}"
        );
        ensure_domain!(
            values.len() >= 2,
            "waveform needs at least 2 samples, got {}",
            values.len()
        );
        ensure_domain!(
            t0.is_finite() && values.iter().all(|v| v.is_finite()),
            "waveform samples must be finite"
        );
        Ok(FieldWaveform { t0, dt, values })
    }

    /// Samples `f` on `n_intervals + 1` uniform points across `[t0, t1]`.
    pub fn sample<F>(f: F, t0: f64, t1: f64, n_intervals: usize) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        Self::try_sample(|t| Ok(f(t)), t0, t1, n_intervals)
    }

    /// Like [`FieldWaveform::sample`] for fallible field models, propagating
    /// the first error (e.g. a transfer curve leaving its domain).
    pub fn try_sample<F>(f: F, t0: f64, t1: f64, n_intervals: usize) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64>,
    {
        ensure_domain!(
            t1 > t0,
            "waveform window must satisfy t1 > t0, got [{t0}, {t1}]"
        );
        ensure_domain!(n_intervals >= 1, "waveform needs at least 1 interval");
        let dt = (t1 - t0) / n_intervals as f64;
        let mut values = Vec::with_capacity(n_intervals + 1);
        for i in 0..=n_intervals {
            values.push(f(t0 + dt * i as f64)?);
        }
        FieldWaveform::new(t0, dt, values)
    }

    /// Constant field over `[t0, t1]`.
    pub fn constant(level: f64, t0: f64, t1: f64, n_intervals: usize) -> Result<Self> {
        Self::sample(|_| level, t0, t1, n_intervals)
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn step(&self) -> f64 {
        self.dt
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.dt * (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.t0 + self.dt * i as f64)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Time average over the record (Simpson weights).
    pub fn time_average(&self) -> f64 {
        simpson_uniform(&self.values, self.dt) / (self.end() - self.t0)
    }
}

/// Oversampling used when a model waveform is discretized for echo
/// integration: at least this many samples per period of the fastest
/// relevant modulation, with a floor of 256 intervals per window.
pub const MIN_SAMPLES_PER_PERIOD: usize = 64;

/// Interval count covering `[0, tau]` with at least
/// [`MIN_SAMPLES_PER_PERIOD`] samples per `period`, rounded up to a multiple
/// of four so a sample lands on τ/2 and Simpson panels pair up.
pub fn echo_sample_intervals(tau: f64, period: f64) -> usize {
    let per_period = (MIN_SAMPLES_PER_PERIOD as f64 * tau / period).ceil() as usize;
    let n = per_period.max(256);
    n.div_ceil(4) * 4
}

/// Stretched-exponential coherence envelope exp(-(tau/T_coh)^p).
pub fn decay_envelope(tau: f64, t_coh: f64, p: f64) -> Result<f64> {
    ensure_domain!(
        tau >= 0.0 && tau.is_finite(),
        "tau must be nonnegative, got {tau}"
    );
    ensure_domain!(
        t_coh > 0.0 && t_coh.is_finite(),
        "T_coh must be positive, got {t_coh}"
    );
    ensure_domain!(p > 0.0 && p.is_finite(), "p must be positive, got {p}");
    Ok((-(tau / t_coh).powf(p)).exp())
}

/// Phase accumulated by a spin under `waveform` during `seq`.
///
/// Returns `gamma_eff · ∫₀^τ s(t) B(t) dt` where the toggling function is
/// s(t) = +1 for t < τ/2 and -1 after the π pulse (spin echo), or +1
/// throughout (Ramsey). Quadrature is composite Simpson on the waveform's own
/// grid; the two spin-echo halves are integrated separately so the sign flip
/// is exact. The waveform must cover `[0, tau]`, and for spin echo its
/// interval count must be even so a sample falls on τ/2.
pub fn echo_phase(waveform: &FieldWaveform, seq: &PulseSequence, gamma_eff: f64) -> Result<f64> {
    ensure_domain!(
        gamma_eff.is_finite() && gamma_eff > 0.0,
        "gamma_eff must be positive, got {gamma_eff}"
    );
    let tau = seq.tau;
    let tol = 1e-9 * tau;
    ensure_domain!(
        waveform.start().abs() <= tol && (waveform.end() - tau).abs() <= tol,
        "waveform [{:.3e}, {:.3e}] does not cover [0, tau = {:.3e}]",
        waveform.start(),
        waveform.end(),
        tau
    );
    let values = waveform.values();
    let dt = waveform.step();
    match seq.kind {
        SequenceKind::Ramsey => Ok(gamma_eff * simpson_uniform(values, dt)),
        SequenceKind::SpinEcho => {
            let n = values.len() - 1;
            ensure_domain!(
                n.is_multiple_of(2),
                "spin-echo integration needs an even interval count so a sample lands on tau/2, got {n}"
            );
            let mid = n / 2;
            let first = simpson_uniform(&values[..=mid], dt);
            let second = simpson_uniform(&values[mid..], dt);
            Ok(gamma_eff * (first - second))
        }
    }
}

/// Free-induction signal C · e^(-t/T2*) · (1/3) Σ cos(ω_i t + φ_i).
///
/// The three equally weighted components model the hyperfine-split
/// oscillation of a Ramsey measurement. Expects `t ≥ 0` and positive
/// `t2_star`.
pub fn ramsey_signal(
    t: f64,
    contrast: f64,
    t2_star: f64,
    omegas: &[f64; 3],
    phases: &[f64; 3],
) -> f64 {
    debug_assert!(t >= 0.0 && t2_star > 0.0);
    let envelope = (-t / t2_star).exp();
    let oscillation: f64 = omegas
        .iter()
        .zip(phases)
        .map(|(w, p)| (w * t + p).cos())
        .sum::<f64>()
        / 3.0;
    contrast * envelope * oscillation
}

/// Measured or synthesized decay data: signal vs. evolution time, with
/// optional per-point noise standard deviations.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DecayCurve {
    /// Evolution times in s, strictly increasing.
    pub time: Vec<f64>,
    pub signal: Vec<f64>,
    /// Per-point one-sigma noise, used as fit weights when present.
    pub sigma: Option<Vec<f64>>,
}

impl DecayCurve {
    pub fn new(time: Vec<f64>, signal: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        ensure_domain!(
            time.len() == signal.len(),
            "decay time/signal length mismatch: {} vs {}",
            time.len(),
            signal.len()
        );
        ensure_domain!(
            time.windows(2).all(|w| w[1] > w[0]),
            "decay time grid must be strictly increasing"
        );
        ensure_domain!(
            time.iter().chain(signal.iter()).all(|v| v.is_finite()),
            "decay data must be finite"
        );
        if let Some(s) = &sigma {
            ensure_domain!(
                s.len() == time.len(),
                "sigma length {} does not match {} points",
                s.len(),
                time.len()
            );
            ensure_domain!(
                s.iter().all(|v| v.is_finite() && *v > 0.0),
                "sigma values must be positive"
            );
        }
        Ok(DecayCurve {
            time,
            signal,
            sigma,
        })
    }
}

/// Signal vs. applied field for one protocol configuration.
///
/// Both the grid and the signal are owned; the grid is strictly increasing.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FringeCurve {
    /// Applied field B_a in T.
    pub applied_field: Vec<f64>,
    /// Dimensionless differential signal.
    pub signal: Vec<f64>,
}

impl FringeCurve {
    pub fn new(applied_field: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        ensure_domain!(
            applied_field.len() == signal.len(),
            "fringe grid/signal length mismatch: {} vs {}",
            applied_field.len(),
            signal.len()
        );
        ensure_domain!(
            applied_field.windows(2).all(|w| w[1] > w[0]),
            "fringe field grid must be strictly increasing"
        );
        ensure_domain!(
            signal.iter().all(|v| v.is_finite()),
            "fringe signal must be finite"
        );
        Ok(FringeCurve {
            applied_field,
            signal,
        })
    }

    pub fn len(&self) -> usize {
        self.applied_field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.applied_field.is_empty()
    }
}

/// Phase accumulated per tesla of applied field for a protocol/sequence
/// combination, in rad/T.
///
/// For Ramsey the effective waveform is the constant G·α·B_a. For spin echo
/// under flux modulation it is the synchronized sinusoid with per-tesla
/// amplitude G·α·E_F, whose toggling integral contributes the familiar 2/π.
/// Computed through [`echo_phase`] rather than a closed form so nothing can
/// drift between the two paths.
pub fn per_tesla_response(
    p: &ProtocolParams,
    seq: &PulseSequence,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let gamma_eff = consts.gamma_e * p.delta_ms;
    let tau = seq.tau;
    let n = echo_sample_intervals(tau, tau);
    let waveform = match seq.kind {
        SequenceKind::Ramsey => {
            FieldWaveform::constant(p.magnification * p.angle_factor, 0.0, tau, n)?
        }
        SequenceKind::SpinEcho => {
            let amp = p.magnification * p.angle_factor * p.mod_efficiency;
            FieldWaveform::sample(|t| amp * (TAU * t / tau).sin(), 0.0, tau, n)?
        }
    };
    echo_phase(&waveform, seq, gamma_eff)
}

/// Differential fringe amplitude prefactor: two anti-phased readouts
/// subtracted double the single-readout signal.
pub const DIFFERENTIAL_GAIN: f64 = 2.0;

/// Fringe curve S(B_a) = 2·C·e^(-(τ/T_coh)^p)·sin(Φ(B_a)) over a field grid.
///
/// Φ is the echo phase of the effective waveform, linear in B_a. The factor 2
/// is the differential readout gain, so |S| is bounded by 2·C times the decay
/// envelope (not by C: a differential signal spans twice the single-readout
/// range).
pub fn fringe_curve(
    p: &ProtocolParams,
    seq: &PulseSequence,
    consts: &PhysicalConstants,
    grid: &[f64],
) -> Result<FringeCurve> {
    let report = p.validate();
    if !report.is_ok() {
        return Err(Error::Validation(report));
    }
    let kappa = per_tesla_response(p, seq, consts)?;
    let amplitude =
        DIFFERENTIAL_GAIN * p.contrast * decay_envelope(seq.tau, p.coherence_time, p.stretch_exp)?;
    let sign = seq.readout_sign();
    let signal: Vec<f64> = grid
        .iter()
        .map(|b| sign * amplitude * (kappa * b).sin())
        .collect();
    FringeCurve::new(grid.to_vec(), signal)
}

/// Fringe period 2π/κ implied by the per-tesla response, in T.
pub fn fringe_period(
    p: &ProtocolParams,
    seq: &PulseSequence,
    consts: &PhysicalConstants,
) -> Result<f64> {
    Ok(TAU / per_tesla_response(p, seq, consts)?.abs())
}

/// Maximum absolute slope of a fringe and the field where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SlopeEstimate {
    /// max |dS/dB| in 1/T.
    pub slope: f64,
    /// Field at which the maximum occurs, in T.
    pub at_field: f64,
}

/// Estimates max |dS/dB| by central differences on the sampled curve.
///
/// Needs at least 5 grid points. A curve with no field dependence has no
/// fringe to measure and is rejected.
pub fn max_slope(curve: &FringeCurve) -> Result<SlopeEstimate> {
    ensure_domain!(
        curve.len() >= 5,
        "slope extraction needs ≥ 5 grid points, got {}",
        curve.len()
    );
    let lo = curve.signal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = curve
        .signal
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs());
    if hi - lo <= f64::EPSILON * 4.0 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NoFringe);
    }
    let (slope, at_field) =
        max_abs_slope(&curve.applied_field, &curve.signal).expect("length checked above");
    Ok(SlopeEstimate { slope, at_field })
}
