//! Flux-concentrator magnification, gap-to-field transfer curves, modulated
//! waveform synthesis, modulation efficiency, and vibration-phase
//! optimization.
//!
//! A pair of high-permeability concentrators amplifies the external field in
//! the sensing gap; vibrating a permeable chip at height h above the gap
//! modulates that field. The magnification model G(d) = a/(d+b) captures the
//! gap-dominated reluctance of the circuit; the transfer curve B(h) maps the
//! chip height to the field in the diamond.

use std::f64::consts::TAU;

use crate::consts::PhysicalConstants;
use crate::error::{ensure_domain, Error, Result};
use crate::numeric::{bisect, MonotoneCubic};
use crate::spindyn::{echo_phase, echo_sample_intervals, FieldWaveform, PulseSequence};

/// Gap range (m) over which the reluctance fit is calibrated and guaranteed
/// to produce G > 1.
pub const SUPPORTED_GAP_RANGE: (f64, f64) = (1e-5, 1e-2);

/// Reluctance model of concentrator magnification: G(d) = scale · a/(d+b).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConcentratorFit {
    /// Numerator length a in m.
    pub a: f64,
    /// Gap offset b in m.
    pub b: f64,
    /// Dimensionless calibration factor reconciling simulated and measured
    /// magnification (1 = as simulated).
    pub calibration_scale: f64,
}

impl ConcentratorFit {
    pub fn new(a: f64, b: f64, calibration_scale: f64) -> Result<Self> {
        ensure_domain!(
            a.is_finite() && a > 0.0,
            "fit parameter a must be positive, got {a}"
        );
        ensure_domain!(
            b.is_finite() && b > 0.0,
            "fit parameter b must be positive, got {b}"
        );
        ensure_domain!(
            calibration_scale.is_finite() && calibration_scale > 0.0,
            "calibration scale must be positive, got {calibration_scale}"
        );
        let fit = ConcentratorFit {
            a,
            b,
            calibration_scale,
        };
        let g_min = fit.magnification(SUPPORTED_GAP_RANGE.1)?;
        ensure_domain!(
            g_min > 1.0,
            "fit gives G = {g_min} ≤ 1 at the top of the supported gap range"
        );
        Ok(fit)
    }

    /// Solves the unique (a, b) through two (gap, magnification) anchors.
    pub fn from_anchors(p1: (f64, f64), p2: (f64, f64), calibration_scale: f64) -> Result<Self> {
        let ((d1, g1), (d2, g2)) = (p1, p2);
        ensure_domain!(d1 > 0.0 && d2 > 0.0, "anchor gaps must be positive");
        ensure_domain!(
            g1 > 0.0 && g2 > 0.0,
            "anchor magnifications must be positive"
        );
        ensure_domain!(
            (d1 - d2).abs() > 0.0 && (g1 - g2).abs() > 0.0,
            "anchors must be distinct in both gap and magnification"
        );
        // g1(d1+b) = g2(d2+b) = a
        let b = (g1 * d1 - g2 * d2) / (g2 - g1);
        let a = g1 * (d1 + b);
        ConcentratorFit::new(a, b, calibration_scale)
    }

    /// Simulation-calibrated fit through G(0.4 mm) = 74 and
    /// G(0.04 mm) = 527.
    pub fn simulated() -> Self {
        ConcentratorFit::from_anchors((0.4e-3, 74.0), (0.04e-3, 527.0), 1.0)
            .expect("anchors are well posed")
    }

    /// Same shape rescaled so G(0.4 mm) matches the measured 85.
    pub fn measured() -> Self {
        ConcentratorFit {
            calibration_scale: 85.0 / 74.0,
            ..ConcentratorFit::simulated()
        }
    }

    /// Magnification at gap width `d` (m). Strictly decreasing in d.
    pub fn magnification(&self, d: f64) -> Result<f64> {
        ensure_domain!(
            d.is_finite() && d > 0.0,
            "gap width must be positive, got {d}"
        );
        Ok(self.calibration_scale * self.a / (d + self.b))
    }
}

/// Map from modulation-chip height h to field in the diamond, B(h), in T.
///
/// Two modes: `Ideal` is the one-parameter reluctance form
/// B(h) = B_sat·h/(h+c) with B(0) = 0 (perfect shunting at contact);
/// `Measured` interpolates anchor points with a monotone piecewise cubic, so
/// residual gap field at contact is representable.
#[derive(Debug, Clone, PartialEq)]
pub enum TransferCurve {
    Ideal {
        /// Asymptotic field at large h, in T.
        b_sat: f64,
        /// Height scale c, in m.
        c: f64,
    },
    Measured {
        /// (h, B) anchor pairs in SI units, strictly increasing in both.
        anchors: Vec<(f64, f64)>,
        interp: MonotoneCubic,
    },
}

/// Gauss in tesla, the unit the measured anchors are quoted in.
pub const GAUSS: f64 = 1e-4;

impl TransferCurve {
    /// Ideal reluctance curve with explicit saturation field and height scale.
    pub fn ideal(b_sat: f64, c: f64) -> Result<Self> {
        ensure_domain!(
            b_sat.is_finite() && b_sat > 0.0,
            "B_sat must be positive, got {b_sat}"
        );
        ensure_domain!(
            c.is_finite() && c > 0.0,
            "height scale c must be positive, got {c}"
        );
        Ok(TransferCurve::Ideal { b_sat, c })
    }

    /// Ideal curve with the height scale solved so that full-depth modulation
    /// (amplitude = h_eq) at equilibrium height `h_eq` reaches the requested
    /// modulation efficiency.
    ///
    /// The efficiency of the ideal curve depends only on c (B_sat cancels),
    /// rising from 1/2 toward 1 as c grows, so a bisection bracket on
    /// [tiny, 100·h_eq] covers every reachable target.
    pub fn ideal_with_efficiency(b_sat: f64, h_eq: f64, target_ef: f64) -> Result<Self> {
        ensure_domain!(h_eq > 0.0, "h_eq must be positive, got {h_eq}");
        ensure_domain!(
            target_ef > 0.5 && target_ef < 1.0,
            "ideal-curve efficiency at full-depth modulation lies in (0.5, 1), got {target_ef}"
        );
        let ef_of = |c: f64| {
            let b = |h: f64| h / (h + c);
            (b(2.0 * h_eq) - b(0.0)) / (2.0 * b(h_eq)) - target_ef
        };
        let c = bisect(ef_of, 1e-6 * h_eq, 100.0 * h_eq, 1e-15 * h_eq, 200)?;
        TransferCurve::ideal(b_sat, c)
    }

    /// Monotone interpolation through measured (h, B) anchors.
    pub fn measured(anchors: Vec<(f64, f64)>) -> Result<Self> {
        ensure_domain!(
            anchors.len() >= 2,
            "need at least 2 anchors, got {}",
            anchors.len()
        );
        ensure_domain!(
            anchors[0].0 >= 0.0 && anchors[0].1 >= 0.0,
            "anchors must have h ≥ 0 and B ≥ 0"
        );
        ensure_domain!(
            anchors
                .windows(2)
                .all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1),
            "anchors must be strictly increasing in both h and B"
        );
        let (h, b): (Vec<f64>, Vec<f64>) = anchors.iter().copied().unzip();
        let interp = MonotoneCubic::new(h, b)?;
        Ok(TransferCurve::Measured { anchors, interp })
    }

    /// Default measured curve: B(0) = 8.95 G, B(3 µm) = 10.47 G,
    /// B(6 µm) = 10.95 G.
    pub fn measured_default() -> Self {
        TransferCurve::measured(vec![
            (0.0, 8.95 * GAUSS),
            (3e-6, 10.47 * GAUSS),
            (6e-6, 10.95 * GAUSS),
        ])
        .expect("default anchors are well posed")
    }

    /// Valid height range; the ideal curve extends to arbitrary h ≥ 0.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            TransferCurve::Ideal { .. } => (0.0, f64::INFINITY),
            TransferCurve::Measured { interp, .. } => interp.domain(),
        }
    }

    /// Field at chip height `h` (m → T). Errors when h < 0 or h falls
    /// outside a measured curve's anchor range.
    pub fn field_at(&self, h: f64) -> Result<f64> {
        ensure_domain!(
            h.is_finite() && h >= 0.0,
            "chip height must be nonnegative, got {h}"
        );
        match self {
            TransferCurve::Ideal { b_sat, c } => Ok(b_sat * h / (h + c)),
            TransferCurve::Measured { interp, .. } => interp.eval(h).map_err(|_| {
                let (lo, hi) = interp.domain();
                Error::domain(format!(
                    "chip height {h:.3e} m outside measured transfer-curve range [{lo:.3e}, {hi:.3e}] m"
                ))
            }),
        }
    }
}

/// Mechanical drive of the modulation chip.
///
/// The chip height is h(t) = h_eq + amplitude·sin(2π f_mod t + φ_eff) where
/// φ_eff folds the programmed phase and the three trigger delays into one
/// effective phase; only their sum modulo the period matters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ModulationDrive {
    /// Vibration frequency in Hz.
    pub f_mod: f64,
    /// Vibration amplitude in m.
    pub amplitude: f64,
    /// Equilibrium chip height in m.
    pub h_eq: f64,
    /// Programmed trigger phase in rad.
    pub phase: f64,
    /// Trigger delays in s (pulse generator, vibration start, sequence
    /// start); equivalent to an extra phase 2π·f_mod·Σt_d.
    pub delays: [f64; 3],
}

impl ModulationDrive {
    pub fn new(f_mod: f64, amplitude: f64, h_eq: f64) -> Result<Self> {
        ensure_domain!(
            f_mod.is_finite() && f_mod > 0.0,
            "f_mod must be positive, got {f_mod}"
        );
        ensure_domain!(
            amplitude.is_finite() && amplitude >= 0.0,
            "amplitude must be nonnegative, got {amplitude}"
        );
        ensure_domain!(
            h_eq.is_finite() && h_eq >= 0.0,
            "h_eq must be nonnegative, got {h_eq}"
        );
        Ok(ModulationDrive {
            f_mod,
            amplitude,
            h_eq,
            phase: 0.0,
            delays: [0.0; 3],
        })
    }

    pub fn with_phase(self, phase: f64) -> Self {
        ModulationDrive { phase, ..self }
    }

    pub fn with_delays(self, delays: [f64; 3]) -> Self {
        ModulationDrive { delays, ..self }
    }

    /// Programmed phase plus the delay contribution, wrapped to [0, 2π).
    pub fn effective_phase(&self) -> f64 {
        let delay_sum: f64 = self.delays.iter().sum();
        (self.phase + TAU * self.f_mod * delay_sum).rem_euclid(TAU)
    }

    /// Chip height at time t.
    pub fn gap_at(&self, t: f64) -> f64 {
        self.h_eq + self.amplitude * (TAU * self.f_mod * t + self.effective_phase()).sin()
    }

    /// Extreme chip heights over one period.
    pub fn gap_range(&self) -> (f64, f64) {
        (self.h_eq - self.amplitude, self.h_eq + self.amplitude)
    }
}

/// Modulation efficiency E_F = (B_max - B_min)/(2·B_init).
pub fn modulation_efficiency(b_max: f64, b_min: f64, b_init: f64) -> Result<f64> {
    ensure_domain!(
        b_init.is_finite() && b_init > 0.0,
        "B_init must be positive, got {b_init}"
    );
    ensure_domain!(b_max >= b_min, "B_max ({b_max}) must be ≥ B_min ({b_min})");
    Ok((b_max - b_min) / (2.0 * b_init))
}

/// Samples the modulated field B(t) = B(h(t)) over `[t0, t1]`.
///
/// Errors when the chip height leaves the transfer curve's domain at any
/// sample.
pub fn field_waveform(
    drive: &ModulationDrive,
    curve: &TransferCurve,
    t0: f64,
    t1: f64,
    n_intervals: usize,
) -> Result<FieldWaveform> {
    let (h_lo, h_hi) = drive.gap_range();
    let (d_lo, d_hi) = curve.domain();
    ensure_domain!(
        h_lo >= d_lo && h_hi <= d_hi,
        "chip excursion [{h_lo:.3e}, {h_hi:.3e}] m leaves the transfer-curve domain [{d_lo:.3e}, {d_hi:.3e}] m"
    );
    FieldWaveform::try_sample(|t| curve.field_at(drive.gap_at(t)), t0, t1, n_intervals)
}

/// Modulated waveform over one protocol window [0, τ], sampled densely
/// enough for echo integration.
pub fn field_waveform_for_sequence(
    drive: &ModulationDrive,
    curve: &TransferCurve,
    seq: &PulseSequence,
) -> Result<FieldWaveform> {
    let n = echo_sample_intervals(seq.tau, 1.0 / drive.f_mod);
    field_waveform(drive, curve, 0.0, seq.tau, n)
}

/// Relative signed deviation of the waveform's one-period time average from
/// the equilibrium field: zero for a linear transfer curve, nonzero when the
/// curve's nonlinearity skews the modulation.
pub fn modulation_asymmetry(drive: &ModulationDrive, curve: &TransferCurve) -> Result<f64> {
    let b_init = curve.field_at(drive.h_eq)?;
    ensure_domain!(
        b_init > 0.0,
        "equilibrium field must be positive, got {b_init}"
    );
    let period = 1.0 / drive.f_mod;
    let w = field_waveform(drive, curve, 0.0, period, 4096)?;
    Ok((w.time_average() - b_init) / b_init)
}

/// Echo response vs. trigger phase, with the phase maximizing |response|.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PhaseSweep {
    /// Trigger phases in rad over [0, 2π).
    pub phase: Vec<f64>,
    /// Signed per-tesla echo response in rad/T: echo phase of the modulated
    /// waveform divided by the equilibrium field.
    pub response: Vec<f64>,
    /// Implied fringe frequency |response|/2π in 1/T.
    pub fringe_frequency: Vec<f64>,
    /// Phase of maximum |response|.
    pub optimal_phase: f64,
}

/// Sweeps the trigger phase over a full period and evaluates the per-tesla
/// echo response at each phase.
///
/// Requires the modulation to be roughly synchronous with the sequence:
/// f_mod·τ within a factor 2 of 1.
pub fn phase_sweep(
    drive: &ModulationDrive,
    seq: &PulseSequence,
    curve: &TransferCurve,
    consts: &PhysicalConstants,
    n_phases: usize,
) -> Result<PhaseSweep> {
    ensure_domain!(
        n_phases >= 8,
        "phase sweep needs ≥ 8 phases, got {n_phases}"
    );
    let cycles = drive.f_mod * seq.tau;
    ensure_domain!(
        (0.5..=2.0).contains(&cycles),
        "modulation must be near-synchronous with the sequence: f_mod·tau = {cycles:.3} outside [0.5, 2]"
    );
    let b_init = curve.field_at(drive.h_eq)?;
    ensure_domain!(
        b_init > 0.0,
        "equilibrium field must be positive for a per-tesla response"
    );

    let mut phase = Vec::with_capacity(n_phases);
    let mut response = Vec::with_capacity(n_phases);
    for i in 0..n_phases {
        let phi = TAU * i as f64 / n_phases as f64;
        let sweep_drive = drive.with_phase(phi);
        let w = field_waveform_for_sequence(&sweep_drive, curve, seq)?;
        let echo = echo_phase(&w, seq, consts.gamma_e)?;
        phase.push(phi);
        response.push(echo / b_init);
    }
    let fringe_frequency: Vec<f64> = response.iter().map(|r| r.abs() / TAU).collect();
    let optimal_phase = phase[response
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap()];
    Ok(PhaseSweep {
        phase,
        response,
        fringe_frequency,
        optimal_phase,
    })
}

/// Modulation efficiency vs. vibration amplitude at fixed equilibrium height.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EfficiencyCurve {
    /// Amplitudes in m.
    pub amplitude: Vec<f64>,
    /// E_F at each amplitude.
    pub efficiency: Vec<f64>,
}

/// E_F(a) = (B(h_eq+a) - B(h_eq-a)) / (2·B(h_eq)) over an amplitude grid.
///
/// Domain errors from the transfer curve (h_eq ± a outside its range)
/// propagate.
pub fn efficiency_vs_amplitude(
    h_eq: f64,
    amplitudes: &[f64],
    curve: &TransferCurve,
) -> Result<EfficiencyCurve> {
    let b_init = curve.field_at(h_eq)?;
    let mut efficiency = Vec::with_capacity(amplitudes.len());
    for &a in amplitudes {
        ensure_domain!(a >= 0.0, "amplitude must be nonnegative, got {a}");
        let b_hi = curve.field_at(h_eq + a)?;
        let b_lo = curve.field_at(h_eq - a)?;
        efficiency.push(modulation_efficiency(b_hi, b_lo, b_init)?);
    }
    Ok(EfficiencyCurve {
        amplitude: amplitudes.to_vec(),
        efficiency,
    })
}
