//! Parameter records for one magnetometer configuration.
//!
//! A [`ProtocolParams`] value carries the complete parameter vector of the
//! sensitivity formula: protocol coefficient A, concentrator magnification G,
//! angle factor α, modulation efficiency E_F, contrast C, photon number N,
//! coherence time and stretch exponent, evolution and overhead times, and the
//! noise-over-shot-noise ratio n_f. Validation collects every violated
//! invariant into a [`ValidationReport`] instead of stopping at the first.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

/// Parameters of one pulsed-magnetometry configuration.
///
/// Times are seconds, everything else dimensionless. The default value is the
/// plain-Ramsey column of the bundled `table_s1` scenario.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ProtocolParams {
    /// Protocol coefficient A: 1 for Ramsey, π/2 for spin echo.
    pub a_coeff: f64,
    /// Flux-concentrator magnification G (1 = no concentrators).
    pub magnification: f64,
    /// Angle factor α between field and NV axis (1/√3 for a (100) face).
    pub angle_factor: f64,
    /// Modulation efficiency E_F in (0, 1]; 1 when the field is unmodulated.
    pub mod_efficiency: f64,
    /// Measurement contrast C in (0, 1).
    pub contrast: f64,
    /// Average photons detected per measurement, N.
    pub photons: f64,
    /// Coherence time T_coh in s (T2* for Ramsey, T2 for spin echo).
    pub coherence_time: f64,
    /// Stretched-exponential exponent p of the decay envelope.
    pub stretch_exp: f64,
    /// Free-evolution time τ in s.
    pub evolution_time: f64,
    /// Overhead time t_m per measurement cycle in s (initialization,
    /// readout and delays combined).
    pub overhead_time: f64,
    /// Ratio of total system noise to photon shot noise, n_f ≥ 1.
    pub noise_ratio: f64,
    /// Spin quantum number difference Δm_s between the interferometry states.
    pub delta_ms: f64,
}

/// Angle factor 1/√3 for fields applied normal to a (100) diamond face.
pub const ALPHA_100: f64 = 0.5774;

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams::table_s1_ramsey()
    }
}

impl ProtocolParams {
    /// Plain Ramsey configuration (no concentrators, no modulation).
    pub fn table_s1_ramsey() -> Self {
        ProtocolParams {
            a_coeff: 1.0,
            magnification: 1.0,
            angle_factor: ALPHA_100,
            mod_efficiency: 1.0,
            contrast: 1.2e-2,
            photons: 7.6e9,
            coherence_time: 1.13e-6,
            stretch_exp: 1.0,
            evolution_time: 0.7e-6,
            overhead_time: 115e-6,
            noise_ratio: 12.2,
            delta_ms: 1.0,
        }
    }

    /// Ramsey with flux concentrators installed (static magnification).
    pub fn table_s1_ramsey_fc() -> Self {
        ProtocolParams {
            magnification: 85.1,
            contrast: 9.2e-3,
            photons: 7.0e9,
            noise_ratio: 15.6,
            ..ProtocolParams::table_s1_ramsey()
        }
    }

    /// Spin echo with flux concentration and modulation.
    pub fn table_s1_fcm() -> Self {
        ProtocolParams {
            a_coeff: FRAC_PI_2,
            magnification: 85.1,
            angle_factor: ALPHA_100,
            mod_efficiency: 0.096,
            contrast: 4.5e-3,
            photons: 7.0e9,
            coherence_time: 102e-6,
            stretch_exp: 1.24,
            evolution_time: 92.7e-6,
            overhead_time: 140e-6,
            noise_ratio: 19.2,
            delta_ms: 1.0,
        }
    }

    /// Projected FCM configuration with the improved gap, modulation
    /// amplitude, diamond and collection optics.
    pub fn table_s3_improved() -> Self {
        ProtocolParams {
            magnification: 527.0,
            mod_efficiency: 0.568,
            contrast: 1.2e-2,
            photons: 2.6e10,
            coherence_time: 694e-6,
            evolution_time: 333.6e-6,
            noise_ratio: 19.2,
            ..ProtocolParams::table_s1_fcm()
        }
    }

    /// Runs all invariants, returning the full list of violations.
    pub fn validate(&self) -> ValidationReport {
        validate_params(self)
    }
}

/// One violated parameter invariant.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    /// Field name as it appears in scenario files.
    pub field: &'static str,
    /// The invariant that failed, in the form it is documented.
    pub constraint: &'static str,
    /// Offending value.
    pub value: f64,
}

/// Outcome of validating a [`ProtocolParams`]: empty iff all invariants hold.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "all parameter invariants hold");
        }
        write!(f, "{} parameter violation(s):", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  {} = {} violates {}", v.field, v.value, v.constraint)?;
        }
        Ok(())
    }
}

/// Checks every `ProtocolParams` invariant; violations are data, not errors.
pub fn validate_params(p: &ProtocolParams) -> ValidationReport {
    let mut violations = Vec::new();
    let mut check = |ok: bool, field: &'static str, constraint: &'static str, value: f64| {
        if !ok {
            violations.push(Violation {
                field,
                constraint,
                value,
            });
        }
    };

    let a_ok = p.a_coeff.is_finite()
        && ((p.a_coeff - 1.0).abs() < 1e-9 || (p.a_coeff - FRAC_PI_2).abs() < 1e-9);
    check(a_ok, "A", "A ∈ {1, π/2}", p.a_coeff);
    check(
        p.magnification.is_finite() && p.magnification >= 1.0,
        "G",
        "G ≥ 1",
        p.magnification,
    );
    check(
        p.angle_factor > 0.0 && p.angle_factor <= 1.0,
        "alpha",
        "0 < alpha ≤ 1",
        p.angle_factor,
    );
    check(
        p.mod_efficiency > 0.0 && p.mod_efficiency <= 1.0,
        "E_F",
        "0 < E_F ≤ 1",
        p.mod_efficiency,
    );
    check(
        p.contrast > 0.0 && p.contrast < 1.0,
        "C",
        "C ∈ (0, 1)",
        p.contrast,
    );
    check(
        p.photons.is_finite() && p.photons > 0.0,
        "N",
        "N > 0",
        p.photons,
    );
    check(
        p.coherence_time.is_finite() && p.coherence_time > 0.0,
        "T_coh",
        "T_coh > 0",
        p.coherence_time,
    );
    check(
        p.stretch_exp.is_finite() && p.stretch_exp > 0.0,
        "p",
        "p > 0",
        p.stretch_exp,
    );
    check(
        p.evolution_time.is_finite() && p.evolution_time > 0.0,
        "tau",
        "tau > 0",
        p.evolution_time,
    );
    check(
        p.overhead_time.is_finite() && p.overhead_time >= 0.0,
        "t_m",
        "t_m ≥ 0",
        p.overhead_time,
    );
    check(
        p.noise_ratio.is_finite() && p.noise_ratio >= 1.0,
        "n_f",
        "n_f ≥ 1",
        p.noise_ratio,
    );
    check(
        p.delta_ms.is_finite() && p.delta_ms > 0.0,
        "delta_ms",
        "delta_ms > 0",
        p.delta_ms,
    );

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_columns_are_valid() {
        for p in [
            ProtocolParams::table_s1_ramsey(),
            ProtocolParams::table_s1_ramsey_fc(),
            ProtocolParams::table_s1_fcm(),
            ProtocolParams::table_s3_improved(),
        ] {
            let report = validate_params(&p);
            assert!(report.is_ok(), "unexpected violations: {report}");
        }
    }

    #[test]
    fn noise_ratio_below_one_is_flagged() {
        let p = ProtocolParams {
            noise_ratio: 0.5,
            ..Default::default()
        };
        let report = validate_params(&p);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "n_f");
        assert_eq!(report.violations[0].constraint, "n_f ≥ 1");
    }

    #[test]
    fn zero_tau_is_flagged() {
        let p = ProtocolParams {
            evolution_time: 0.0,
            ..Default::default()
        };
        let report = validate_params(&p);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "tau");
    }

    #[test]
    fn multiple_violations_are_all_reported() {
        let p = ProtocolParams {
            a_coeff: 2.0,
            mod_efficiency: 1.5,
            contrast: 1.0,
            noise_ratio: 0.0,
            ..Default::default()
        };
        let report = validate_params(&p);
        let fields: Vec<_> = report.violations.iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["A", "E_F", "C", "n_f"]);
    }

    #[test]
    fn a_coefficient_accepts_both_protocols() {
        let ramsey = ProtocolParams {
            a_coeff: 1.0,
            ..Default::default()
        };
        let echo = ProtocolParams {
            a_coeff: FRAC_PI_2,
            ..Default::default()
        };
        assert!(ramsey.validate().is_ok());
        assert!(echo.validate().is_ok());
    }
}
