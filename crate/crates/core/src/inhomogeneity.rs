//! Ensemble averaging over concentrator dispersion.
//!
//! Each NV center sees B = G′·B_a + B_r where the magnification G′ and the
//! remanence offset B_r vary across the ensemble with Gaussian distributions
//! N(G, (kG)²) and N(B_r0, (m·B_r0)²). The observable signal is the double
//! expectation of the intrinsic signal over both distributions, which smears
//! the fringe and reduces the effective contrast.

use crate::consts::PhysicalConstants;
use crate::error::{ensure_domain, Error, Result};
use crate::numeric::GaussHermite;
use crate::spindyn::decay_envelope;

/// Gaussian dispersion of magnification and remanence across the ensemble,
/// plus the intrinsic-signal parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DispersionParams {
    /// Mean magnification G.
    pub magnification: f64,
    /// Relative spread k of the magnification: G′ ~ N(G, (kG)²).
    pub magnification_spread: f64,
    /// Mean remanence offset B_r0 at the diamond, T.
    pub remanence: f64,
    /// Relative spread m of the remanence: B_r ~ N(B_r0, (m·B_r0)²).
    pub remanence_spread: f64,
    /// Intrinsic contrast C.
    pub contrast: f64,
    /// Coherence time T2, s.
    pub coherence_time: f64,
    /// Stretched exponent p.
    pub stretch_exp: f64,
    /// Evolution time τ, s.
    pub evolution_time: f64,
    /// Per-tesla echo response κ at the diamond, rad/T.
    pub kappa: f64,
}

impl DispersionParams {
    /// κ for a synchronized spin echo: γ_e·α·E_F·(2/π)·τ. The remanence acts
    /// at the diamond, so the response excludes G (which multiplies only the
    /// applied field).
    pub fn echo_kappa(
        alpha: f64,
        mod_efficiency: f64,
        tau: f64,
        consts: &PhysicalConstants,
    ) -> f64 {
        consts.gamma_e * alpha * mod_efficiency * 2.0 / std::f64::consts::PI * tau
    }

    /// Practical dispersion: measured spreads (k = 1.5%, m = 10.9%) around
    /// B_r0 = 25 µT with the spin-echo parameter set.
    pub fn practical(consts: &PhysicalConstants) -> Self {
        let tau = 92.7e-6;
        DispersionParams {
            magnification: 85.1,
            magnification_spread: 0.015,
            remanence: 25e-6,
            remanence_spread: 0.109,
            contrast: 1.2e-2,
            coherence_time: 102e-6,
            stretch_exp: 1.24,
            evolution_time: tau,
            kappa: Self::echo_kappa(crate::params::ALPHA_100, 0.096, tau, consts),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_domain!(
            self.magnification.is_finite() && self.magnification >= 1.0,
            "mean magnification must be ≥ 1, got {}",
            self.magnification
        );
        ensure_domain!(
            self.magnification_spread.is_finite() && self.magnification_spread >= 0.0,
            "magnification spread k must be nonnegative, got {}",
            self.magnification_spread
        );
        ensure_domain!(
            self.remanence.is_finite() && self.remanence >= 0.0,
            "mean remanence must be nonnegative, got {}",
            self.remanence
        );
        ensure_domain!(
            self.remanence_spread.is_finite() && self.remanence_spread >= 0.0,
            "remanence spread m must be nonnegative, got {}",
            self.remanence_spread
        );
        ensure_domain!(
            self.contrast > 0.0 && self.contrast < 1.0,
            "contrast must be in (0, 1), got {}",
            self.contrast
        );
        ensure_domain!(
            self.kappa.is_finite() && self.kappa > 0.0,
            "echo response kappa must be positive, got {}",
            self.kappa
        );
        decay_envelope(self.evolution_time, self.coherence_time, self.stretch_exp).map(|_| ())
    }

    /// Intrinsic (dispersion-free) signal C·e^(-(τ/T2)^p)·cos(κB).
    pub fn intrinsic_signal(&self, field: f64) -> f64 {
        let envelope = (-(self.evolution_time / self.coherence_time).powf(self.stretch_exp)).exp();
        self.contrast * envelope * (self.kappa * field).cos()
    }

    /// Coherence envelope of the intrinsic signal.
    pub fn envelope(&self) -> f64 {
        (-(self.evolution_time / self.coherence_time).powf(self.stretch_exp)).exp()
    }
}

/// Quadrature controls for ensemble averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Gauss-Hermite nodes per axis.
    pub nodes: usize,
    /// Convergence gate: doubling the nodes must move the result by less
    /// than this relative amount.
    pub rel_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            nodes: 64,
            rel_tol: 1e-8,
        }
    }
}

/// Ensemble-averaged signal at applied field `b_applied`:
/// E over G′ and B_r of `intrinsic(G′·B_a + B_r)`.
///
/// Tensor-product Gauss-Hermite quadrature; the result is accepted only if
/// doubling the node count moves it by less than `opts.rel_tol` relative
/// (gate on the larger of the two swept axes' scales). Zero spreads collapse
/// the corresponding axis to a point mass.
pub fn ensemble_signal<F>(
    b_applied: f64,
    d: &DispersionParams,
    intrinsic: F,
    opts: &QuadratureOptions,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    d.validate()?;
    let coarse = tensor_average(b_applied, d, &intrinsic, opts.nodes)?;
    let fine = tensor_average(b_applied, d, &intrinsic, opts.nodes * 2)?;
    let scale = coarse.abs().max(fine.abs()).max(d.contrast);
    if (fine - coarse).abs() > opts.rel_tol * scale {
        return Err(Error::Quadrature(format!(
            "ensemble average did not converge: {coarse:.9e} vs {fine:.9e} after node doubling"
        )));
    }
    Ok(fine)
}

fn tensor_average<F>(
    b_applied: f64,
    d: &DispersionParams,
    intrinsic: &F,
    nodes: usize,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let sigma_g = d.magnification_spread * d.magnification;
    let sigma_r = d.remanence_spread * d.remanence;
    let rule = GaussHermite::rule(nodes)?;
    // E_{G'} E_{B_r} f(G'·B_a + B_r); either axis may be a point mass.
    Ok(rule.expect(d.magnification, sigma_g, |g| {
        rule.expect(d.remanence, sigma_r, |br| intrinsic(g * b_applied + br))
    }))
}

/// Ensemble average of the built-in cosine intrinsic signal.
pub fn ensemble_cosine_signal(
    b_applied: f64,
    d: &DispersionParams,
    opts: &QuadratureOptions,
) -> Result<f64> {
    ensemble_signal(b_applied, d, |b| d.intrinsic_signal(b), opts)
}

/// Effective contrast after dispersion smearing.
///
/// Sweeps one fringe period of the ensemble-averaged cosine signal around
/// B_a = 0, takes (max - min)/2 with parabolic peak refinement, and
/// normalizes by the coherence envelope so the result compares directly with
/// the intrinsic contrast C.
pub fn effective_contrast(d: &DispersionParams, opts: &QuadratureOptions) -> Result<f64> {
    d.validate()?;
    // One fringe period in applied field; G' scales the response to B_a.
    let period = std::f64::consts::TAU / (d.kappa * d.magnification);
    let n = 240;
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let b = period * (i as f64 / n as f64 - 0.5);
        values.push(ensemble_cosine_signal(b, d, opts)?);
    }
    let max = refined_extremum(&values, true);
    let min = refined_extremum(&values, false);
    Ok((max - min) / 2.0 / d.envelope())
}

/// Parabolic refinement of the sampled extremum (3-point fit around the
/// best sample; ends fall back to the sample itself).
fn refined_extremum(values: &[f64], maximum: bool) -> f64 {
    let (i, &v) = values
        .iter()
        .enumerate()
        .max_by(|a, b| {
            let (x, y) = (*a.1, *b.1);
            if maximum {
                x.partial_cmp(&y).unwrap()
            } else {
                y.partial_cmp(&x).unwrap()
            }
        })
        .unwrap();
    if i == 0 || i == values.len() - 1 {
        return v;
    }
    let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        return v;
    }
    // Vertex of the parabola through the three samples.
    let delta = 0.5 * (a - c) / denom;
    b - 0.25 * (a - c) * delta
}

/// Effective contrast vs. mean remanence.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ContrastCurve {
    /// Mean remanence grid in T.
    pub remanence: Vec<f64>,
    /// Effective contrast at each point.
    pub contrast: Vec<f64>,
}

/// Evaluates [`effective_contrast`] across a remanence grid
/// (nonnegative, increasing).
pub fn contrast_vs_remanence(
    d: &DispersionParams,
    grid: &[f64],
    opts: &QuadratureOptions,
) -> Result<ContrastCurve> {
    ensure_domain!(!grid.is_empty(), "remanence grid must not be empty");
    ensure_domain!(
        grid[0] >= 0.0 && grid.windows(2).all(|w| w[1] > w[0]),
        "remanence grid must be nonnegative and strictly increasing"
    );
    let mut contrast = Vec::with_capacity(grid.len());
    for &b_r0 in grid {
        let point = DispersionParams {
            remanence: b_r0,
            ..*d
        };
        contrast.push(effective_contrast(&point, opts)?);
    }
    Ok(ContrastCurve {
        remanence: grid.to_vec(),
        contrast,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn opts() -> QuadratureOptions {
        QuadratureOptions::default()
    }

    #[test]
    fn practical_kappa_matches_frozen_value() {
        let d = DispersionParams::practical(&consts());
        assert_relative_eq!(d.kappa, 575500.585, max_relative = 1e-8);
    }

    #[test]
    fn zero_spread_collapses_to_point_evaluation() {
        let d = DispersionParams {
            magnification_spread: 0.0,
            remanence_spread: 0.0,
            ..DispersionParams::practical(&consts())
        };
        let b_a = 3e-7;
        let got = ensemble_cosine_signal(b_a, &d, &opts()).unwrap();
        let want = d.intrinsic_signal(d.magnification * b_a + d.remanence);
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }

    #[test]
    fn normalization_of_unit_signal() {
        let d = DispersionParams::practical(&consts());
        let got = ensemble_signal(2e-7, &d, |_| 1.0, &opts()).unwrap();
        assert_relative_eq!(got, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn cosine_average_matches_characteristic_function() {
        // E[cos(κ(G'B_a + B_r))] = e^{-κ²σ²/2}·cos(κμ) with
        // μ = G·B_a + B_r0 and σ² = (kG·B_a)² + (m·B_r0)².
        let d = DispersionParams::practical(&consts());
        for b_a in [0.0, 1e-7, 5e-7, -3e-7] {
            let got = ensemble_signal(b_a, &d, |b| (d.kappa * b).cos(), &opts()).unwrap();
            let mu = d.magnification * b_a + d.remanence;
            let sigma_sq = (d.magnification_spread * d.magnification * b_a).powi(2)
                + (d.remanence_spread * d.remanence).powi(2);
            let want = (-0.5 * d.kappa * d.kappa * sigma_sq).exp() * (d.kappa * mu).cos();
            assert_abs_diff_eq!(got, want, epsilon = 1e-6 * want.abs().max(1e-3));
        }
    }

    #[test]
    fn ensemble_is_linear_in_the_intrinsic_signal() {
        let d = DispersionParams::practical(&consts());
        let b_a = 2.5e-7;
        let f1 = |b: f64| (d.kappa * b).cos();
        let f2 = |b: f64| (0.3 * d.kappa * b).sin();
        let (a, c) = (1.7, -0.6);
        let combined = ensemble_signal(b_a, &d, |b| a * f1(b) + c * f2(b), &opts()).unwrap();
        let separate = a * ensemble_signal(b_a, &d, f1, &opts()).unwrap()
            + c * ensemble_signal(b_a, &d, f2, &opts()).unwrap();
        assert_relative_eq!(combined, separate, max_relative = 1e-10);
    }

    #[test]
    fn practical_effective_contrast_lands_near_quoted_value() {
        let d = DispersionParams::practical(&consts());
        let c_eff = effective_contrast(&d, &opts()).unwrap();
        // Frozen from the closed-form Gaussian model with exact extremum
        // refinement: reduction 0.2923009100 of C = 1.2e-2. The remanence
        // spread dominates; the magnification spread shaves a further 3e-4.
        assert_relative_eq!(c_eff, 3.50761092044e-3, max_relative = 1e-6);
        // Within a factor 1.5 of the quoted 4.5e-3.
        assert!(c_eff > 4.5e-3 / 1.5 && c_eff < 4.5e-3 * 1.5);
    }

    #[test]
    fn no_dispersion_means_no_contrast_loss() {
        let d = DispersionParams {
            magnification_spread: 0.0,
            remanence: 0.0,
            remanence_spread: 0.0,
            ..DispersionParams::practical(&consts())
        };
        let c_eff = effective_contrast(&d, &opts()).unwrap();
        assert_relative_eq!(c_eff, d.contrast, max_relative = 1e-6);
    }

    #[test]
    fn reduction_at_zero_field_matches_gaussian_closed_form() {
        let d = DispersionParams::practical(&consts());
        let got = ensemble_signal(0.0, &d, |b| (d.kappa * b).cos(), &opts()).unwrap();
        let sigma_r = d.remanence_spread * d.remanence;
        let want = (-0.5 * (d.kappa * sigma_r).powi(2)).exp() * (d.kappa * d.remanence).cos();
        assert_relative_eq!(got, want, max_relative = 1e-6);
    }

    #[test]
    fn small_remanence_preserves_contrast() {
        let d = DispersionParams {
            remanence: 2e-6,
            ..DispersionParams::practical(&consts())
        };
        let c_eff = effective_contrast(&d, &opts()).unwrap();
        assert!(
            c_eff >= 0.95 * d.contrast,
            "contrast {c_eff} fell below 95% of {}",
            d.contrast
        );
        assert_relative_eq!(c_eff, 1.19023912235e-2, max_relative = 1e-6);
    }

    #[test]
    fn contrast_is_monotone_nonincreasing_in_remanence() {
        let d = DispersionParams::practical(&consts());
        let grid: Vec<f64> = (0..=25).map(|i| 50e-6 * i as f64 / 25.0).collect();
        let curve = contrast_vs_remanence(&d, &grid, &opts()).unwrap();
        // At zero remanence only the magnification spread bites, damping the
        // fringe minimum by exp(-(pi k)^2/2): contrast 0.9994 C.
        assert_relative_eq!(curve.contrast[0], 1.19933432111e-2, max_relative = 1e-6);
        for w in curve.contrast.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-9),
                "contrast increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn fringe_is_asymmetric_under_remanence() {
        let d = DispersionParams::practical(&consts());
        let b_a = 1e-7;
        let plus = ensemble_cosine_signal(b_a, &d, &opts()).unwrap();
        let minus = ensemble_cosine_signal(-b_a, &d, &opts()).unwrap();
        assert!(
            (plus - minus).abs() > 1e-9,
            "expected asymmetry, got {plus} vs {minus}"
        );
    }

    #[test]
    fn contrast_location_is_invariant_under_contrast_scaling() {
        let d1 = DispersionParams::practical(&consts());
        let d2 = DispersionParams {
            contrast: 2.0 * d1.contrast,
            ..d1
        };
        let c1 = effective_contrast(&d1, &opts()).unwrap();
        let c2 = effective_contrast(&d2, &opts()).unwrap();
        assert_relative_eq!(c2, 2.0 * c1, max_relative = 1e-9);
    }

    #[test]
    fn rejects_invalid_dispersion() {
        let d = DispersionParams {
            contrast: 0.0,
            ..DispersionParams::practical(&consts())
        };
        assert!(ensemble_cosine_signal(0.0, &d, &opts()).is_err());
        let d = DispersionParams {
            kappa: -1.0,
            ..DispersionParams::practical(&consts())
        };
        assert!(effective_contrast(&d, &opts()).is_err());
    }

    #[test]
    fn grid_preconditions_are_enforced() {
        let d = DispersionParams::practical(&consts());
        assert!(contrast_vs_remanence(&d, &[], &opts()).is_err());
        assert!(contrast_vs_remanence(&d, &[-1e-6, 0.0], &opts()).is_err());
        assert!(contrast_vs_remanence(&d, &[1e-6, 1e-6], &opts()).is_err());
    }
}
