//! Shared numerical routines: composite and adaptive Simpson quadrature,
//! monotone piecewise-cubic interpolation, bisection, and cached
//! Gauss-Hermite rules for Gaussian expectation values.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use once_cell::sync::Lazy;

use crate::error::{ensure_domain, Error, Result};

/// Integrates uniformly sampled values with spacing `h` by composite Simpson,
/// closing an odd interval count with the 3/8 rule on the final three panels.
///
/// Two samples fall back to the trapezoid rule. Exact for cubics on any grid
/// with at least four samples.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ if n.is_multiple_of(2) => simpson_even(values, h),
        3 => simpson_38(values, h),
        _ => simpson_even(&values[..n - 2], h) + simpson_38(&values[n - 3..], h),
    }
}

fn simpson_even(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n >= 2 && n.is_multiple_of(2));
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n] + 4.0 * odd + 2.0 * even)
}

fn simpson_38(values: &[f64], h: f64) -> f64 {
    debug_assert_eq!(values.len(), 4);
    3.0 * h / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3])
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// Recursion halves panels until the Richardson error estimate meets
/// `rel_tol` against the running value (floored by `abs_tol`), up to depth 60.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    ensure_domain!(
        a.is_finite() && b.is_finite() && b > a,
        "integration bounds must be finite with b > a, got [{a}, {b}]"
    );
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut converged = true;
    let value = adapt(
        &f,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        rel_tol,
        abs_tol,
        60,
        &mut converged,
    );
    if !converged {
        return Err(Error::Quadrature(format!(
            "adaptive Simpson hit maximum recursion depth on [{a}, {b}]"
        )));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    rel_tol: f64,
    abs_tol: f64,
    depth: u32,
    converged: &mut bool,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let tol = abs_tol.max(rel_tol * (left + right).abs());
    if delta.abs() <= 15.0 * tol || (b - a) < f64::EPSILON * 16.0 * (a.abs() + b.abs()) {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *converged = false;
        return left + right + delta / 15.0;
    }
    let half_rel = rel_tol;
    adapt(
        f,
        a,
        m,
        fa,
        flm,
        fm,
        left,
        half_rel,
        0.5 * abs_tol,
        depth - 1,
        converged,
    ) + adapt(
        f,
        m,
        b,
        fm,
        frm,
        fb,
        right,
        half_rel,
        0.5 * abs_tol,
        depth - 1,
        converged,
    )
}

/// Finds a root of `f` on `[lo, hi]` by bisection.
///
/// Requires a sign change across the bracket. Converges to `xtol` on the
/// bracket width.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    ensure_domain!(
        hi > lo,
        "bisection bracket must satisfy hi > lo, got [{lo}, {hi}]"
    );
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    ensure_domain!(
        flo.signum() != fhi.signum(),
        "bisection requires a sign change: f({lo}) = {flo}, f({hi}) = {fhi}"
    );
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 || hi - lo < xtol {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
///
/// Given monotone data, the interpolant is monotone on every panel. End
/// slopes use the one-sided three-point formula, clamped so the end panels
/// cannot overshoot.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// Builds the interpolant. `x` must be strictly increasing with at least
    /// two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        ensure_domain!(
            x.len() == y.len() && x.len() >= 2,
            "interpolation needs matching x/y with ≥ 2 points, got {}/{}",
            x.len(),
            y.len()
        );
        ensure_domain!(
            x.windows(2).all(|w| w[1] > w[0]),
            "interpolation abscissae must be strictly increasing"
        );
        ensure_domain!(
            x.iter().chain(y.iter()).all(|v| v.is_finite()),
            "interpolation data must be finite"
        );

        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = s[0];
            d[1] = s[0];
        } else {
            d[0] = end_slope(h[0], h[1], s[0], s[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
            for i in 1..n - 1 {
                if s[i - 1] * s[i] <= 0.0 {
                    d[i] = 0.0;
                } else {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
                }
            }
        }
        Ok(MonotoneCubic { x, y, d })
    }

    /// Interpolation domain `[x_first, x_last]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// Evaluates the interpolant; errors outside the domain.
    pub fn eval(&self, xq: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        ensure_domain!(
            xq >= lo && xq <= hi,
            "interpolation query {xq} outside domain [{lo}, {hi}]"
        );
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1])
    }
}

/// One-sided three-point end slope with the standard monotonicity clamps.
fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d.signum() != s0.signum() {
        0.0
    } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// Gauss-Hermite quadrature rule for weight exp(-x²).
///
/// Nodes and weights come from the symmetric tridiagonal (Golub-Welsch)
/// eigenproblem of the Hermite recurrence. Rules are cached per node count
/// behind an `Arc`, since ensemble averaging requests the same rule for every
/// point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

static RULE_CACHE: Lazy<Mutex<HashMap<usize, Arc<GaussHermite>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

impl GaussHermite {
    /// Returns the cached `n`-node rule, computing it on first use.
    pub fn rule(n: usize) -> Result<Arc<GaussHermite>> {
        ensure_domain!(
            (1..=512).contains(&n),
            "Gauss-Hermite node count must be in [1, 512], got {n}"
        );
        let mut cache = RULE_CACHE.lock().unwrap();
        if let Some(rule) = cache.get(&n) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(GaussHermite::compute(n));
        cache.insert(n, Arc::clone(&rule));
        Ok(rule)
    }

    fn compute(n: usize) -> GaussHermite {
        if n == 1 {
            return GaussHermite {
                nodes: vec![0.0],
                weights: vec![std::f64::consts::PI.sqrt()],
            };
        }
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 0..n - 1 {
            let off = (0.5 * (k + 1) as f64).sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
        let eig = jacobi.symmetric_eigen();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let v0 = eig.eigenvectors[(0, j)];
                (eig.eigenvalues[j], sqrt_pi * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Expectation of `f` under a normal distribution N(mean, sigma²).
    ///
    /// With sigma = 0 the distribution is a point mass and `f(mean)` is
    /// returned directly.
    pub fn expect<F>(&self, mean: f64, sigma: f64, f: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        if sigma == 0.0 {
            return f(mean);
        }
        let scale = std::f64::consts::SQRT_2 * sigma;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum::<f64>()
            * inv_sqrt_pi
    }
}

/// Maximum absolute slope of sampled data by central differences (one-sided
/// at the ends), returning `(value, location)`.
pub fn max_abs_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len();
    let mut best = f64::NEG_INFINITY;
    let mut best_x = x[0];
    for i in 0..n {
        let slope = if i == 0 {
            (y[1] - y[0]) / (x[1] - x[0])
        } else if i == n - 1 {
            (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2])
        } else {
            (y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1])
        };
        if slope.abs() > best {
            best = slope.abs();
            best_x = x[i];
        }
    }
    Some((best, best_x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        for n in [4usize, 5, 7, 10, 11] {
            let values: Vec<f64> = (0..=n)
                .map(|i| {
                    let x = i as f64 * h;
                    x * x * x - 2.0 * x + 1.0
                })
                .collect();
            let b = n as f64 * h;
            let exact = b * b * b * b / 4.0 - b * b + b;
            assert_relative_eq!(simpson_uniform(&values, h), exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn simpson_sine_converges() {
        let n = 256;
        let h = std::f64::consts::PI / n as f64;
        let values: Vec<f64> = (0..=n).map(|i| (i as f64 * h).sin()).collect();
        assert_relative_eq!(simpson_uniform(&values, h), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn adaptive_simpson_matches_closed_forms() {
        let v = adaptive_simpson(|x| x.exp(), 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(v, std::f64::consts::E - 1.0, max_relative = 1e-11);
        let v = adaptive_simpson(|x| (-x).exp(), 0.0, 50.0, 1e-12, 1e-300).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn adaptive_simpson_rejects_bad_bounds() {
        assert!(adaptive_simpson(|x| x, 1.0, 0.0, 1e-9, 0.0).is_err());
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert_relative_eq!(r, std::f64::consts::SQRT_2, max_relative = 1e-12);
    }

    #[test]
    fn bisect_requires_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn monotone_cubic_passes_through_anchors_and_stays_monotone() {
        let x = vec![0.0, 3.0, 6.0];
        let y = vec![8.95, 10.47, 10.95];
        let interp = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_relative_eq!(interp.eval(*xi).unwrap(), *yi, max_relative = 1e-14);
        }
        let mut prev = interp.eval(0.0).unwrap();
        for i in 1..=600 {
            let cur = interp.eval(6.0 * i as f64 / 600.0).unwrap();
            assert!(cur >= prev, "not monotone at sample {i}");
            prev = cur;
        }
    }

    #[test]
    fn monotone_cubic_rejects_disordered_abscissae() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn monotone_cubic_errors_outside_domain() {
        let interp = MonotoneCubic::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(interp.eval(-0.1).is_err());
        assert!(interp.eval(1.1).is_err());
    }

    #[test]
    fn gauss_hermite_integrates_gaussian_moments() {
        let rule = GaussHermite::rule(32).unwrap();
        let total: f64 = rule.weights.iter().sum();
        assert_relative_eq!(total, std::f64::consts::PI.sqrt(), max_relative = 1e-12);
        let second: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x * x)
            .sum();
        assert_relative_eq!(
            second,
            0.5 * std::f64::consts::PI.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gauss_hermite_cosine_matches_characteristic_function() {
        let rule = GaussHermite::rule(64).unwrap();
        let mu = 0.3;
        let sigma = 1.7;
        let kappa = 2.1;
        let got = rule.expect(mu, sigma, |b| (kappa * b).cos());
        let want = (-0.5 * kappa * kappa * sigma * sigma).exp() * (kappa * mu).cos();
        assert_relative_eq!(got, want, max_relative = 1e-10);
    }

    #[test]
    fn gauss_hermite_zero_sigma_is_point_mass() {
        let rule = GaussHermite::rule(16).unwrap();
        assert_eq!(rule.expect(1.25, 0.0, |b| b * b), 1.25 * 1.25);
    }

    #[test]
    fn rule_cache_returns_same_instance() {
        let a = GaussHermite::rule(48).unwrap();
        let b = GaussHermite::rule(48).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn max_abs_slope_of_line_is_its_gradient() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (slope, _) = max_abs_slope(&x, &y).unwrap();
        assert_relative_eq!(slope, 3.0, max_relative = 1e-12);
    }
}
