//! Physical constants shared across the toolkit.

use std::f64::consts::TAU;

/// Electron gyromagnetic ratio used throughout, in rad s^-1 T^-1.
///
/// The value 2π × 28 GHz/T folds g_e, μ_B and ħ into a single conversion
/// between magnetic field and angular precession frequency.
pub const GAMMA_E: f64 = TAU * 28.0e9;

/// Absorption cross section of a single NV center at 532 nm, in m^2.
pub const SIGMA_NV: f64 = 1.0e-20;

/// Atom number density of diamond, in m^-3.
pub const DIAMOND_ATOM_DENSITY: f64 = 1.76e29;

/// Bundle of the constants entering sensitivity and photon-budget formulas.
///
/// All fields are strictly positive. The defaults are the values above;
/// constructing a custom set lets tests probe scaling behaviour.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhysicalConstants {
    /// Gyromagnetic ratio (rad s^-1 T^-1).
    pub gamma_e: f64,
    /// Single-NV absorption cross section (m^2).
    pub sigma_nv: f64,
    /// Diamond atom number density (m^-3).
    pub diamond_atom_density: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            gamma_e: GAMMA_E,
            sigma_nv: SIGMA_NV,
            diamond_atom_density: DIAMOND_ATOM_DENSITY,
        }
    }
}

impl PhysicalConstants {
    /// Builds a custom constant set, requiring every entry to be positive
    /// and finite.
    pub fn new(gamma_e: f64, sigma_nv: f64, diamond_atom_density: f64) -> Option<Self> {
        let all_ok = [gamma_e, sigma_nv, diamond_atom_density]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        all_ok.then_some(PhysicalConstants {
            gamma_e,
            sigma_nv,
            diamond_atom_density,
        })
    }

    /// Converts an NV concentration in ppm of diamond atom sites to a number
    /// density in m^-3.
    pub fn nv_density(&self, ppm: f64) -> f64 {
        ppm * 1e-6 * self.diamond_atom_density
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_matches_28_ghz_per_tesla() {
        assert_relative_eq!(GAMMA_E / TAU, 28.0e9, max_relative = 1e-15);
        assert_relative_eq!(GAMMA_E, 1.7592918860e11, max_relative = 1e-9);
    }

    #[test]
    fn nv_density_scales_linearly_with_ppm() {
        let c = PhysicalConstants::default();
        assert_relative_eq!(c.nv_density(0.3), 5.28e22, max_relative = 1e-12);
        assert_relative_eq!(c.nv_density(0.019), 3.344e21, max_relative = 1e-12);
    }

    #[test]
    fn rejects_nonpositive_entries() {
        assert!(PhysicalConstants::new(0.0, SIGMA_NV, DIAMOND_ATOM_DENSITY).is_none());
        assert!(PhysicalConstants::new(GAMMA_E, -1.0, DIAMOND_ATOM_DENSITY).is_none());
        assert!(PhysicalConstants::new(GAMMA_E, SIGMA_NV, f64::NAN).is_none());
    }
}
