//! Simulation and analysis toolkit for dc magnetometry with mechanically
//! modulated flux concentrators.
//!
//! Ferromagnetic concentrators multiply a dc field at an NV-diamond sensor
//! by the gap-dependent magnification G; vibrating a soft-magnetic chip in
//! the gap turns the concentrated dc field into an ac field at the
//! mechanical frequency, which a synchronized spin-echo sequence converts
//! into phase. The crate models every stage of that chain:
//!
//! - [`spindyn`]: Ramsey and spin-echo signal models, phase accumulation
//!   under arbitrary field waveforms, fringes, slopes, and decay fitting.
//! - [`fluxmod`]: concentrator magnification vs. gap, chip-height transfer
//!   curves, modulation efficiency, drive phase optimization.
//! - [`sensitivity`]: the photon-shot-noise sensitivity budget and the
//!   factorized improvement ledger between two configurations.
//! - [`inhomogeneity`]: ensemble averaging over Gaussian magnification and
//!   remanence dispersion, effective-contrast reduction.
//! - [`photon`]: detected photons per readout from laser, absorption, and
//!   collection parameters.
//! - [`dsp`]: magnetometer record synthesis and Welch amplitude spectral
//!   density with tone recovery.
//! - [`scenario`]: plain-text configuration tying all blocks together, with
//!   bundled parameter tables.
//!
//! Units are SI throughout: tesla, seconds, hertz, meters, watts, radians.

pub mod consts;
pub mod dsp;
pub mod error;
pub mod fluxmod;
pub mod inhomogeneity;
pub mod io;
pub mod numeric;
pub mod params;
pub mod photon;
pub mod scenario;
pub mod sensitivity;
pub mod spindyn;

pub use consts::PhysicalConstants;
pub use error::{Error, Result};
pub use params::{validate_params, ProtocolParams, ValidationReport};
pub use scenario::ScenarioConfig;
pub use sensitivity::{evaluate_sensitivity, improvement_ledger, ImprovementLedger};
pub use spindyn::{PulseSequence, SequenceKind};
