//! Modeling toolkit for Purcell-enhanced quantum emitters coupled to
//! integrated ring resonators: resonator and emitter models, coupling
//! efficiency, spectral synthesis and extraction, a Lindblad cross-check,
//! data fitting and parameter sweeps.
//!
//! Units throughout: wavelengths in nm, times in ns, rates in rad/ns.

// `!(x > 0.0)` style checks are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod emitter;
pub mod error;
pub mod fitdata;
pub mod io;
pub mod lm;
pub mod numeric;
pub mod oracle;
pub mod resonator;
pub mod spectra;
pub mod sweep;
pub mod units;

pub use coupling::{CoupledSystem, Directions, EfficiencyBreakdown, Regime};
pub use emitter::{preset, EmitterSpec, Preset};
pub use error::{Error, Result};
pub use resonator::ResonatorSpec;
pub use spectra::{Channel, PathEfficiencies, Spectrum};
