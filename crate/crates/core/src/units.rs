//! Physical constants and unit conversions.
//!
//! Wavelengths are in nm, times in ns and angular rates in rad/ns everywhere
//! in the crate.

use std::f64::consts::PI;

/// Speed of light in nm/ns.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// h·c in eV·nm.
pub const HC_EV_NM: f64 = 1_239.841_984_332_003;

/// Angular optical frequency ω = 2πc/λ in rad/ns.
pub fn angular_frequency(wavelength_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / wavelength_nm
}

/// Converts a wavelength linewidth (FWHM) into an angular-frequency linewidth.
pub fn linewidth_to_angular(wavelength_nm: f64, fwhm_nm: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT * fwhm_nm / (wavelength_nm * wavelength_nm)
}

/// Inverse of [`linewidth_to_angular`].
pub fn angular_to_linewidth(wavelength_nm: f64, rate: f64) -> f64 {
    rate * wavelength_nm * wavelength_nm / (2.0 * PI * SPEED_OF_LIGHT)
}

/// Photon energy in eV.
pub fn photon_energy_ev(wavelength_nm: f64) -> f64 {
    HC_EV_NM / wavelength_nm
}

/// Converts an energy linewidth (eV) at a given wavelength into nm.
pub fn energy_width_to_nm(wavelength_nm: f64, width_ev: f64) -> f64 {
    wavelength_nm * width_ev / photon_energy_ev(wavelength_nm)
}
