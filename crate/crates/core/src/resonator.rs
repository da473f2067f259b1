//! Ring-resonator spectral model: loaded-Q composition, free spectral range,
//! resonance comb, Lorentzian-dip transmission, and a power-law model for the
//! extra scattering loss introduced by an embedded flake.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::lorentzian_peak;
use crate::spectra::{Channel, Spectrum};

/// Geometry and loss budget of a ring resonator.
///
/// Quality factors may be `f64::INFINITY` to switch a loss channel off;
/// `q_scatter` is `None` when no flake is embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpec {
    /// Wavelength (nm) at which FSR and linewidth are evaluated.
    pub center_wavelength: f64,
    /// n_g·L in nm.
    pub group_index_times_length: f64,
    pub q_intrinsic: f64,
    pub q_coupling: f64,
    pub q_scatter: Option<f64>,
    /// Mode volume in units of (λ/n)³.
    pub mode_volume: f64,
    pub cavity_index: f64,
    /// Anchor wavelength (nm) of one comb line.
    pub reference_resonance: f64,
}

impl ResonatorSpec {
    pub fn validate(&self) -> Result<()> {
        check_q("q_intrinsic", self.q_intrinsic)?;
        check_q("q_coupling", self.q_coupling)?;
        if let Some(q) = self.q_scatter {
            check_q("q_scatter", q)?;
        }
        positive_finite("center_wavelength", self.center_wavelength)?;
        positive_finite("group_index_times_length", self.group_index_times_length)?;
        positive_finite("mode_volume", self.mode_volume)?;
        positive_finite("reference_resonance", self.reference_resonance)?;
        if !(self.cavity_index > 1.0) || !self.cavity_index.is_finite() {
            return Err(Error::domain(format!(
                "cavity_index must be a finite value > 1, got {}",
                self.cavity_index
            )));
        }
        Ok(())
    }

    pub fn loaded_q(&self) -> Result<f64> {
        loaded_q(self.q_intrinsic, self.q_coupling, self.q_scatter)
    }

    pub fn fsr(&self) -> Result<f64> {
        fsr(self.center_wavelength, self.group_index_times_length)
    }

    /// Cavity FWHM λ₀/Q in nm.
    pub fn linewidth(&self) -> Result<f64> {
        Ok(self.center_wavelength / self.loaded_q()?)
    }

    /// Loss rate (in units of 1/Q) of every channel except the bus coupling.
    pub fn non_coupling_loss(&self) -> f64 {
        1.0 / self.q_intrinsic + self.q_scatter.map_or(0.0, |q| 1.0 / q)
    }

    /// Returns a copy whose `q_coupling` is back-solved so that the loaded Q
    /// equals `q_loaded`, keeping intrinsic and scattering losses fixed.
    pub fn with_loaded_q(&self, q_loaded: f64) -> Result<Self> {
        check_q("q_loaded", q_loaded)?;
        let coupling_rate = 1.0 / q_loaded - self.non_coupling_loss();
        if !(coupling_rate > 0.0) {
            return Err(Error::domain(format!(
                "loaded Q {q_loaded} is not reachable: non-coupling losses alone give Q = {}",
                1.0 / self.non_coupling_loss()
            )));
        }
        Ok(Self {
            q_coupling: 1.0 / coupling_rate,
            ..self.clone()
        })
    }
}

/// A set of resonance lines within a wavelength window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceComb {
    pub line_centers: Vec<f64>,
    pub linewidth_fwhm: f64,
    pub fsr: f64,
}

fn check_q(name: &str, q: f64) -> Result<()> {
    if q > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be > 0, got {q}")))
    }
}

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

/// Loaded quality factor from reciprocal addition of the loss channels.
/// Infinite inputs contribute no loss.
pub fn loaded_q(q_i: f64, q_c: f64, q_sc: Option<f64>) -> Result<f64> {
    check_q("q_intrinsic", q_i)?;
    check_q("q_coupling", q_c)?;
    if let Some(q) = q_sc {
        check_q("q_scatter", q)?;
    }
    let rate = 1.0 / q_i + 1.0 / q_c + q_sc.map_or(0.0, |q| 1.0 / q);
    Ok(1.0 / rate)
}

/// Free spectral range λ²/(n_g·L).
pub fn fsr(wavelength: f64, group_index_times_length: f64) -> Result<f64> {
    positive_finite("wavelength", wavelength)?;
    positive_finite("group_index_times_length", group_index_times_length)?;
    Ok(wavelength * wavelength / group_index_times_length)
}

/// Comb lines anchored at `spec.reference_resonance` that fall inside
/// `window` (inclusive). A reversed or degenerate window yields an empty comb.
pub fn resonance_comb(spec: &ResonatorSpec, window: [f64; 2]) -> Result<ResonanceComb> {
    spec.validate()?;
    let fsr = spec.fsr()?;
    let linewidth_fwhm = spec.linewidth()?;
    let [lo, hi] = window;
    let line_centers = comb_lines(spec.reference_resonance, fsr, lo, hi);
    Ok(ResonanceComb {
        line_centers,
        linewidth_fwhm,
        fsr,
    })
}

pub(crate) fn comb_lines(anchor: f64, fsr: f64, lo: f64, hi: f64) -> Vec<f64> {
    if !(hi >= lo) {
        return Vec::new();
    }
    let m_lo = ((lo - anchor) / fsr).ceil() as i64;
    let m_hi = ((hi - anchor) / fsr).floor() as i64;
    (m_lo..=m_hi)
        .map(|m| anchor + m as f64 * fsr)
        .filter(|&c| c >= lo && c <= hi)
        .collect()
}

/// Dip depth 4x(1-x) with x = Q/Q_c, clamped to [0, 1].
pub fn dip_depth(q_loaded: f64, q_coupling: f64) -> f64 {
    let x = q_loaded / q_coupling;
    (4.0 * x * (1.0 - x)).clamp(0.0, 1.0)
}

/// Lorentzian-dip bus transmission on a unit baseline.
pub fn transmission(spec: &ResonatorSpec, wavelengths: &[f64]) -> Result<Spectrum> {
    spec.validate()?;
    if wavelengths.is_empty() {
        return Spectrum::new(Vec::new(), Vec::new(), Channel::Transmission);
    }
    let q = spec.loaded_q()?;
    let fsr = spec.fsr()?;
    let width = spec.center_wavelength / q;
    let depth = dip_depth(q, spec.q_coupling);
    let (lo, hi) = (wavelengths[0], wavelengths[wavelengths.len() - 1]);
    // Only lines inside the sampled window contribute.
    let lines = comb_lines(spec.reference_resonance, fsr, lo, hi);
    let values = wavelengths
        .iter()
        .map(|&l| {
            let dip: f64 = lines.iter().map(|&c| lorentzian_peak(l, c, width)).sum();
            (1.0 - depth * dip).clamp(0.0, 1.0)
        })
        .collect();
    Spectrum::new(wavelengths.to_vec(), values, Channel::Transmission)
}

/// Power-law scattering loss Q_sc = amplitude / thickness^exponent.
/// Zero thickness means no flake and returns `None`.
pub fn q_scatter_model(thickness: f64, amplitude: f64, exponent: f64) -> Result<Option<f64>> {
    if !(thickness >= 0.0) || !thickness.is_finite() {
        return Err(Error::domain(format!(
            "thickness must be >= 0, got {thickness}"
        )));
    }
    positive_finite("amplitude", amplitude)?;
    positive_finite("exponent", exponent)?;
    if thickness == 0.0 {
        return Ok(None);
    }
    Ok(Some(amplitude / thickness.powf(exponent)))
}
