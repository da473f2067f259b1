//! Quantum-emitter description and the built-in emitter presets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::lorentzian_area;
use crate::spectra::{Channel, Spectrum};
use crate::units::{energy_width_to_nm, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpec {
    /// ZPL center in nm.
    pub zpl_wavelength: f64,
    /// ZPL FWHM in nm.
    pub zpl_fwhm: f64,
    /// Radiative lifetime in ns.
    pub radiative_lifetime: f64,
    pub quantum_efficiency: f64,
    /// In-plane dipole orientation relative to the cavity field, degrees.
    pub dipole_azimuth: f64,
    pub label: String,
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("zpl_wavelength", self.zpl_wavelength),
            ("zpl_fwhm", self.zpl_fwhm),
            ("radiative_lifetime", self.radiative_lifetime),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(Error::domain(format!(
                "quantum_efficiency must lie in (0, 1], got {}",
                self.quantum_efficiency
            )));
        }
        if !self.dipole_azimuth.is_finite() {
            return Err(Error::domain("dipole_azimuth must be finite"));
        }
        Ok(())
    }

    /// Emitter quality factor λ/Δλ.
    pub fn q_emitter(&self) -> f64 {
        self.zpl_wavelength / self.zpl_fwhm
    }

    /// Γ_r = 1/τ_r in 1/ns.
    pub fn radiative_rate(&self) -> f64 {
        1.0 / self.radiative_lifetime
    }

    /// Γ_nr = Γ_r (1/η_qe − 1).
    pub fn nonradiative_rate(&self) -> f64 {
        self.radiative_rate() * (1.0 / self.quantum_efficiency - 1.0)
    }

    pub fn lineshape(&self) -> ZplLineshape {
        ZplLineshape {
            kind: LineshapeKind::Lorentzian,
            center: self.zpl_wavelength,
            fwhm: self.zpl_fwhm,
            peak_area: 1.0,
        }
    }
}

/// Quantum efficiency Γ_r/(Γ_r + Γ_nr).
pub fn quantum_efficiency(radiative_rate: f64, nonradiative_rate: f64) -> f64 {
    radiative_rate / (radiative_rate + nonradiative_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineshapeKind {
    Lorentzian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZplLineshape {
    pub kind: LineshapeKind,
    pub center: f64,
    pub fwhm: f64,
    /// Integral over all wavelengths.
    pub peak_area: f64,
}

impl ZplLineshape {
    pub fn eval(&self, wavelength: f64) -> f64 {
        match self.kind {
            LineshapeKind::Lorentzian => {
                self.peak_area * lorentzian_area(wavelength, self.center, self.fwhm)
            }
        }
    }

    /// Analytic integral over `[lo, hi]`.
    pub fn area_between(&self, lo: f64, hi: f64) -> f64 {
        match self.kind {
            LineshapeKind::Lorentzian => {
                let hw = 0.5 * self.fwhm;
                self.peak_area / PI
                    * (((hi - self.center) / hw).atan() - ((lo - self.center) / hw).atan())
            }
        }
    }
}

/// Built-in emitter classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// hBN defect at room temperature.
    #[serde(rename = "hbn_rt")]
    HbnRt,
    /// hBN defect at cryogenic temperature, lifetime-limited.
    #[serde(rename = "hbn_cryo")]
    HbnCryo,
    #[serde(rename = "wse2")]
    Wse2,
    #[serde(rename = "mote2_1100")]
    Mote2_1100,
    #[serde(rename = "mote2_1500")]
    Mote2_1500,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::HbnRt,
        Preset::HbnCryo,
        Preset::Wse2,
        Preset::Mote2_1100,
        Preset::Mote2_1500,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::HbnRt => "hbn_rt",
            Preset::HbnCryo => "hbn_cryo",
            Preset::Wse2 => "wse2",
            Preset::Mote2_1100 => "mote2_1100",
            Preset::Mote2_1500 => "mote2_1500",
        }
    }

    pub fn spec(self) -> EmitterSpec {
        let (wavelength, lifetime, qe, fwhm) = match self {
            Preset::HbnRt => (610.0, 1.2, 0.87, 7.2),
            Preset::HbnCryo => (610.0, 1.2, 0.87, lifetime_limited_fwhm(1.2, 610.0)),
            Preset::Wse2 => (750.0, 4.0, 0.05, energy_width_to_nm(750.0, 100e-6)),
            Preset::Mote2_1100 => (1100.0, 22.2, 0.07, lifetime_limited_fwhm(22.2, 1100.0)),
            Preset::Mote2_1500 => (1500.0, 1000.0, 0.86, lifetime_limited_fwhm(1000.0, 1500.0)),
        };
        EmitterSpec {
            zpl_wavelength: wavelength,
            zpl_fwhm: fwhm,
            radiative_lifetime: lifetime,
            quantum_efficiency: qe,
            dipole_azimuth: 0.0,
            label: self.name().to_string(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Lookup {
                kind: "emitter preset",
                name: s.to_string(),
            })
    }
}

pub fn preset(name: &str) -> Result<EmitterSpec> {
    Ok(name.parse::<Preset>()?.spec())
}

/// Unit-area Lorentzian ZPL sampled on `wavelengths`.
pub fn zpl_spectrum(spec: &EmitterSpec, wavelengths: &[f64]) -> Result<Spectrum> {
    spec.validate()?;
    let shape = spec.lineshape();
    let values = wavelengths.iter().map(|&l| shape.eval(l)).collect();
    let mut s = Spectrum::new(wavelengths.to_vec(), values, Channel::FreeSpace)?;
    s.metadata_mut()
        .insert("emitter".into(), spec.label.clone());
    Ok(s)
}

/// Transform-limited FWHM Δλ = λ²/(2π c τ) in nm.
pub fn lifetime_limited_fwhm(radiative_lifetime: f64, wavelength: f64) -> f64 {
    wavelength * wavelength / (2.0 * PI * SPEED_OF_LIGHT * radiative_lifetime)
}
