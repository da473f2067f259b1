//! Emission spectra: forward synthesis of the free-space and waveguide
//! channels, extraction of the spectral Purcell factor F_s(λ) and coupling
//! efficiency β_s(λ) from a measured pair, and background correction of g²(0).
//!
//! The forward model splits the ZPL spectrum S(λ) between the two channels
//! with the spectral coupling efficiency β_s(λ) = F(λ)/(1 + F(λ)),
//! F(λ) = F_peak·Σ_m L_m(λ):
//!
//! ```text
//! I_fb(λ)  = S(λ)·(1 − β_s(λ))
//! I_cav(λ) = S(λ)·β_s(λ)·η_out
//! ```
//!
//! so that I_cav/(η_out·I_fb) reproduces F(λ) exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::coupling::{beta_of, eta_out, purcell_good, CoupledSystem};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, interp_linear, lorentzian_peak, parabolic_vertex};
use crate::resonator::comb_lines;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    FreeSpace,
    Waveguide,
    Transmission,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::FreeSpace => "free_space",
            Channel::Waveguide => "waveguide",
            Channel::Transmission => "transmission",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "free_space" => Ok(Channel::FreeSpace),
            "waveguide" => Ok(Channel::Waveguide),
            "transmission" => Ok(Channel::Transmission),
            other => Err(Error::Lookup {
                kind: "spectrum channel",
                name: other.to_string(),
            }),
        }
    }
}

/// A sampled (wavelength, intensity) trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    wavelengths: Vec<f64>,
    intensities: Vec<f64>,
    channel: Channel,
    metadata: BTreeMap<String, String>,
}

impl Spectrum {
    pub fn new(wavelengths: Vec<f64>, intensities: Vec<f64>, channel: Channel) -> Result<Self> {
        if wavelengths.len() != intensities.len() {
            return Err(Error::data(format!(
                "{} wavelengths but {} intensities",
                wavelengths.len(),
                intensities.len()
            )));
        }
        if wavelengths.iter().any(|w| !w.is_finite()) {
            return Err(Error::data("non-finite wavelength"));
        }
        if let Some(i) = wavelengths.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::data(format!(
                "wavelengths must be strictly increasing (row {})",
                i + 1
            )));
        }
        if let Some(v) = intensities.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::data(format!(
                "intensities must be finite and >= 0, got {v}"
            )));
        }
        Ok(Self {
            wavelengths,
            intensities,
            channel,
            metadata: BTreeMap::new(),
        })
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    /// Multiplies every intensity by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            intensities: self.intensities.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Linear interpolation at `wavelength`; `None` outside the sampled range.
    pub fn interpolate(&self, wavelength: f64) -> Option<f64> {
        interp_linear(&self.wavelengths, &self.intensities, wavelength)
    }

    fn mean_spacing(&self) -> f64 {
        let n = self.wavelengths.len();
        if n < 2 {
            f64::INFINITY
        } else {
            (self.wavelengths[n - 1] - self.wavelengths[0]) / (n - 1) as f64
        }
    }
}

/// Spectral Purcell factor at a comb-line center: the textbook F scaled by
/// the mode overlap. No linewidth-ratio factor applies spectrally.
pub fn spectral_peak_purcell(sys: &CoupledSystem) -> Result<f64> {
    let q = sys.resonator.loaded_q()?;
    Ok(purcell_good(q, sys.resonator.mode_volume)? * sys.effective_overlap())
}

/// F(λ) = F_peak·Σ_m L_m(λ) over the comb lines that fall inside the sampled
/// window. The comb is anchored on the line nearest the ZPL, i.e. at
/// `zpl − detuning`.
pub fn spectral_purcell_profile(
    sys: &CoupledSystem,
    peak_purcell: f64,
    wavelengths: &[f64],
) -> Result<Vec<f64>> {
    if wavelengths.is_empty() {
        return Ok(Vec::new());
    }
    let fsr = sys.resonator.fsr()?;
    let width = sys.resonator.linewidth()?;
    let lines = comb_lines(
        sys.nearest_line(),
        fsr,
        wavelengths[0],
        wavelengths[wavelengths.len() - 1],
    );
    Ok(wavelengths
        .iter()
        .map(|&l| {
            peak_purcell
                * lines
                    .iter()
                    .map(|&c| lorentzian_peak(l, c, width))
                    .sum::<f64>()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedSpectra {
    pub free_space: Spectrum,
    pub waveguide: Spectrum,
}

/// Both collection channels for `sys`, with the spectral peak Purcell factor
/// taken from the system itself.
pub fn synthesize_spectra(sys: &CoupledSystem, wavelengths: &[f64]) -> Result<SynthesizedSpectra> {
    sys.validate()?;
    let peak = spectral_peak_purcell(sys)?;
    synthesize_spectra_with_peak(sys, peak, wavelengths)
}

/// Like [`synthesize_spectra`] with an explicit spectral peak Purcell factor.
pub fn synthesize_spectra_with_peak(
    sys: &CoupledSystem,
    peak_purcell: f64,
    wavelengths: &[f64],
) -> Result<SynthesizedSpectra> {
    sys.validate()?;
    if !(peak_purcell >= 0.0) {
        return Err(Error::domain(format!(
            "peak Purcell factor must be >= 0, got {peak_purcell}"
        )));
    }
    let q = sys.resonator.loaded_q()?;
    let out = eta_out(q, sys.resonator.q_coupling, sys.collection_directions)?;
    let shape = sys.emitter.lineshape();
    let profile = spectral_purcell_profile(sys, peak_purcell, wavelengths)?;
    let (fb, cav): (Vec<f64>, Vec<f64>) = wavelengths
        .iter()
        .zip(&profile)
        .map(|(&l, &f)| {
            let s = shape.eval(l);
            let b = beta_of(f);
            (s * (1.0 - b), s * b * out)
        })
        .unzip();
    let mut free_space = Spectrum::new(wavelengths.to_vec(), fb, Channel::FreeSpace)?;
    let mut waveguide = Spectrum::new(wavelengths.to_vec(), cav, Channel::Waveguide)?;
    for s in [&mut free_space, &mut waveguide] {
        let m = s.metadata_mut();
        m.insert("emitter".into(), sys.emitter.label.clone());
        m.insert("peak_purcell".into(), peak_purcell.to_string());
        m.insert("eta_out".into(), out.to_string());
        m.insert("detuning_nm".into(), sys.detuning.to_string());
    }
    Ok(SynthesizedSpectra {
        free_space,
        waveguide,
    })
}

/// Waveguide channel only.
pub fn synthesize_waveguide_spectrum(sys: &CoupledSystem, wavelengths: &[f64]) -> Result<Spectrum> {
    Ok(synthesize_spectra(sys, wavelengths)?.waveguide)
}

/// A value with its 1σ uncertainty.
/// Poisson counting noise for an exposure of `exposure` counts per unit
/// intensity. The result stays in intensity units; the draw depends only on
/// `(seed, stream)`.
pub fn with_shot_noise(
    spectrum: &Spectrum,
    exposure: f64,
    seed: u64,
    stream: u64,
) -> Result<Spectrum> {
    if !(exposure > 0.0 && exposure.is_finite()) {
        return Err(Error::domain(format!(
            "exposure must be finite and > 0, got {exposure}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let noisy = spectrum
        .intensities()
        .iter()
        .map(|&v| {
            let mean = v * exposure;
            let counts = if mean > 0.0 {
                Poisson::new(mean).map_or(mean, |d| d.sample(&mut rng))
            } else {
                0.0
            };
            counts / exposure
        })
        .collect();
    let mut out = Spectrum::new(spectrum.wavelengths().to_vec(), noisy, spectrum.channel())?;
    *out.metadata_mut() = spectrum.metadata().clone();
    out.metadata_mut()
        .insert("exposure".into(), exposure.to_string());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    fn relative_variance(&self) -> f64 {
        (self.sigma / self.value).powi(2)
    }
}

/// Collection-path efficiencies entering the Purcell calibration:
/// objective, top path, ring out-coupling, facet, and side path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEfficiencies {
    pub eta_ob: Measured,
    pub eta_top: Measured,
    pub eta_out: Measured,
    pub eta_facet: Measured,
    pub eta_side: Measured,
}

impl Default for PathEfficiencies {
    fn default() -> Self {
        let one = Measured::exact(1.0);
        Self {
            eta_ob: one,
            eta_top: one,
            eta_out: one,
            eta_facet: one,
            eta_side: one,
        }
    }
}

impl PathEfficiencies {
    fn all(&self) -> [(&'static str, Measured); 5] {
        [
            ("eta_ob", self.eta_ob),
            ("eta_top", self.eta_top),
            ("eta_out", self.eta_out),
            ("eta_facet", self.eta_facet),
            ("eta_side", self.eta_side),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in self.all() {
            if !(m.value > 0.0 && m.value <= 1.0) {
                return Err(Error::domain(format!(
                    "{name} must lie in (0, 1], got {}",
                    m.value
                )));
            }
            if !(m.sigma >= 0.0) {
                return Err(Error::domain(format!("{name} uncertainty must be >= 0")));
            }
        }
        Ok(())
    }

    /// η_ob·η_top / (η_out·η_facet·η_side)
    pub fn ratio_factor(&self) -> f64 {
        self.eta_ob.value * self.eta_top.value
            / (self.eta_out.value * self.eta_facet.value * self.eta_side.value)
    }

    /// Relative variance of [`Self::ratio_factor`] to first order.
    pub fn ratio_relative_variance(&self) -> f64 {
        self.all().iter().map(|(_, m)| m.relative_variance()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Converts intensities to photon counts for the shot-noise term
    /// (counts = intensity·exposure). `None` leaves shot noise out.
    pub exposure: Option<f64>,
    /// Overrides the ZPL center estimated from the summed channels.
    pub zpl_center: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPurcellResult {
    pub f_s_peak: Measured,
    pub beta_s_peak: Measured,
    pub beta_integrated: Measured,
    /// ZPL center minus the evaluated comb line, nm.
    pub detuning: f64,
    pub peak_wavelength: f64,
    pub zpl_center: f64,
    pub excluded_points: usize,
    pub warnings: Vec<String>,
}

/// Pointwise spectral Purcell factor on the common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPurcellCurve {
    pub wavelengths: Vec<f64>,
    /// `None` where the free-space intensity is zero.
    pub purcell: Vec<Option<f64>>,
}

struct Aligned {
    grid: Vec<f64>,
    fb: Vec<f64>,
    cav: Vec<f64>,
}

fn align(top: &Spectrum, side: &Spectrum) -> Result<Aligned> {
    if top.len() < 2 || side.len() < 2 {
        return Err(Error::domain("both spectra need at least two samples"));
    }
    let lo = top.wavelengths[0].max(side.wavelengths[0]);
    let hi = top.wavelengths[top.len() - 1].min(side.wavelengths[side.len() - 1]);
    if !(hi > lo) {
        return Err(Error::domain(format!(
            "wavelength ranges do not overlap: [{}, {}] vs [{}, {}]",
            top.wavelengths[0],
            top.wavelengths[top.len() - 1],
            side.wavelengths[0],
            side.wavelengths[side.len() - 1]
        )));
    }
    let finer = if side.mean_spacing() < top.mean_spacing() {
        side
    } else {
        top
    };
    let grid: Vec<f64> = finer
        .wavelengths
        .iter()
        .copied()
        .filter(|&l| l >= lo && l <= hi)
        .collect();
    if grid.len() < 3 {
        return Err(Error::domain(
            "fewer than three samples in the overlapping range",
        ));
    }
    let fb = grid
        .iter()
        .map(|&l| top.interpolate(l).unwrap_or(0.0))
        .collect();
    let cav = grid
        .iter()
        .map(|&l| side.interpolate(l).unwrap_or(0.0))
        .collect();
    Ok(Aligned { grid, fb, cav })
}

pub fn spectral_purcell_curve(
    top: &Spectrum,
    side: &Spectrum,
    eff: &PathEfficiencies,
) -> Result<SpectralPurcellCurve> {
    eff.validate()?;
    let a = align(top, side)?;
    let k = eff.ratio_factor();
    let purcell =
        a.fb.iter()
            .zip(&a.cav)
            .map(|(&fb, &cav)| (fb > 0.0).then(|| k * cav / fb))
            .collect();
    Ok(SpectralPurcellCurve {
        wavelengths: a.grid,
        purcell,
    })
}

pub fn extract_spectral_purcell(
    top: &Spectrum,
    side: &Spectrum,
    eff: &PathEfficiencies,
) -> Result<SpectralPurcellResult> {
    extract_spectral_purcell_with(top, side, eff, &ExtractOptions::default())
}

pub fn extract_spectral_purcell_with(
    top: &Spectrum,
    side: &Spectrum,
    eff: &PathEfficiencies,
    opts: &ExtractOptions,
) -> Result<SpectralPurcellResult> {
    eff.validate()?;
    if let Some(e) = opts.exposure {
        if !(e > 0.0) {
            return Err(Error::domain("exposure must be > 0"));
        }
    }
    let Aligned { grid, fb, cav } = align(top, side)?;
    let k = eff.ratio_factor();
    let mut warnings = Vec::new();

    let excluded_points = fb.iter().filter(|&&v| v <= 0.0).count();
    if excluded_points > 0 {
        warnings.push(format!(
            "{excluded_points} points with zero free-space intensity excluded"
        ));
    }
    // Zero-intensity points get F_s = 0 so they never win the peak search.
    let f_s: Vec<f64> = fb
        .iter()
        .zip(&cav)
        .map(|(&fb, &cav)| if fb > 0.0 { k * cav / fb } else { 0.0 })
        .collect();

    // Total emitted spectral power, referred back to the emitter.
    let path_top = eff.eta_ob.value * eff.eta_top.value;
    let path_side = eff.eta_out.value * eff.eta_facet.value * eff.eta_side.value;
    let total: Vec<f64> = fb
        .iter()
        .zip(&cav)
        .map(|(&fb, &cav)| fb / path_top + cav / path_side)
        .collect();

    let zpl_center = match opts.zpl_center {
        Some(c) => c,
        None => {
            let i = argmax(&total);
            parabolic_vertex(&grid, &total, i).0
        }
    };

    let f_max = f_s.iter().copied().fold(0.0, f64::max);
    let (peak_wavelength, f_peak) = if f_max > 0.0 {
        let threshold = 0.5 * f_max;
        let n = f_s.len();
        (0..n)
            .filter(|&i| {
                f_s[i] >= threshold
                    && (i == 0 || f_s[i] >= f_s[i - 1])
                    && (i + 1 == n || f_s[i] > f_s[i + 1])
            })
            .map(|i| parabolic_vertex(&grid, &f_s, i))
            .min_by(|a, b| {
                (a.0 - zpl_center)
                    .abs()
                    .total_cmp(&(b.0 - zpl_center).abs())
            })
            .unwrap_or((zpl_center, 0.0))
    } else {
        warnings.push("no cavity signal: spectral Purcell factor is zero everywhere".into());
        (zpl_center, 0.0)
    };

    let mut rel_var = eff.ratio_relative_variance();
    if let Some(exposure) = opts.exposure {
        let fb_p = interp_linear(&grid, &fb, peak_wavelength).unwrap_or(0.0);
        let cav_p = interp_linear(&grid, &cav, peak_wavelength).unwrap_or(0.0);
        if fb_p > 0.0 && cav_p > 0.0 {
            rel_var += 1.0 / (fb_p * exposure) + 1.0 / (cav_p * exposure);
        }
    }
    let f_sigma = f_peak * rel_var.sqrt();

    // β integrated over the spectrum: ∫P_cav / ∫(P_cav + P_fb).
    let int_fb = trapz_weighted(&grid, &fb);
    let int_cav = trapz_weighted(&grid, &cav);
    let (beta_int, beta_int_sigma) = if int_fb.value > 0.0 {
        let ratio = k * int_cav.value / int_fb.value;
        let mut rv = eff.ratio_relative_variance();
        if let Some(exposure) = opts.exposure {
            if int_cav.value > 0.0 {
                rv += int_cav.sigma / (int_cav.value.powi(2) * exposure);
            }
            rv += int_fb.sigma / (int_fb.value.powi(2) * exposure);
        }
        (beta_of(ratio), ratio * rv.sqrt() / (1.0 + ratio).powi(2))
    } else {
        (0.0, 0.0)
    };

    Ok(SpectralPurcellResult {
        f_s_peak: Measured::new(f_peak, f_sigma),
        beta_s_peak: Measured::new(beta_of(f_peak), f_sigma / (1.0 + f_peak).powi(2)),
        beta_integrated: Measured::new(beta_int, beta_int_sigma),
        detuning: zpl_center - peak_wavelength,
        peak_wavelength,
        zpl_center,
        excluded_points,
        warnings,
    })
}

/// Trapezoid integral together with Σ w_i²·y_i, the Poisson variance of the
/// integral in intensity units (before dividing by the exposure).
fn trapz_weighted(x: &[f64], y: &[f64]) -> Measured {
    let n = x.len();
    let weight = |i: usize| {
        let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
        let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
        0.5 * (left + right)
    };
    let value = compensated_sum((0..n).map(|i| weight(i) * y[i]));
    let var = compensated_sum((0..n).map(|i| weight(i).powi(2) * y[i]));
    Measured::new(value, var)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedG2 {
    pub g2_zero: f64,
    /// True when the raw formula went negative and the value was clamped to 0.
    pub clamped: bool,
}

impl CorrectedG2 {
    pub fn purity(&self) -> f64 {
        1.0 - self.g2_zero
    }
}

/// Removes an uncorrelated background from g²(0) given the signal fraction
/// ρ = S/(S+B): g²_corr = (g² − (1 − ρ²))/ρ².
pub fn background_corrected_purity(g2_zero: f64, signal_fraction: f64) -> Result<CorrectedG2> {
    if !(0.0..=1.0).contains(&g2_zero) {
        return Err(Error::domain(format!(
            "g2(0) must lie in [0, 1], got {g2_zero}"
        )));
    }
    if !(signal_fraction > 0.0 && signal_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "signal fraction must lie in (0, 1], got {signal_fraction}"
        )));
    }
    let r2 = signal_fraction * signal_fraction;
    let raw = (g2_zero - (1.0 - r2)) / r2;
    Ok(CorrectedG2 {
        g2_zero: raw.max(0.0),
        clamped: raw < 0.0,
    })
}

/// Signal fraction ρ that maps a raw g²(0) onto a corrected value.
pub fn signal_fraction_for(g2_raw: f64, g2_corrected: f64) -> Result<f64> {
    if !(g2_corrected < 1.0) || !(g2_raw <= 1.0) || g2_corrected > g2_raw {
        return Err(Error::domain(
            "need g2_corrected <= g2_raw <= 1 and g2_corrected < 1",
        ));
    }
    Ok(((1.0 - g2_raw) / (1.0 - g2_corrected)).sqrt())
}
