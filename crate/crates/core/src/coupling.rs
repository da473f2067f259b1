//! Emitter–cavity coupling: Purcell factor with its regime and detuning
//! corrections, coupling efficiency β, cavity out-coupling η_out, the total
//! system efficiency, and a Monte Carlo model of alignment errors.
//!
//! The cavity linewidth κ and emitter linewidth γ enter only through their
//! quality factors, κ/(κ+γ) = Q_e/(Q_e+Q), so the effective Purcell factor
//! interpolates smoothly between the good-emitter limit (F) and the
//! bad-emitter limit (F·κ/γ).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::EmitterSpec;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::resonator::ResonatorSpec;

/// 3/(4π²)
pub const PURCELL_PREFACTOR: f64 = 3.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);

/// Which bus-waveguide ports are collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    One,
    Both,
}

impl Directions {
    fn factor(self) -> f64 {
        match self {
            Directions::One => 0.5,
            Directions::Both => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSystem {
    pub resonator: ResonatorSpec,
    pub emitter: EmitterSpec,
    /// ZPL peak minus nearest comb line, nm.
    pub detuning: f64,
    /// Mode overlap ψ at the emitter site.
    pub overlap_factor: f64,
    pub collection_directions: Directions,
}

impl CoupledSystem {
    /// Builds a system with the detuning taken from the resonator's comb
    /// anchor, perfect overlap and collection from both ports.
    pub fn new(resonator: ResonatorSpec, emitter: EmitterSpec) -> Result<Self> {
        resonator.validate()?;
        emitter.validate()?;
        let fsr = resonator.fsr()?;
        let detuning = fold_detuning(emitter.zpl_wavelength - resonator.reference_resonance, fsr);
        Ok(Self {
            resonator,
            emitter,
            detuning,
            overlap_factor: 1.0,
            collection_directions: Directions::Both,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.resonator.validate()?;
        self.emitter.validate()?;
        if !(0.0..=1.0).contains(&self.overlap_factor) {
            return Err(Error::domain(format!(
                "overlap_factor must lie in [0, 1], got {}",
                self.overlap_factor
            )));
        }
        let half = 0.5 * self.resonator.fsr()?;
        if !(self.detuning.abs() <= half * (1.0 + 1e-9)) {
            return Err(Error::domain(format!(
                "detuning {} nm lies outside ±FSR/2 = ±{half} nm",
                self.detuning
            )));
        }
        Ok(())
    }

    /// Overlap including the dipole-orientation factor cos²(azimuth).
    pub fn effective_overlap(&self) -> f64 {
        let c = self.emitter.dipole_azimuth.to_radians().cos();
        self.overlap_factor * c * c
    }

    /// Wavelength of the comb line nearest to the ZPL.
    pub fn nearest_line(&self) -> f64 {
        self.emitter.zpl_wavelength - self.detuning
    }
}

/// Folds a raw detuning into [−FSR/2, +FSR/2].
pub fn fold_detuning(raw: f64, fsr: f64) -> f64 {
    raw - fsr * (raw / fsr).round()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    GoodEmitter,
    BadEmitter,
    Crossover,
}

impl Regime {
    /// Classifies by κ/γ = Q_e/Q: above 2 the cavity is broader than the
    /// emitter, below 1/2 it is narrower.
    pub fn classify(q_loaded: f64, q_emitter: f64) -> Self {
        let ratio = q_emitter / q_loaded;
        if ratio > 2.0 {
            Regime::GoodEmitter
        } else if ratio < 0.5 {
            Regime::BadEmitter
        } else {
            Regime::Crossover
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::GoodEmitter => "good_emitter",
            Regime::BadEmitter => "bad_emitter",
            Regime::Crossover => "crossover",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBreakdown {
    pub purcell_good: f64,
    pub purcell_effective: f64,
    /// Cavity-channel branching fraction, including non-radiative decay.
    pub beta: f64,
    pub eta_out: f64,
    pub eta_total: f64,
    pub regime: Regime,
}

/// Textbook Purcell factor with the mode volume in units of (λ/n)³.
pub fn purcell_good(q_loaded: f64, mode_volume: f64) -> Result<f64> {
    if !(q_loaded > 0.0) || !(mode_volume > 0.0) {
        return Err(Error::domain(format!(
            "purcell_good needs Q > 0 and V > 0, got Q = {q_loaded}, V = {mode_volume}"
        )));
    }
    Ok(PURCELL_PREFACTOR * q_loaded / mode_volume)
}

/// Purcell factor reduced by mode overlap, the emitter/cavity linewidth ratio
/// and detuning. `linewidth_cavity` is the cavity FWHM in nm; the emitter
/// FWHM follows from the quality-factor ratio.
pub fn purcell_effective(
    purcell: f64,
    q_loaded: f64,
    q_emitter: f64,
    overlap: f64,
    detuning: f64,
    linewidth_cavity: f64,
) -> f64 {
    let kappa_fraction = q_emitter / (q_emitter + q_loaded);
    let linewidth_emitter = linewidth_cavity * q_loaded / q_emitter;
    let u = 2.0 * detuning / (linewidth_cavity + linewidth_emitter);
    purcell * overlap * kappa_fraction / (1.0 + u * u)
}

/// β = F/(1+F).
pub fn beta_of(purcell: f64) -> f64 {
    purcell / (1.0 + purcell)
}

/// Fraction of cavity photons delivered to the collected bus port(s).
pub fn eta_out(q_loaded: f64, q_coupling: f64, directions: Directions) -> Result<f64> {
    if !(q_loaded > 0.0) || !(q_coupling > 0.0) {
        return Err(Error::domain("eta_out needs positive quality factors"));
    }
    if q_loaded > q_coupling {
        return Err(Error::domain(format!(
            "loaded Q {q_loaded} exceeds coupling Q {q_coupling}"
        )));
    }
    Ok(q_loaded / q_coupling * directions.factor())
}

/// Share of all decays that go into the cavity mode,
/// F_eff·Γ_r / ((1 + F_eff)·Γ_r + Γ_nr).
pub fn branching_fraction(
    purcell_effective: f64,
    radiative_rate: f64,
    nonradiative_rate: f64,
) -> f64 {
    let cavity = purcell_effective * radiative_rate;
    cavity / (cavity + radiative_rate + nonradiative_rate)
}

pub fn total_efficiency(sys: &CoupledSystem) -> Result<EfficiencyBreakdown> {
    sys.validate()?;
    let res = &sys.resonator;
    let q = res.loaded_q()?;
    let q_e = sys.emitter.q_emitter();
    let f = purcell_good(q, res.mode_volume)?;
    let f_eff = purcell_effective(
        f,
        q,
        q_e,
        sys.effective_overlap(),
        sys.detuning,
        res.center_wavelength / q,
    );
    let beta = branching_fraction(
        f_eff,
        sys.emitter.radiative_rate(),
        sys.emitter.nonradiative_rate(),
    );
    let eta_out = eta_out(q, res.q_coupling, sys.collection_directions)?;
    Ok(EfficiencyBreakdown {
        purcell_good: f,
        purcell_effective: f_eff,
        beta,
        eta_out,
        eta_total: beta * eta_out,
        regime: Regime::classify(q, q_e),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
}

const MC_BLOCK: usize = 4096;

/// Monte Carlo over Gaussian transverse position offsets (σ per axis, nm) and
/// Gaussian dipole-angle offsets (σ in degrees). Each sample's overlap is
/// exp(−2r²/w²)·cos²θ.
///
/// Blocks of samples draw from independent ChaCha streams keyed by block
/// index, so the result depends only on `(seed, samples)`.
pub fn misalignment_overlap(
    position_error: f64,
    angle_error: f64,
    mode_waist: f64,
    samples: usize,
    seed: u64,
) -> Result<OverlapSummary> {
    if !(position_error >= 0.0) || !(angle_error >= 0.0) {
        return Err(Error::domain("alignment errors must be >= 0"));
    }
    if !(mode_waist > 0.0) {
        return Err(Error::domain("mode_waist must be > 0"));
    }
    if samples < 1000 {
        return Err(Error::domain(format!(
            "need at least 1000 samples, got {samples}"
        )));
    }
    let sigma_theta = angle_error.to_radians();
    let w2 = mode_waist * mode_waist;
    let n_blocks = samples.div_ceil(MC_BLOCK);
    let mut values: Vec<f64> = (0..n_blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = MC_BLOCK.min(samples - b * MC_BLOCK);
            (0..len)
                .map(|_| {
                    let x: f64 = rng.sample::<f64, _>(StandardNormal) * position_error;
                    let y: f64 = rng.sample::<f64, _>(StandardNormal) * position_error;
                    let t: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_theta;
                    let c = t.cos();
                    (-2.0 * (x * x + y * y) / w2).exp() * c * c
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mean = compensated_sum(values.iter().copied()) / samples as f64;
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(OverlapSummary {
        mean,
        p5: percentile(&values, 0.05),
        p95: percentile(&values, 0.95),
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
