//! Run configuration. TOML or JSON, chosen by file extension; unknown keys are
//! rejected everywhere. Relative data paths resolve against the config file's
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use purcellkit::coupling::Directions;
use purcellkit::spectra::Measured;
use purcellkit::sweep::{Axis, AxisName, SweepSpec};
use purcellkit::{CoupledSystem, EmitterSpec, PathEfficiencies, Preset, ResonatorSpec};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub resonator: Option<ResonatorConfig>,
    pub emitter: Option<EmitterConfig>,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub paths: PathConfig,
    pub misalignment: Option<MisalignmentConfig>,
    pub sweep: Option<SweepConfig>,
    pub synthesize: Option<SynthesizeConfig>,
    pub calibrate: Option<CalibrateConfig>,
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Every field is optional; missing ones take the fabricated-device values,
/// with the resonator centred on the emitter's ZPL.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorConfig {
    pub center_wavelength: Option<f64>,
    pub group_index_times_length: Option<f64>,
    pub q_intrinsic: Option<f64>,
    pub q_coupling: Option<f64>,
    pub q_scatter: Option<f64>,
    /// Target loaded Q; back-solves `q_coupling` and conflicts with it.
    pub q_loaded: Option<f64>,
    pub mode_volume: Option<f64>,
    pub cavity_index: Option<f64>,
    pub reference_resonance: Option<f64>,
}

/// A preset, optionally with field overrides, or a fully specified emitter.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    pub preset: Option<Preset>,
    pub zpl_wavelength: Option<f64>,
    pub zpl_fwhm: Option<f64>,
    pub radiative_lifetime: Option<f64>,
    pub quantum_efficiency: Option<f64>,
    pub dipole_azimuth: Option<f64>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// ZPL minus nearest comb line, nm. Defaults to the value implied by the
    /// resonator's reference resonance.
    pub detuning: Option<f64>,
    pub overlap_factor: Option<f64>,
    pub collection_directions: Option<Directions>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum MeasuredConfig {
    Exact(f64),
    WithSigma(MeasuredFields),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuredFields {
    pub value: f64,
    #[serde(default)]
    pub sigma: f64,
}

impl From<MeasuredConfig> for Measured {
    fn from(m: MeasuredConfig) -> Self {
        match m {
            MeasuredConfig::Exact(v) => Measured::exact(v),
            MeasuredConfig::WithSigma(f) => Measured::new(f.value, f.sigma),
        }
    }
}

/// Collection-path efficiencies; each is a number or `{ value, sigma }`.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub eta_ob: Option<MeasuredConfig>,
    pub eta_top: Option<MeasuredConfig>,
    pub eta_out: Option<MeasuredConfig>,
    pub eta_facet: Option<MeasuredConfig>,
    pub eta_side: Option<MeasuredConfig>,
}

impl PathConfig {
    /// Unset entries are 1, except `eta_out`, which defaults to the model
    /// value `fallback_eta_out` when one is available.
    pub fn resolve(&self, fallback_eta_out: Option<f64>) -> PathEfficiencies {
        let get = |m: Option<MeasuredConfig>, d: f64| m.map_or(Measured::exact(d), Measured::from);
        PathEfficiencies {
            eta_ob: get(self.eta_ob, 1.0),
            eta_top: get(self.eta_top, 1.0),
            eta_out: get(self.eta_out, fallback_eta_out.unwrap_or(1.0)),
            eta_facet: get(self.eta_facet, 1.0),
            eta_side: get(self.eta_side, 1.0),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisalignmentConfig {
    /// Per-axis σ of the transverse position error, nm.
    pub position_error: f64,
    /// σ of the dipole-angle error, degrees.
    pub angle_error: f64,
    #[serde(default = "default_waist")]
    pub mode_waist: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_waist() -> f64 {
    450.0
}

fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub presets: Vec<Preset>,
    pub optimize_over: Option<AxisName>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeConfig {
    /// [min, max] in nm.
    pub window: [f64; 2],
    pub points: usize,
    /// Spectral peak Purcell factor; defaults to the system's own value.
    pub peak_purcell: Option<f64>,
    /// Counts per unit intensity. When set, both spectra get Poisson noise
    /// drawn from the run seed.
    pub exposure: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub top: PathBuf,
    pub side: PathBuf,
    pub exposure: Option<f64>,
    pub zpl_center: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Comb,
    G2,
    Thickness,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub kind: FitKind,
    pub data: PathBuf,
    /// Comb fits: maximum number of lines, 0 for no cap.
    #[serde(default)]
    pub n_lines: usize,
    /// Thickness fits: the loss budget without the scattering term.
    pub q_intrinsic: Option<f64>,
    pub q_coupling: Option<f64>,
}

/// The oracle grid: κ = `kappa`, γ_r = `gamma_r`, and every combination of
/// Purcell factor, dephasing-to-κ ratio and quantum efficiency.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_gamma_r")]
    pub gamma_r: f64,
    #[serde(default = "default_purcell")]
    pub purcell: Vec<f64>,
    #[serde(default = "default_dephasing")]
    pub dephasing_ratio: Vec<f64>,
    #[serde(default = "default_qe")]
    pub quantum_efficiency: Vec<f64>,
    /// Also verify the configured resonator/emitter system.
    #[serde(default)]
    pub system: bool,
    #[serde(default = "default_true")]
    pub dt_halving: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            gamma_r: default_gamma_r(),
            purcell: default_purcell(),
            dephasing_ratio: default_dephasing(),
            quantum_efficiency: default_qe(),
            system: false,
            dt_halving: true,
        }
    }
}

fn default_kappa() -> f64 {
    1000.0
}
fn default_gamma_r() -> f64 {
    1.0
}
fn default_purcell() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn default_dephasing() -> Vec<f64> {
    vec![0.0, 1.0, 10.0]
}
fn default_qe() -> Vec<f64> {
    vec![0.05, 0.5, 1.0]
}
fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let mut cfg: RunConfig = match ext.to_ascii_lowercase().as_str() {
            "toml" => toml::from_str(&text)
                .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?,
            "json" => serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?,
            _ => {
                return Err(CliError::Input(format!(
                    "config {} must have a .toml or .json extension",
                    path.display()
                )))
            }
        };
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn emitter(&self) -> Result<EmitterSpec, CliError> {
        let e = self
            .emitter
            .as_ref()
            .ok_or_else(|| CliError::Input("missing [emitter] section".into()))?;
        let mut missing = Vec::new();
        let mut need = |name: &'static str, preset: Option<f64>, v: Option<f64>| {
            v.or(preset).unwrap_or_else(|| {
                missing.push(name);
                f64::NAN
            })
        };
        let base = e.preset.map(Preset::spec);
        let spec = EmitterSpec {
            zpl_wavelength: need(
                "zpl_wavelength",
                base.as_ref().map(|b| b.zpl_wavelength),
                e.zpl_wavelength,
            ),
            zpl_fwhm: need("zpl_fwhm", base.as_ref().map(|b| b.zpl_fwhm), e.zpl_fwhm),
            radiative_lifetime: need(
                "radiative_lifetime",
                base.as_ref().map(|b| b.radiative_lifetime),
                e.radiative_lifetime,
            ),
            quantum_efficiency: need(
                "quantum_efficiency",
                base.as_ref().map(|b| b.quantum_efficiency),
                e.quantum_efficiency,
            ),
            dipole_azimuth: e
                .dipole_azimuth
                .or(base.as_ref().map(|b| b.dipole_azimuth))
                .unwrap_or(0.0),
            label: e
                .label
                .clone()
                .or(base.as_ref().map(|b| b.label.clone()))
                .unwrap_or_else(|| "custom".into()),
        };
        if !missing.is_empty() {
            return Err(CliError::Input(format!(
                "[emitter] needs a preset or these fields: {}",
                missing.join(", ")
            )));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn resonator(&self, emitter: &EmitterSpec) -> Result<ResonatorSpec, CliError> {
        let r = self.resonator.clone().unwrap_or_default();
        let center = r.center_wavelength.unwrap_or(emitter.zpl_wavelength);
        let mut spec = ResonatorSpec {
            center_wavelength: center,
            group_index_times_length: r.group_index_times_length.unwrap_or(193_830.0),
            q_intrinsic: r.q_intrinsic.unwrap_or(3560.0),
            q_coupling: r.q_coupling.unwrap_or(9700.0),
            q_scatter: match (&self.resonator, r.q_scatter) {
                (_, Some(q)) => Some(q),
                // An explicit resonator section without q_scatter has none.
                (Some(_), None) => None,
                (None, None) => Some(3605.0),
            },
            mode_volume: r.mode_volume.unwrap_or(30.0),
            cavity_index: r.cavity_index.unwrap_or(1.95),
            reference_resonance: r.reference_resonance.unwrap_or(center),
        };
        if let Some(q) = r.q_loaded {
            if r.q_coupling.is_some() {
                return Err(CliError::Input(
                    "[resonator] sets both q_loaded and q_coupling".into(),
                ));
            }
            spec = spec.with_loaded_q(q)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn system(&self) -> Result<CoupledSystem, CliError> {
        let emitter = self.emitter()?;
        let resonator = self.resonator(&emitter)?;
        let mut sys = CoupledSystem::new(resonator, emitter)?;
        let c = &self.coupling;
        if let Some(d) = c.detuning {
            sys.detuning = d;
        }
        if let Some(o) = c.overlap_factor {
            sys.overlap_factor = o;
        }
        if let Some(d) = c.collection_directions {
            sys.collection_directions = d;
        }
        sys.validate()?;
        Ok(sys)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| CliError::Input("missing [sweep] section".into()))?;
        // Without an [emitter] section the first preset serves as template.
        let base = match (&self.emitter, s.presets.first()) {
            (None, Some(&preset)) => {
                let mut cfg = self.clone();
                cfg.emitter = Some(EmitterConfig {
                    preset: Some(preset),
                    ..Default::default()
                });
                cfg.system()?
            }
            _ => self.system()?,
        };
        let mut spec = SweepSpec::new(base, s.axes.clone());
        spec.presets = s.presets.clone();
        spec.optimize_over = s.optimize_over;
        spec.validate()?;
        Ok(spec)
    }
}
