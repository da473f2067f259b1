//! Design-space sweeps of the total efficiency over resonator and coupling
//! parameters, optionally maximising over one parameter at every grid point.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{fold_detuning, total_efficiency, CoupledSystem, EfficiencyBreakdown};
use crate::emitter::{EmitterSpec, Preset};
use crate::error::{Error, Result};
use crate::numeric::{golden_section_max, grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    QIntrinsic,
    QCoupling,
    /// Loaded Q; the coupling Q is back-solved from the loss budget.
    QLoaded,
    ModeVolume,
    Overlap,
    /// Emitter minus cavity line, nm.
    Detuning,
}

impl AxisName {
    pub const ALL: [AxisName; 6] = [
        AxisName::QIntrinsic,
        AxisName::QCoupling,
        AxisName::QLoaded,
        AxisName::ModeVolume,
        AxisName::Overlap,
        AxisName::Detuning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AxisName::QIntrinsic => "q_intrinsic",
            AxisName::QCoupling => "q_coupling",
            AxisName::QLoaded => "q_loaded",
            AxisName::ModeVolume => "mode_volume",
            AxisName::Overlap => "overlap",
            AxisName::Detuning => "detuning",
        }
    }
}

impl fmt::Display for AxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AxisName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AxisName::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Lookup {
                kind: "sweep axis",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: AxisName,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Axis {
    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::domain(format!(
                "axis {}: need finite min <= max, got [{}, {}]",
                self.name, self.min, self.max
            )));
        }
        if self.points == 0 || (self.points == 1 && self.min != self.max) {
            return Err(Error::domain(format!(
                "axis {}: need at least 2 points (or 1 with min = max)",
                self.name
            )));
        }
        if self.spacing == Spacing::Log && !(self.min > 0.0) {
            return Err(Error::domain(format!(
                "axis {}: log spacing needs positive bounds",
                self.name
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        grid(
            self.min,
            self.max,
            self.points,
            self.spacing == Spacing::Log,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub template: CoupledSystem,
    /// Emitters to sweep; empty means the template's own emitter.
    pub presets: Vec<Preset>,
    /// One of `axes`, maximised over instead of gridded.
    pub optimize_over: Option<AxisName>,
}

impl SweepSpec {
    pub fn new(template: CoupledSystem, axes: Vec<Axis>) -> Self {
        Self {
            axes,
            template,
            presets: Vec::new(),
            optimize_over: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.template.validate()?;
        for (i, a) in self.axes.iter().enumerate() {
            a.validate()?;
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::domain(format!("axis {} listed twice", a.name)));
            }
        }
        let has = |n: AxisName| self.axes.iter().any(|a| a.name == n);
        if has(AxisName::QLoaded) && has(AxisName::QCoupling) {
            return Err(Error::domain("q_loaded and q_coupling cannot both be axes"));
        }
        if let Some(opt) = self.optimize_over {
            let axis = self.axes.iter().find(|a| a.name == opt).ok_or_else(|| {
                Error::domain(format!("optimize_over names {opt}, which is not an axis"))
            })?;
            if axis.min == axis.max {
                return Err(Error::domain(format!(
                    "optimize_over axis {opt} has an empty range"
                )));
            }
        }
        Ok(())
    }

    fn grid_axes(&self) -> Vec<&Axis> {
        self.axes
            .iter()
            .filter(|a| Some(a.name) != self.optimize_over)
            .collect()
    }

    fn emitters(&self) -> Vec<EmitterSpec> {
        if self.presets.is_empty() {
            vec![self.template.emitter.clone()]
        } else {
            self.presets.iter().map(|p| p.spec()).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub emitter: String,
    /// Values of the gridded axes, in [`SweepResult::axis_names`] order.
    pub coords: Vec<f64>,
    /// Maximising value of the `optimize_over` parameter.
    pub optimum: Option<f64>,
    /// `None` where the parameters are unphysical.
    pub breakdown: Option<EfficiencyBreakdown>,
}

impl SweepPoint {
    pub fn eta(&self) -> Option<f64> {
        self.breakdown.as_ref().map(|b| b.eta_total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Argmax {
    pub emitter: String,
    pub coords: Vec<f64>,
    pub optimum: Option<f64>,
    pub eta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_names: Vec<AxisName>,
    pub optimize_over: Option<AxisName>,
    /// Emitter-major, then row-major over the axes (last axis fastest).
    pub points: Vec<SweepPoint>,
    /// Best grid point per emitter.
    pub argmax: Vec<Argmax>,
}

impl SweepResult {
    pub fn points_for<'a>(&'a self, emitter: &'a str) -> impl Iterator<Item = &'a SweepPoint> + 'a {
        self.points.iter().filter(move |p| p.emitter == emitter)
    }

    /// Writes the long-format table: emitter, axis columns, optimum column
    /// when optimising, then eta and its breakdown. Unphysical points leave
    /// the value columns empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = vec!["emitter".into()];
        header.extend(self.axis_names.iter().map(|a| a.name().to_string()));
        if let Some(opt) = self.optimize_over {
            header.push(format!("optimal_{}", opt.name()));
        }
        header.extend(
            [
                "eta",
                "purcell_good",
                "purcell_effective",
                "beta",
                "eta_out",
                "regime",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        w.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = vec![p.emitter.clone()];
            row.extend(p.coords.iter().map(|v| v.to_string()));
            if self.optimize_over.is_some() {
                row.push(p.optimum.map(|v| v.to_string()).unwrap_or_default());
            }
            match &p.breakdown {
                Some(b) => row.extend([
                    b.eta_total.to_string(),
                    b.purcell_good.to_string(),
                    b.purcell_effective.to_string(),
                    b.beta.to_string(),
                    b.eta_out.to_string(),
                    b.regime.name().to_string(),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Applies one parameter value to a system. Order matters for Q values:
/// callers go through [`apply_all`].
fn apply(sys: &mut CoupledSystem, axis: AxisName, value: f64) -> Result<()> {
    match axis {
        AxisName::QIntrinsic => sys.resonator.q_intrinsic = value,
        AxisName::QCoupling => sys.resonator.q_coupling = value,
        AxisName::QLoaded => sys.resonator = sys.resonator.with_loaded_q(value)?,
        AxisName::ModeVolume => sys.resonator.mode_volume = value,
        AxisName::Overlap => sys.overlap_factor = value,
        AxisName::Detuning => {
            sys.detuning = fold_detuning(value, sys.resonator.fsr()?);
        }
    }
    Ok(())
}

fn apply_all(template: &CoupledSystem, settings: &[(AxisName, f64)]) -> Result<CoupledSystem> {
    let mut sys = template.clone();
    let mut sorted = settings.to_vec();
    // Intrinsic Q must be in place before a loaded Q is back-solved.
    sorted.sort_by_key(|s| s.0);
    for (axis, value) in sorted {
        apply(&mut sys, axis, value)?;
    }
    sys.validate()?;
    Ok(sys)
}

/// Moves the template's resonator onto an emitter's ZPL, keeping the detuning.
fn retarget(template: &CoupledSystem, emitter: &EmitterSpec) -> CoupledSystem {
    let mut sys = template.clone();
    sys.resonator.center_wavelength = emitter.zpl_wavelength;
    sys.resonator.reference_resonance = emitter.zpl_wavelength - template.detuning;
    sys.emitter = emitter.clone();
    sys
}

fn evaluate(template: &CoupledSystem, settings: &[(AxisName, f64)]) -> Option<EfficiencyBreakdown> {
    apply_all(template, settings)
        .and_then(|s| total_efficiency(&s))
        .ok()
}

const COARSE_POINTS: usize = 11;
const DENSE_POINTS: usize = 101;
/// Bracket width at which the 1-D search stops, relative to the argument
/// (or absolute in log space).
pub const OPTIMIZER_TOLERANCE: f64 = 1e-4;

/// Maximises `f` over `[lo, hi]`. A coarse scan locates the peak; if the scan
/// is not unimodal a dense scan replaces it. Golden-section search then
/// refines inside the bracket around the best sample. Only comparisons of `f`
/// are used, so the result is unchanged by any increasing transform of `f`.
/// `None` values count as worse than any number.
pub fn maximize_1d<F: FnMut(f64) -> Option<f64>>(
    mut f: F,
    lo: f64,
    hi: f64,
    log: bool,
) -> (f64, Option<f64>) {
    let to = |x: f64| if log { x.ln() } else { x };
    let from = |u: f64| if log { u.exp() } else { u };
    let score = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);

    let scan = |f: &mut F, n: usize| -> (Vec<f64>, Vec<f64>) {
        let us = grid(to(lo), to(hi), n, false);
        let vs = us.iter().map(|&u| score(f(from(u)))).collect();
        (us, vs)
    };
    let (mut us, mut vs) = scan(&mut f, COARSE_POINTS);
    if !is_unimodal(&vs) {
        (us, vs) = scan(&mut f, DENSE_POINTS);
    }
    let best = vs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > vs[b] { i } else { b });
    if vs[best] == f64::NEG_INFINITY {
        return (from(us[best]), None);
    }
    let a = us[best.saturating_sub(1)];
    let b = us[(best + 1).min(us.len() - 1)];
    let tol = if log {
        OPTIMIZER_TOLERANCE
    } else {
        OPTIMIZER_TOLERANCE * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    };
    let (u, v) = golden_section_max(|u| score(f(from(u))), a, b, tol, 0.0);
    if v >= vs[best] {
        (from(u), Some(v).filter(|v| v.is_finite()))
    } else {
        (from(us[best]), Some(vs[best]))
    }
}

/// True when the samples rise then fall with at most one local maximum
/// (plateaus allowed).
fn is_unimodal(v: &[f64]) -> bool {
    let mut falling = false;
    for w in v.windows(2) {
        if w[1] < w[0] {
            falling = true;
        } else if w[1] > w[0] && falling {
            return false;
        }
    }
    true
}

fn cartesian(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    values.iter().fold(vec![Vec::new()], |acc, vals| {
        acc.iter()
            .flat_map(|prefix| {
                vals.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let grid_axes = spec.grid_axes();
    let axis_names: Vec<AxisName> = grid_axes.iter().map(|a| a.name).collect();
    let coords = cartesian(&grid_axes.iter().map(|a| a.values()).collect::<Vec<_>>());
    let opt_axis = spec
        .optimize_over
        .and_then(|n| spec.axes.iter().find(|a| a.name == n));

    let mut points = Vec::new();
    let mut argmax = Vec::new();
    for emitter in spec.emitters() {
        let template = retarget(&spec.template, &emitter);
        let evaluated: Vec<SweepPoint> = coords
            .par_iter()
            .map(|c| {
                let settings: Vec<(AxisName, f64)> =
                    axis_names.iter().copied().zip(c.iter().copied()).collect();
                let (optimum, breakdown) = match opt_axis {
                    None => (None, evaluate(&template, &settings)),
                    Some(ax) => {
                        let eval_at = |x: f64| {
                            let mut s = settings.clone();
                            s.push((ax.name, x));
                            evaluate(&template, &s)
                        };
                        let (x, _) = maximize_1d(
                            |x| eval_at(x).map(|b| b.eta_total),
                            ax.min,
                            ax.max,
                            ax.spacing == Spacing::Log,
                        );
                        let b = eval_at(x);
                        (b.as_ref().map(|_| x), b)
                    }
                };
                SweepPoint {
                    emitter: emitter.label.clone(),
                    coords: c.clone(),
                    optimum,
                    breakdown,
                }
            })
            .collect();
        if let Some(best) =
            evaluated
                .iter()
                .filter(|p| p.eta().is_some())
                .fold(None::<&SweepPoint>, |b, p| match b {
                    Some(b) if b.eta() >= p.eta() => Some(b),
                    _ => Some(p),
                })
        {
            argmax.push(Argmax {
                emitter: best.emitter.clone(),
                coords: best.coords.clone(),
                optimum: best.optimum,
                eta_max: best.eta().unwrap_or(0.0),
            });
        }
        points.extend(evaluated);
    }
    Ok(SweepResult {
        axis_names,
        optimize_over: spec.optimize_over,
        points,
        argmax,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetCurve {
    pub preset: Preset,
    pub result: SweepResult,
}

/// Runs the same sweep for each preset, in the order given.
pub fn compare_presets(presets: &[Preset], spec: &SweepSpec) -> Result<Vec<PresetCurve>> {
    presets
        .iter()
        .map(|&p| {
            let mut s = spec.clone();
            s.presets = vec![p];
            Ok(PresetCurve {
                preset: p,
                result: run_sweep(&s)?,
            })
        })
        .collect()
}
