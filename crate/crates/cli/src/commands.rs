use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use purcellkit::coupling::{
    eta_out, misalignment_overlap, total_efficiency, EfficiencyBreakdown, OverlapSummary,
};
use purcellkit::fitdata::{
    comb_curve, fit_comb, fit_g2, fit_q_vs_thickness, g2_model, q_at_thickness, FitResult,
};
use purcellkit::io;
use purcellkit::numeric::grid;
use purcellkit::oracle::{
    evolve, evolve_with_samples, params_from_system, write_time_series, EmissionBudget,
    LindbladParams,
};
use purcellkit::spectra::{
    extract_spectral_purcell_with, spectral_peak_purcell, spectral_purcell_curve,
    synthesize_spectra_with_peak, with_shot_noise, ExtractOptions, SpectralPurcellResult,
};
use purcellkit::sweep::{run_sweep, Argmax, Spacing};
use purcellkit::{Channel, CoupledSystem, Spectrum};

use crate::config::{FitKind, RunConfig};
use crate::plot::{heatmap, line_plot, AxisSpec, Series};
use crate::report::{fmt_sig, Output, Table};
use crate::CliError;

/// Largest relative oracle/analytic discrepancy accepted by `verify`.
const VERIFY_TOLERANCE: f64 = 0.02;

pub struct Context {
    pub cfg: RunConfig,
    pub out: Output,
    pub plot: bool,
    pub seed: u64,
}

impl Context {
    pub fn new(
        cfg: RunConfig,
        out: &Path,
        seed: Option<u64>,
        plot: bool,
    ) -> Result<Self, CliError> {
        let seed = seed.or(cfg.seed).unwrap_or(0);
        Ok(Self {
            out: Output::new(out, seed)?,
            cfg,
            plot,
            seed,
        })
    }
}

fn model_eta_out(sys: &CoupledSystem) -> Result<f64, CliError> {
    let q = sys.resonator.loaded_q()?;
    Ok(eta_out(
        q,
        sys.resonator.q_coupling,
        sys.collection_directions,
    )?)
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Misaligned {
    overlap: OverlapSummary,
    /// Efficiency with the overlap factor scaled by the Monte Carlo mean.
    eta_total_at_mean: f64,
}

#[derive(Serialize)]
struct DesignReport<'a> {
    system: &'a CoupledSystem,
    loaded_q: f64,
    emitter_q: f64,
    fsr: f64,
    breakdown: &'a EfficiencyBreakdown,
    misalignment: Option<Misaligned>,
}

pub fn design(ctx: &Context) -> Result<(), CliError> {
    let sys = ctx.cfg.system()?;
    let b = total_efficiency(&sys)?;
    let misalignment = match &ctx.cfg.misalignment {
        None => None,
        Some(m) => {
            let overlap = misalignment_overlap(
                m.position_error,
                m.angle_error,
                m.mode_waist,
                m.samples,
                ctx.seed,
            )?;
            let mut s = sys.clone();
            s.overlap_factor *= overlap.mean;
            Some(Misaligned {
                overlap,
                eta_total_at_mean: total_efficiency(&s)?.eta_total,
            })
        }
    };
    let report = DesignReport {
        system: &sys,
        loaded_q: sys.resonator.loaded_q()?,
        emitter_q: sys.emitter.q_emitter(),
        fsr: sys.resonator.fsr()?,
        breakdown: &b,
        misalignment,
    };
    ctx.out.report("design", &[], &report)?;

    let mut t = Table::default();
    t.row("emitter", &sys.emitter.label)
        .row("loaded Q", fmt_sig(report.loaded_q))
        .row("emitter Q", fmt_sig(report.emitter_q))
        .row("regime", b.regime.name())
        .row("F (ideal)", fmt_sig(b.purcell_good))
        .row("F_eff", fmt_sig(b.purcell_effective))
        .row("beta", fmt_sig(b.beta))
        .row("eta_out", fmt_sig(b.eta_out))
        .row("eta", fmt_sig(b.eta_total));
    if let Some(m) = &report.misalignment {
        t.row(
            "overlap mean [p5, p95]",
            format!(
                "{} [{}, {}]",
                fmt_sig(m.overlap.mean),
                fmt_sig(m.overlap.p5),
                fmt_sig(m.overlap.p95)
            ),
        )
        .row("eta at mean overlap", fmt_sig(m.eta_total_at_mean));
    }
    t.print("design", &[]);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepReport<'a> {
    axes: Vec<&'static str>,
    optimize_over: Option<&'static str>,
    points: usize,
    unphysical_points: usize,
    argmax: &'a [Argmax],
    csv: String,
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let spec = ctx.cfg.sweep_spec()?;
    let result = run_sweep(&spec)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    ctx.out.write("sweep.csv", &csv)?;

    let unphysical = result
        .points
        .iter()
        .filter(|p| p.breakdown.is_none())
        .count();
    let mut warnings = Vec::new();
    if unphysical > 0 {
        warnings.push(format!(
            "{unphysical} grid points are unphysical and left empty"
        ));
    }
    let report = SweepReport {
        axes: result.axis_names.iter().map(|a| a.name()).collect(),
        optimize_over: result.optimize_over.map(|a| a.name()),
        points: result.points.len(),
        unphysical_points: unphysical,
        argmax: &result.argmax,
        csv: "sweep.csv".into(),
    };
    ctx.out.report("sweep", &warnings, &report)?;

    if ctx.plot {
        let grid_axes: Vec<_> = spec
            .axes
            .iter()
            .filter(|a| Some(a.name) != spec.optimize_over)
            .collect();
        let y = AxisSpec {
            label: "eta",
            log: false,
        };
        match grid_axes.as_slice() {
            [a] => {
                let mut series: Vec<Series> = Vec::new();
                for p in &result.points {
                    if series.last().map(|s| &s.label) != Some(&p.emitter) {
                        series.push(Series {
                            label: p.emitter.clone(),
                            points: Vec::new(),
                        });
                    }
                    let s = series.last_mut().unwrap();
                    s.points.push((p.coords[0], p.eta().unwrap_or(f64::NAN)));
                }
                let x = AxisSpec {
                    label: a.name.name(),
                    log: a.spacing == Spacing::Log,
                };
                ctx.out
                    .write("sweep.svg", line_plot("efficiency", x, y, &series))?;
            }
            [a, b] => {
                let (av, bv) = (a.values(), b.values());
                let per_emitter = av.len() * bv.len();
                for chunk in result.points.chunks(per_emitter) {
                    let values: Vec<Option<f64>> = chunk.iter().map(|p| p.eta()).collect();
                    let svg = heatmap(
                        &format!("efficiency, {}", chunk[0].emitter),
                        AxisSpec {
                            label: b.name.name(),
                            log: b.spacing == Spacing::Log,
                        },
                        AxisSpec {
                            label: a.name.name(),
                            log: a.spacing == Spacing::Log,
                        },
                        &bv,
                        &av,
                        &values,
                    );
                    ctx.out
                        .write(&format!("sweep_{}.svg", chunk[0].emitter), svg)?;
                }
            }
            _ => warnings.push("plots need one or two gridded axes".into()),
        }
    }

    let mut t = Table::default();
    t.row("grid points", result.points.len());
    for a in &result.argmax {
        let coords: Vec<String> = a.coords.iter().map(|&c| fmt_sig(c)).collect();
        let mut at = coords.join(", ");
        if let Some(o) = a.optimum {
            let _ = write!(at, "; optimum {}", fmt_sig(o));
        }
        t.row(
            format!("eta_max {}", a.emitter),
            format!("{} at ({at})", fmt_sig(a.eta_max)),
        );
    }
    t.print("sweep", &warnings);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SynthesizeReport {
    emitter: String,
    peak_purcell: f64,
    eta_out: f64,
    detuning: f64,
    exposure: Option<f64>,
    files: [&'static str; 2],
}

pub fn synthesize(ctx: &Context) -> Result<(), CliError> {
    let s = ctx
        .cfg
        .synthesize
        .as_ref()
        .ok_or_else(|| CliError::Input("missing [synthesize] section".into()))?;
    let sys = ctx.cfg.system()?;
    if !(s.window[0] < s.window[1]) || s.points < 3 {
        return Err(CliError::Input(
            "[synthesize] needs window[0] < window[1] and at least 3 points".into(),
        ));
    }
    let wl = grid(s.window[0], s.window[1], s.points, false);
    let peak = match s.peak_purcell {
        Some(p) => p,
        None => spectral_peak_purcell(&sys)?,
    };
    let mut spectra = synthesize_spectra_with_peak(&sys, peak, &wl)?;
    if let Some(exposure) = s.exposure {
        spectra.free_space = with_shot_noise(&spectra.free_space, exposure, ctx.seed, 0)?;
        spectra.waveguide = with_shot_noise(&spectra.waveguide, exposure, ctx.seed, 1)?;
    }
    for (name, spectrum) in [
        ("free_space.csv", &spectra.free_space),
        ("waveguide.csv", &spectra.waveguide),
    ] {
        io::write_spectrum_file(spectrum, &ctx.out.path(name))?;
    }
    let report = SynthesizeReport {
        emitter: sys.emitter.label.clone(),
        peak_purcell: peak,
        eta_out: model_eta_out(&sys)?,
        detuning: sys.detuning,
        exposure: s.exposure,
        files: ["free_space.csv", "waveguide.csv"],
    };
    ctx.out.report("synthesize", &[], &report)?;
    if ctx.plot {
        let series = [&spectra.free_space, &spectra.waveguide].map(|sp| Series {
            label: sp.channel().name().into(),
            points: sp
                .wavelengths()
                .iter()
                .copied()
                .zip(sp.intensities().iter().copied())
                .collect(),
        });
        ctx.out.write(
            "synthesize.svg",
            line_plot(
                "synthesized spectra",
                AxisSpec {
                    label: "wavelength (nm)",
                    log: false,
                },
                AxisSpec {
                    label: "intensity",
                    log: false,
                },
                &series,
            ),
        )?;
    }
    let mut t = Table::default();
    t.row("emitter", &report.emitter)
        .row("peak spectral Purcell", fmt_sig(peak))
        .row("eta_out", fmt_sig(report.eta_out))
        .row("detuning", fmt_sig(sys.detuning))
        .row("samples", wl.len());
    t.print("synthesize", &[]);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CalibrateReport<'a> {
    top: String,
    side: String,
    path_efficiencies: purcellkit::PathEfficiencies,
    result: &'a SpectralPurcellResult,
    curve: &'static str,
}

pub fn calibrate(ctx: &Context) -> Result<(), CliError> {
    let c = ctx
        .cfg
        .calibrate
        .as_ref()
        .ok_or_else(|| CliError::Input("missing [calibrate] section".into()))?;
    let mut warnings = Vec::new();
    let fallback = match ctx.cfg.emitter {
        Some(_) => Some(model_eta_out(&ctx.cfg.system()?)?),
        None => None,
    };
    if fallback.is_none() && ctx.cfg.paths.eta_out.is_none() {
        warnings.push("eta_out not given and no device configured; using 1".into());
    }
    let eff = ctx.cfg.paths.resolve(fallback);
    let top = read_spectrum(&ctx.cfg, &c.top, Channel::FreeSpace)?;
    let side = read_spectrum(&ctx.cfg, &c.side, Channel::Waveguide)?;
    let opts = ExtractOptions {
        exposure: c.exposure,
        zpl_center: c.zpl_center,
    };
    let result = extract_spectral_purcell_with(&top, &side, &eff, &opts)?;
    warnings.extend(result.warnings.iter().cloned());
    let curve = spectral_purcell_curve(&top, &side, &eff)?;
    let mut text = String::from("wavelength_nm,spectral_purcell\n");
    for (l, f) in curve.wavelengths.iter().zip(&curve.purcell) {
        match f {
            Some(f) => writeln!(text, "{l},{f}"),
            None => writeln!(text, "{l},"),
        }
        .expect("writing to a String");
    }
    ctx.out.write("spectral_purcell.csv", text)?;
    let report = CalibrateReport {
        top: c.top.display().to_string(),
        side: c.side.display().to_string(),
        path_efficiencies: eff,
        result: &result,
        curve: "spectral_purcell.csv",
    };
    ctx.out.report("calibrate", &warnings, &report)?;
    if ctx.plot {
        let series = [Series {
            label: "F_s".into(),
            points: curve
                .wavelengths
                .iter()
                .zip(&curve.purcell)
                .map(|(&l, f)| (l, f.unwrap_or(f64::NAN)))
                .collect(),
        }];
        ctx.out.write(
            "calibrate.svg",
            line_plot(
                "spectral Purcell factor",
                AxisSpec {
                    label: "wavelength (nm)",
                    log: false,
                },
                AxisSpec {
                    label: "F_s",
                    log: false,
                },
                &series,
            ),
        )?;
    }
    let pm =
        |m: purcellkit::spectra::Measured| format!("{} ± {}", fmt_sig(m.value), fmt_sig(m.sigma));
    let mut t = Table::default();
    t.row("F_s peak", pm(result.f_s_peak))
        .row("beta_s peak", pm(result.beta_s_peak))
        .row("beta integrated", pm(result.beta_integrated))
        .row("peak wavelength", fmt_sig(result.peak_wavelength))
        .row("ZPL center", fmt_sig(result.zpl_center))
        .row("detuning", fmt_sig(result.detuning));
    t.print("calibrate", &warnings);
    Ok(())
}

fn read_spectrum(cfg: &RunConfig, p: &Path, channel: Channel) -> Result<Spectrum, CliError> {
    let path = cfg.resolve_path(p);
    io::read_spectrum_file(&path, channel)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FitReport<'a> {
    kind: &'static str,
    data: String,
    fit: &'a FitResult,
}

pub fn fit(ctx: &Context) -> Result<(), CliError> {
    let f = ctx
        .cfg
        .fit
        .as_ref()
        .ok_or_else(|| CliError::Input("missing [fit] section".into()))?;
    let path = ctx.cfg.resolve_path(&f.data);
    let in_file = |e: purcellkit::Error| CliError::Input(format!("{}: {e}", path.display()));
    let x_axis = |label| AxisSpec { label, log: false };
    let (kind, result, svg) = match f.kind {
        FitKind::Comb => {
            let s = io::read_spectrum_file(&path, Channel::Transmission).map_err(in_file)?;
            let r = fit_comb(&s, f.n_lines)?;
            let wl = s.wavelengths();
            let window = [wl[0], wl[wl.len() - 1]];
            let model = comb_curve(&r, window, s.channel() == Channel::Transmission, wl);
            let svg = line_plot(
                "comb fit",
                x_axis("wavelength (nm)"),
                x_axis("intensity"),
                &[
                    Series {
                        label: "data".into(),
                        points: wl
                            .iter()
                            .copied()
                            .zip(s.intensities().iter().copied())
                            .collect(),
                    },
                    Series {
                        label: "fit".into(),
                        points: wl.iter().copied().zip(model).collect(),
                    },
                ],
            );
            ("comb", r, svg)
        }
        FitKind::G2 => {
            let trace = io::read_g2_file(&path).map_err(in_file)?;
            let r = fit_g2(&trace)?;
            let (b, g0, tau) = (
                r.value("baseline").unwrap_or(0.0),
                r.value("g2_zero").unwrap_or(0.0),
                r.value("tau1").unwrap_or(1.0),
            );
            let t = trace.delays();
            let dense = grid(t[0], t[t.len() - 1], 1001, false);
            let svg = line_plot(
                "g2 fit",
                x_axis("delay (ns)"),
                x_axis("coincidences"),
                &[
                    Series {
                        label: "data".into(),
                        points: t
                            .iter()
                            .copied()
                            .zip(trace.coincidences().iter().copied())
                            .collect(),
                    },
                    Series {
                        label: "fit".into(),
                        points: dense
                            .iter()
                            .map(|&d| (d, g2_model(d, b, g0, tau)))
                            .collect(),
                    },
                ],
            );
            ("g2", r, svg)
        }
        FitKind::Thickness => {
            let (Some(qi), Some(qc)) = (f.q_intrinsic, f.q_coupling) else {
                return Err(CliError::Input(
                    "thickness fits need [fit] q_intrinsic and q_coupling".into(),
                ));
            };
            let pts = io::read_thickness_file(&path).map_err(in_file)?;
            let r = fit_q_vs_thickness(&pts, qi, qc)?;
            let t_max = pts.iter().map(|p| p.thickness).fold(0.0, f64::max);
            let dense = grid(0.0, t_max, 201, false);
            let curve = dense
                .iter()
                .map(|&t| Ok((t, q_at_thickness(&r, t, qi, qc)?)))
                .collect::<Result<Vec<_>, purcellkit::Error>>()?;
            let svg = line_plot(
                "loaded Q vs thickness",
                x_axis("thickness (nm)"),
                AxisSpec {
                    label: "loaded Q",
                    log: true,
                },
                &[
                    Series {
                        label: "data".into(),
                        points: pts.iter().map(|p| (p.thickness, p.q_loaded)).collect(),
                    },
                    Series {
                        label: "fit".into(),
                        points: curve,
                    },
                ],
            );
            ("thickness", r, svg)
        }
    };
    ctx.out.report(
        "fit",
        &result.warnings,
        &FitReport {
            kind,
            data: f.data.display().to_string(),
            fit: &result,
        },
    )?;
    if ctx.plot {
        ctx.out.write("fit.svg", svg)?;
    }
    let mut t = Table::default();
    for p in &result.params {
        t.row(
            &p.name,
            format!("{} ± {}", fmt_sig(p.value), fmt_sig(p.sigma)),
        );
    }
    t.row("residual rms", fmt_sig(result.residual_rms))
        .row("iterations", result.iterations)
        .row("converged", result.converged);
    t.print(&format!("fit ({kind})"), &result.warnings);
    if !result.converged {
        return Err(CliError::NonConvergence(format!(
            "{kind} fit stopped after {} iterations",
            result.iterations
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VerifyRow {
    purcell: f64,
    dephasing_ratio: f64,
    quantum_efficiency: f64,
    params: LindbladParams,
    budget: EmissionBudget,
    oracle_branching: f64,
    analytic_branching: f64,
    relative_error: f64,
    max_trace_drift: f64,
    min_eigenvalue: f64,
    /// Largest change of any channel probability when dt is halved.
    dt_halving_delta: Option<f64>,
}

#[derive(Serialize)]
struct SystemCheck {
    params: LindbladParams,
    budget: EmissionBudget,
    oracle_branching: f64,
    analytic_beta: f64,
    relative_error: f64,
    strong_coupling: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    tolerance: f64,
    max_relative_error: f64,
    max_trace_drift: f64,
    max_budget_error: f64,
    max_dt_halving_delta: Option<f64>,
    within_tolerance: bool,
    grid: Vec<VerifyRow>,
    system: Option<SystemCheck>,
}

/// Analytic cavity branching for the oracle's rates.
fn analytic_branching(p: &LindbladParams) -> f64 {
    use purcellkit::coupling::{branching_fraction, purcell_effective};
    let q = 1.0 / p.kappa();
    let q_e = 1.0 / p.emitter_linewidth();
    let f_eff = purcell_effective(p.purcell(), q, q_e, 1.0, 0.0, 1.0 / q);
    branching_fraction(f_eff, p.gamma_r, p.gamma_nr)
}

fn halving_delta(p: &LindbladParams, budget: &EmissionBudget) -> Result<f64, CliError> {
    let half = evolve(p, p.default_duration(), p.default_step() / 2.0)?;
    Ok([
        budget.p_bus - half.p_bus,
        budget.p_cavity_loss - half.p_cavity_loss,
        budget.p_free - half.p_free,
        budget.p_nonrad - half.p_nonrad,
    ]
    .iter()
    .fold(0.0, |m: f64, d| m.max(d.abs())))
}

fn is_strong(p: &LindbladParams) -> bool {
    4.0 * p.g > p.kappa() + p.emitter_linewidth()
}

pub fn verify(ctx: &Context) -> Result<(), CliError> {
    let v = &ctx.cfg.verify;
    if !(v.kappa > 0.0 && v.gamma_r > 0.0) {
        return Err(CliError::Input(
            "[verify] kappa and gamma_r must be > 0".into(),
        ));
    }
    if v.quantum_efficiency.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
        return Err(CliError::Input(
            "[verify] quantum_efficiency values must lie in (0, 1]".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for &f in &v.purcell {
        for &d in &v.dephasing_ratio {
            for &qe in &v.quantum_efficiency {
                let p = LindbladParams {
                    g: 0.5 * (f * v.kappa * v.gamma_r).sqrt(),
                    kappa_c: v.kappa / 2.0,
                    kappa_i: v.kappa / 2.0,
                    gamma_r: v.gamma_r,
                    gamma_nr: v.gamma_r * (1.0 / qe - 1.0),
                    gamma_phi: d * v.kappa,
                    delta: 0.0,
                };
                p.validate()?;
                if is_strong(&p) {
                    warnings.push(format!(
                        "F = {f}, dephasing ratio {d}: strong coupling, analytic formulas are out of regime"
                    ));
                }
                let run = evolve_with_samples(&p, p.default_duration(), p.default_step(), 0)?;
                let analytic = analytic_branching(&p);
                let oracle = run.budget.cavity_branching();
                rows.push(VerifyRow {
                    purcell: f,
                    dephasing_ratio: d,
                    quantum_efficiency: qe,
                    params: p,
                    budget: run.budget,
                    oracle_branching: oracle,
                    analytic_branching: analytic,
                    relative_error: (oracle - analytic).abs() / analytic,
                    max_trace_drift: run.diagnostics.max_trace_drift,
                    min_eigenvalue: run.diagnostics.min_eigenvalue,
                    dt_halving_delta: if v.dt_halving {
                        Some(halving_delta(&p, &run.budget)?)
                    } else {
                        None
                    },
                });
            }
        }
    }

    let system = if v.system {
        let sys = ctx.cfg.system()?;
        let p = params_from_system(&sys)?;
        let strong = is_strong(&p);
        if strong {
            warnings.push(
                "configured system is strongly coupled: analytic formulas are out of regime".into(),
            );
        }
        let run = evolve_with_samples(&p, p.default_duration(), p.default_step(), 0)?;
        let beta = total_efficiency(&sys)?.beta;
        let oracle = run.budget.cavity_branching();
        if ctx.plot {
            let steps = (p.default_duration() / p.default_step()).ceil() as u64;
            let sampled = evolve_with_samples(
                &p,
                p.default_duration(),
                p.default_step(),
                (steps / 400).max(1),
            )?;
            let mut csv = Vec::new();
            write_time_series(&sampled.samples, &mut csv)?;
            ctx.out.write("verify_time_series.csv", csv)?;
            let curve = |label: &str, get: fn(&purcellkit::oracle::TimeSample) -> f64| Series {
                label: label.into(),
                points: sampled.samples.iter().map(|s| (s.t, get(s))).collect(),
            };
            ctx.out.write(
                "verify.svg",
                line_plot(
                    "single-excitation populations",
                    AxisSpec {
                        label: "time (ns)",
                        log: false,
                    },
                    AxisSpec {
                        label: "probability",
                        log: false,
                    },
                    &[
                        curve("emitter", |s| s.p_emitter),
                        curve("cavity", |s| s.p_cavity),
                        curve("bus", |s| s.p_bus),
                        curve("free space", |s| s.p_free),
                    ],
                ),
            )?;
        }
        Some(SystemCheck {
            params: p,
            budget: run.budget,
            oracle_branching: oracle,
            analytic_beta: beta,
            relative_error: (oracle - beta).abs() / beta.max(f64::MIN_POSITIVE),
            strong_coupling: strong,
        })
    } else {
        None
    };

    let max_rel = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    let max_halving = v.dt_halving.then(|| {
        rows.iter()
            .filter_map(|r| r.dt_halving_delta)
            .fold(0.0, f64::max)
    });
    let report = VerifyReport {
        tolerance: VERIFY_TOLERANCE,
        max_relative_error: max_rel,
        max_trace_drift: rows.iter().map(|r| r.max_trace_drift).fold(0.0, f64::max),
        max_budget_error: rows
            .iter()
            .map(|r| (r.budget.total() - 1.0).abs())
            .fold(0.0, f64::max),
        max_dt_halving_delta: max_halving,
        within_tolerance: max_rel < VERIFY_TOLERANCE,
        grid: rows,
        system,
    };
    if !report.within_tolerance {
        warnings.push(format!(
            "oracle and analytic branching differ by {max_rel:.3e} (tolerance {VERIFY_TOLERANCE})"
        ));
    }
    ctx.out.report("verify", &warnings, &report)?;

    let mut t = Table::default();
    t.row("grid points", report.grid.len())
        .row("max |oracle - analytic| / analytic", fmt_sig(max_rel))
        .row("max trace drift per step", fmt_sig(report.max_trace_drift))
        .row("max |budget - 1|", fmt_sig(report.max_budget_error));
    if let Some(h) = max_halving {
        t.row("max dt-halving delta", fmt_sig(h));
    }
    if let Some(s) = &report.system {
        t.row("system: oracle branching", fmt_sig(s.oracle_branching))
            .row("system: analytic beta", fmt_sig(s.analytic_beta));
    }
    t.row("within tolerance", report.within_tolerance);
    t.print("verify", &warnings);
    Ok(())
}
