//! Fits to measured data: resonance combs (Q and FSR), g²(τ) antibunching
//! traces (purity and lifetime), and loaded Q against flake thickness.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{self, Problem};
use crate::numeric::lorentzian_peak;
use crate::resonator::loaded_q;
use crate::spectra::{Channel, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FitParam>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.value)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.sigma)
    }

    fn push(&mut self, name: impl Into<String>, value: f64, sigma: f64) {
        self.params.push(FitParam {
            name: name.into(),
            value,
            sigma,
        });
    }

    fn from_outcome(out: &lm::Outcome, n_residuals: usize) -> Self {
        let mut warnings = Vec::new();
        if !out.converged {
            warnings.push(format!(
                "fit did not converge after {} iterations (gradient criterion {:.2e})",
                out.iterations, out.gradient_criterion
            ));
        }
        Self {
            params: Vec::new(),
            residual_rms: out.residual_rms(n_residuals),
            iterations: out.iterations,
            converged: out.converged,
            warnings,
        }
    }
}

// ---------------------------------------------------------------------------
// Resonance comb

/// Quadratic baseline plus `n` Lorentzians. Parameter layout:
/// `[c0, c1, c2, (center, fwhm, amplitude) × n]`, with the baseline in the
/// normalised coordinate u = (λ − mid)/half_span.
struct CombModel<'a> {
    x: &'a [f64],
    y: Vec<f64>,
    mid: f64,
    half_span: f64,
    n_lines: usize,
}

impl CombModel<'_> {
    fn u(&self, x: f64) -> f64 {
        (x - self.mid) / self.half_span
    }

    fn feasible(&self, p: &[f64]) -> bool {
        let span = 2.0 * self.half_span;
        (0..self.n_lines).all(|k| {
            let (c, w) = (p[3 + 3 * k], p[4 + 3 * k]);
            w > 0.0 && w < 2.0 * span && (c - self.mid).abs() < 2.0 * span
        })
    }
}

impl Problem for CombModel<'_> {
    fn n_params(&self) -> usize {
        3 + 3 * self.n_lines
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        if !self.feasible(p) {
            return None;
        }
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(&self.y).map(|(&x, &y)| {
                let u = self.u(x);
                let mut f = p[0] + p[1] * u + p[2] * u * u;
                for k in 0..self.n_lines {
                    let (c, w, a) = (p[3 + 3 * k], p[4 + 3 * k], p[5 + 3 * k]);
                    let z = 2.0 * (x - c) / w;
                    f += a / (1.0 + z * z);
                }
                f - y
            }),
        ))
    }

    fn data_norm(&self) -> f64 {
        norm(&self.y)
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.x.len(), self.n_params());
        for (i, &x) in self.x.iter().enumerate() {
            let u = self.u(x);
            j[(i, 0)] = 1.0;
            j[(i, 1)] = u;
            j[(i, 2)] = u * u;
            for k in 0..self.n_lines {
                let (c, w, a) = (p[3 + 3 * k], p[4 + 3 * k], p[5 + 3 * k]);
                let z = 2.0 * (x - c) / w;
                let l = 1.0 / (1.0 + z * z);
                j[(i, 3 + 3 * k)] = a * 4.0 * z * l * l / w;
                j[(i, 4 + 3 * k)] = a * 2.0 * z * z * l * l / w;
                j[(i, 5 + 3 * k)] = l;
            }
        }
        j
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn moving_average(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn moving_minimum(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            y[lo..hi].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust white-noise estimate from first differences.
fn noise_sigma(y: &[f64]) -> f64 {
    let mut d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    1.4826 * median(&mut d) / std::f64::consts::SQRT_2
}

/// Topographic prominence of each local maximum of `d`.
fn prominent_peaks(d: &[f64]) -> Vec<(usize, f64)> {
    let n = d.len();
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(d[i] > d[i - 1] && d[i] >= d[i + 1]) {
            continue;
        }
        let mut left_min = d[i];
        for k in (0..i).rev() {
            if d[k] > d[i] {
                break;
            }
            left_min = left_min.min(d[k]);
        }
        let mut right_min = d[i];
        for &v in &d[i + 1..] {
            if v > d[i] {
                break;
            }
            right_min = right_min.min(v);
        }
        peaks.push((i, d[i] - left_min.max(right_min)));
    }
    peaks
}

/// Width at half height of the excess `d` around index `i`.
fn half_width_guess(x: &[f64], d: &[f64], i: usize) -> Option<f64> {
    let half = 0.5 * d[i];
    let left = (0..i).rev().find(|&k| d[k] < half)?;
    let right = (i + 1..d.len()).find(|&k| d[k] < half)?;
    let w = x[right] - x[left];
    (w > 0.0).then_some(w)
}

/// Candidate line positions (indices into the spectrum), strongest first
/// then sorted by wavelength.
fn detect_lines(x: &[f64], signal: &[f64], n_lines_hint: usize) -> Vec<(usize, f64, f64)> {
    let n = x.len();
    let smooth = moving_average(signal, 2);
    let base = moving_average(&moving_minimum(&smooth, (n / 16).max(3)), (n / 32).max(1));
    let excess: Vec<f64> = smooth.iter().zip(&base).map(|(s, b)| s - b).collect();
    let sigma = noise_sigma(signal);
    let mut peaks = prominent_peaks(&excess);
    let top = peaks.iter().map(|p| p.1).fold(0.0, f64::max);
    peaks.retain(|&(_, prom)| prom >= 3.0 * sigma && prom >= 0.1 * top);
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    if n_lines_hint > 0 {
        peaks.truncate(n_lines_hint);
    }
    peaks.sort_by_key(|p| p.0);
    let spacing = if peaks.len() > 1 {
        (x[peaks[peaks.len() - 1].0] - x[peaks[0].0]) / (peaks.len() - 1) as f64
    } else {
        x[n - 1] - x[0]
    };
    peaks
        .iter()
        .map(|&(i, _)| {
            let w = half_width_guess(x, &excess, i).unwrap_or(0.1 * spacing);
            (i, w, excess[i])
        })
        .collect()
}

/// Multi-Lorentzian fit of a resonance comb.
///
/// Transmission spectra are fitted as dips, other channels as peaks.
/// `n_lines_hint` caps the number of lines (0 means no cap). Reports per-line
/// `line{k}_center`, `line{k}_fwhm`, `line{k}_amplitude` (the dip depth for
/// transmission) and `line{k}_q`, the mean `q_loaded`, and `fsr` when at least
/// two lines are found.
pub fn fit_comb(spectrum: &Spectrum, n_lines_hint: usize) -> Result<FitResult> {
    let x = spectrum.wavelengths();
    if x.len() < 8 {
        return Err(Error::data("comb fit needs at least 8 samples"));
    }
    let dips = spectrum.channel() == Channel::Transmission;
    let sign = if dips { -1.0 } else { 1.0 };
    let y: Vec<f64> = spectrum.intensities().iter().map(|v| sign * v).collect();
    let lines = detect_lines(x, &y, n_lines_hint);
    if lines.is_empty() {
        return Err(Error::data("no resonance lines detected"));
    }

    let n = x.len();
    let mid = 0.5 * (x[0] + x[n - 1]);
    let half_span = 0.5 * (x[n - 1] - x[0]);
    let model = CombModel {
        x,
        y: y.clone(),
        mid,
        half_span,
        n_lines: lines.len(),
    };

    let mut start = Vec::with_capacity(model.n_params());
    let base = moving_minimum(&moving_average(&y, 2), (n / 16).max(3));
    start.extend([median(&mut base.clone()), 0.0, 0.0]);
    for &(i, w, a) in &lines {
        start.extend([x[i], w, a]);
    }
    let out = lm::minimize(&model, &start)
        .ok_or_else(|| Error::data("initial comb guess is outside the model domain"))?;

    let mut fit = FitResult::from_outcome(&out, n);
    let p = &out.params;
    for (k, name) in ["baseline_c0", "baseline_c1", "baseline_c2"]
        .iter()
        .enumerate()
    {
        fit.push(*name, sign * p[k], out.sigma(k));
    }
    let mut q_sum = 0.0;
    let mut q_var = 0.0;
    for k in 0..lines.len() {
        let (ic, iw, ia) = (3 + 3 * k, 4 + 3 * k, 5 + 3 * k);
        let (c, w) = (p[ic], p[iw]);
        let q = c / w;
        let rel_c = out.sigma(ic) / c;
        let rel_w = out.sigma(iw) / w;
        let sigma_q = q * (rel_c * rel_c + rel_w * rel_w).sqrt();
        fit.push(format!("line{k}_center"), c, out.sigma(ic));
        fit.push(format!("line{k}_fwhm"), w, out.sigma(iw));
        fit.push(format!("line{k}_amplitude"), p[ia], out.sigma(ia));
        fit.push(format!("line{k}_q"), q, sigma_q);
        q_sum += q;
        q_var += sigma_q * sigma_q;
    }
    let m = lines.len() as f64;
    fit.push("q_loaded", q_sum / m, q_var.sqrt() / m);
    if lines.len() >= 2 {
        let first = 3;
        let last = 3 + 3 * (lines.len() - 1);
        let fsr = (p[last] - p[first]) / (m - 1.0);
        let var = out.covariance[(last, last)] + out.covariance[(first, first)]
            - 2.0 * out.covariance[(last, first)];
        fit.push("fsr", fsr, var.max(0.0).sqrt() / (m - 1.0));
    } else {
        fit.warnings
            .push("only one line detected; FSR not determined".into());
    }
    if dips && p[3..].chunks(3).any(|l| l[2] <= 0.0) {
        fit.warnings
            .push("a fitted dip has non-positive depth".into());
    }
    Ok(fit)
}

/// Evaluates a [`fit_comb`] result on `wavelengths`. `window` is the
/// [first, last] wavelength of the fitted spectrum and `dips` whether it was a
/// transmission spectrum.
pub fn comb_curve(fit: &FitResult, window: [f64; 2], dips: bool, wavelengths: &[f64]) -> Vec<f64> {
    let mid = 0.5 * (window[0] + window[1]);
    let half_span = 0.5 * (window[1] - window[0]);
    let get = |name: &str| fit.value(name).unwrap_or(0.0);
    let base = [get("baseline_c0"), get("baseline_c1"), get("baseline_c2")];
    let lines: Vec<[f64; 3]> = (0..)
        .map_while(|k| {
            Some([
                fit.value(&format!("line{k}_center"))?,
                fit.value(&format!("line{k}_fwhm"))?,
                fit.value(&format!("line{k}_amplitude"))?,
            ])
        })
        .collect();
    let sign = if dips { -1.0 } else { 1.0 };
    wavelengths
        .iter()
        .map(|&x| {
            let u = (x - mid) / half_span;
            let peaks: f64 = lines
                .iter()
                .map(|&[c, w, a]| a * lorentzian_peak(x, c, w))
                .sum();
            base[0] + base[1] * u + base[2] * u * u + sign * peaks
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Photon correlation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Trace {
    delays: Vec<f64>,
    coincidences: Vec<f64>,
    bin_width: f64,
}

impl G2Trace {
    pub fn new(delays: Vec<f64>, coincidences: Vec<f64>, bin_width: f64) -> Result<Self> {
        if delays.len() != coincidences.len() {
            return Err(Error::data(format!(
                "{} delays but {} coincidence values",
                delays.len(),
                coincidences.len()
            )));
        }
        if delays.iter().any(|d| !d.is_finite()) || delays.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::data("delays must be finite and sorted"));
        }
        if coincidences.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::data("coincidences must be finite and >= 0"));
        }
        if !(bin_width > 0.0) {
            return Err(Error::data("bin width must be > 0"));
        }
        Ok(Self {
            delays,
            coincidences,
            bin_width,
        })
    }

    /// Bin width taken as the median spacing of the delays.
    pub fn from_samples(delays: Vec<f64>, coincidences: Vec<f64>) -> Result<Self> {
        let mut gaps: Vec<f64> = delays
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > 0.0)
            .collect();
        let bin = median(&mut gaps);
        Self::new(delays, coincidences, if bin > 0.0 { bin } else { 1.0 })
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn coincidences(&self) -> &[f64] {
        &self.coincidences
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }
}

/// g²(τ) = baseline·[1 − (1 − g₀)·exp(−|τ|/τ₁)]
pub fn g2_model(delay: f64, baseline: f64, g2_zero: f64, tau1: f64) -> f64 {
    baseline * (1.0 - (1.0 - g2_zero) * (-delay.abs() / tau1).exp())
}

/// Parameter layout `[baseline, g2_zero, tau1]`.
struct G2Model<'a> {
    trace: &'a G2Trace,
}

impl Problem for G2Model<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn n_residuals(&self) -> usize {
        self.trace.delays.len()
    }

    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        if !(p[0] > 0.0 && p[2] > 0.0) {
            return None;
        }
        Some(DVector::from_iterator(
            self.n_residuals(),
            self.trace
                .delays
                .iter()
                .zip(&self.trace.coincidences)
                .map(|(&t, &y)| g2_model(t, p[0], p[1], p[2]) - y),
        ))
    }

    fn data_norm(&self) -> f64 {
        norm(&self.trace.coincidences)
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let (b, g0, tau) = (p[0], p[1], p[2]);
        let mut j = DMatrix::zeros(self.n_residuals(), 3);
        for (i, &t) in self.trace.delays.iter().enumerate() {
            let e = (-t.abs() / tau).exp();
            j[(i, 0)] = 1.0 - (1.0 - g0) * e;
            j[(i, 1)] = b * e;
            j[(i, 2)] = -b * (1.0 - g0) * e * t.abs() / (tau * tau);
        }
        j
    }
}

/// Fits an antibunching dip. Reports `g2_zero`, `tau1` (ns) and `baseline`
/// (coincidences per bin), and warns about unphysical or unidentified results.
pub fn fit_g2(trace: &G2Trace) -> Result<FitResult> {
    let n = trace.delays.len();
    if n < 4 {
        return Err(Error::data("g2 fit needs at least 4 points"));
    }
    let t = &trace.delays;
    let y = &trace.coincidences;

    // Baseline from the outer quarter of |τ|, dip depth from the bins nearest zero.
    let mut by_abs: Vec<usize> = (0..n).collect();
    by_abs.sort_by(|&a, &b| t[a].abs().total_cmp(&t[b].abs()));
    let outer = &by_abs[n - (n / 4).max(1)..];
    let baseline = outer.iter().map(|&i| y[i]).sum::<f64>() / outer.len() as f64;
    if !(baseline > 0.0) {
        return Err(Error::data(
            "g2 trace has no coincidences away from zero delay",
        ));
    }
    let inner = &by_abs[..3.min(n)];
    let dip = inner.iter().map(|&i| y[i]).sum::<f64>() / inner.len() as f64;
    let g0 = dip / baseline;
    let threshold = baseline - (baseline - dip) / std::f64::consts::E;
    let span = t[n - 1].abs().max(t[0].abs());
    let tau = by_abs
        .iter()
        .find(|&&i| y[i] >= threshold && t[i].abs() > 0.0)
        .map(|&i| t[i].abs())
        .filter(|_| g0 < 1.0)
        .unwrap_or(span / 10.0)
        .max(trace.bin_width * 0.5);

    let out = lm::minimize(&G2Model { trace }, &[baseline, g0, tau])
        .ok_or_else(|| Error::data("initial g2 guess is outside the model domain"))?;
    let p = &out.params;
    let mut fit = FitResult::from_outcome(&out, n);
    fit.push("g2_zero", p[1], out.sigma(1));
    fit.push("tau1", p[2], out.sigma(2));
    fit.push("baseline", p[0], out.sigma(0));

    if !(0.0..=1.5).contains(&p[1]) {
        fit.warnings.push(format!("unphysical g2(0) = {:.4}", p[1]));
    }
    let sigma_tau = out.sigma(2);
    if !sigma_tau.is_finite() || sigma_tau > p[2] || (1.0 - p[1]).abs() <= 3.0 * out.sigma(1) {
        fit.warnings
            .push("tau1 is unidentifiable: no resolvable antibunching dip".into());
    }
    let left_ok = t[0] <= -5.0 * p[2] || t[0] >= 0.0;
    if !left_ok || t[n - 1] < 5.0 * p[2] {
        fit.warnings.push(format!(
            "trace spans less than 5 tau1 = {:.3} ns on each side",
            5.0 * p[2]
        ));
    }
    Ok(fit)
}

// ---------------------------------------------------------------------------
// Thickness study

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessPoint {
    pub thickness: f64,
    pub q_loaded: f64,
}

/// ln Q_loaded(t) with 1/Q_sc = t^p/A; parameter layout `[ln A, p]`.
struct ThicknessModel<'a> {
    points: &'a [ThicknessPoint],
    base_loss: f64,
}

impl ThicknessModel<'_> {
    fn scatter_loss(&self, t: f64, p: &[f64]) -> f64 {
        if t == 0.0 {
            0.0
        } else {
            (p[1] * t.ln() - p[0]).exp()
        }
    }
}

impl Problem for ThicknessModel<'_> {
    fn n_params(&self) -> usize {
        2
    }

    fn n_residuals(&self) -> usize {
        self.points.len()
    }

    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        if !p.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|pt| {
                let s = self.base_loss + self.scatter_loss(pt.thickness, p);
                -s.ln() - pt.q_loaded.ln()
            }),
        ))
    }

    fn data_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.q_loaded.ln().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.points.len(), 2, |i, k| {
            let t = self.points[i].thickness;
            if t == 0.0 {
                return 0.0;
            }
            let sc = self.scatter_loss(t, p);
            let frac = sc / (self.base_loss + sc);
            if k == 0 {
                frac
            } else {
                -frac * t.ln()
            }
        })
    }
}

/// Fits Q_sc(t) = A/t^p inside the loaded-Q composition with known Q_i and
/// Q_c. Residuals are taken in ln Q. Reports `amplitude` (A) and `exponent` (p).
pub fn fit_q_vs_thickness(points: &[ThicknessPoint], q_i: f64, q_c: f64) -> Result<FitResult> {
    let q0 = loaded_q(q_i, q_c, None)?;
    for pt in points {
        if !(pt.thickness >= 0.0 && pt.thickness.is_finite()) {
            return Err(Error::domain(format!(
                "thickness must be >= 0, got {}",
                pt.thickness
            )));
        }
        if !(pt.q_loaded > 0.0 && pt.q_loaded.is_finite()) {
            return Err(Error::domain(format!(
                "loaded Q must be > 0, got {}",
                pt.q_loaded
            )));
        }
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.thickness).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let positive = distinct.iter().filter(|&&t| t > 0.0).count();
    if distinct.len() < 3 || positive < 2 {
        return Err(Error::domain(
            "thickness fit needs at least 3 distinct thicknesses, 2 of them non-zero",
        ));
    }

    let base_loss = 1.0 / q0;
    // Linear regression of ln(1/Q − 1/Q0) on ln t for the starting point.
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.thickness > 0.0)
        .filter_map(|p| {
            let excess = 1.0 / p.q_loaded - base_loss;
            (excess > 0.0).then(|| (p.thickness.ln(), excess.ln()))
        })
        .collect();
    let start = if logs.len() >= 2 {
        let m = logs.len() as f64;
        let mx = logs.iter().map(|l| l.0).sum::<f64>() / m;
        let my = logs.iter().map(|l| l.1).sum::<f64>() / m;
        let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
        let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 2.0 };
        [slope * mx - my, slope]
    } else {
        let t_med = distinct[distinct.len() / 2].max(1.0);
        [2.0 * t_med.ln() + q0.ln(), 2.0]
    };

    let model = ThicknessModel { points, base_loss };
    let out = lm::minimize(&model, &start)
        .ok_or_else(|| Error::data("initial thickness guess is outside the model domain"))?;
    let mut fit = FitResult::from_outcome(&out, points.len());
    let amplitude = out.params[0].exp();
    fit.push("amplitude", amplitude, amplitude * out.sigma(0));
    fit.push("exponent", out.params[1], out.sigma(1));
    Ok(fit)
}

/// Loaded Q predicted by a thickness fit.
pub fn q_at_thickness(fit: &FitResult, thickness: f64, q_i: f64, q_c: f64) -> Result<f64> {
    let a = fit
        .value("amplitude")
        .ok_or_else(|| Error::data("fit has no amplitude"))?;
    let p = fit
        .value("exponent")
        .ok_or_else(|| Error::data("fit has no exponent"))?;
    loaded_q(
        q_i,
        q_c,
        crate::resonator::q_scatter_model(thickness, a, p)?,
    )
}
