//! Single-excitation Lindblad solver for a two-level emitter coupled to one
//! cavity mode. It is an independent numerical check of the analytic
//! branching fraction, Purcell factor and efficiency.
//!
//! The state space is {|e,0⟩, |g,1⟩, |g,0⟩}. The Hamiltonian (rotating frame
//! of the cavity) is H = δ·σ⁺σ⁻ + g(σ⁺a + σ⁻a†), and the collapse operators
//! are √κ_c·a, √κ_i·a, √γ_r·σ⁻, √γ_nr·σ⁻ and √(γ_φ/2)·σ_z, so the emitter
//! FWHM is γ_r + γ_nr + 2γ_φ.
//!
//! ρ is stored through its nine real Hermitian coordinates. The generator is
//! linear and time independent, so the RK4 step is the fixed matrix
//! Σ_{k≤4} (hL)^k/k!. The probability carried out by each channel is
//! accumulated as extra rows of the same linear system.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Complex, DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::coupling::{purcell_good, CoupledSystem};
use crate::error::{Error, Result};
use crate::units::SPEED_OF_LIGHT;

/// Rates in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    pub g: f64,
    pub kappa_c: f64,
    pub kappa_i: f64,
    pub gamma_r: f64,
    pub gamma_nr: f64,
    pub gamma_phi: f64,
    pub delta: f64,
}

impl LindbladParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g", self.g),
            ("kappa_c", self.kappa_c),
            ("kappa_i", self.kappa_i),
            ("gamma_r", self.gamma_r),
            ("gamma_nr", self.gamma_nr),
            ("gamma_phi", self.gamma_phi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !self.delta.is_finite() {
            return Err(Error::domain("delta must be finite"));
        }
        if self.gamma_r + self.gamma_nr + self.kappa_c + self.kappa_i == 0.0 {
            return Err(Error::domain("at least one decay channel must be open"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_c + self.kappa_i
    }

    /// Emitter FWHM γ_r + γ_nr + 2γ_φ.
    pub fn emitter_linewidth(&self) -> f64 {
        self.gamma_r + self.gamma_nr + 2.0 * self.gamma_phi
    }

    /// Textbook Purcell factor 4g²/(κγ_r).
    pub fn purcell(&self) -> f64 {
        4.0 * self.g * self.g / (self.kappa() * self.gamma_r)
    }

    /// Fastest timescale in the generator.
    pub fn max_rate(&self) -> f64 {
        self.kappa()
            .max(self.emitter_linewidth())
            .max(2.0 * self.g)
            .max(self.delta.abs())
    }

    /// Slower of the two population-loss rates, κ and γ_r + γ_nr, ignoring
    /// closed channels.
    pub fn min_decay_rate(&self) -> f64 {
        [self.kappa(), self.gamma_r + self.gamma_nr]
            .into_iter()
            .filter(|&r| r > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// 0.01 / max_rate.
    pub fn default_step(&self) -> f64 {
        0.01 / self.max_rate()
    }

    /// 10 / min_decay_rate.
    pub fn default_duration(&self) -> f64 {
        10.0 / self.min_decay_rate()
    }
}

/// Where the single excitation ended up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionBudget {
    pub p_bus: f64,
    pub p_cavity_loss: f64,
    pub p_free: f64,
    pub p_nonrad: f64,
    /// Excitation still in the emitter or cavity at the final time.
    pub residual: f64,
}

impl EmissionBudget {
    pub fn total(&self) -> f64 {
        self.p_bus + self.p_cavity_loss + self.p_free + self.p_nonrad + self.residual
    }

    /// Fraction of decayed population that left through the cavity mode.
    pub fn cavity_branching(&self) -> f64 {
        let cav = self.p_bus + self.p_cavity_loss;
        let decayed = cav + self.p_free + self.p_nonrad;
        if decayed > 0.0 {
            cav / decayed
        } else {
            0.0
        }
    }

    /// p_bus / (p_bus + p_free): the coupling efficiency for a lossless cavity
    /// and a perfect emitter.
    pub fn bus_fraction(&self) -> f64 {
        let d = self.p_bus + self.p_free;
        if d > 0.0 {
            self.p_bus / d
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveDiagnostics {
    pub steps: u64,
    pub dt: f64,
    pub t_final: f64,
    /// Largest |Δ tr ρ| over a single step.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue of ρ over the sampled steps.
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSample {
    pub t: f64,
    pub p_emitter: f64,
    pub p_cavity: f64,
    pub p_bus: f64,
    pub p_cavity_loss: f64,
    pub p_free: f64,
    pub p_nonrad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub budget: EmissionBudget,
    pub diagnostics: EvolveDiagnostics,
    pub samples: Vec<TimeSample>,
}

pub const TRACE_TOLERANCE: f64 = 1e-9;
pub const PSD_TOLERANCE: f64 = 1e-9;
pub const RESIDUAL_LIMIT: f64 = 1e-3;

const DIM: usize = 3;
// Real coordinates of a Hermitian 3×3 matrix: three diagonal entries, then
// (Re, Im) of each upper off-diagonal entry.
const RHO: usize = DIM * DIM;
const ACC: usize = 4;
const AUG: usize = RHO + ACC;

const E0: usize = 0;
const G1: usize = 1;
const G0: usize = 2;

const OFF_DIAGONAL: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

type C = Complex<f64>;
type Op = Matrix3<C>;

fn to_coords(m: &Op) -> [f64; RHO] {
    let mut v = [0.0; RHO];
    for i in 0..DIM {
        v[i] = m[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        v[DIM + 2 * k] = m[(i, j)].re;
        v[DIM + 2 * k + 1] = m[(i, j)].im;
    }
    v
}

fn from_coords(v: &[f64]) -> Op {
    let mut m = Op::zeros();
    for i in 0..DIM {
        m[(i, i)] = C::new(v[i], 0.0);
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        let z = C::new(v[DIM + 2 * k], v[DIM + 2 * k + 1]);
        m[(i, j)] = z;
        m[(j, i)] = z.conj();
    }
    m
}

const P_EXCITED: usize = E0;
const P_CAVITY: usize = G1;

struct Liouvillian {
    hamiltonian: Op,
    collapse: Vec<Op>,
}

impl Liouvillian {
    fn new(p: &LindbladParams) -> Self {
        let one = C::new(1.0, 0.0);
        let mut h = Op::zeros();
        h[(E0, E0)] = C::new(p.delta, 0.0);
        h[(E0, G1)] = C::new(p.g, 0.0);
        h[(G1, E0)] = C::new(p.g, 0.0);

        let mut lower = Op::zeros();
        lower[(G0, E0)] = one;
        let mut annihilate = Op::zeros();
        annihilate[(G0, G1)] = one;
        let sigma_z = Op::from_diagonal(&nalgebra::Vector3::new(one, -one, -one));

        // Channels sharing an operator merge: D[√a·C] + D[√b·C] = D[√(a+b)·C].
        let collapse = [
            (p.kappa_c + p.kappa_i, annihilate),
            (p.gamma_r + p.gamma_nr, lower),
            (0.5 * p.gamma_phi, sigma_z),
        ]
        .into_iter()
        .filter(|(rate, _)| *rate > 0.0)
        .map(|(rate, op)| op * C::new(rate.sqrt(), 0.0))
        .collect();
        Self {
            hamiltonian: h,
            collapse,
        }
    }

    /// −i[H, ρ] + Σ_k (C_k ρ C_k† − ½{C_k†C_k, ρ})
    fn apply(&self, rho: &Op) -> Op {
        let h = &self.hamiltonian;
        let mut out = (h * rho - rho * h) * C::new(0.0, -1.0);
        for c in &self.collapse {
            let cdc = c.adjoint() * c;
            out += c * rho * c.adjoint() - (cdc * rho + rho * cdc) * C::new(0.5, 0.0);
        }
        out
    }
}

/// Augmented real generator: the nine Hermitian coordinates of ρ followed by
/// the four channel accumulators (bus, cavity loss, free space, nonradiative).
fn generator(p: &LindbladParams) -> DMatrix<f64> {
    let l = Liouvillian::new(p);
    let mut m = DMatrix::<f64>::zeros(AUG, AUG);
    for k in 0..RHO {
        let mut basis = [0.0; RHO];
        basis[k] = 1.0;
        let image = to_coords(&l.apply(&from_coords(&basis)));
        for (r, v) in image.iter().enumerate() {
            m[(r, k)] = *v;
        }
    }
    m[(RHO, P_CAVITY)] = p.kappa_c;
    m[(RHO + 1, P_CAVITY)] = p.kappa_i;
    m[(RHO + 2, P_EXCITED)] = p.gamma_r;
    m[(RHO + 3, P_EXCITED)] = p.gamma_nr;
    m
}

/// Fourth-order Taylor propagator, which is exactly one classical RK4 step
/// for a linear system.
fn rk4_step_matrix(m: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let hm = m * h;
    let mut term = DMatrix::<f64>::identity(AUG, AUG);
    let mut step = term.clone();
    for k in 1..=4 {
        term = &term * &hm / k as f64;
        step += &term;
    }
    step
}

/// Rows of the step matrix restricted to coordinates reachable from the
/// initial state, with exact zeros dropped.
struct SparseStep {
    active: Vec<usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseStep {
    fn new(step: &DMatrix<f64>) -> Self {
        let mut reachable = [false; AUG];
        reachable[P_EXCITED] = true;
        loop {
            let mut changed = false;
            for r in 0..AUG {
                if !reachable[r] && (0..AUG).any(|c| reachable[c] && step[(r, c)] != 0.0) {
                    reachable[r] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let active: Vec<usize> = (0..AUG).filter(|&i| reachable[i]).collect();
        let rows = active
            .iter()
            .map(|&r| {
                active
                    .iter()
                    .filter_map(|&c| {
                        let v = step[(r, c)];
                        (v != 0.0).then_some((c, v))
                    })
                    .collect()
            })
            .collect();
        Self { active, rows }
    }

    fn apply(&self, y: &[f64; AUG], out: &mut [f64; AUG]) {
        for (&r, row) in self.active.iter().zip(&self.rows) {
            out[r] = row.iter().map(|&(c, v)| v * y[c]).sum();
        }
    }
}

fn trace(y: &[f64; AUG]) -> f64 {
    y[..DIM].iter().sum()
}

fn min_eigenvalue(y: &[f64; AUG]) -> f64 {
    from_coords(&y[..RHO])
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn sample(t: f64, y: &[f64; AUG]) -> TimeSample {
    TimeSample {
        t,
        p_emitter: y[P_EXCITED],
        p_cavity: y[P_CAVITY],
        p_bus: y[RHO],
        p_cavity_loss: y[RHO + 1],
        p_free: y[RHO + 2],
        p_nonrad: y[RHO + 3],
    }
}

const EIGEN_SAMPLES: u64 = 256;

/// Integrates from |e,0⟩ to `t_final` with fixed RK4 steps no larger than `dt`.
pub fn evolve(params: &LindbladParams, t_final: f64, dt: f64) -> Result<EmissionBudget> {
    Ok(evolve_with_samples(params, t_final, dt, 0)?.budget)
}

/// [`evolve`] with the default step and duration.
pub fn evolve_default(params: &LindbladParams) -> Result<EmissionBudget> {
    params.validate()?;
    evolve(params, params.default_duration(), params.default_step())
}

/// Full integration record. When `sample_every > 0` a [`TimeSample`] is kept
/// every `sample_every` steps, plus the initial and final states.
pub fn evolve_with_samples(
    params: &LindbladParams,
    t_final: f64,
    dt: f64,
    sample_every: u64,
) -> Result<Evolution> {
    params.validate()?;
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::domain(format!(
            "t_final must be finite and > 0, got {t_final}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::domain(format!("dt must be > 0, got {dt}")));
    }
    if dt * params.max_rate() >= 0.1 {
        return Err(Error::domain(format!(
            "dt = {dt} ns is too coarse: dt * max_rate must stay below 0.1 (max_rate = {})",
            params.max_rate()
        )));
    }
    let steps = (t_final / dt).ceil().max(1.0);
    if steps > 1e10 {
        return Err(Error::domain(format!("{steps:e} steps requested")));
    }
    let steps = steps as u64;
    let h = t_final / steps as f64;
    let step = SparseStep::new(&rk4_step_matrix(&generator(params), h));

    let mut y = [0.0; AUG];
    y[P_EXCITED] = 1.0;
    let mut next = y;
    let mut max_trace_drift: f64 = 0.0;
    let mut min_eig = min_eigenvalue(&y);
    let eigen_every = (steps / EIGEN_SAMPLES).max(1);
    let mut samples = Vec::new();
    if sample_every > 0 {
        samples.push(sample(0.0, &y));
    }
    let mut tr = trace(&y);

    for n in 1..=steps {
        step.apply(&y, &mut next);
        std::mem::swap(&mut y, &mut next);
        let tr_new = trace(&y);
        max_trace_drift = max_trace_drift.max((tr_new - tr).abs());
        tr = tr_new;
        if n % eigen_every == 0 || n == steps {
            min_eig = min_eig.min(min_eigenvalue(&y));
        }
        if sample_every > 0 && (n % sample_every == 0 || n == steps) {
            samples.push(sample(n as f64 * h, &y));
        }
    }

    if max_trace_drift > TRACE_TOLERANCE {
        return Err(Error::NonConvergence(format!(
            "trace drifted by {max_trace_drift:e} in one step; reduce dt"
        )));
    }
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::NonConvergence(format!(
            "density matrix lost positivity (eigenvalue {min_eig:e}); reduce dt"
        )));
    }
    let budget = EmissionBudget {
        p_bus: y[RHO],
        p_cavity_loss: y[RHO + 1],
        p_free: y[RHO + 2],
        p_nonrad: y[RHO + 3],
        residual: y[P_EXCITED] + y[P_CAVITY],
    };
    if budget.residual > RESIDUAL_LIMIT {
        return Err(Error::NonConvergence(format!(
            "{:.3e} of the excitation remains at t_final = {t_final} ns; increase t_final",
            budget.residual
        )));
    }
    Ok(Evolution {
        budget,
        diagnostics: EvolveDiagnostics {
            steps,
            dt: h,
            t_final,
            max_trace_drift,
            min_eigenvalue: min_eig,
        },
        samples,
    })
}

/// Writes samples as `t_ns,p_e,p_cav,p_bus_cum,p_cavity_loss_cum,p_free_cum,p_nonrad_cum`.
pub fn write_time_series<W: Write>(samples: &[TimeSample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "t_ns",
        "p_e",
        "p_cav",
        "p_bus_cum",
        "p_cavity_loss_cum",
        "p_free_cum",
        "p_nonrad_cum",
    ])?;
    for s in samples {
        w.write_record(
            [
                s.t,
                s.p_emitter,
                s.p_cavity,
                s.p_bus,
                s.p_cavity_loss,
                s.p_free,
                s.p_nonrad,
            ]
            .iter()
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Maps a coupled system onto oracle rates.
///
/// κ = ω/Q split as κ_c/κ = Q/Q_c; g = √(F·κ·γ_r)/2 with F the overlap-scaled
/// Purcell factor; γ_φ fills the gap between the ZPL width and γ_r + γ_nr and
/// is clamped at zero for lifetime-limited lines; δ = ω_zpl − ω_line.
pub fn params_from_system(sys: &CoupledSystem) -> Result<LindbladParams> {
    sys.validate()?;
    let res = &sys.resonator;
    let em = &sys.emitter;
    let omega = 2.0 * PI * SPEED_OF_LIGHT / em.zpl_wavelength;
    let q = res.loaded_q()?;
    let kappa = omega / q;
    let kappa_c = kappa * q / res.q_coupling;
    let kappa_i = (kappa - kappa_c).max(0.0);
    let purcell = purcell_good(q, res.mode_volume)? * sys.effective_overlap();
    let gamma_r = em.radiative_rate();
    let gamma_nr = em.nonradiative_rate();
    let gamma_phi = (0.5 * (omega / em.q_emitter() - gamma_r - gamma_nr)).max(0.0);
    let line = sys.nearest_line();
    let delta = 2.0 * PI * SPEED_OF_LIGHT * (1.0 / em.zpl_wavelength - 1.0 / line);
    Ok(LindbladParams {
        g: 0.5 * (purcell * kappa * gamma_r).sqrt(),
        kappa_c,
        kappa_i,
        gamma_r,
        gamma_nr,
        gamma_phi,
        delta,
    })
}
