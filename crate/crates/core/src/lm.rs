//! Levenberg–Marquardt least squares with analytic Jacobians.
//!
//! Damping follows Marquardt's scaling: the normal matrix is augmented by
//! λ·diag(JᵀJ), λ starts at 1e-3 and moves by ×10 / ÷10. Convergence is the
//! scaled-gradient test max_j |J_jᵀr| / (‖J_j‖‖r‖) ≤ tolerance. A run that
//! stalls with the gradient below what rounding in the cost can resolve also
//! counts as converged.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const INITIAL_DAMPING: f64 = 1e-3;
pub const DAMPING_FACTOR: f64 = 10.0;
pub const MAX_ITERATIONS: usize = 200;
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
const MAX_DAMPING: f64 = 1e16;
// Relative eigenvalue below which a direction of JᵀJ counts as unidentified.
const RANK_TOLERANCE: f64 = 1e-13;

/// A least-squares problem: residuals `model(p) − data` and their Jacobian.
pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// `None` when `params` lies outside the model's domain.
    fn residuals(&self, params: &[f64]) -> Option<DVector<f64>>;
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64>;
    /// ‖data‖, the scale against which a residual counts as zero.
    fn data_norm(&self) -> f64;
}

// A residual this small relative to the data is at the rounding floor.
const ZERO_RESIDUAL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub params: Vec<f64>,
    /// s²·(JᵀJ)⁻¹ with s² = RSS/(m − n). Rows and columns of unidentified
    /// parameters hold infinities.
    pub covariance: DMatrix<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_criterion: f64,
}

impl Outcome {
    pub fn sigma(&self, i: usize) -> f64 {
        let v = self.covariance[(i, i)];
        if v.is_nan() {
            f64::INFINITY
        } else {
            v.max(0.0).sqrt()
        }
    }

    pub fn residual_rms(&self, n_residuals: usize) -> f64 {
        (self.rss / n_residuals.max(1) as f64).sqrt()
    }
}

fn gradient_criterion(j: &DMatrix<f64>, r: &DVector<f64>, data_norm: f64) -> f64 {
    let rn = r.norm();
    if rn <= ZERO_RESIDUAL * data_norm {
        return 0.0;
    }
    j.column_iter()
        .map(|c| {
            let cn = c.norm();
            if cn == 0.0 {
                0.0
            } else {
                c.dot(r).abs() / (cn * rn)
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest gradient cosine whose descent is visible in the cost. A step along
/// a gradient of cosine c lowers the cost by about c²‖r‖², while the cost itself
/// carries rounding of order ε‖data‖‖r‖.
fn resolvable_gradient(residual_norm: f64, data_norm: f64) -> f64 {
    if residual_norm == 0.0 {
        return f64::INFINITY;
    }
    (16.0 * f64::EPSILON * data_norm / residual_norm).sqrt()
}

/// Minimises ½‖r(p)‖² from `start`, which must be inside the model domain.
pub fn minimize<P: Problem>(problem: &P, start: &[f64]) -> Option<Outcome> {
    let n = problem.n_params();
    let mut x = start.to_vec();
    let mut r = problem.residuals(&x)?;
    let mut cost = r.norm_squared();
    let mut lambda = INITIAL_DAMPING;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;

    while iterations < MAX_ITERATIONS {
        let j = problem.jacobian(&x);
        if gradient_criterion(&j, &r, problem.data_norm()) <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let diag_max = jtj.diagonal().max();
        let floor = if diag_max > 0.0 {
            diag_max * 1e-15
        } else {
            1.0
        };
        let mut accepted = false;
        while lambda <= MAX_DAMPING {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= DAMPING_FACTOR;
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rt) = problem.residuals(&trial) {
                let c = rt.norm_squared();
                if c.is_finite() && c < cost {
                    x = trial;
                    r = rt;
                    cost = c;
                    lambda = (lambda / DAMPING_FACTOR).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            lambda *= DAMPING_FACTOR;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }

    let j = problem.jacobian(&x);
    let crit = gradient_criterion(&j, &r, problem.data_norm());
    converged |= crit <= GRADIENT_TOLERANCE;
    converged |= stalled && crit <= resolvable_gradient(r.norm(), problem.data_norm());
    let dof = problem.n_residuals().saturating_sub(n).max(1);
    let s2 = cost / dof as f64;
    Some(Outcome {
        covariance: covariance(&j, s2),
        params: x,
        rss: cost,
        iterations,
        converged,
        gradient_criterion: crit,
    })
}

/// s²(JᵀJ)⁻¹ computed in correlation form. Parameters with weight in a
/// numerically null direction get infinite variance.
fn covariance(j: &DMatrix<f64>, s2: f64) -> DMatrix<f64> {
    let n = j.ncols();
    let jtj = j.transpose() * j;
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = jtj[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let corr = DMatrix::from_fn(n, n, |a, b| jtj[(a, b)] * scale[a] * scale[b]);
    let eig = SymmetricEigen::new(corr);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut unidentified = vec![false; n];
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if ev <= RANK_TOLERANCE * top {
            for i in 0..n {
                if v[i].abs() > 1e-6 {
                    unidentified[i] = true;
                }
            }
        } else {
            inv += (v * v.transpose()) / ev;
        }
    }
    for i in 0..n {
        if scale[i] == 0.0 {
            unidentified[i] = true;
        }
    }
    DMatrix::from_fn(n, n, |a, b| {
        if unidentified[a] || unidentified[b] {
            if a == b {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            s2 * inv[(a, b)] * scale[a] * scale[b]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(−b x)
    struct Decay {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for Decay {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
            Some(DVector::from_iterator(
                self.x.len(),
                self.x
                    .iter()
                    .zip(&self.y)
                    .map(|(x, y)| p[0] * (-p[1] * x).exp() - y),
            ))
        }
        fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
            DMatrix::from_fn(self.x.len(), 2, |i, k| {
                let e = (-p[1] * self.x[i]).exp();
                if k == 0 {
                    e
                } else {
                    -p[0] * self.x[i] * e
                }
            })
        }
        fn data_norm(&self) -> f64 {
            self.y.iter().map(|v| v * v).sum::<f64>().sqrt()
        }
    }

    #[test]
    fn recovers_exact_exponential() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let out = minimize(&Decay { x, y }, &[1.0, 0.1]).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 3.0).abs() < 1e-9);
        assert!((out.params[1] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn unidentified_parameter_has_infinite_sigma() {
        // With a = 0 the rate b has no influence.
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = vec![0.0; 10];
        let out = minimize(&Decay { x, y }, &[0.0, 1.0]).unwrap();
        assert!(out.sigma(1).is_infinite());
        assert!(out.sigma(0).is_finite());
    }
}
