//! Small numerical helpers shared across modules: compensated summation,
//! trapezoidal quadrature, linear interpolation, Lorentzians and a
//! golden-section maximiser.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Trapezoidal integral of `y` over the (possibly nonuniform) abscissa `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    compensated_sum(
        x.windows(2)
            .zip(y.windows(2))
            .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])),
    )
}

/// Linear interpolation of the sorted table (`xs`, `ys`) at `x`. Returns `None`
/// outside the table range.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    if n == 1 {
        return Some(ys[0]);
    }
    let hi = xs.partition_point(|&v| v < x).clamp(1, n - 1);
    let lo = hi - 1;
    let span = xs[hi] - xs[lo];
    if span == 0.0 {
        return Some(ys[lo]);
    }
    let t = (x - xs[lo]) / span;
    Some(ys[lo] + t * (ys[hi] - ys[lo]))
}

/// Unit-peak Lorentzian `1 / (1 + (2(x - center)/fwhm)²)`.
#[inline]
pub fn lorentzian_peak(x: f64, center: f64, fwhm: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    1.0 / (1.0 + u * u)
}

/// Unit-area Lorentzian.
#[inline]
pub fn lorentzian_area(x: f64, center: f64, fwhm: f64) -> f64 {
    2.0 / (std::f64::consts::PI * fwhm) * lorentzian_peak(x, center, fwhm)
}

/// `n` points from `min` to `max` inclusive, linear or logarithmic.
pub fn grid(min: f64, max: f64, n: usize, log: bool) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if log {
                    (min.ln() + t * (max.ln() - min.ln())).exp()
                } else {
                    min + t * (max - min)
                }
            })
            .collect(),
    }
}

/// Refines a sampled extremum at index `i` by fitting a parabola through
/// `(i-1, i, i+1)`. Returns `(x, y)` of the vertex, or the sample itself at
/// the array edges.
pub fn parabolic_vertex(x: &[f64], y: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= x.len() {
        return (x[i], y[i]);
    }
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if a == 0.0 || !a.is_finite() {
        return (x1, y1);
    }
    // y(x) = y0 + d01 (x - x0) + a (x - x0)(x - x1)
    let b = d01 - a * (x0 + x1);
    let xv = (-b / (2.0 * a)).clamp(x0, x2);
    (xv, y0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1))
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `x_tol` (absolute) or the function
/// values at the interior points agree to `f_rel_tol` relative.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    f_rel_tol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo).abs() <= x_tol {
            break;
        }
        let scale = f1.abs().max(f2.abs()).max(f64::MIN_POSITIVE);
        if (f1 - f2).abs() <= f_rel_tol * scale && (hi - lo).abs() <= 1e3 * x_tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
