//! Minimal SVG output: line plots with optional log axes and a legend, and
//! heatmaps drawn as gridded rectangles.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy)]
pub struct AxisSpec<'a> {
    pub label: &'a str,
    pub log: bool,
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Maps data to pixels along one axis.
struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool, px_lo: f64, px_hi: f64) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 * lo.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        }
        Some(Self {
            lo,
            hi,
            log,
            px_lo,
            px_hi,
        })
    }

    fn map(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some(self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo))
    }

    /// Tick positions in data units: decades on log axes, 1/2/5 steps otherwise.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let first = self.lo.ceil() as i32;
            let last = self.hi.floor() as i32;
            let stride = ((last - first) / 8 + 1).max(1);
            return (first..=last)
                .step_by(stride as usize)
                .map(|e| 10f64.powi(e))
                .collect();
        }
        let raw = (self.hi - self.lo) / 6.0;
        let exp = raw.log10().floor() as i32;
        let mag = 10f64.powi(exp);
        let mult = [1, 2, 5, 10]
            .into_iter()
            .find(|&m| m as f64 * mag >= raw)
            .unwrap_or(10);
        let step = mult as f64 * mag;
        // Ticks are k·mult decades; dividing by 10^|exp| keeps 0.6 exact.
        let at = |k: i64| {
            let n = (k * mult) as f64;
            if exp < 0 {
                n / 10f64.powi(-exp)
            } else {
                n * mag
            }
        };
        let first = (self.lo / step - 1e-9).ceil() as i64;
        let last = (self.hi / step + 1e-9).floor() as i64;
        (first..=last).map(at).collect()
    }
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.log10().round() as i32)
    } else if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, xs: &Scale, ys: &Scale, x: AxisSpec, y: AxisSpec) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in xs.ticks() {
        if let Some(px) = xs.map(t) {
            let _ = writeln!(
                out,
                r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                tick_label(t, xs.log)
            );
        }
    }
    for t in ys.ticks() {
        if let Some(py) = ys.map(t) {
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                tick_label(t, ys.log)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(x.label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y.label)
    );
}

/// Line plot. Points that are non-finite, or non-positive on a log axis,
/// break the line.
pub fn line_plot(title: &str, x: AxisSpec, y: AxisSpec, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let xs = Scale::new(all().map(|p| p.0), x.log, LEFT, WIDTH - RIGHT);
    let ys = Scale::new(all().map(|p| p.1), y.log, HEIGHT - BOTTOM, TOP);
    let mut out = String::new();
    header(&mut out, title);
    let (Some(xs), Some(ys)) = (xs, ys) else {
        out.push_str("</svg>\n");
        return out;
    };
    axes(&mut out, &xs, &ys, x, y);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for &(px, py) in &s.points {
            match (xs.map(px), ys.map(py)) {
                (Some(a), Some(b)) => segments.last_mut().unwrap().push((a, b)),
                _ => segments.push(Vec::new()),
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let pts: Vec<String> = seg.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn color_ramp(t: f64) -> String {
    // Dark blue → teal → yellow.
    const STOPS: [(f64, [f64; 3]); 3] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.5, [33.0, 145.0, 140.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let (a, b) = if t <= 0.5 {
        (STOPS[0], STOPS[1])
    } else {
        (STOPS[1], STOPS[2])
    };
    let f = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (a.1[i] + f * (b.1[i] - a.1[i])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of `values[i_y * x.len() + i_x]`; `None` cells are grey.
pub fn heatmap(
    title: &str,
    x: AxisSpec,
    y: AxisSpec,
    x_values: &[f64],
    y_values: &[f64],
    values: &[Option<f64>],
) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let edges = |v: &[f64], log: bool| -> Vec<f64> {
        let t: Vec<f64> = v.iter().map(|&a| if log { a.log10() } else { a }).collect();
        let n = t.len();
        let half = |i: usize| if n > 1 { 0.5 * (t[i + 1] - t[i]) } else { 0.5 };
        let mut e = vec![t[0] - half(0)];
        for i in 0..n.saturating_sub(1) {
            e.push(0.5 * (t[i] + t[i + 1]));
        }
        e.push(t[n - 1] + half(n.saturating_sub(2)));
        e.into_iter()
            .map(|a| if log { 10f64.powf(a) } else { a })
            .collect()
    };
    if x_values.is_empty() || y_values.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let xe = edges(x_values, x.log);
    let ye = edges(y_values, y.log);
    let (Some(xs), Some(ys)) = (
        Scale::new(xe.iter().copied(), x.log, LEFT, WIDTH - RIGHT),
        Scale::new(ye.iter().copied(), y.log, HEIGHT - BOTTOM, TOP),
    ) else {
        out.push_str("</svg>\n");
        return out;
    };
    let finite = values.iter().flatten().copied();
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for (iy, _) in y_values.iter().enumerate() {
        for (ix, _) in x_values.iter().enumerate() {
            let (Some(a), Some(b), Some(c), Some(d)) = (
                xs.map(xe[ix]),
                xs.map(xe[ix + 1]),
                ys.map(ye[iy + 1]),
                ys.map(ye[iy]),
            ) else {
                continue;
            };
            let fill = match values[iy * x_values.len() + ix] {
                Some(v) => color_ramp((v - lo) / span),
                None => "#cccccc".into(),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{a:.2}" y="{c:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                b - a,
                d - c
            );
        }
    }
    axes(&mut out, &xs, &ys, x, y);
    let bar_x = WIDTH - RIGHT + 20.0;
    for i in 0..50 {
        let t = i as f64 / 49.0;
        let py = HEIGHT - BOTTOM - t * (HEIGHT - BOTTOM - TOP);
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x}" y="{:.2}" width="20" height="{:.2}" fill="{}"/>"#,
            py - (HEIGHT - BOTTOM - TOP) / 49.0,
            (HEIGHT - BOTTOM - TOP) / 49.0 + 0.5,
            color_ramp(t)
        );
    }
    if lo.is_finite() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text><text x="{:.1}" y="{:.1}">{}</text>"#,
            bar_x + 26.0,
            HEIGHT - BOTTOM,
            tick_label(lo, false),
            bar_x + 26.0,
            TOP + 10.0,
            tick_label(hi, false)
        );
    }
    out.push_str("</svg>\n");
    out
}
