//! Minimal standalone SVG line charts with a log10 y-axis.

use std::fmt::Write as _;
use std::path::Path;

use super::aggregate::AggregateCurve;
use super::config::XScale;
use super::{HarnessError, HarnessResult};

/// Non-positive values are drawn at this level on the log axis.
pub const LOG_FLOOR: f64 = 1e-16;

const W: f64 = 820.0;
const H: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    /// Only curves with this metric are drawn.
    pub metric: String,
    pub x_scale: XScale,
    /// `(controller, iteration)`; one dashed vertical line each.
    pub restarts: Vec<(String, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SvgReport {
    pub polylines: usize,
    pub restart_markers: usize,
    /// Points clipped to [`LOG_FLOOR`].
    pub clipped: usize,
}

fn esc(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&apos;"),
            _ => o.push(ch),
        }
    }
    o
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn t(&self, v: f64) -> f64 {
        let v = if self.log { v.max(1.0).log10() } else { v };
        ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Render the curves for `spec.metric` into an SVG document string.
pub fn render_svg(curves: &[AggregateCurve], spec: &PlotSpec) -> HarnessResult<(String, SvgReport)> {
    let picked: Vec<&AggregateCurve> = curves.iter().filter(|c| c.metric == spec.metric && !c.points.is_empty()).collect();
    if picked.is_empty() {
        return Err(HarnessError::Plot(format!("no curves for metric '{}'", spec.metric)));
    }
    let mut report = SvgReport::default();
    let xlog = spec.x_scale == XScale::Log;
    let logy = |v: f64, clipped: &mut usize| {
        if v > 0.0 && v.is_finite() {
            v.max(LOG_FLOOR).log10()
        } else {
            *clipped += 1;
            LOG_FLOOR.log10()
        }
    };
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    let mut xmax = 1.0f64;
    let mut scratch = 0;
    for c in &picked {
        for p in &c.points {
            let y = logy(p.mean, &mut scratch);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
            xmax = xmax.max(p.k as f64);
        }
    }
    let (ylo, mut yhi) = (ymin.floor(), ymax.ceil());
    if yhi <= ylo {
        yhi = ylo + 1.0;
    }
    let x_axis = if xlog {
        Axis { lo: 0.0, hi: xmax.log10().ceil().max(1.0), log: true }
    } else {
        Axis { lo: 0.0, hi: xmax, log: false }
    };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |k: f64| LEFT + x_axis.t(k) * pw;
    let py = |y: f64| TOP + (1.0 - (y - ylo) / (yhi - ylo)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", esc(&spec.title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        LEFT + pw / 2.0,
        esc(&spec.title)
    );
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    // y ticks at decades, thinned to at most ~10 labels.
    let decades = (yhi - ylo) as i64;
    let ystep = ((decades as f64) / 10.0).ceil().max(1.0) as i64;
    let mut e = ylo as i64;
    while e <= yhi as i64 {
        let y = py(e as f64);
        let _ = writeln!(
            s,
            r#"<line class="ytick" x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">1e{e}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
        e += ystep;
    }
    // x ticks
    let mut xt = Vec::new();
    if xlog {
        for e in 0..=x_axis.hi as i64 {
            xt.push((10f64.powi(e as i32), format!("1e{e}")));
        }
    } else {
        let step = nice_step(xmax);
        let mut v = 0.0;
        while v <= xmax * (1.0 + 1e-12) {
            xt.push((v, format!("{v}")));
            v += step;
        }
    }
    for (v, label) in &xt {
        let x = px(*v);
        let yb = TOP + ph;
        let _ = writeln!(
            s,
            r#"<line class="xtick" x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            yb + 5.0,
            yb + 20.0,
            esc(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">iteration</text>"#,
        LEFT + pw / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 20 {:.2})">{} (log10)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&spec.metric)
    );

    let color_of = |name: &str| {
        picked
            .iter()
            .position(|c| c.controller == name)
            .map(|i| PALETTE[i % PALETTE.len()])
            .unwrap_or("#444444")
    };
    for (name, k) in &spec.restarts {
        let x = px(*k as f64);
        let _ = writeln!(
            s,
            r#"<line class="restart" data-controller="{}" x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="{}" stroke-width="1" stroke-dasharray="4,3" opacity="0.6"/>"#,
            esc(name),
            TOP + ph,
            color_of(name)
        );
        report.restart_markers += 1;
    }
    for (i, c) in picked.iter().enumerate() {
        let mut pts = String::new();
        for p in &c.points {
            if xlog && p.k == 0 {
                continue;
            }
            let y = logy(p.mean, &mut report.clipped);
            let _ = write!(pts, "{:.2},{:.2} ", px(p.k as f64), py(y));
        }
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-controller="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            esc(&c.controller),
            PALETTE[i % PALETTE.len()],
            pts.trim_end()
        );
        report.polylines += 1;
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line class="legend" x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 20.0,
            PALETTE[i % PALETTE.len()],
            lx + 25.0,
            ly + 4.0,
            esc(&c.controller)
        );
    }
    s.push_str("</svg>\n");
    Ok((s, report))
}

pub fn emit_svg(curves: &[AggregateCurve], spec: &PlotSpec, path: &Path) -> HarnessResult<SvgReport> {
    let (text, report) = render_svg(curves, spec)?;
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::aggregate::CurvePoint;

    fn curve(name: &str, vals: &[(u64, f64)]) -> AggregateCurve {
        AggregateCurve {
            controller: name.into(),
            metric: "err".into(),
            points: vals.iter().map(|&(k, mean)| CurvePoint { k, mean, stderr: 0.0 }).collect(),
        }
    }

    fn spec(restarts: Vec<(String, u64)>) -> PlotSpec {
        PlotSpec {
            title: "t & <u>".into(),
            metric: "err".into(),
            x_scale: XScale::Linear,
            restarts,
        }
    }

    #[test]
    fn flat_curve() {
        let (svg, r) = render_svg(&[curve("a", &[(0, 1.0), (10, 1.0)])], &spec(vec![])).unwrap();
        assert_eq!(r.polylines, 1);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("1e0") && svg.contains("1e1"));
        assert!(svg.contains("t &amp; &lt;u&gt;"));
    }

    #[test]
    fn restart_markers_and_clipping() {
        let c = curve("a", &[(0, 1.0), (5, 0.0), (10, 1e-3)]);
        let (svg, r) = render_svg(&[c], &spec(vec![("a".into(), 5), ("a".into(), 8)])).unwrap();
        assert_eq!(r.restart_markers, 2);
        assert_eq!(svg.matches("class=\"restart\"").count(), 2);
        assert_eq!(r.clipped, 1);
    }

    #[test]
    fn missing_metric_is_error() {
        let mut s = spec(vec![]);
        s.metric = "gamma".into();
        assert!(render_svg(&[curve("a", &[(0, 1.0)])], &s).is_err());
    }

    #[test]
    fn log_x_skips_zero() {
        let mut s = spec(vec![]);
        s.x_scale = XScale::Log;
        let (svg, _) = render_svg(&[curve("a", &[(0, 1.0), (10, 0.1), (100, 0.01)])], &s).unwrap();
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }
}
