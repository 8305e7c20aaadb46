//! Minimal deterministic SVG charts. Every number is printed with a fixed
//! precision so the same input always renders to the same bytes.

use std::fmt::Write;

use super::ReportError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
/// Series longer than this are reduced to per-bucket means.
const MAX_POINTS: usize = 1200;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, y)` points in x order.
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn from_values(label: impl Into<String>, ys: &[f64]) -> Self {
        Series {
            label: label.into(),
            points: ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{:.*}", decimals, v)
}

fn downsample(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let per = points.len().div_ceil(MAX_POINTS);
    points
        .chunks(per)
        .map(|c| {
            let n = c.len() as f64;
            (c.iter().map(|p| p.0).sum::<f64>() / n, c.iter().map(|p| p.1).sum::<f64>() / n)
        })
        .collect()
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{HEIGHT:.0}" viewBox="0 0 {WIDTH:.0} {HEIGHT:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{l:.1},{t:.1} L{l:.1},{b:.1} L{r:.1},{b:.1}" fill="none" stroke="black"/>"#
    );
    let ys = nice_step(f.y1 - f.y0, 5);
    let mut v = (f.y0 / ys).ceil() * ys;
    while v <= f.y1 + ys * 1e-9 {
        let y = f.py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{l:.1}" y2="{y:.1}" stroke="black"/><line x1="{l:.1}" y1="{y:.1}" x2="{r:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            l - 5.0,
            l - 8.0,
            y + 4.0,
            fmt_tick(v, ys)
        );
        v += ys;
    }
    if x_ticks {
        let xs = nice_step(f.x1 - f.x0, 6);
        let mut v = (f.x0 / xs).ceil() * xs;
        while v <= f.x1 + xs * 1e-9 {
            let x = f.px(v);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{b:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                b + 5.0,
                b + 18.0,
                fmt_tick(v, xs)
            );
            v += xs;
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    let x = WIDTH - RIGHT + 15.0;
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="14" height="4" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 4.0,
            PALETTE[i % PALETTE.len()],
            x + 20.0,
            y + 2.0,
            escape(label)
        );
    }
}

/// Line chart of one or more series with a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String, ReportError> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(ReportError::Empty(title.to_string()));
    }
    let series: Vec<Series> = series
        .iter()
        .map(|s| Series {
            label: s.label.clone(),
            points: downsample(&s.points),
        })
        .collect();
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut y0: f64 = 0.0;
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 += (y1 - y0) * 0.05;
    let frame = Frame { x0, x1, y0, y1 };

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() == 1 {
            let (x, y) = s.points[0];
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                frame.px(x),
                frame.py(y)
            );
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        );
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

/// One bar per entry. `marked` entries get a `>=` prefix on their value label.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64, bool)]) -> Result<String, ReportError> {
    if bars.is_empty() {
        return Err(ReportError::Empty(title.to_string()));
    }
    let top = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1e-9) * 1.15;
    let frame = Frame {
        x0: 0.0,
        x1: bars.len() as f64,
        y0: 0.0,
        y1: top,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, "", y_label, false);
    let slot = (WIDTH - LEFT - RIGHT) / bars.len() as f64;
    for (i, (label, value, marked)) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.2);
        let y = frame.py(*value);
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            slot * 0.6,
            frame.py(0.0) - y,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}{:.2}</text>"#,
            x + slot * 0.3,
            y - 5.0,
            if *marked { "&gt;=" } else { "" },
            value
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x + slot * 0.3,
            HEIGHT - BOTTOM + 18.0,
            escape(label)
        );
    }
    let labels: Vec<&str> = bars.iter().map(|b| b.0.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_drawn() {
        let svg = line_chart("t", "x", "y", &[Series::from_values("a", &[3.0])]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn two_series_two_legend_entries() {
        let a = Series::from_values("backpressure", &[1.0, 2.0, 3.0]);
        let b = Series::from_values("scats", &[2.0, 2.0, 5.0]);
        let svg = line_chart("cmp", "slot", "queue", &[a, b]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">backpressure</text>") && svg.contains(">scats</text>"));
    }

    #[test]
    fn empty_is_error() {
        assert!(line_chart("t", "x", "y", &[]).is_err());
        assert!(line_chart("t", "x", "y", &[Series::from_values("a", &[])]).is_err());
        assert!(bar_chart("t", "y", &[]).is_err());
    }

    #[test]
    fn long_series_downsampled() {
        let ys: Vec<f64> = (0..10_000).map(|i| (i % 7) as f64).collect();
        let svg = line_chart("t", "x", "y", &[Series::from_values("a", &ys)]).unwrap();
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert!(pts.split(' ').count() <= MAX_POINTS);
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_step(100.0, 5), 20.0);
        assert_eq!(nice_step(1.0, 5), 0.2);
        assert_eq!(fmt_tick(0.4, 0.2), "0.4");
        assert_eq!(fmt_tick(40.0, 20.0), "40");
    }

    #[test]
    fn bars_mark_upper_bound() {
        let svg = bar_chart("s", "rho", &[("bp".into(), 1.2, false), ("ft".into(), 3.0, true)]).unwrap();
        assert!(svg.contains("&gt;=3.00"));
        assert!(svg.contains(">1.20<"));
    }
}
