//! Standalone SVG line plots of a trace: `log10(value)` against the index.

use std::fmt::Write as _;
use std::path::Path;

use degsemi::trace::ConvergenceTrace;

use crate::CliError;

/// Smallest plotted value; exact zeros land here.
pub const FLOOR: f64 = 1e-16;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 12] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG document for `trace`. The x axis is logarithmic when the indices are
/// positive and span more than two decades.
pub fn render_svg(trace: &ConvergenceTrace) -> Result<String, CliError> {
    if trace.is_empty() || trace.series().is_empty() {
        return Err(CliError::ExperimentFailed(format!("trace {} is empty", trace.name)));
    }
    let idx = &trace.index;
    let log_x = idx.iter().all(|&x| x > 0.0)
        && idx.iter().copied().fold(f64::NEG_INFINITY, f64::max) / idx.iter().copied().fold(f64::INFINITY, f64::min) > 100.0;
    let xs: Vec<f64> = idx.iter().map(|&x| if log_x { x.log10() } else { x }).collect();
    let ys: Vec<Vec<f64>> = trace
        .series()
        .iter()
        .map(|(_, v)| v.iter().map(|&y| y.max(FLOOR).log10()).collect())
        .collect();
    let (mut x0, mut x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let all_y = ys.iter().flatten().copied();
    let (mut y0, mut y1) = all_y.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    y0 = y0.floor();
    y1 = y1.ceil();
    if y1 - y0 < 1.0 {
        y1 = y0 + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="18" font-size="14">{}</text>"#, escape(&trace.name));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    // y ticks at integer decades
    let step = ((y1 - y0) / 8.0).ceil().max(1.0);
    let mut d = y0;
    while d <= y1 + 1e-9 {
        let y = sy(d);
        let _ = writeln!(s, r##"<line x1="{LEFT}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#, LEFT - 6.0, y + 4.0, d as i64);
        d += step;
    }
    for (&x, &raw) in xs.iter().zip(idx) {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            TOP + ph + 16.0,
            format_index(raw)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&trace.index_label),
        if log_x { " (log scale)" } else { "" }
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">log10 value</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, ((tag, _), y)) in trace.series().iter().zip(&ys).enumerate() {
        let color = COLORS[i % COLORS.len()];
        if xs.len() == 1 {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, sx(xs[0]), sy(y[0]));
        } else {
            let pts: Vec<String> = xs.iter().zip(y).map(|(&a, &b)| format!("{:.2},{:.2}", sx(a), sy(b))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 10.0 + 16.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{}</text>"#, lx + 22.0, ly + 3.5, escape(tag));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn format_index(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e9 {
        format!("{}", x as i64)
    } else {
        format!("{x:.3e}")
    }
}

pub fn emit_svg_plot(trace: &ConvergenceTrace, path: &Path) -> Result<(), CliError> {
    let svg = render_svg(trace)?;
    std::fs::write(path, svg).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_a_marker() {
        let mut t = ConvergenceTrace::new("one", "n", vec![1.0]);
        t.insert("A", vec![0.5]).unwrap();
        let svg = render_svg(&t).unwrap();
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn one_polyline_per_metric_and_zero_clamped() {
        let mut t = ConvergenceTrace::new("two", "n", (1..=12).map(f64::from).collect());
        t.insert("A", (1..=12).map(|k| 0.5f64.powi(k)).collect()).unwrap();
        t.insert("B", vec![0.0; 12]).unwrap();
        let svg = render_svg(&t).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">1e-16<"));
        assert!(svg.contains(">A<") && svg.contains(">B<"));
    }

    #[test]
    fn empty_trace_rejected() {
        let t = ConvergenceTrace::new("none", "n", vec![]);
        assert!(render_svg(&t).is_err());
    }
}
