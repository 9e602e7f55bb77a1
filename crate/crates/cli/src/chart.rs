//! Minimal SVG line chart with a logarithmic y-axis.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: Vec<f64>,
}

/// Plots each series against `xs`. Non-positive values are drawn at the
/// bottom of the axis.
pub fn log_line_chart(title: &str, x_label: &str, xs: &[f64], series: &[Series]) -> String {
    let positive = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo_exp, hi_exp) = if hi > 0.0 {
        let lo_exp = lo.log10().floor();
        (lo_exp, hi.log10().ceil().max(lo_exp + 1.0))
    } else {
        (-1.0, 0.0)
    };
    let (x_min, x_max) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x_min) / x_span * plot_w;
    let py = |v: f64| {
        let e = if v > 0.0 { v.log10().clamp(lo_exp, hi_exp) } else { lo_exp };
        HEIGHT - MARGIN - (e - lo_exp) / (hi_exp - lo_exp) * plot_h
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let bottom = HEIGHT - MARGIN;
    let _ = writeln!(
        svg,
        r#"<path d="M{MARGIN} {MARGIN} V{bottom} H{}" fill="none" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let mut e = lo_exp;
    while e <= hi_exp + 0.5 {
        let y = py(10f64.powf(e));
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"##,
            WIDTH - MARGIN,
            MARGIN - 6.0,
            y + 4.0,
            e as i64
        );
        e += 1.0;
    }
    for &x in xs {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{x}</text>"#,
            px(x),
            bottom + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    for (k, s) in series.iter().enumerate() {
        let points: Vec<String> = xs
            .iter()
            .zip(&s.values)
            .map(|(&x, &v)| format!("{:.2},{:.2}", px(x), py(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            points.join(" "),
            s.color
        );
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 100.0,
            s.color,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
