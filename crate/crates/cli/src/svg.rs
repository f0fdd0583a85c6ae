//! Minimal SVG boxplots.
//!
//! Boxes span the quartiles, whiskers reach the most extreme values within
//! 1.5 IQR of the box, values beyond are drawn as circles and the true value
//! as a blue asterisk. The vertical axis is fixed to `[0, 1]`.

use std::fmt::Write as _;

use crate::report::Quartiles;

pub struct BoxSeries {
    pub label: String,
    pub values: Vec<f64>,
    pub truth: Option<f64>,
}

const SLOT: f64 = 26.0;
const LEFT: f64 = 48.0;
const TOP: f64 = 36.0;
const PLOT_H: f64 = 240.0;
const BOTTOM: f64 = 70.0;

fn y(v: f64) -> f64 {
    TOP + PLOT_H * (1.0 - v.clamp(0.0, 1.0))
}

/// Whisker ends: the most extreme values inside the 1.5 IQR fences.
pub fn whiskers(values: &[f64], q: &Quartiles) -> (f64, f64) {
    let lo_fence = q.q1 - 1.5 * q.iqr();
    let hi_fence = q.q3 + 1.5 * q.iqr();
    let lo = values
        .iter()
        .copied()
        .filter(|&v| v >= lo_fence)
        .fold(f64::INFINITY, f64::min);
    let hi = values
        .iter()
        .copied()
        .filter(|&v| v <= hi_fence)
        .fold(f64::NEG_INFINITY, f64::max);
    (lo.min(q.q1), hi.max(q.q3))
}

pub fn boxplot_svg(title: &str, series: &[BoxSeries]) -> String {
    let width = LEFT + 16.0 + SLOT * series.len().max(1) as f64;
    let height = TOP + PLOT_H + BOTTOM;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, "<!-- dynsbm-cli {} -->", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-size="13" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            width - 8.0,
            LEFT - 4.0,
            y(v) + 3.0,
            yy = y(v)
        );
    }
    for (k, b) in series.iter().enumerate() {
        let cx = LEFT + SLOT * (k as f64 + 0.5) + 8.0;
        let half = SLOT * 0.3;
        if let Some(q) = Quartiles::of(&b.values) {
            let (lo, hi) = whiskers(&b.values, &q);
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
                y(hi),
                y(q.q3)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
                y(q.q1),
                y(lo)
            );
            for w in [lo, hi] {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.1}" x2="{:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="black"/>"#,
                    cx - half / 2.0,
                    cx + half / 2.0,
                    yy = y(w)
                );
            }
            let _ = writeln!(
                s,
                r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#e8e8e8" stroke="black"/>"##,
                cx - half,
                y(q.q3),
                2.0 * half,
                (y(q.q1) - y(q.q3)).max(0.5)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" x2="{:.1}" y1="{yy:.1}" y2="{yy:.1}" stroke="black" stroke-width="2"/>"#,
                cx - half,
                cx + half,
                yy = y(q.median)
            );
            for &v in b.values.iter().filter(|&&v| v < lo || v > hi) {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{cx:.1}" cy="{:.1}" r="2" fill="none" stroke="black"/>"#,
                    y(v)
                );
            }
        }
        if let Some(t) = b.truth {
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" fill="blue" font-size="16" text-anchor="middle">*</text>"#,
                y(t) + 6.0
            );
        }
        let ly = TOP + PLOT_H + 8.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{ly:.1}" transform="rotate(60 {cx:.1} {ly:.1})">{}</text>"#,
            escape(&b.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whiskers_stop_at_the_fences() {
        let values = [0.40, 0.42, 0.44, 0.46, 0.48, 0.95];
        let q = Quartiles::of(&values).unwrap();
        let (lo, hi) = whiskers(&values, &q);
        assert_eq!(lo, 0.40);
        assert_eq!(hi, 0.48);
    }

    #[test]
    fn single_value_draws_without_panicking() {
        let svg = boxplot_svg(
            "pi",
            &[BoxSeries {
                label: "1".into(),
                values: vec![0.3],
                truth: Some(0.33),
            }],
        );
        assert!(svg.lines().nth(1).unwrap().starts_with("<!-- dynsbm-cli"));
        assert!(svg.contains(r#"fill="blue""#));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn outliers_are_circled() {
        let svg = boxplot_svg(
            "x",
            &[BoxSeries {
                label: "a<b".into(),
                values: vec![0.40, 0.42, 0.44, 0.46, 0.48, 0.95],
                truth: None,
            }],
        );
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("a&lt;b"));
    }
}
