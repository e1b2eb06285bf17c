//! Static SVG charts for run reports.

use std::fmt::Write as _;

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 180.0;
const MARGIN: f64 = 48.0;

fn header(s: &mut String, w: f64, h: f64) {
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="11">"#
    )
    .expect("string write");
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).expect("string write");
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One panel per series, stacked vertically, x = 1-based epoch.
pub fn line_panels(title: &str, series: &[(&str, &[f64])]) -> String {
    let height = 30.0 + series.len() as f64 * (PANEL_H + MARGIN);
    let width = PANEL_W + 2.0 * MARGIN;
    let mut s = String::new();
    header(&mut s, width, height);
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="18" font-size="13">{}</text>"#,
        escape(title)
    )
    .expect("string write");
    for (k, (name, ys)) in series.iter().enumerate() {
        let top = 30.0 + k as f64 * (PANEL_H + MARGIN);
        let (lo, hi) = ys
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (lo, hi) = if ys.is_empty() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        writeln!(
            s,
            r##"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
        )
        .expect("string write");
        writeln!(s, r#"<text x="{MARGIN}" y="{:.1}">{}</text>"#, top - 4.0, escape(name)).expect("string write");
        writeln!(s, r#"<text x="4" y="{:.1}">{hi:.4}</text>"#, top + 10.0).expect("string write");
        writeln!(s, r#"<text x="4" y="{:.1}">{lo:.4}</text>"#, top + PANEL_H).expect("string write");
        let step = if ys.len() > 1 {
            PANEL_W / (ys.len() - 1) as f64
        } else {
            0.0
        };
        let points: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = MARGIN + i as f64 * step;
                let y = top + PANEL_H * (1.0 - (v - lo) / (hi - lo));
                format!("{x:.1},{y:.1}")
            })
            .collect();
        writeln!(
            s,
            r##"<polyline class="series" fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
            points.join(" ")
        )
        .expect("string write");
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">epoch 1..{}</text>"#,
            MARGIN + PANEL_W - 70.0,
            top + PANEL_H + 14.0,
            ys.len()
        )
        .expect("string write");
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bars in the given order; highlighted bars are drawn in a second colour.
pub fn bar_chart(title: &str, bars: &[(String, f64, bool)]) -> String {
    let bar_w = 8.0;
    let plot_h = 240.0;
    let width = 2.0 * MARGIN + bars.len() as f64 * bar_w;
    let height = plot_h + 2.0 * MARGIN + 20.0;
    let top = MARGIN;
    let max = bars.iter().map(|b| b.1).fold(0.0_f64, f64::max).max(1e-12);
    let mut s = String::new();
    header(&mut s, width.max(320.0), height);
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-size="13">{}</text>"#,
        escape(title)
    )
    .expect("string write");
    writeln!(s, r#"<text x="4" y="{:.1}">{max:.3}</text>"#, top + 10.0).expect("string write");
    writeln!(s, r#"<text x="4" y="{:.1}">0</text>"#, top + plot_h).expect("string write");
    for (i, (name, value, highlight)) in bars.iter().enumerate() {
        let h = plot_h * value.max(0.0) / max;
        let fill = if *highlight { "#d62728" } else { "#1f77b4" };
        writeln!(
            s,
            r#"<rect class="bar" x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{fill}"><title>{} {value:.4}</title></rect>"#,
            MARGIN + i as f64 * bar_w,
            top + plot_h - h,
            bar_w - 1.0,
            escape(name)
        )
        .expect("string write");
    }
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.1}">{} candidates, highlighted = selected</text>"#,
        top + plot_h + 20.0,
        bars.len()
    )
    .expect("string write");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let svg = line_panels("t", &[("loss", &[3.0, 2.0, 1.0]), ("f1", &[0.1, 0.2, 0.3])]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn bar_per_candidate() {
        let bars: Vec<_> = (0..81)
            .map(|i| (format!("n{i}"), 1.0 - i as f64 / 100.0, i < 4))
            .collect();
        let svg = bar_chart("ranking", &bars);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 81);
        assert_eq!(svg.matches("#d62728").count(), 4);
    }

    #[test]
    fn names_are_escaped() {
        let svg = bar_chart("a<b", &[("x&y".into(), 0.5, false)]);
        assert!(svg.contains("a&lt;b") && svg.contains("x&amp;y"));
    }

    #[test]
    fn flat_series_does_not_divide_by_zero() {
        let svg = line_panels("t", &[("flat", &[1.0, 1.0])]);
        assert!(!svg.contains("NaN"));
    }
}
