//! SVG boxplots of log RMSE ratios, one box per method.
//!
//! Boxes span the type-7 quartiles, the bar marks the median and whiskers
//! reach the extremes. Each box group carries its statistics as `data-*`
//! attributes so the figure can be checked without parsing geometry.

use std::fmt::Write as _;

use msda::sim::ResultRow;
use msda::stats::{quantile_sorted, sorted_copy};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub method: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Per-method statistics in first-seen method order; methods without any
/// finite ratio are skipped.
pub fn box_stats(rows: &[ResultRow]) -> Vec<BoxStats> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .filter_map(|m| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.log_rmse_ratio)
                .filter(|v| v.is_finite())
                .collect();
            if vals.is_empty() {
                return None;
            }
            let s = sorted_copy(&vals);
            Some(BoxStats {
                method: m.to_string(),
                count: s.len(),
                min: s[0],
                q1: quantile_sorted(&s, 0.25),
                median: quantile_sorted(&s, 0.5),
                q3: quantile_sorted(&s, 0.75),
                max: s[s.len() - 1],
            })
        })
        .collect()
}

const HEIGHT: f64 = 420.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 360.0;
const LEFT: f64 = 70.0;
const SLOT: f64 = 90.0;
const BOX_HALF: f64 = 25.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the boxes; `provenance` is embedded verbatim in a comment.
pub fn render_svg(stats: &[BoxStats], provenance: &str) -> Result<String, String> {
    if stats.is_empty() {
        return Err("no finite log ratios to plot".into());
    }
    let lo = stats.iter().map(|b| b.min).fold(0.0_f64, f64::min);
    let hi = stats.iter().map(|b| b.max).fold(0.0_f64, f64::max);
    let pad = ((hi - lo) * 0.08).max(0.05);
    let (lo, hi) = (lo - pad, hi + pad);
    let ypos = |v: f64| BOTTOM - (v - lo) / (hi - lo) * (BOTTOM - TOP);
    let width = LEFT + SLOT * stats.len() as f64 + 30.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{HEIGHT:.0}" viewBox="0 0 {width:.0} {HEIGHT:.0}">"#
    );
    let _ = writeln!(s, "<!-- config: {} -->", provenance.replace("--", "- -"));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="28" font-family="sans-serif" font-size="15" text-anchor="middle">log RMSE ratio vs merged_ols</text>"#,
        width / 2.0
    );
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = ypos(v);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let zero = ypos(0.0);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{zero:.2}" x2="{:.1}" y2="{zero:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        width - 20.0
    );

    for (i, b) in stats.iter().enumerate() {
        let cx = LEFT + SLOT * (i as f64 + 0.5);
        let (l, r) = (cx - BOX_HALF, cx + BOX_HALF);
        let _ = writeln!(
            s,
            r#"<g class="box" data-method="{}" data-n="{}" data-min="{}" data-q1="{}" data-median="{}" data-q3="{}" data-max="{}">"#,
            escape(&b.method),
            b.count,
            b.min,
            b.q1,
            b.median,
            b.q3,
            b.max
        );
        let _ = writeln!(
            s,
            r#"  <line x1="{cx:.1}" y1="{:.2}" x2="{cx:.1}" y2="{:.2}" stroke="black"/>"#,
            ypos(b.max),
            ypos(b.q3)
        );
        let _ = writeln!(
            s,
            r#"  <line x1="{cx:.1}" y1="{:.2}" x2="{cx:.1}" y2="{:.2}" stroke="black"/>"#,
            ypos(b.q1),
            ypos(b.min)
        );
        let _ = writeln!(
            s,
            r#"  <rect x="{l:.1}" y="{:.2}" width="{:.1}" height="{:.2}" fill="lightsteelblue" stroke="black"/>"#,
            ypos(b.q3),
            r - l,
            ypos(b.q1) - ypos(b.q3)
        );
        let _ = writeln!(
            s,
            r#"  <line x1="{l:.1}" y1="{y:.2}" x2="{r:.1}" y2="{y:.2}" stroke="black" stroke-width="2"/>"#,
            y = ypos(b.median)
        );
        let _ = writeln!(
            s,
            r#"  <text x="{cx:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            BOTTOM + 20.0,
            escape(&b.method)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, ratio: Option<f64>) -> ResultRow {
        ResultRow {
            scenario: "ts-linear".into(),
            sigma: 0.5,
            replicate: 0,
            method: method.into(),
            rmse: ratio.map(f64::exp),
            log_rmse_ratio: ratio,
            warning: None,
        }
    }

    #[test]
    fn constant_ratios_give_a_degenerate_box() {
        let rows: Vec<_> = (0..5).map(|_| row("wls_est", Some(-0.2))).collect();
        let b = &box_stats(&rows)[0];
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (-0.2, -0.2, -0.2, -0.2, -0.2));
        let svg = render_svg(&box_stats(&rows), "{}").unwrap();
        assert_eq!(svg.matches(r#"class="box""#).count(), 1);
    }

    #[test]
    fn quartiles_by_hand() {
        // type 7 on 1..=5 after sorting: q1 at h = 1 → 2, q3 at h = 3 → 4
        let rows: Vec<_> = [5.0, 1.0, 4.0, 2.0, 3.0].iter().map(|&v| row("m", Some(v))).collect();
        let b = &box_stats(&rows)[0];
        assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
        // four points: h = 0.75 → 1 + 0.75·(2 − 1)
        let rows: Vec<_> = [1.0, 2.0, 3.0, 10.0].iter().map(|&v| row("m", Some(v))).collect();
        let b = &box_stats(&rows)[0];
        assert_eq!((b.q1, b.median, b.q3), (1.75, 2.5, 4.75));
    }

    #[test]
    fn methods_keep_their_order_and_failures_are_skipped() {
        let rows = vec![row("b", Some(0.1)), row("a", Some(0.2)), row("b", None), row("c", None)];
        let names: Vec<_> = box_stats(&rows).into_iter().map(|b| b.method).collect();
        assert_eq!(names, ["b", "a"]);
        let svg = render_svg(&box_stats(&rows), "{}").unwrap();
        assert!(svg.find(r#"data-method="b""#).unwrap() < svg.find(r#"data-method="a""#).unwrap());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_svg(&box_stats(&[]), "{}").is_err());
        assert!(render_svg(&box_stats(&[row("m", None)]), "{}").is_err());
    }

    #[test]
    fn rendering_is_deterministic_and_escapes_comments() {
        let rows = vec![row("a", Some(0.1)), row("a", Some(-0.3))];
        let a = render_svg(&box_stats(&rows), "{\"x\":\"--\"}").unwrap();
        let b = render_svg(&box_stats(&rows), "{\"x\":\"--\"}").unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("<!-- config: {\"x\":\"--\"}"));
    }
}
