//! Minimal SVG line charts, one panel per CSV column.

use std::fmt::Write;

use anyhow::{bail, Result};

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the CSV text. `columns` selects a subset; `k` is always the x axis.
pub fn render(csv_text: &str, columns: Option<&[String]>) -> Result<String> {
    let mut lines = csv_text.lines();
    let Some(header) = lines.next() else { bail!("empty CSV") };
    let names: Vec<&str> = header.split(',').collect();
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|f| f.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    let k_idx = names.iter().position(|n| *n == "k");
    let selected: Vec<usize> = match columns {
        Some(cols) => cols
            .iter()
            .map(|c| {
                names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| anyhow::anyhow!("no column named `{c}`"))
            })
            .collect::<Result<_>>()?,
        None => (0..names.len()).filter(|&i| Some(i) != k_idx).collect(),
    };
    let xs: Vec<f64> = match k_idx {
        Some(i) => rows.iter().map(|r| r[i]).collect(),
        None => (0..rows.len()).map(|i| i as f64).collect(),
    };
    let (x_lo, x_hi) = bounds(&xs);

    let total_h = selected.len() as f64 * (PANEL_H + MARGIN) + MARGIN;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{total_h}" font-family="sans-serif" font-size="11">"#,
        w = PANEL_W + 2.0 * MARGIN
    )?;
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    for (p, &col) in selected.iter().enumerate() {
        let ys: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let (y_lo, y_hi) = bounds(&ys);
        let top = MARGIN + p as f64 * (PANEL_H + MARGIN);
        let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * PANEL_W;
        let sy = |y: f64| top + PANEL_H - (y - y_lo) / (y_hi - y_lo) * PANEL_H;
        writeln!(
            svg,
            r##"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
        )?;
        writeln!(svg, r#"<text x="{MARGIN}" y="{}">{}</text>"#, top - 6.0, escape(names[col]))?;
        writeln!(svg, r#"<text x="4" y="{}">{y_hi:.3e}</text>"#, top + 10.0)?;
        writeln!(svg, r#"<text x="4" y="{}">{y_lo:.3e}</text>"#, top + PANEL_H)?;
        let pts: Vec<String> = xs
            .iter()
            .zip(&ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            svg,
            r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{}"/>"##,
            pts.join(" ")
        )?;
    }
    writeln!(svg, "</svg>")?;
    Ok(svg)
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let (lo, hi) = v
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_panel_per_column() {
        let svg = render("k,a,b\n0,1,2\n1,3,4\n", None).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn unknown_column_is_an_error() {
        assert!(render("k,a\n0,1\n", Some(&["zz".to_string()])).is_err());
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let svg = render("k,a\n0,1\n1,1\n", None).unwrap();
        assert!(!svg.contains("NaN"));
    }
}
