//! Curve files and their SVG rendering.
//!
//! A curve file is CSV with a header `x_label,series_1,...` followed by numeric rows.

use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub x_label: String,
    pub series: Vec<String>,
    pub x: Vec<f64>,
    /// `columns[s][row]`
    pub columns: Vec<Vec<f64>>,
}

pub fn parse_curve_file(path: &Path) -> Result<CurveFile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_curves(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse_curves(text: &str) -> Result<CurveFile, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err("row 1: missing header".into());
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.len() < 2 {
        return Err("row 1: header needs an x column and at least one series".into());
    }
    let mut curve = CurveFile {
        x_label: names[0].clone(),
        series: names[1..].to_vec(),
        x: Vec::new(),
        columns: vec![Vec::new(); names.len() - 1],
    };
    for (i, line) in lines {
        let row = i + 1;
        let values: Vec<&str> = line.split(',').map(str::trim).collect();
        if values.len() != names.len() {
            return Err(format!("row {row}: expected {} values, got {}", names.len(), values.len()));
        }
        let parsed: Vec<f64> = values
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| format!("row {row}: `{v}` is not a number")))
            .collect::<Result<_, _>>()?;
        curve.x.push(parsed[0]);
        for (col, v) in curve.columns.iter_mut().zip(&parsed[1..]) {
            col.push(*v);
        }
    }
    if curve.x.is_empty() {
        return Err("row 2: no data rows".into());
    }
    Ok(curve)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn y_label_for(x_label: &str) -> &'static str {
    match x_label {
        "threshold" => "recall",
        "noise" => "mean 3D RMSE",
        _ => "value",
    }
}

/// Deterministic SVG with one polyline and legend entry per series.
pub fn render_svg(curves: &[(String, CurveFile)], title: &str) -> String {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (_, c) in curves {
        for col in &c.columns {
            points.extend(c.x.iter().zip(col).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (*x, *y)));
        }
    }
    let (mut x0, mut x1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let mut y1 = points.iter().fold(0.0f64, |a, p| a.max(p.1));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let x_label = curves.first().map_or("x", |(_, c)| c.x_label.as_str());
    y1 = if x_label == "threshold" && y1 <= 1.0 { 1.0 } else { (y1 * 1.05).max(1e-12) };
    let y0 = 0.0;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"DejaVu Sans, sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect id=\"background\" x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text id=\"title\" x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>", WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        "<g id=\"axes\" stroke=\"black\" fill=\"none\"><line x1=\"{LEFT}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/><line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{:.2}\"/></g>",
        TOP + ph,
        LEFT + pw,
        TOP + ph,
        TOP + ph
    );
    let _ = writeln!(s, "<g id=\"ticks\" text-anchor=\"middle\">");
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"black\"/><text x=\"{0:.2}\" y=\"{3:.2}\">{4}</text>",
            sx(xv),
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{2:.2}\" y2=\"{1:.2}\" stroke=\"black\"/><text x=\"{3:.2}\" y=\"{4:.2}\" text-anchor=\"end\">{5}</text>",
            LEFT - 5.0,
            sy(yv),
            LEFT,
            LEFT - 8.0,
            sy(yv) + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<text id=\"x-label\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", LEFT + pw / 2.0, HEIGHT - 15.0, escape(x_label));
    let _ = writeln!(
        s,
        "<text id=\"y-label\" x=\"18\" y=\"{0:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.2})\">{1}</text>",
        TOP + ph / 2.0,
        y_label_for(x_label)
    );

    let mut legend = Vec::new();
    let mut k = 0;
    for (file, c) in curves {
        for (name, col) in c.series.iter().zip(&c.columns) {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = c
                .x
                .iter()
                .zip(col)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(
                s,
                "<polyline id=\"series-{k}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
                pts.join(" ")
            );
            let label = if curves.len() > 1 { format!("{file}: {name}") } else { name.clone() };
            legend.push((color, label));
            k += 1;
        }
    }
    let _ = writeln!(s, "<g id=\"legend\">");
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = LEFT + pw - 150.0;
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_rows() {
        let c = parse_curves("threshold,fit,net\n0.1,0.5,0.6\n0.2,0.7,0.9\n").unwrap();
        assert_eq!(c.series, vec!["fit", "net"]);
        assert_eq!(c.columns[1], vec![0.6, 0.9]);
        assert!(parse_curves("").unwrap_err().contains("row 1"));
        assert!(parse_curves("threshold,fit\n").unwrap_err().contains("row 2"));
        assert!(parse_curves("threshold,fit\n0.1,0.2\n0.3\n").unwrap_err().contains("row 3"));
        assert!(parse_curves("threshold,fit\n0.1,abc\n").unwrap_err().contains("row 2"));
    }

    #[test]
    fn one_curve_one_polyline() {
        let c = parse_curves("threshold,fit\n0.1,0.5\n0.2,0.7\n").unwrap();
        let svg = render_svg(&[("a.csv".into(), c.clone())], "t");
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains(">fit</text>"));
        assert_eq!(svg, render_svg(&[("a.csv".into(), c)], "t"));
    }
}
