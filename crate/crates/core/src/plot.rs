//! Minimal standalone SVG line charts (log-log), no plotting dependency.

use crate::error::Result;
use std::io::Write;
use std::path::Path;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Write a log-log chart of the given series to `path`.
pub fn write_loglog_svg(path: &Path, title: &str, series: &[Series]) -> Result<()> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .collect();
    if pts.is_empty() {
        return Ok(());
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        let (lx, ly) = (x.log10(), y.log10());
        x0 = x0.min(lx);
        x1 = x1.max(lx);
        y0 = y0.min(ly);
        y1 = y1.max(ly);
    }
    let pad = |a: &mut f64, b: &mut f64| {
        let d = (*b - *a).max(1e-9) * 0.08;
        *a -= d;
        *b += d;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    let sx = |lx: f64| MARGIN + (lx - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |ly: f64| H - MARGIN - (ly - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{title}</text>\n",
        W / 2.0
    ));
    svg.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"#333\"/>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    ));
    // Decade ticks.
    for ex in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let px = sx(ex as f64);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#ccc\"/>\n\
             <text x=\"{px}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">1e{ex}</text>\n",
            MARGIN,
            H - MARGIN,
            H - MARGIN + 18.0
        ));
    }
    for ey in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let py = sy(ey as f64);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#ccc\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" \
             font-family=\"sans-serif\">1e{ey}</text>\n",
            W - MARGIN,
            MARGIN - 6.0,
            py + 4.0
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path_d: Vec<String> = s
            .points
            .iter()
            .filter(|&&(x, y)| x > 0.0 && y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x.log10()), sy(y.log10())))
            .collect();
        if path_d.len() > 1 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                path_d.join(" ")
            ));
        }
        for p in &path_d {
            let mut it = p.split(',');
            let (cx, cy) = (it.next().unwrap(), it.next().unwrap());
            svg.push_str(&format!("<circle cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{color}\"/>\n"));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\" \
             font-family=\"sans-serif\">{}</text>\n",
            W - MARGIN + 6.0,
            MARGIN + 16.0 * i as f64 + 12.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    let mut file = std::fs::File::create(path)?;
    file.write_all(svg.as_bytes())?;
    Ok(())
}
