use std::fmt::Write as _;

use super::report::ConvergenceRow;

const W: f64 = 800.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean incumbent score per generation with a shaded +-1 std band, one
/// series per (prompt, beta).
pub fn convergence_svg(rows: &[ConvergenceRow]) -> String {
    let mut series: Vec<(String, Vec<&ConvergenceRow>)> = Vec::new();
    for r in rows {
        let label = format!("{} (beta {})", r.prompt, r.beta);
        match series.last_mut() {
            Some((l, v)) if *l == label => v.push(r),
            _ => series.push((label, vec![r])),
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if series.is_empty() {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">no dynamic-rate runs</text>"#, W / 2.0, H / 2.0);
        out.push_str("</svg>\n");
        return out;
    }
    let max_gen = rows.iter().map(|r| r.gen).max().unwrap_or(1).max(2) as f64;
    let lo = rows.iter().map(|r| r.mean - r.std).fold(f64::INFINITY, f64::min).max(0.0);
    let mut hi = rows.iter().map(|r| r.mean + r.std).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        hi = lo + 1e-3;
    }
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |g: f64| LEFT + (g - 1.0) / (max_gen - 1.0) * pw;
    let py = |v: f64| TOP + (1.0 - (v.clamp(lo, hi) - lo) / (hi - lo)) * ph;

    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
        let g = 1.0 + (max_gen - 1.0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(g),
            TOP + ph + 18.0,
            g.round()
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">generation</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">best-so-far score</text>"#,
        TOP + ph / 2.0
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut band = String::new();
        for r in pts.iter() {
            let _ = write!(band, "{:.2},{:.2} ", px(r.gen as f64), py(r.mean + r.std));
        }
        for r in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(r.gen as f64), py(r.mean - r.std));
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.gen as f64), py(r.mean)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
