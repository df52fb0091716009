//! Minimal hand-written SVG for hit curves and diversity maps.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#1f4e79", "#c0504d", "#4f8f3a", "#7f6084", "#d08a1e", "#3a8f8f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Expected hits against shortlist length, one line per series, with the
/// random-ranking expectation dashed.
pub fn hit_curves(series: &[(String, Vec<f64>)], n_active: usize, n_obs: usize, max_n: usize) -> String {
    let (w, h, margin) = (640.0, 420.0, 50.0);
    let (pw, ph) = (w - 2.0 * margin, h - 2.0 * margin);
    let y_max = n_active as f64;
    let x = |n: f64| margin + pw * n / max_n as f64;
    let y = |v: f64| h - margin - ph * v / y_max;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{:.2},{:.2} H{:.2} M{:.2},{:.2} V{:.2}" stroke="black" fill="none"/>"#,
        margin,
        h - margin,
        w - margin,
        margin,
        h - margin,
        margin
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">number selected (max {max_n})</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">hits (of {n_active})</text>"#,
        h / 2.0,
        h / 2.0
    );
    let random_end = (max_n as f64 * n_active as f64 / n_obs as f64).min(y_max);
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        x(0.0),
        y(0.0),
        x(max_n as f64),
        y(random_end)
    );
    for (k, (name, hits)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = format!("M{:.2},{:.2}", x(0.0), y(0.0));
        for (n, &v) in hits.iter().take(max_n).enumerate() {
            let _ = write!(d, " L{:.2},{:.2}", x((n + 1) as f64), y(v));
        }
        let _ = writeln!(s, r#"<path d="{d}" stroke="{color}" fill="none" stroke-width="1.5"/>"#);
        let ly = margin + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            w - margin - 150.0,
            ly + 12.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Gray-scale rank matrix: one row per active, one column per ranking,
/// darker cells for smaller (better) ranks. Column AveP values are printed
/// under the column names.
pub fn rank_heatmap(columns: &[String], ave_p: &[f64], ranks: &[Vec<f64>], n_obs: usize) -> String {
    let (cell_w, cell_h, left, top, bottom) = (60.0, 8.0, 20.0, 20.0, 50.0);
    let w = left * 2.0 + cell_w * columns.len() as f64;
    let h = top + bottom + cell_h * ranks.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let span = (n_obs.max(2) - 1) as f64;
    for (r, row) in ranks.iter().enumerate() {
        for (c, &rank) in row.iter().enumerate() {
            let level = (255.0 * (rank - 1.0) / span).round().clamp(0.0, 255.0) as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell_w}" height="{cell_h}" fill="rgb({level},{level},{level})"/>"#,
                left + cell_w * c as f64,
                top + cell_h * r as f64
            );
        }
    }
    let base = top + cell_h * ranks.len() as f64;
    for (c, name) in columns.iter().enumerate() {
        let cx = left + cell_w * (c as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            base + 16.0,
            escape(name)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
            base + 32.0,
            ave_p[c]
        );
    }
    s.push_str("</svg>\n");
    s
}
