//! SVG rendering of a mesh coloured by a per-element sizing field.

use std::fmt::Write;

use amber_core::TriMesh;

/// Viridis sampled at nine evenly spaced points; colours in between are
/// linear interpolations in sRGB.
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 45.0, 123.0],
    [59.0, 82.0, 139.0],
    [44.0, 114.0, 142.0],
    [33.0, 145.0, 140.0],
    [40.0, 174.0, 128.0],
    [94.0, 201.0, 98.0],
    [173.0, 220.0, 48.0],
    [253.0, 231.0, 37.0],
];

/// Hex colour for `t` in `[0, 1]` (clamped).
pub fn viridis(t: f64) -> String {
    let x = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3).map(|k| (VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const PLOT: f64 = 600.0;
const MARGIN: f64 = 20.0;
const BAR_X: f64 = 20.0;
const BAR_W: f64 = 24.0;
const MESH_X: f64 = 140.0;
const BAR_SEGMENTS: usize = 64;

/// One `<polygon>` per element, filled by log sizing, with a colour bar on
/// the left labelled in sizing units. Output depends only on the inputs.
pub fn render(mesh: &TriMesh, sizing: &[f64], title: &str) -> String {
    let v = mesh.vertices();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in v {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let scale = PLOT / (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
    let height = (y1 - y0) * scale + 2.0 * MARGIN;
    let width = MESH_X + (x1 - x0) * scale + MARGIN;
    let sx = |x: f64| MESH_X + (x - x0) * scale;
    let sy = |y: f64| MARGIN + (y1 - y) * scale;

    let logs: Vec<f64> = sizing.iter().map(|s| s.ln()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t_of = |l: f64| if hi - lo > 0.0 { (l - lo) / (hi - lo) } else { 0.5 };
    let stroke = (0.002 * PLOT).max(0.2);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width:.1}" height="{height:.1}" fill="white"/>"#);

    let bar_h = height - 2.0 * MARGIN;
    let seg = bar_h / BAR_SEGMENTS as f64;
    let _ = writeln!(s, r#"<g id="colorbar">"#);
    for k in 0..BAR_SEGMENTS {
        let t = (k as f64 + 0.5) / BAR_SEGMENTS as f64;
        let y = MARGIN + bar_h - (k + 1) as f64 * seg;
        let _ = writeln!(
            s,
            r#"<rect x="{BAR_X:.1}" y="{y:.3}" width="{BAR_W:.1}" height="{:.3}" fill="{}"/>"#,
            seg + 0.05,
            viridis(t)
        );
    }
    let _ = writeln!(s, r#"<rect x="{BAR_X:.1}" y="{MARGIN:.1}" width="{BAR_W:.1}" height="{bar_h:.3}" fill="none" stroke="black" stroke-width="0.5"/>"#);
    for (frac, l) in [(0.0, lo), (0.5, 0.5 * (lo + hi)), (1.0, hi)] {
        let y = MARGIN + bar_h * (1.0 - frac);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.3}" font-family="sans-serif" font-size="11" dominant-baseline="middle">{:.3e}</text>"#,
            BAR_X + BAR_W + 4.0,
            y,
            l.exp()
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="mesh" stroke="black" stroke-width="{stroke:.2}" stroke-linejoin="round">"#);
    for (tri, &l) in mesh.triangles().iter().zip(&logs) {
        let pts: Vec<String> = tri.iter().map(|&i| format!("{:.3},{:.3}", sx(v[i].x), sy(v[i].y))).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{}"/>"#, pts.join(" "), viridis(t_of(l)));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
