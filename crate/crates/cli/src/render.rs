//! Static SVG renderings of band structures and densities of states.

use std::fmt::Write;

use moire_core::spectral::{central_window, CENTRAL_BANDS};
use moire_core::{BandData, DosCurve};

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    x: [f64; 2],
    y: [f64; 2],
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x[0]) / (self.x[1] - self.x[0]) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y[0]) / (self.y[1] - self.y[0]) * (H - TOP - BOTTOM)
    }

    fn open(&self, out: &mut String, ylabel: &str) {
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            out,
            r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath></defs>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for k in 0..=4 {
            let v = self.y[0] + (self.y[1] - self.y[0]) * k as f64 / 4.0;
            let y = self.py(v);
            let _ = writeln!(out, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.4}</text>"#, LEFT - 8.0, y + 4.0);
        }
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{ylabel}</text>"#,
            H / 2.0,
            H / 2.0
        );
    }
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, colour: &str) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        out,
        r#"<polyline clip-path="url(#plot)" fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
        coords.join(" ")
    );
}

fn pretty(label: &str) -> String {
    label.replace("Gamma", "\u{393}").replace("_M", "\u{2098}")
}

/// Bands inside `window` (default: the six central bands with a margin),
/// with the path vertices marked.
pub fn bands_svg(bands: &BandData, window: Option<[f64; 2]>) -> String {
    let dim = bands.dimension();
    let window = window.unwrap_or_else(|| {
        let w = central_window(dim, CENTRAL_BANDS.min(dim));
        let (lo, hi) = bands.energies.iter().flat_map(|r| r[w.clone()].iter()).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), &e| (lo.min(e), hi.max(e)),
        );
        let pad = 0.1 * (hi - lo).max(1e-6);
        [lo - pad, hi + pad]
    });
    let s_end = bands.path.points.last().map_or(1.0, |p| p.s).max(f64::MIN_POSITIVE);
    let f = Frame { x: [0.0, s_end], y: window };
    let mut out = String::new();
    f.open(&mut out, "E (eV)");
    for v in &bands.path.vertices {
        let x = f.px(v.s);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="grey" stroke-dasharray="3,3"/>"#, H - BOTTOM);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 18.0,
            pretty(&v.label.to_string())
        );
    }
    for band in 0..dim {
        let inside = bands.energies.iter().any(|r| (window[0]..=window[1]).contains(&r[band]));
        if inside {
            let pts = bands.path.points.iter().zip(&bands.energies).map(|(p, r)| (f.px(p.s), f.py(r[band])));
            polyline(&mut out, pts, "#1f4e9c");
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{} / {}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 8.0,
        bands.family,
        bands.path.valley
    );
    out.push_str("</svg>\n");
    out
}

pub fn dos_svg(dos: &DosCurve) -> String {
    let (lo, hi) = (dos.energies[0], dos.energies[dos.energies.len() - 1]);
    let top = dos.values.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let f = Frame { x: [lo, hi], y: [0.0, 1.05 * top] };
    let mut out = String::new();
    f.open(&mut out, "D(E)");
    for k in 0..=4 {
        let e = lo + (hi - lo) * k as f64 / 4.0;
        let x = f.px(e);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{e:.3}</text>"#, H - BOTTOM + 18.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">E (eV)</text>"#, (LEFT + W - RIGHT) / 2.0, H - 8.0);
    polyline(&mut out, dos.energies.iter().zip(&dos.values).map(|(&e, &d)| (f.px(e), f.py(d))), "#9c1f2e");
    out.push_str("</svg>\n");
    out
}
