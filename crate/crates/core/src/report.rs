//! Static figures: color-map mosaics, IB-plane scatter plots and histograms
//! as self-contained SVG.

use std::fmt::Write as _;

use crate::color::{ChipGrid, GRID_COLUMNS, GRID_ROWS};
use crate::ib::{mode_map, Band, IBCurve, IBPoint, NamingSystem};

// D65 reference white.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

/// CIELAB (D65) to 8-bit sRGB; out-of-gamut channels are clipped.
pub fn lab_to_srgb(lab: &[f64; 3]) -> [u8; 3] {
    let [l, a, b] = *lab;
    let fy = (l + 16.0) / 116.0;
    let fx = fy + a / 500.0;
    let fz = fy - b / 200.0;
    let finv = |t: f64| {
        let d = 6.0 / 29.0;
        if t > d {
            t * t * t
        } else {
            3.0 * d * d * (t - 4.0 / 29.0)
        }
    };
    let x = WHITE[0] * finv(fx);
    let y = WHITE[1] * finv(fy);
    let z = WHITE[2] * finv(fz);
    let lin = [
        3.2404542 * x - 1.5371385 * y - 0.4985314 * z,
        -0.9692660 * x + 1.8760108 * y + 0.0415560 * z,
        0.0556434 * x - 0.2040259 * y + 1.0572252 * z,
    ];
    lin.map(|c| {
        let c = c.clamp(0.0, 1.0);
        let g = if c <= 0.0031308 { 12.92 * c } else { 1.055 * c.powf(1.0 / 2.4) - 0.055 };
        (g * 255.0).round() as u8
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    /// No chip at this position.
    Empty,
    Blank,
    Faded([u8; 3]),
    Solid([u8; 3]),
}

/// 10×41 cell rendering of a naming system.
#[derive(Clone, Debug, PartialEq)]
pub struct Mosaic {
    /// Row-major, `GRID_ROWS.len()` rows by `GRID_COLUMNS` columns.
    pub cells: Vec<Cell>,
}

impl Mosaic {
    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * GRID_COLUMNS + col]
    }

    pub fn to_svg(&self, title: &str) -> String {
        let size = 14;
        let top = 20;
        let w = GRID_COLUMNS * size + 20;
        let h = GRID_ROWS.len() * size + top + 10;
        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
        writeln!(s, r#"<text x="10" y="14" font-family="sans-serif" font-size="12">{}</text>"#, escape(title)).unwrap();
        for (r, row) in GRID_ROWS.iter().enumerate() {
            for c in 0..GRID_COLUMNS {
                let x = 10 + c * size;
                let y = top + r * size;
                let (fill, opacity) = match self.cell(r, c) {
                    Cell::Empty => continue,
                    Cell::Blank => ("#ffffff".to_string(), 1.0),
                    Cell::Faded(rgb) => (hex(rgb), 0.45),
                    Cell::Solid(rgb) => (hex(rgb), 1.0),
                };
                writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{size}" height="{size}" fill="{fill}" fill-opacity="{opacity}" stroke="#dddddd" stroke-width="0.5"><title>{row}{c}</title></rect>"##
                )
                .unwrap();
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean CIELAB of each word's category, weighting chips by `p(c) q(w|c)`.
pub fn category_means(sys: &NamingSystem, grid: &ChipGrid) -> Vec<[f64; 3]> {
    let prior = grid.prior();
    (0..sys.num_words())
        .map(|w| {
            let mut sum = [0.0; 3];
            let mut mass = 0.0;
            for c in 0..sys.num_chips() {
                let p = prior[c] * sys.q(w, c);
                mass += p;
                for (s, x) in sum.iter_mut().zip(grid.lab(c)) {
                    *s += p * x;
                }
            }
            if mass > 0.0 {
                sum.map(|s| s / mass)
            } else {
                [50.0, 0.0, 0.0]
            }
        })
        .collect()
}

/// Colors each chip by the mean color of its modal word, solid for modal
/// probability in [0.75, 1], faded in [0.3, 0.75), blank below.
pub fn render_map(sys: &NamingSystem, grid: &ChipGrid) -> Mosaic {
    let modes = mode_map(sys);
    let colors: Vec<[u8; 3]> = category_means(sys, grid).iter().map(lab_to_srgb).collect();
    let mut cells = vec![Cell::Empty; GRID_ROWS.len() * GRID_COLUMNS];
    for (i, chip) in grid.chips().iter().enumerate() {
        let Some(r) = GRID_ROWS.iter().position(|&x| x == chip.row) else {
            continue;
        };
        let rgb = colors[modes.modes[i]];
        cells[r * GRID_COLUMNS + chip.column as usize] = match modes.bands[i] {
            Band::Solid => Cell::Solid(rgb),
            Band::Faded => Cell::Faded(rgb),
            Band::Blank => Cell::Blank,
        };
    }
    Mosaic { cells }
}

/// A labelled set of points on the IB plane.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: &'a [IBPoint],
}

const PLOT_W: f64 = 520.0;
const PLOT_H: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Complexity/accuracy scatter with the frontier drawn as a single polyline.
pub fn ib_plane_svg(curve: &IBCurve, series: &[Series]) -> String {
    let env = curve.envelope();
    let x_max = env
        .iter()
        .map(|p| p.0)
        .chain(series.iter().flat_map(|s| s.points.iter().map(|p| p.complexity)))
        .fold(1.0f64, f64::max)
        .min(6.0)
        .ceil();
    let y_max = env
        .iter()
        .map(|p| p.1)
        .chain(series.iter().flat_map(|s| s.points.iter().map(|p| p.accuracy)))
        .fold(1.0f64, f64::max)
        .ceil();
    let sx = |x: f64| MARGIN + x / x_max * PLOT_W;
    let sy = |y: f64| MARGIN + PLOT_H - y / y_max * PLOT_H;
    let mut s = String::new();
    let (w, h) = (PLOT_W + 2.0 * MARGIN + 120.0, PLOT_H + 2.0 * MARGIN);
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#).unwrap();
    axes(&mut s, x_max, y_max, "complexity (bits)", "accuracy (bits)");
    let pts: Vec<String> = env
        .iter()
        .filter(|p| p.0 <= x_max)
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    writeln!(s, r#"<polyline fill="none" stroke="black" stroke-dasharray="5,3" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
    for (i, series) in series.iter().enumerate() {
        for p in series.points {
            writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
                sx(p.complexity),
                sy(p.accuracy),
                series.color
            )
            .unwrap();
        }
        legend(&mut s, i, series.label, series.color);
    }
    s.push_str("</svg>\n");
    s
}

/// Overlaid histograms of several samples over shared bins.
pub fn histogram_svg(samples: &[(&str, &str, &[f64])], bins: usize, x_label: &str) -> String {
    let all = samples.iter().flat_map(|s| s.2.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let fractions: Vec<Vec<f64>> = samples
        .iter()
        .map(|(_, _, xs)| {
            let mut counts = vec![0.0; bins];
            for &x in xs.iter() {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                counts[b] += 1.0;
            }
            let n = xs.len().max(1) as f64;
            counts.iter().map(|c| c / n).collect()
        })
        .collect();
    let y_max = fractions.iter().flatten().fold(0.0f64, |a, &b| a.max(b)).max(1e-9);
    let sx = |x: f64| MARGIN + (x - lo) / (hi - lo) * PLOT_W;
    let sy = |y: f64| MARGIN + PLOT_H - y / y_max * PLOT_H;
    let mut s = String::new();
    let (w, h) = (PLOT_W + 2.0 * MARGIN + 120.0, PLOT_H + 2.0 * MARGIN);
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<line x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, MARGIN + PLOT_H, MARGIN + PLOT_W, MARGIN + PLOT_H).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN + PLOT_W / 2.0, MARGIN + PLOT_H + 35.0, escape(x_label)).unwrap();
    for t in 0..=4 {
        let x = lo + (hi - lo) * t as f64 / 4.0;
        writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x:.2}</text>"#, sx(x), MARGIN + PLOT_H + 15.0).unwrap();
    }
    for (i, ((label, color, _), fr)) in samples.iter().zip(&fractions).enumerate() {
        for (b, &f) in fr.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let x0 = sx(lo + b as f64 * width);
            writeln!(
                s,
                r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                sy(f),
                sx(lo + (b + 1) as f64 * width) - x0,
                MARGIN + PLOT_H - sy(f)
            )
            .unwrap();
        }
        legend(&mut s, i, label, color);
    }
    s.push_str("</svg>\n");
    s
}

fn axes(s: &mut String, x_max: f64, y_max: f64, x_label: &str, y_label: &str) {
    let (x0, y0) = (MARGIN, MARGIN + PLOT_H);
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, x0 + PLOT_W).unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#).unwrap();
    for t in 0..=x_max as usize {
        let x = x0 + t as f64 / x_max * PLOT_W;
        writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{t}</text>"#, y0 + 15.0).unwrap();
    }
    for t in 0..=y_max as usize {
        let y = y0 - t as f64 / y_max * PLOT_H;
        writeln!(s, r#"<text x="{}" y="{y:.1}" text-anchor="end">{t}</text>"#, x0 - 6.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, x0 + PLOT_W / 2.0, y0 + 35.0).unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#,
        MARGIN + PLOT_H / 2.0,
        MARGIN + PLOT_H / 2.0
    )
    .unwrap();
}

fn legend(s: &mut String, i: usize, label: &str, color: &str) {
    let x = MARGIN + PLOT_W + 15.0;
    let y = MARGIN + 10.0 + 16.0 * i as f64;
    writeln!(s, r#"<circle cx="{x}" cy="{}" r="4" fill="{color}"/>"#, y - 4.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 8.0, escape(label)).unwrap();
}
