use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{ImageEncoder, Rgb, RgbImage};

use super::{EmbeddingDump, EmbeddingKind, Projection};
use crate::error::{Error, Result};

const PANEL: u32 = 360;
const MARGIN: u32 = 16;
const COLUMNS: u32 = 3;

const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

/// Files written by [`emit_plot`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub image: PathBuf,
    pub data: PathBuf,
    pub silhouette: PathBuf,
}

/// Mean silhouette of 2-D points grouped by label; `None` with fewer than two
/// labels. Points alone in their label score 0.
pub fn silhouette(coords: &[[f64; 2]], labels: &[&str]) -> Option<f64> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    if groups.len() < 2 || coords.is_empty() {
        return None;
    }
    let dist = |a: usize, b: usize| ((coords[a][0] - coords[b][0]).powi(2) + (coords[a][1] - coords[b][1]).powi(2)).sqrt();
    let mut total = 0.0;
    for (i, l) in labels.iter().enumerate() {
        let own = &groups[l];
        if own.len() < 2 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| dist(i, j)).sum::<f64>() / (own.len() - 1) as f64;
        let b = groups
            .iter()
            .filter(|(k, _)| *k != l)
            .map(|(_, g)| g.iter().map(|&j| dist(i, j)).sum::<f64>() / g.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        total += if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    Some(total / coords.len() as f64)
}

struct Panel<'a> {
    model: &'a str,
    lambda: f64,
    kind: EmbeddingKind,
    method: String,
    points: Vec<usize>,
    source: usize,
}

fn panel_title(p: &Panel) -> String {
    format!("{} λ={:.1} {} {}", p.model, p.lambda, p.kind, p.method)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn draw_panel(img: &mut RgbImage, x0: u32, y0: u32, coords: &[[f64; 2]], colors: &[[u8; 3]]) {
    let frame = Rgb([60, 60, 60]);
    for t in 0..PANEL {
        for (x, y) in [(x0 + t, y0), (x0 + t, y0 + PANEL - 1), (x0, y0 + t), (x0 + PANEL - 1, y0 + t)] {
            img.put_pixel(x, y, frame);
        }
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in coords {
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let inner = f64::from(PANEL - 2 * MARGIN);
    let to_px = |v: f64, k: usize| -> i64 {
        let span = hi[k] - lo[k];
        let t = if span > 0.0 { (v - lo[k]) / span } else { 0.5 };
        let t = if k == 1 { 1.0 - t } else { t };
        (f64::from(MARGIN) + t * inner).round() as i64
    };
    for (c, color) in coords.iter().zip(colors) {
        let (cx, cy) = (to_px(c[0], 0), to_px(c[1], 1));
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                if dx * dx + dy * dy <= 5 {
                    let (x, y) = (i64::from(x0) + cx + dx, i64::from(y0) + cy + dy);
                    img.put_pixel(x as u32, y as u32, Rgb(*color));
                }
            }
        }
    }
}

/// Scatter panels, one per (model, λ, kind, method) group, colored by label,
/// laid out three to a row. Writes the PNG at `out_path`, a coordinate CSV
/// next to it (`.csv`) and per-panel silhouette scores (`.silhouette.csv`).
pub fn emit_plot(projections: &[(&EmbeddingDump, &Projection)], out_path: &Path) -> Result<PlotFiles> {
    if projections.is_empty() {
        return Err(Error::InvalidInput("nothing to plot".into()));
    }
    let mut panels: Vec<Panel> = Vec::new();
    for (src, (dump, proj)) in projections.iter().enumerate() {
        if dump.len() != proj.coords.len() || dump.meta.len() != dump.len() {
            return Err(Error::Shape(format!(
                "projection has {} points for a dump of {}",
                proj.coords.len(),
                dump.len()
            )));
        }
        for (i, m) in dump.meta.iter().enumerate() {
            let method = proj.method.to_string();
            let found = panels.iter().position(|p| {
                p.source == src && p.model == m.model && p.lambda.to_bits() == m.lambda.to_bits() && p.method == method
            });
            match found {
                Some(k) => panels[k].points.push(i),
                None => panels.push(Panel {
                    model: &m.model,
                    lambda: m.lambda,
                    kind: dump.kind,
                    method,
                    points: vec![i],
                    source: src,
                }),
            }
        }
    }

    let mut labels: Vec<&str> = projections.iter().flat_map(|(d, _)| d.meta.iter().map(|m| m.label.as_str())).collect();
    labels.sort_unstable();
    labels.dedup();
    let color_of = |l: &str| PALETTE[labels.binary_search(&l).unwrap_or(0) % PALETTE.len()];

    let cols = (panels.len() as u32).min(COLUMNS);
    let rows = (panels.len() as u32).div_ceil(COLUMNS);
    let mut img = RgbImage::from_pixel(cols * PANEL, rows * PANEL, Rgb([255, 255, 255]));
    let mut data = String::from("panel,model,lambda,kind,method,sentence_id,start,end,label,x,y\n");
    let mut sil = String::from("panel,model,lambda,kind,method,points,silhouette\n");
    for (k, p) in panels.iter().enumerate() {
        let (dump, proj) = projections[p.source];
        let coords: Vec<[f64; 2]> = p.points.iter().map(|&i| proj.coords[i]).collect();
        let point_labels: Vec<&str> = p.points.iter().map(|&i| dump.meta[i].label.as_str()).collect();
        let colors: Vec<[u8; 3]> = point_labels.iter().map(|l| color_of(l)).collect();
        let k32 = k as u32;
        draw_panel(&mut img, (k32 % COLUMNS) * PANEL, (k32 / COLUMNS) * PANEL, &coords, &colors);
        for (&i, c) in p.points.iter().zip(&coords) {
            let m = &dump.meta[i];
            data += &format!(
                "{k},{},{:.1},{},{},{},{},{},{},{},{}\n",
                csv_field(p.model),
                p.lambda,
                p.kind,
                p.method,
                csv_field(&m.sentence_id),
                m.start,
                m.end,
                csv_field(&m.label),
                c[0],
                c[1]
            );
        }
        let score = silhouette(&coords, &point_labels).map_or_else(String::new, |s| format!("{s:.6}"));
        sil += &format!(
            "{k},{},{:.1},{},{},{},{score}\n",
            csv_field(p.model),
            p.lambda,
            p.kind,
            p.method,
            coords.len()
        );
        log::info!("panel {k}: {}", panel_title(p));
    }

    let mut png = Vec::new();
    image::codecs::png::PngEncoder::new(&mut png)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::io(out_path, std::io::Error::other(e)))?;
    let files = PlotFiles {
        image: out_path.to_path_buf(),
        data: out_path.with_extension("csv"),
        silhouette: out_path.with_extension("silhouette.csv"),
    };
    crate::io::write_atomic(&files.image, &png)?;
    crate::io::write_atomic(&files.data, data.as_bytes())?;
    crate::io::write_atomic(&files.silhouette, sil.as_bytes())?;
    Ok(files)
}
