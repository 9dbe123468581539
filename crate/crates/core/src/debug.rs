//! Debug artifacts for one swap job. Every image has the target's size.
//!
//! | file                  | content                                                  |
//! |-----------------------|----------------------------------------------------------|
//! | `fit_overlay.png`     | target with the fitted mesh (green) and input landmarks (red) |
//! | `visibility.png`      | dimmed target, visible vertices green, hidden red        |
//! | `pairs_wireframe.png` | target with the destination triangles of every pair      |
//! | `canvas.png`          | warped canvas before blending                             |
//! | `blend_mask.png`      | Ω in white, its boundary in gray                          |

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Point2;

use crate::model::MorphableModel;
use crate::pipeline::{SwapJob, SwapOutcome};
use crate::raster::RasterImage;

pub const FIT_OVERLAY: &str = "fit_overlay.png";
pub const VISIBILITY: &str = "visibility.png";
pub const PAIRS_WIREFRAME: &str = "pairs_wireframe.png";
pub const CANVAS: &str = "canvas.png";
pub const BLEND_MASK: &str = "blend_mask.png";

pub const ARTIFACTS: [&str; 5] = [FIT_OVERLAY, VISIBILITY, PAIRS_WIREFRAME, CANVAS, BLEND_MASK];

const GREEN: [u8; 3] = [40, 230, 60];
const RED: [u8; 3] = [240, 40, 40];
const YELLOW: [u8; 3] = [250, 220, 30];

fn put(img: &mut RasterImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set_pixel(x as usize, y as usize, &color);
    }
}

fn line(img: &mut RasterImage, a: Point2<f64>, b: Point2<f64>, color: [u8; 3]) {
    if !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()) {
        return;
    }
    let steps = (b - a).abs().max().ceil().clamp(1.0, 1e5) as usize;
    for s in 0..=steps {
        let p = a + (b - a) * (s as f64 / steps as f64);
        put(img, p.x.round() as i64, p.y.round() as i64, color);
    }
}

fn dot(img: &mut RasterImage, p: Point2<f64>, color: [u8; 3]) {
    if !(p.x.is_finite() && p.y.is_finite()) {
        return;
    }
    let (x, y) = (p.x.round() as i64, p.y.round() as i64);
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, x + dx, y + dy, color);
        }
    }
}

fn dimmed(img: &RasterImage) -> RasterImage {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v /= 2);
    out
}

/// Renders the five artifacts in [`ARTIFACTS`] order.
pub fn render_debug(model: &MorphableModel, job: &SwapJob, outcome: &SwapOutcome) -> Vec<(&'static str, RasterImage)> {
    let inter = &outcome.intermediates;
    let base = job.target.image.to_rgb().unwrap_or_else(|_| outcome.image.clone());
    let projected = &inter.fit_target.projected;

    let mut overlay = base.clone();
    for t in model.triangulation() {
        for e in 0..3 {
            line(&mut overlay, projected[t[e]], projected[t[(e + 1) % 3]], GREEN);
        }
    }
    for &l in &job.target.landmarks {
        dot(&mut overlay, l, RED);
    }

    let mut visibility = dimmed(&base);
    for (v, p) in projected.iter().enumerate() {
        let color = if inter.validity_target.visibility.visible[v] { GREEN } else { RED };
        put(&mut visibility, p.x.round() as i64, p.y.round() as i64, color);
    }

    let mut wire = dimmed(&base);
    for pair in &inter.pairs {
        for e in 0..3 {
            line(&mut wire, pair.dst_px[e], pair.dst_px[(e + 1) % 3], YELLOW);
        }
    }

    let canvas = inter.canvas.pixels.clone();

    let region = &inter.region;
    let boundary = region.boundary();
    let mask_data = region
        .mask()
        .iter()
        .zip(&boundary)
        .map(|(&m, &b)| if m { 255 } else if b { 128 } else { 0 })
        .collect();
    let blend_mask = RasterImage::from_raw(region.width(), region.height(), 1, mask_data).expect("region size");

    vec![
        (FIT_OVERLAY, overlay),
        (VISIBILITY, visibility),
        (PAIRS_WIREFRAME, wire),
        (CANVAS, canvas),
        (BLEND_MASK, blend_mask),
    ]
}

/// Writes the artifacts into `dir`. Failures are logged and skipped; the
/// paths actually written are returned.
pub fn dump_debug(model: &MorphableModel, job: &SwapJob, outcome: &SwapOutcome, dir: &Path) -> Vec<PathBuf> {
    if let Err(e) = fs::create_dir_all(dir) {
        log::warn!("debug dir {}: {e}", dir.display());
        return Vec::new();
    }
    let mut written = Vec::new();
    for (name, img) in render_debug(model, job, outcome) {
        let path = dir.join(name);
        match img.save(&path) {
            Ok(()) => written.push(path),
            Err(e) => log::warn!("debug artifact {}: {e}", path.display()),
        }
    }
    written
}
