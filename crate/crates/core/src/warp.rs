//! Piecewise affine warping of triangle patches onto a target-sized canvas.
//!
//! Destination pixels are found by rasterizing each destination triangle and
//! inverse-mapped into the source image, which is sampled bilinearly. Pixel
//! `(i, j)` sits at the point `(i, j)`. Pixels exactly on an edge belong to the
//! triangle whose inward edge normal `n` satisfies `n.x > 0 || (n.x == 0 &&
//! n.y > 0)`; edge functions are evaluated on a canonical endpoint order so
//! both triangles sharing an edge see bit-identical values.

use nalgebra::{Matrix2, Point2, Vector2};
use thiserror::Error;

use crate::raster::RasterImage;
use crate::region::TrianglePair;

/// Minimum `|det M|` of a usable warp.
const MIN_DET: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WarpError {
    #[error("singular warp: degenerate triangle (|det| = {det:e})")]
    Singular { det: f64 },
    #[error("canvas is {canvas:?}, expected {expected:?} (width, height, channels)")]
    CanvasShape {
        canvas: (usize, usize, usize),
        expected: (usize, usize, usize),
    },
    #[error("source has {source_channels} channels, canvas has {canvas}")]
    ChannelMismatch { source_channels: usize, canvas: usize },
}

/// `p ↦ M·p + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2D {
    pub m: Matrix2<f64>,
    pub b: Vector2<f64>,
}

impl Affine2D {
    pub fn identity() -> Self {
        Self {
            m: Matrix2::identity(),
            b: Vector2::zeros(),
        }
    }

    pub fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::from(self.m * p.coords + self.b)
    }

    pub fn inverse(&self) -> Result<Self, WarpError> {
        let det = self.m.determinant();
        if !(det.abs() >= MIN_DET) {
            return Err(WarpError::Singular { det });
        }
        let m = self.m.try_inverse().ok_or(WarpError::Singular { det })?;
        Ok(Self { m, b: -(m * self.b) })
    }
}

/// The unique affine map taking `src[i]` to `dst[i]`.
pub fn triangle_affine(src: &[Point2<f64>; 3], dst: &[Point2<f64>; 3]) -> Result<Affine2D, WarpError> {
    let s = Matrix2::from_columns(&[src[1] - src[0], src[2] - src[0]]);
    let d = Matrix2::from_columns(&[dst[1] - dst[0], dst[2] - dst[0]]);
    let det_s = s.determinant();
    let det_d = d.determinant();
    if !(det_s.abs() >= MIN_DET) {
        return Err(WarpError::Singular { det: det_s });
    }
    if !(det_d.abs() >= MIN_DET) {
        return Err(WarpError::Singular { det: det_d });
    }
    let s_inv = s.try_inverse().ok_or(WarpError::Singular { det: det_s })?;
    let m = d * s_inv;
    let b = dst[0].coords - m * src[0].coords;
    Ok(Affine2D { m, b })
}

/// Target-sized working image plus a coverage map.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpCanvas {
    pub pixels: RasterImage,
    pub written: Vec<bool>,
}

impl WarpCanvas {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            pixels: RasterImage::new(width, height, channels),
            written: vec![false; width * height],
        }
    }

    /// Canvas initialised with a copy of `image` and nothing written.
    pub fn from_image(image: &RasterImage) -> Self {
        Self {
            pixels: image.clone(),
            written: vec![false; image.width() * image.height()],
        }
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn written_count(&self) -> usize {
        self.written.iter().filter(|&&w| w).count()
    }
}

/// One triangle edge for rasterization.
struct Edge {
    lo: Point2<f64>,
    dir: Vector2<f64>,
    /// Sign making the edge function positive inside the triangle.
    sign: f64,
    /// Pixels with a zero edge function belong to this triangle.
    owns_ties: bool,
}

impl Edge {
    fn new(a: Point2<f64>, b: Point2<f64>, orientation: f64) -> Self {
        let a_first = (a.x, a.y) < (b.x, b.y);
        let (lo, hi, flip) = if a_first { (a, b, 1.0) } else { (b, a, -1.0) };
        let dir = hi - lo;
        let sign = orientation * flip;
        let normal = Vector2::new(-dir.y, dir.x) * sign;
        let owns_ties = normal.x > 0.0 || (normal.x == 0.0 && normal.y > 0.0);
        Self { lo, dir, sign, owns_ties }
    }

    fn contains(&self, p: &Point2<f64>) -> bool {
        let v = self.sign * self.dir.perp(&(p - self.lo));
        v > 0.0 || (v == 0.0 && self.owns_ties)
    }
}

/// Integer pixels covered by `tri` under the fill rule, clipped to `width × height`.
pub fn rasterize_triangle(tri: &[Point2<f64>; 3], width: usize, height: usize, mut visit: impl FnMut(usize, usize)) {
    let orientation = (tri[1] - tri[0]).perp(&(tri[2] - tri[0]));
    if orientation == 0.0 || !orientation.is_finite() || width == 0 || height == 0 {
        return;
    }
    let orientation = orientation.signum();
    let edges = [
        Edge::new(tri[0], tri[1], orientation),
        Edge::new(tri[1], tri[2], orientation),
        Edge::new(tri[2], tri[0], orientation),
    ];
    let min_x = tri.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_x = tri.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).floor().min((width - 1) as f64);
    let min_y = tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_y = tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).floor().min((height - 1) as f64);
    if min_x > max_x || min_y > max_y {
        return;
    }
    for y in min_y as usize..=max_y as usize {
        for x in min_x as usize..=max_x as usize {
            let p = Point2::new(x as f64, y as f64);
            if edges.iter().all(|e| e.contains(&p)) {
                visit(x, y);
            }
        }
    }
}

/// Warps every pair's source patch onto the canvas. Pairs are applied in
/// ascending triangle id, so a later triangle wins on any shared pixel.
pub fn warp_pairs(src_image: &RasterImage, pairs: &[TrianglePair], canvas: &mut WarpCanvas) -> Result<(), WarpError> {
    let channels = canvas.pixels.channels();
    if canvas.written.len() != canvas.width() * canvas.height() {
        return Err(WarpError::CanvasShape {
            canvas: (canvas.width(), canvas.height(), channels),
            expected: (canvas.width(), canvas.height(), channels),
        });
    }
    if src_image.channels() != channels {
        return Err(WarpError::ChannelMismatch {
            source_channels: src_image.channels(),
            canvas: channels,
        });
    }
    let mut order: Vec<&TrianglePair> = pairs.iter().collect();
    order.sort_by_key(|p| p.triangle_id);

    let (width, height) = (canvas.width(), canvas.height());
    let mut value = vec![0u8; channels];
    for pair in order {
        // destination → source directly, exact at the vertices
        let inverse = triangle_affine(&pair.dst_px, &pair.src_px)?;
        let WarpCanvas { pixels, written } = canvas;
        rasterize_triangle(&pair.dst_px, width, height, |x, y| {
            let s = inverse.apply(&Point2::new(x as f64, y as f64));
            for (c, v) in value.iter_mut().enumerate() {
                *v = src_image.sample_bilinear(s.x, s.y, c).round().clamp(0.0, 255.0) as u8;
            }
            pixels.set_pixel(x, y, &value);
            written[y * width + x] = true;
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn identity_and_scale() {
        let t = [p(1.0, 2.0), p(7.0, 3.0), p(2.0, 9.0)];
        let a = triangle_affine(&t, &t).unwrap();
        assert_relative_eq!(a.m, Matrix2::identity(), epsilon = 1e-14);
        assert_relative_eq!(a.b, Vector2::zeros(), epsilon = 1e-13);

        let a = triangle_affine(&[p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)], &[p(0.0, 0.0), p(2.0, 0.0), p(0.0, 2.0)]).unwrap();
        assert_eq!(a.m, Matrix2::new(2.0, 0.0, 0.0, 2.0));
        assert_eq!(a.b, Vector2::zeros());
    }

    #[test]
    fn degenerate_triangle_is_singular() {
        let flat = [p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)];
        let ok = [p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)];
        assert!(matches!(triangle_affine(&flat, &ok), Err(WarpError::Singular { .. })));
        assert!(matches!(triangle_affine(&ok, &flat), Err(WarpError::Singular { .. })));
    }

    #[test]
    fn inverse_round_trips() {
        let a = triangle_affine(&[p(0.0, 0.0), p(3.0, 1.0), p(1.0, 4.0)], &[p(5.0, 5.0), p(6.0, 9.0), p(1.0, 7.0)]).unwrap();
        let inv = a.inverse().unwrap();
        let q = p(2.5, -1.25);
        assert_relative_eq!(inv.apply(&a.apply(&q)), q, epsilon = 1e-12);
    }

    #[test]
    fn shared_edge_pixels_are_claimed_once() {
        // square split along its diagonal, vertices on integer pixels
        let a = [p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0)];
        let b = [p(0.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)];
        let mut hits = vec![0u8; 11 * 11];
        rasterize_triangle(&a, 11, 11, |x, y| hits[y * 11 + x] += 1);
        rasterize_triangle(&b, 11, 11, |x, y| hits[y * 11 + x] += 1);
        assert!(hits.iter().all(|&h| h <= 1));
        for y in 1..10 {
            for x in 1..10 {
                assert_eq!(hits[y * 11 + x], 1, "({x}, {y})");
            }
        }
    }

    #[test]
    fn empty_pair_list_is_a_no_op() {
        let src = RasterImage::filled(8, 8, &[9, 9, 9]);
        let mut canvas = WarpCanvas::new(8, 8, 3);
        let before = canvas.clone();
        warp_pairs(&src, &[], &mut canvas).unwrap();
        assert_eq!(canvas, before);
        assert_eq!(canvas.written_count(), 0);
    }

    #[test]
    fn constant_source_paints_constant() {
        let src = RasterImage::filled(40, 40, &[17, 200, 64]);
        let mut canvas = WarpCanvas::new(50, 50, 3);
        let pairs = vec![TrianglePair {
            triangle_id: 0,
            src_px: [p(-5.0, 0.0), p(39.0, 2.0), p(10.0, 45.0)],
            dst_px: [p(3.3, 4.1), p(47.2, 10.0), p(20.5, 44.9)],
        }];
        warp_pairs(&src, &pairs, &mut canvas).unwrap();
        assert!(canvas.written_count() > 500);
        for (i, &w) in canvas.written.iter().enumerate() {
            let px = canvas.pixels.pixel(i % 50, i / 50);
            if w {
                assert_eq!(px, &[17, 200, 64]);
            } else {
                assert_eq!(px, &[0, 0, 0]);
            }
        }
    }

    #[test]
    fn out_of_canvas_triangles_are_clipped() {
        let src = RasterImage::filled(10, 10, &[1]);
        let mut canvas = WarpCanvas::new(10, 10, 1);
        let pairs = vec![TrianglePair {
            triangle_id: 3,
            src_px: [p(0.0, 0.0), p(9.0, 0.0), p(0.0, 9.0)],
            dst_px: [p(-20.0, -20.0), p(60.0, -20.0), p(-20.0, 60.0)],
        }];
        warp_pairs(&src, &pairs, &mut canvas).unwrap();
        assert_eq!(canvas.written_count(), 100);
        let pairs = vec![TrianglePair {
            triangle_id: 3,
            src_px: [p(0.0, 0.0), p(9.0, 0.0), p(0.0, 9.0)],
            dst_px: [p(100.0, 100.0), p(130.0, 100.0), p(100.0, 130.0)],
        }];
        let mut canvas = WarpCanvas::new(10, 10, 1);
        warp_pairs(&src, &pairs, &mut canvas).unwrap();
        assert_eq!(canvas.written_count(), 0);
    }

    #[test]
    fn later_triangle_wins_overlaps() {
        let dark = RasterImage::filled(20, 20, &[10]);
        let t = [p(2.0, 2.0), p(15.0, 3.0), p(4.0, 16.0)];
        let src = [p(0.0, 0.0), p(19.0, 0.0), p(0.0, 19.0)];
        let pairs = vec![
            TrianglePair { triangle_id: 5, src_px: src, dst_px: t },
            TrianglePair { triangle_id: 2, src_px: src, dst_px: t },
        ];
        let mut a = WarpCanvas::new(20, 20, 1);
        warp_pairs(&dark, &pairs, &mut a).unwrap();
        let mut reversed = pairs.clone();
        reversed.reverse();
        let mut b = WarpCanvas::new(20, 20, 1);
        warp_pairs(&dark, &reversed, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let src = RasterImage::filled(4, 4, &[1]);
        let mut canvas = WarpCanvas::new(4, 4, 3);
        assert!(matches!(
            warp_pairs(&src, &[], &mut canvas),
            Err(WarpError::ChannelMismatch { .. })
        ));
    }
}
