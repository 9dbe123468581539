//! Gradient-domain seamless cloning.
//!
//! For every pixel `p` of the interior region Ω the solved image `f` satisfies
//!
//! ```text
//! Σ_{q ∈ N4(p)} (f_p − f_q) = Σ_{q ∈ N4(p)} (g_p − g_q)
//! ```
//!
//! with `g` the warped canvas and `f_q` pinned to the target for `q ∉ Ω`. The
//! system is solved per channel by Jacobi-preconditioned conjugate gradients.

use rayon::prelude::*;
use thiserror::Error;

use crate::raster::RasterImage;
use crate::warp::WarpCanvas;

/// Connected components of Ω smaller than this are dropped.
pub const MIN_COMPONENT: usize = 9;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlendError {
    #[error("Poisson solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("dimension mismatch: {what} is {found:?}, expected {expected:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("invalid blend parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendParams {
    /// Relative residual target `‖Af − b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iterations: 10_000,
        }
    }
}

impl BlendParams {
    pub fn validate(&self) -> Result<(), BlendError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(BlendError::InvalidParams(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iterations == 0 {
            return Err(BlendError::InvalidParams("max_iterations must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Interior region Ω; never touches the image border.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlendRegion {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BlendRegion {
    /// Region from an explicit mask; border pixels are removed.
    pub fn from_mask(width: usize, height: usize, mut mask: Vec<bool>) -> Option<Self> {
        if mask.len() != width * height {
            return None;
        }
        for y in 0..height {
            for x in 0..width {
                if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
                    mask[y * width + x] = false;
                }
            }
        }
        Some(Self { width, height, mask })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Pixels outside Ω that are 4-adjacent to it.
    pub fn boundary(&self) -> Vec<bool> {
        let mut b = vec![false; self.mask.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.contains(x, y) {
                    for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                        let i = ny * self.width + nx;
                        if !self.mask[i] {
                            b[i] = true;
                        }
                    }
                }
            }
        }
        b
    }
}

/// Ω from a warp coverage map: erode by one pixel (4-neighbourhood), drop the
/// image border, then drop 4-connected components under [`MIN_COMPONENT`] pixels.
pub fn build_region(written: &[bool], width: usize, height: usize) -> BlendRegion {
    assert_eq!(written.len(), width * height, "coverage map size");
    let mut mask = vec![false; width * height];
    for y in 1..height.saturating_sub(1) {
        for x in 1..width.saturating_sub(1) {
            let i = y * width + x;
            mask[i] = written[i] && written[i - 1] && written[i + 1] && written[i - width] && written[i + width];
        }
    }

    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        component.clear();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            component.push(i);
            // Ω never reaches the border, so all neighbours exist
            for j in [i - 1, i + 1, i - width, i + width] {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if component.len() < MIN_COMPONENT {
            for &i in &component {
                mask[i] = false;
            }
        }
    }
    BlendRegion { width, height, mask }
}

/// Pre-quantization solution of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSolution {
    /// Full image, row-major; equals the boundary image off Ω.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Sparse Ω-restricted 4-neighbour Laplacian.
struct Operator {
    pixels: Vec<usize>,
    neighbours: Vec<[u32; 4]>,
}

impl Operator {
    fn new(region: &BlendRegion) -> Self {
        let w = region.width;
        let mut index = vec![NONE; region.mask.len()];
        let pixels: Vec<usize> = (0..region.mask.len()).filter(|&i| region.mask[i]).collect();
        for (k, &i) in pixels.iter().enumerate() {
            index[i] = k as u32;
        }
        let neighbours = pixels.iter().map(|&i| [index[i - 1], index[i + 1], index[i - w], index[i + w]]).collect();
        Self { pixels, neighbours }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (k, nb) in self.neighbours.iter().enumerate() {
            let mut v = 4.0 * x[k];
            for &j in nb {
                if j != NONE {
                    v -= x[j as usize];
                }
            }
            out[k] = v;
        }
    }

    fn rhs(&self, width: usize, guidance: &[f64], boundary: &[f64]) -> Vec<f64> {
        self.pixels
            .iter()
            .zip(&self.neighbours)
            .map(|(&i, nb)| {
                let mut b = 0.0;
                for (slot, q) in [i - 1, i + 1, i - width, i + width].into_iter().enumerate() {
                    b += guidance[i] - guidance[q];
                    if nb[slot] == NONE {
                        b += boundary[q];
                    }
                }
                b
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves the Poisson system for one channel. `guidance` and `boundary` are
/// full-image buffers of the region's size.
pub fn solve_poisson(
    region: &BlendRegion,
    guidance: &[f64],
    boundary: &[f64],
    params: &BlendParams,
) -> Result<ChannelSolution, BlendError> {
    params.validate()?;
    let size = region.width * region.height;
    for (what, buf) in [("guidance", guidance), ("boundary", boundary)] {
        if buf.len() != size {
            return Err(BlendError::DimensionMismatch {
                what,
                expected: (region.width, region.height, 1),
                found: (buf.len(), 1, 1),
            });
        }
    }
    let op = Operator::new(region);
    solve_with(&op, region.width, guidance, boundary, params)
}

fn solve_with(op: &Operator, width: usize, guidance: &[f64], boundary: &[f64], params: &BlendParams) -> Result<ChannelSolution, BlendError> {
    let mut values = boundary.to_vec();
    let n = op.pixels.len();
    if n == 0 {
        return Ok(ChannelSolution {
            values,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let b = op.rhs(width, guidance, boundary);
    let b_norm = norm(&b);
    let mut x: Vec<f64> = op.pixels.iter().map(|&i| boundary[i]).collect();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
    }

    let mut ax = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let true_residual = |x: &[f64], ax: &mut [f64], r: &mut [f64]| {
        op.apply(x, ax);
        for k in 0..n {
            r[k] = b[k] - ax[k];
        }
        norm(r)
    };

    let mut res = true_residual(&x, &mut ax, &mut r);
    let target = params.tol * b_norm;
    // restart from the true residual whenever the recursive one claims convergence
    while res > target && iterations < params.max_iterations {
        // Jacobi preconditioner: the diagonal is 4 everywhere
        for k in 0..n {
            z[k] = 0.25 * r[k];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < params.max_iterations {
            iterations += 1;
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if norm(&r) <= target {
                break;
            }
            for k in 0..n {
                z[k] = 0.25 * r[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        res = true_residual(&x, &mut ax, &mut r);
    }

    let relative_residual = if b_norm == 0.0 { res } else { res / b_norm };
    if res > target {
        return Err(BlendError::NoConvergence {
            residual: relative_residual,
            iterations,
        });
    }
    for (&i, &v) in op.pixels.iter().zip(&x) {
        values[i] = v;
    }
    Ok(ChannelSolution {
        values,
        iterations,
        relative_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloneOutput {
    pub image: RasterImage,
    /// One entry per channel; empty when Ω is empty.
    pub solutions: Vec<ChannelSolution>,
}

/// Clones the canvas into `target` over Ω. Off Ω the output is the target byte
/// for byte; on Ω the solution is rounded half away from zero and clamped.
pub fn seamless_clone(target: &RasterImage, canvas: &WarpCanvas, region: &BlendRegion, params: &BlendParams) -> Result<CloneOutput, BlendError> {
    params.validate()?;
    let shape = |img: &RasterImage| (img.width(), img.height(), img.channels());
    if !target.same_shape(&canvas.pixels) {
        return Err(BlendError::DimensionMismatch {
            what: "canvas",
            expected: shape(target),
            found: shape(&canvas.pixels),
        });
    }
    if region.width != target.width() || region.height != target.height() {
        return Err(BlendError::DimensionMismatch {
            what: "region",
            expected: shape(target),
            found: (region.width, region.height, target.channels()),
        });
    }
    if region.is_empty() {
        return Ok(CloneOutput {
            image: target.clone(),
            solutions: Vec::new(),
        });
    }

    let op = Operator::new(region);
    let solutions = (0..target.channels())
        .into_par_iter()
        .map(|c| solve_with(&op, region.width, &canvas.pixels.channel_f64(c), &target.channel_f64(c), params))
        .collect::<Result<Vec<_>, _>>()?;

    let mut image = target.clone();
    let channels = target.channels();
    let data = image.data_mut();
    for &i in &op.pixels {
        for (c, s) in solutions.iter().enumerate() {
            data[i * channels + c] = s.values[i].round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(CloneOutput { image, solutions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_written(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Vec<bool> {
        let mut m = vec![false; w * h];
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                m[y * w + x] = true;
            }
        }
        m
    }

    #[test]
    fn erosion_examples() {
        let r = build_region(&square_written(100, 100, 30, 40, 10), 100, 100);
        assert_eq!(r.len(), 64);
        assert!(r.contains(31, 41) && r.contains(38, 48));
        assert!(!r.contains(30, 40) && !r.contains(39, 49));

        let mut single = vec![false; 100];
        single[55] = true;
        assert!(build_region(&single, 10, 10).is_empty());

        let mut two = square_written(100, 100, 10, 10, 10);
        for (i, v) in square_written(100, 100, 60, 60, 2).into_iter().enumerate() {
            two[i] |= v;
        }
        let r = build_region(&two, 100, 100);
        assert_eq!(r.len(), 64);
        assert!(!r.contains(60, 60));
    }

    #[test]
    fn border_pixels_never_enter_the_region() {
        let r = build_region(&vec![true; 64], 8, 8);
        assert_eq!(r.len(), 36);
        assert!(!r.contains(0, 3) && r.contains(1, 1));
        let full = BlendRegion::from_mask(8, 8, vec![true; 64]).unwrap();
        assert_eq!(full.len(), 36);
    }

    #[test]
    fn boundary_surrounds_region() {
        let r = build_region(&square_written(20, 20, 5, 5, 5), 20, 20);
        assert_eq!(r.len(), 9);
        assert_eq!(r.boundary().iter().filter(|&&b| b).count(), 12);
    }

    #[test]
    fn constant_and_offset_reproduce_target() {
        let (w, h) = (40, 30);
        let written = square_written(w, h, 5, 5, 20);
        let region = build_region(&written, w, h);
        let target = RasterImage::filled(w, h, &[90, 20, 250]);
        let mut canvas = WarpCanvas::from_image(&target);
        canvas.written = written.clone();
        let out = seamless_clone(&target, &canvas, &region, &BlendParams::default()).unwrap();
        assert_eq!(out.image, target);

        // offset canvas over a non-constant target
        let mut target = RasterImage::new(w, h, 1);
        for y in 0..h {
            for x in 0..w {
                target.set_pixel(x, y, &[(3 * x + 2 * y) as u8]);
            }
        }
        let mut canvas = WarpCanvas::from_image(&target);
        for (i, &wr) in written.iter().enumerate() {
            if wr {
                canvas.pixels.data_mut()[i] += 50;
            }
        }
        canvas.written = written;
        let out = seamless_clone(&target, &canvas, &region, &BlendParams::default()).unwrap();
        for (a, b) in out.image.data().iter().zip(target.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
        assert!(out.solutions[0].relative_residual <= 1e-6);
    }

    #[test]
    fn empty_region_returns_target() {
        let target = RasterImage::filled(10, 10, &[1, 2, 3]);
        let canvas = WarpCanvas::new(10, 10, 3);
        let region = build_region(&vec![false; 100], 10, 10);
        let out = seamless_clone(&target, &canvas, &region, &BlendParams::default()).unwrap();
        assert_eq!(out.image, target);
        assert!(out.solutions.is_empty());
    }

    #[test]
    fn maximum_principle_with_zero_guidance() {
        let (w, h) = (30, 30);
        let region = build_region(&square_written(w, h, 3, 3, 24), w, h);
        let boundary: Vec<f64> = (0..w * h).map(|i| ((i * 37) % 200) as f64 + 10.0).collect();
        let guidance = vec![7.0; w * h];
        let sol = solve_poisson(&region, &guidance, &boundary, &BlendParams::default()).unwrap();
        let bd = region.boundary();
        let (lo, hi) = (0..w * h)
            .filter(|&i| bd[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| (lo.min(boundary[i]), hi.max(boundary[i])));
        for i in 0..w * h {
            if region.mask()[i] {
                assert!(sol.values[i] >= lo - 1e-6 && sol.values[i] <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn linear_in_guidance_with_zero_boundary() {
        let (w, h) = (24, 20);
        let region = build_region(&square_written(w, h, 2, 2, 16), w, h);
        let g1: Vec<f64> = (0..w * h).map(|i| ((i * 13) % 29) as f64).collect();
        let g2: Vec<f64> = (0..w * h).map(|i| ((i * 7) % 17) as f64 - 5.0).collect();
        let zero = vec![0.0; w * h];
        let params = BlendParams {
            tol: 1e-13,
            max_iterations: 10_000,
        };
        let (a, b) = (1.5, -0.75);
        let mix: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let s1 = solve_poisson(&region, &g1, &zero, &params).unwrap();
        let s2 = solve_poisson(&region, &g2, &zero, &params).unwrap();
        let sm = solve_poisson(&region, &mix, &zero, &params).unwrap();
        for i in 0..w * h {
            assert!((sm.values[i] - (a * s1.values[i] + b * s2.values[i])).abs() < 1e-8);
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let (w, h) = (60, 60);
        let region = build_region(&square_written(w, h, 2, 2, 56), w, h);
        let g: Vec<f64> = (0..w * h).map(|i| ((i * 31) % 97) as f64).collect();
        let err = solve_poisson(
            &region,
            &g,
            &vec![0.0; w * h],
            &BlendParams {
                tol: 1e-12,
                max_iterations: 2,
            },
        )
        .unwrap_err();
        assert!(matches!(err, BlendError::NoConvergence { residual, iterations: 2 } if residual > 1e-12));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let target = RasterImage::new(10, 10, 3);
        let canvas = WarpCanvas::new(10, 11, 3);
        let region = build_region(&vec![false; 100], 10, 10);
        assert!(matches!(
            seamless_clone(&target, &canvas, &region, &BlendParams::default()),
            Err(BlendError::DimensionMismatch { .. })
        ));
    }
}
