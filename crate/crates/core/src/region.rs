//! Selection of corresponding, unoccluded triangle pairs for a facial part.

use std::collections::HashSet;

use nalgebra::{Point2, Point3, Vector3};
use thiserror::Error;

use crate::fit::FitResult;
use crate::model::{MorphableModel, Part};
use crate::raster::Mask;
use crate::visibility::{hpr_visibility, VisibilityError, VisibilityResult, DEFAULT_GAMMA};

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("fit does not belong to the model: {found} projected vertices, model has {expected}")]
    FitMismatch { expected: usize, found: usize },
    #[error("invalid mask dimensions {width}×{height}")]
    InvalidMask { width: usize, height: usize },
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    /// Flip-radius factor for hidden point removal.
    pub gamma: f64,
    /// Viewer distance in bounding-sphere radii.
    pub view_distance: f64,
    /// Minimum projected triangle area in px².
    pub min_area: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            view_distance: 10.0,
            min_area: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrianglePair {
    pub triangle_id: usize,
    pub src_px: [Point2<f64>; 3],
    pub dst_px: [Point2<f64>; 3],
}

/// Triangles whose three vertices all belong to the part region.
pub fn part_triangles(model: &MorphableModel, part: Part) -> Vec<usize> {
    let region: HashSet<usize> = model.region(part).iter().copied().collect();
    model
        .triangulation()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().all(|v| region.contains(v)))
        .map(|(id, _)| id)
        .collect()
}

/// Visibility of the fitted shape seen from `+z` after rotating it into the
/// estimated pose. The rotated shape is centered on its centroid and the
/// viewer placed `view_distance` bounding radii along `+z`.
pub fn shape_visibility(fit: &FitResult, params: &SelectionParams) -> Result<VisibilityResult, VisibilityError> {
    let rotated: Vec<Point3<f64>> = fit.shape.vertices.iter().map(|p| fit.rotation * p).collect();
    let n = rotated.len().max(1) as f64;
    let centroid = rotated.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let centered: Vec<Point3<f64>> = rotated.iter().map(|p| p - centroid).collect();
    let radius = centered.iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
    let viewpoint = Point3::new(0.0, 0.0, params.view_distance * radius);
    hpr_visibility(&centered, &viewpoint, params.gamma)
}

/// Per-vertex validity of one side of a swap: visible after pose rotation and
/// projected onto a valid mask pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexValidity {
    pub visibility: VisibilityResult,
    pub on_mask: Vec<bool>,
}

impl VertexValidity {
    pub fn compute(model: &MorphableModel, fit: &FitResult, mask: &Mask, params: &SelectionParams) -> Result<Self, RegionError> {
        if fit.projected.len() != model.vertex_count() || fit.shape.len() != model.vertex_count() {
            return Err(RegionError::FitMismatch {
                expected: model.vertex_count(),
                found: fit.projected.len(),
            });
        }
        if mask.width() == 0 || mask.height() == 0 {
            return Err(RegionError::InvalidMask {
                width: mask.width(),
                height: mask.height(),
            });
        }
        let visibility = shape_visibility(fit, params)?;
        let on_mask = fit.projected.iter().map(|p| mask.is_valid_at(p.x, p.y)).collect();
        Ok(Self { visibility, on_mask })
    }

    pub fn is_valid(&self, vertex: usize) -> bool {
        self.visibility.visible[vertex] && self.on_mask[vertex]
    }
}

fn area(t: &[Point2<f64>; 3]) -> f64 {
    0.5 * (t[1] - t[0]).perp(&(t[2] - t[0])).abs()
}

/// Pairs for `part` given precomputed per-side validity; ordered by triangle id.
pub fn pairs_for_part(
    model: &MorphableModel,
    part: Part,
    fit_src: &FitResult,
    fit_dst: &FitResult,
    src: &VertexValidity,
    dst: &VertexValidity,
    min_area: f64,
) -> Vec<TrianglePair> {
    let tris = model.triangulation();
    part_triangles(model, part)
        .into_iter()
        .filter(|&id| tris[id].iter().all(|&v| src.is_valid(v) && dst.is_valid(v)))
        .filter_map(|id| {
            let t = tris[id];
            let src_px = t.map(|v| fit_src.projected[v]);
            let dst_px = t.map(|v| fit_dst.projected[v]);
            let finite = src_px.iter().chain(&dst_px).all(|p| p.x.is_finite() && p.y.is_finite());
            (finite && area(&src_px) >= min_area && area(&dst_px) >= min_area).then_some(TrianglePair {
                triangle_id: id,
                src_px,
                dst_px,
            })
        })
        .collect()
}

/// Part triangles visible in both fits and landing on valid pixels of both masks.
pub fn select_valid_pairs(
    model: &MorphableModel,
    fit_src: &FitResult,
    fit_dst: &FitResult,
    part: Part,
    mask_src: &Mask,
    mask_dst: &Mask,
    params: &SelectionParams,
) -> Result<Vec<TrianglePair>, RegionError> {
    let src = VertexValidity::compute(model, fit_src, mask_src, params)?;
    let dst = VertexValidity::compute(model, fit_dst, mask_dst, params)?;
    Ok(pairs_for_part(model, part, fit_src, fit_dst, &src, &dst, params.min_area))
}
