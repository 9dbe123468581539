//! Hidden point removal by spherical flipping.
//!
//! Points are expressed relative to the viewpoint and flipped about a sphere of
//! radius `gamma · max‖p‖`; a point is visible exactly when its flipped image
//! is a vertex of the convex hull of the flipped cloud together with the
//! viewpoint.

use nalgebra::Point3;
use thiserror::Error;

use crate::hull::{convex_hull, HullError};

/// Default flip-radius factor. Dense face meshes viewed from ten bounding
/// radii away need a large factor for shallow concavities (eye sockets,
/// the nose-cheek crease) to be reported visible.
pub const DEFAULT_GAMMA: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VisibilityError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("gamma must be finite and > 1, got {0}")]
    InvalidGamma(f64),
    #[error("viewpoint lies inside the bounding sphere of the points")]
    ViewpointInside,
    #[error("degenerate hull: {0}")]
    DegenerateHull(#[from] HullError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityResult {
    pub visible: Vec<bool>,
}

impl VisibilityResult {
    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }
}

pub fn hpr_visibility(points: &[Point3<f64>], viewpoint: &Point3<f64>, gamma: f64) -> Result<VisibilityResult, VisibilityError> {
    let n = points.len();
    if n < 4 {
        return Err(VisibilityError::TooFewPoints(n));
    }
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(VisibilityError::InvalidGamma(gamma));
    }
    if points.iter().chain(std::iter::once(viewpoint)).any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(HullError::NonFinite.into());
    }
    let centroid = Point3::from(points.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords) / n as f64);
    let radius = points.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);
    if radius == 0.0 {
        return Err(HullError::Coincident.into());
    }
    if (viewpoint - centroid).norm() <= radius {
        return Err(VisibilityError::ViewpointInside);
    }

    let rel: Vec<_> = points.iter().map(|p| p - viewpoint).collect();
    let flip_radius = gamma * rel.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut flipped: Vec<[f64; 3]> = rel
        .iter()
        .map(|v| {
            let d = v.norm();
            let f = v + v * (2.0 * (flip_radius - d) / d);
            [f.x, f.y, f.z]
        })
        .collect();
    flipped.push([0.0; 3]);

    let hull = convex_hull(&flipped)?;
    let mut visible = hull.is_vertex;
    visible.truncate(n);
    Ok(VisibilityResult { visible })
}
