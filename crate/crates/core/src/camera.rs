//! Orthographic (affine) camera estimation from 2D-3D correspondences,
//! projection, and head-rotation extraction.

use nalgebra::{DMatrix, Matrix2x3, Matrix3, Point2, Point3, Rotation3, Vector2, Vector3};
use thiserror::Error;

/// Relative singular-value threshold below which centered 3D points are
/// considered rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("correspondence count mismatch: {image} image points, {model} model points")]
    CountMismatch { image: usize, model: usize },
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate in input points")]
    NonFinite,
    #[error("degenerate geometry: centered 3D points have rank {rank} < 3")]
    DegenerateGeometry { rank: usize },
    #[error("degenerate camera: rows of the linear part are zero or parallel")]
    DegenerateCamera,
}

/// `x = A·X + t` with `A` 2×3 (pixels per model unit) and `t` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCamera {
    pub linear: Matrix2x3<f64>,
    pub translation: Vector2<f64>,
}

impl AffineCamera {
    pub fn new(linear: Matrix2x3<f64>, translation: Vector2<f64>) -> Self {
        Self { linear, translation }
    }

    /// Scaled orthographic camera looking down the rotated `-z` axis.
    pub fn from_rotation(rotation: &Rotation3<f64>, scale: f64, translation: Vector2<f64>) -> Self {
        let r = rotation.matrix();
        let linear = Matrix2x3::new(r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)]) * scale;
        Self { linear, translation }
    }

    pub fn project_point(&self, p: &Point3<f64>) -> Point2<f64> {
        Point2::from(self.linear * p.coords + self.translation)
    }

    pub fn project(&self, points: &[Point3<f64>]) -> Vec<Point2<f64>> {
        points.iter().map(|p| self.project_point(p)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

/// Least-squares affine camera from 2D-3D correspondences.
///
/// Both point sets are centered on their centroids; the linear part is
/// `l_c · L_c⁺` and the translation maps the 3D centroid onto the 2D one.
pub fn estimate_camera(image_points: &[Point2<f64>], model_points: &[Point3<f64>]) -> Result<AffineCamera, CameraError> {
    let n = image_points.len();
    if n != model_points.len() {
        return Err(CameraError::CountMismatch {
            image: n,
            model: model_points.len(),
        });
    }
    if n < 4 {
        return Err(CameraError::TooFewPoints(n));
    }
    let finite = image_points.iter().all(|p| p.coords.iter().all(|c| c.is_finite()))
        && model_points.iter().all(|p| p.coords.iter().all(|c| c.is_finite()));
    if !finite {
        return Err(CameraError::NonFinite);
    }

    let c2 = image_points.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords) / n as f64;
    let c3 = model_points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n as f64;

    // Rows are points: centered_3d is n×3, centered_2d is n×2.
    let centered_3d = DMatrix::from_fn(n, 3, |i, j| model_points[i][j] - c3[j]);
    let centered_2d = DMatrix::from_fn(n, 2, |i, j| image_points[i][j] - c2[j]);

    let svd = centered_3d.svd(true, true);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.max();
    let rank = sigma.iter().filter(|&&s| s > RANK_TOLERANCE * sigma_max).count();
    if sigma_max == 0.0 || rank < 3 {
        return Err(CameraError::DegenerateGeometry { rank: if sigma_max == 0.0 { 0 } else { rank } });
    }
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    // (L_c)⁺ as an n×3 matrix; here L_c is the 3×n transpose of `centered_3d`,
    // so L_c⁺ = U Σ⁻¹ Vᵀ.
    let mut u_scaled = u.clone();
    for (j, s) in sigma.iter().enumerate() {
        u_scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let pinv = u_scaled * v_t; // n×3
    let a = centered_2d.transpose() * pinv; // 2×3

    let linear = Matrix2x3::from_fn(|i, j| a[(i, j)]);
    let translation = c2 - linear * c3;
    Ok(AffineCamera { linear, translation })
}

/// Splits the linear part of `camera` into a rotation and an isotropic scale.
///
/// The scale is the mean of the two row norms. The rows divided by it are
/// replaced by the closest orthonormal pair in Frobenius norm (symmetric
/// orthogonalization), and the third row is their cross product, so the result
/// is a proper rotation.
pub fn extract_rotation(camera: &AffineCamera) -> Result<(Rotation3<f64>, f64), CameraError> {
    let r1 = camera.linear.row(0).transpose();
    let r2 = camera.linear.row(1).transpose();
    let (n1, n2) = (r1.norm(), r2.norm());
    if !(n1 > 0.0 && n2 > 0.0) || !camera.is_finite() {
        return Err(CameraError::DegenerateCamera);
    }
    if r1.cross(&r2).norm() <= 1e-12 * n1 * n2 {
        return Err(CameraError::DegenerateCamera);
    }
    let scale = 0.5 * (n1 + n2);
    let rows = camera.linear / scale;
    let svd = rows.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let q = u * v_t; // 2×3, orthonormal rows
    let q1 = q.row(0).transpose();
    let q2 = q.row(1).transpose();
    let q3 = q1.cross(&q2);
    let m = Matrix3::from_rows(&[q1.transpose(), q2.transpose(), q3.transpose()]);
    Ok((Rotation3::from_matrix_unchecked(m), scale))
}
