//! Per-image model fitting: alternate affine camera estimation with a
//! regularized ridge solve for the deformation coefficients.

use nalgebra::{DMatrix, DVector, Point2, Rotation3};
use thiserror::Error;

use crate::camera::{estimate_camera, extract_rotation, AffineCamera, CameraError};
use crate::model::{ModelError, MorphableModel, Shape3D, LANDMARK_COUNT};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("expected {LANDMARK_COUNT} landmarks, got {0}")]
    LandmarkCount(usize),
    #[error("non-finite landmark coordinate")]
    NonFiniteLandmarks,
    #[error("invalid fit parameters: {0}")]
    InvalidParams(String),
    #[error("singular normal matrix in coefficient solve")]
    SingularSystem,
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// Regularization strength, relative to the mean squared singular value of
    /// the projected landmark dictionary.
    pub lambda: f64,
    /// Camera/shape alternation rounds.
    pub n_iterations: usize,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            n_iterations: 2,
        }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(FitError::InvalidParams(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.n_iterations == 0 {
            return Err(FitError::InvalidParams("n_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub alpha: Vec<f64>,
    pub shape: Shape3D,
    pub camera: AffineCamera,
    /// Every model vertex projected with `camera`.
    pub projected: Vec<Point2<f64>>,
    pub rotation: Rotation3<f64>,
    pub scale: f64,
    /// RMS landmark reprojection error in pixels.
    pub landmark_residual: f64,
    /// Fitting objective after each alternation round (non-increasing).
    pub objective_history: Vec<f64>,
}

/// The linear least-squares problem for the coefficients under a fixed camera:
/// `r = l − project(camera, L)` flattened to `(x0, y0, x1, y1, …)`, and column
/// `i` of `x` the camera's linear part applied to the landmark rows of
/// dictionary component `i`.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    pub design: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl RidgeSystem {
    pub fn build(landmarks: &[Point2<f64>], model: &MorphableModel, camera: &AffineCamera) -> Result<Self, FitError> {
        check_landmarks(landmarks)?;
        let idx = model.landmark_indices();
        let mean = model.mean_shape();
        let rows = 2 * idx.len();
        let mut rhs = DVector::zeros(rows);
        for (j, (&vi, l)) in idx.iter().zip(landmarks).enumerate() {
            let p = camera.project_point(&mean[vi]);
            rhs[2 * j] = l.x - p.x;
            rhs[2 * j + 1] = l.y - p.y;
        }
        let k = model.component_count();
        let mut design = DMatrix::zeros(rows, k);
        for (i, component) in model.dictionary().iter().enumerate() {
            for (j, &vi) in idx.iter().enumerate() {
                let d = camera.linear * component[vi];
                design[(2 * j, i)] = d.x;
                design[(2 * j + 1, i)] = d.y;
            }
        }
        Ok(Self { design, rhs })
    }

    /// Mean squared singular value of the design matrix, `trace(XᵀX) / k`.
    pub fn mean_squared_singular_value(&self) -> f64 {
        self.design.norm_squared() / self.design.ncols() as f64
    }

    /// Normal matrix `XᵀX + λ·diag(w⁻²)`.
    pub fn normal_matrix(&self, lambda: f64, weights: &[f64]) -> DMatrix<f64> {
        let mut normal = self.design.tr_mul(&self.design);
        for (i, w) in weights.iter().enumerate() {
            normal[(i, i)] += lambda / (w * w);
        }
        normal
    }

    pub fn solve(&self, lambda: f64, weights: &[f64], jitter: bool) -> Result<DVector<f64>, FitError> {
        let mut normal = self.normal_matrix(lambda, weights);
        if jitter {
            let eps = 1e-12 * normal.trace();
            for i in 0..normal.nrows() {
                normal[(i, i)] += eps;
            }
        }
        let max_diag = normal.diagonal().max();
        let chol = normal.cholesky().ok_or(FitError::SingularSystem)?;
        let l = chol.l_dirty();
        let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(max_diag > 0.0) || min_pivot <= 1e-14 * max_diag {
            return Err(FitError::SingularSystem);
        }
        Ok(chol.solve(&self.design.tr_mul(&self.rhs)))
    }

    /// `‖r − Xα‖² + λ‖α ∘ w⁻¹‖²`.
    pub fn objective(&self, alpha: &DVector<f64>, lambda: f64, weights: &[f64]) -> f64 {
        let data = (&self.rhs - &self.design * alpha).norm_squared();
        let penalty: f64 = alpha.iter().zip(weights).map(|(a, w)| (a / w).powi(2)).sum();
        data + lambda * penalty
    }
}

fn check_landmarks(landmarks: &[Point2<f64>]) -> Result<(), FitError> {
    if landmarks.len() != LANDMARK_COUNT {
        return Err(FitError::LandmarkCount(landmarks.len()));
    }
    if landmarks.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(FitError::NonFiniteLandmarks);
    }
    Ok(())
}

/// Closed-form ridge solution `α = (XᵀX + λ·diag(w⁻²))⁻¹ Xᵀ r` with an
/// absolute `lambda`.
pub fn solve_coefficients(
    landmarks: &[Point2<f64>],
    model: &MorphableModel,
    camera: &AffineCamera,
    lambda: f64,
) -> Result<Vec<f64>, FitError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FitError::InvalidParams(format!("lambda must be >= 0, got {lambda}")));
    }
    let system = RidgeSystem::build(landmarks, model, camera)?;
    Ok(system.solve(lambda, model.reg_weights(), false)?.iter().copied().collect())
}

/// Fits the model to 68 image landmarks.
///
/// Each round re-estimates the camera against the current shape's landmarks,
/// then solves for the coefficients under that camera. The absolute ridge
/// weight is fixed from the first round's design matrix so the objective is
/// non-increasing across rounds. `lambda = 0` adds a `1e-12·trace` jitter to
/// the normal matrix.
pub fn fit_image(landmarks: &[Point2<f64>], model: &MorphableModel, params: &FitParams) -> Result<FitResult, FitError> {
    params.validate()?;
    check_landmarks(landmarks)?;
    let weights = model.reg_weights();
    let mut alpha = DVector::zeros(model.component_count());
    let mut shape = model.mean();
    let mut camera = None;
    let mut absolute_lambda = None;
    let mut objective_history = Vec::with_capacity(params.n_iterations);

    for _ in 0..params.n_iterations {
        let current = model.extract_landmarks3d(&shape)?;
        let cam = estimate_camera(landmarks, &current)?;
        // a collapsed camera would otherwise surface as a singular ridge system
        extract_rotation(&cam)?;
        let system = RidgeSystem::build(landmarks, model, &cam)?;
        let lambda = *absolute_lambda.get_or_insert_with(|| params.lambda * system.mean_squared_singular_value());
        alpha = system.solve(lambda, weights, params.lambda == 0.0)?;
        objective_history.push(system.objective(&alpha, lambda, weights));
        shape = model.deform_shape(alpha.as_slice())?;
        camera = Some(cam);
    }

    let camera = camera.expect("at least one round");
    let fitted = model.extract_landmarks3d(&shape)?;
    let sse: f64 = fitted
        .iter()
        .zip(landmarks)
        .map(|(p, l)| (camera.project_point(p) - l).norm_squared())
        .sum();
    let (rotation, scale) = extract_rotation(&camera)?;
    Ok(FitResult {
        alpha: alpha.iter().copied().collect(),
        projected: camera.project(&shape.vertices),
        shape,
        camera,
        rotation,
        scale,
        landmark_residual: (sse / landmarks.len() as f64).sqrt(),
        objective_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_model, SyntheticView};
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn view_camera() -> AffineCamera {
        SyntheticView {
            yaw: 0.2,
            pitch: -0.1,
            roll: 0.05,
            scale: 80.0,
            center: Vector2::new(128.0, 128.0),
        }
        .camera()
    }

    #[test]
    fn zero_residual_gives_zero_coefficients() {
        let model = generate_synthetic_model(400, 6, 1).unwrap();
        let cam = view_camera();
        let l = cam.project(&model.mean_landmarks());
        for lambda in [0.0, 1e-3, 10.0] {
            let alpha = solve_coefficients(&l, &model, &cam, lambda).unwrap();
            assert!(alpha.iter().all(|a| a.abs() < 1e-10), "{alpha:?}");
        }
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let model = generate_synthetic_model(400, 6, 1).unwrap();
        let cam = view_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l: Vec<_> = cam
            .project(&model.mean_landmarks())
            .into_iter()
            .map(|p| p + Vector2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
            .collect();
        let system = RidgeSystem::build(&l, &model, &cam).unwrap();
        let sigma_max_sq = system.design.clone().singular_values().max().powi(2);
        let alpha = solve_coefficients(&l, &model, &cam, 1e12 * sigma_max_sq).unwrap();
        let norm: f64 = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(norm <= 1e-6, "{norm}");
    }

    #[test]
    fn exact_recovery_without_regularization() {
        let model = generate_synthetic_model(600, 8, 4).unwrap();
        let cam = view_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let alpha0: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shape = model.deform_shape(&alpha0).unwrap();
        let l = cam.project(&model.extract_landmarks3d(&shape).unwrap());
        let alpha = solve_coefficients(&l, &model, &cam, 0.0).unwrap();
        for (a, b) in alpha.iter().zip(&alpha0) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn rank_deficient_design_without_lambda_is_singular() {
        let model = generate_synthetic_model(300, 3, 2).unwrap();
        // a camera whose linear part kills every dictionary displacement
        let cam = AffineCamera::new(nalgebra::Matrix2x3::zeros(), Vector2::new(10.0, 10.0));
        let l = vec![Point2::new(10.0, 10.0); LANDMARK_COUNT];
        assert!(matches!(
            solve_coefficients(&l, &model, &cam, 0.0),
            Err(FitError::SingularSystem)
        ));
        // with regularization the system is well posed
        assert!(solve_coefficients(&l, &model, &cam, 1.0).is_ok());
    }

    #[test]
    fn self_fit_of_the_mean() {
        let model = generate_synthetic_model(500, 6, 3).unwrap();
        let cam = view_camera();
        let l = cam.project(&model.mean_landmarks());
        let fit = fit_image(&l, &model, &FitParams::default()).unwrap();
        assert!(fit.alpha.iter().all(|a| a.abs() < 1e-9));
        assert!(fit.landmark_residual <= 1e-6, "{}", fit.landmark_residual);
        assert!((fit.camera.linear - cam.linear).abs().max() < 1e-8);
        assert!((fit.camera.translation - cam.translation).abs().max() < 1e-8);
        assert_eq!(fit.projected.len(), model.vertex_count());
    }

    #[test]
    fn fit_rejects_bad_input() {
        let model = generate_synthetic_model(300, 3, 2).unwrap();
        let l = vec![Point2::new(1.0, 2.0); 67];
        assert!(matches!(
            fit_image(&l, &model, &FitParams::default()),
            Err(FitError::LandmarkCount(67))
        ));
        let params = FitParams {
            lambda: -1.0,
            n_iterations: 1,
        };
        let l = vec![Point2::new(1.0, 2.0); 68];
        assert!(matches!(fit_image(&l, &model, &params), Err(FitError::InvalidParams(_))));
        let params = FitParams {
            lambda: 0.1,
            n_iterations: 0,
        };
        assert!(matches!(fit_image(&l, &model, &params), Err(FitError::InvalidParams(_))));
    }

    #[test]
    fn coincident_landmarks_fail_in_camera_estimation() {
        let model = generate_synthetic_model(300, 3, 2).unwrap();
        let l = vec![Point2::new(5.0, 5.0); 68];
        // 2D side is degenerate but the 3D side is not: the camera collapses to zero
        // and the rotation cannot be extracted.
        assert!(matches!(
            fit_image(&l, &model, &FitParams::default()),
            Err(FitError::Camera(CameraError::DegenerateCamera))
        ));
    }
}
