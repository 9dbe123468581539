//! End-to-end swap: fit both faces, select valid triangle pairs for the
//! requested parts, warp them onto a target-sized canvas and blend.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Point2;
use rayon::prelude::*;
use thiserror::Error;

use crate::blend::{build_region, seamless_clone, BlendError, BlendParams, BlendRegion};
use crate::debug::dump_debug;
use crate::fit::{fit_image, FitError, FitParams, FitResult};
use crate::landmarks::{load_landmarks, LandmarkError};
use crate::model::{MorphableModel, Part, LANDMARK_COUNT};
use crate::raster::{Mask, RasterError, RasterImage};
use crate::region::{pairs_for_part, part_triangles, RegionError, SelectionParams, TrianglePair, VertexValidity};
use crate::warp::{warp_pairs, WarpCanvas, WarpError};

/// Landmarks may lie this fraction of the image size outside its bounds.
pub const LANDMARK_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Source,
    Target,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("{side} bundle: {reason}")]
    InvalidBundle { side: Side, reason: String },
    #[error("{side} fit failed: {source}")]
    Fit { side: Side, source: FitError },
    #[error("{side} landmarks: {source}")]
    Landmarks { side: Side, source: LandmarkError },
    #[error("{what}: {source}")]
    Raster { what: String, source: RasterError },
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error(transparent)]
    Blend(#[from] BlendError),
}

/// One face image with its landmarks and optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBundle {
    pub image: RasterImage,
    pub landmarks: Vec<Point2<f64>>,
    pub mask: Option<Mask>,
}

impl ImageBundle {
    pub fn new(image: RasterImage, landmarks: Vec<Point2<f64>>, mask: Option<Mask>) -> Self {
        Self { image, landmarks, mask }
    }

    pub fn load(image: &Path, landmarks: &Path, mask: Option<&Path>, side: Side) -> Result<Self, PipelineError> {
        let raster = |what: &Path, source| PipelineError::Raster {
            what: format!("{side} {}", what.display()),
            source,
        };
        let img = RasterImage::load(image).map_err(|e| raster(image, e))?;
        let lm = load_landmarks(landmarks).map_err(|source| PipelineError::Landmarks { side, source })?;
        let mask = mask.map(|m| Mask::load(m).map_err(|e| raster(m, e))).transpose()?;
        Ok(Self::new(img, lm, mask))
    }

    pub fn validate(&self, side: Side) -> Result<(), PipelineError> {
        let bad = |reason: String| PipelineError::InvalidBundle { side, reason };
        let (w, h) = (self.image.width() as f64, self.image.height() as f64);
        if w == 0.0 || h == 0.0 {
            return Err(bad("empty image".into()));
        }
        if self.landmarks.len() != LANDMARK_COUNT {
            return Err(bad(format!("expected {LANDMARK_COUNT} landmarks, got {}", self.landmarks.len())));
        }
        let (mx, my) = (LANDMARK_MARGIN * w, LANDMARK_MARGIN * h);
        for (i, p) in self.landmarks.iter().enumerate() {
            if !(p.x >= -mx && p.x <= w + mx && p.y >= -my && p.y <= h + my) {
                return Err(bad(format!("landmark {i} at ({}, {}) is outside the image margin", p.x, p.y)));
            }
        }
        if let Some(m) = &self.mask {
            if m.width() != self.image.width() || m.height() != self.image.height() {
                return Err(bad(format!(
                    "mask is {}×{}, image is {}×{}",
                    m.width(),
                    m.height(),
                    self.image.width(),
                    self.image.height()
                )));
            }
        }
        Ok(())
    }

    /// The mask, or an all-valid one.
    pub fn mask_or_default(&self) -> Cow<'_, Mask> {
        match &self.mask {
            Some(m) => Cow::Borrowed(m),
            None => Cow::Owned(Mask::all_valid(self.image.width(), self.image.height())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapJob {
    pub source: ImageBundle,
    pub target: ImageBundle,
    pub parts: Vec<Part>,
    pub fit_params: FitParams,
    pub blend_params: BlendParams,
    pub selection: SelectionParams,
    pub debug_dir: Option<PathBuf>,
}

impl SwapJob {
    pub fn new(source: ImageBundle, target: ImageBundle, parts: Vec<Part>) -> Self {
        Self {
            source,
            target,
            parts,
            fit_params: FitParams::default(),
            blend_params: BlendParams::default(),
            selection: SelectionParams::default(),
            debug_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.parts.is_empty() {
            return Err(PipelineError::InvalidJob("no parts requested".into()));
        }
        if self.parts.contains(&Part::Full) && self.parts.iter().any(|&p| p != Part::Full) {
            return Err(PipelineError::InvalidJob("\"full\" cannot be combined with other parts".into()));
        }
        self.fit_params
            .validate()
            .map_err(|e| PipelineError::InvalidJob(e.to_string()))?;
        self.blend_params
            .validate()
            .map_err(|e| PipelineError::InvalidJob(e.to_string()))?;
        self.source.validate(Side::Source)?;
        self.target.validate(Side::Target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapStatus {
    Swapped,
    /// No valid pair, or nothing left after erosion; the output is the target.
    NothingSwapped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapStats {
    pub candidate_triangles: usize,
    pub valid_pairs: usize,
    pub pairs_per_part: BTreeMap<Part, usize>,
    pub written_pixels: usize,
    pub region_pixels: usize,
    pub blend_iterations: Vec<usize>,
    pub blend_residual: f64,
}

impl SwapStats {
    /// Valid pairs over candidate part triangles; a pose-difference quality signal.
    pub fn valid_pair_fraction(&self) -> f64 {
        if self.candidate_triangles == 0 {
            0.0
        } else {
            self.valid_pairs as f64 / self.candidate_triangles as f64
        }
    }
}

/// Everything computed on the way to the output image.
#[derive(Debug, Clone)]
pub struct Intermediates {
    pub fit_source: FitResult,
    pub fit_target: FitResult,
    pub validity_source: VertexValidity,
    pub validity_target: VertexValidity,
    pub pairs: Vec<TrianglePair>,
    pub canvas: WarpCanvas,
    pub region: BlendRegion,
}

#[derive(Debug, Clone)]
pub struct SwapOutcome {
    pub image: RasterImage,
    pub status: SwapStatus,
    pub stats: SwapStats,
    pub intermediates: Intermediates,
}

fn unify_channels(a: &RasterImage, b: &RasterImage) -> Result<(RasterImage, RasterImage), PipelineError> {
    if a.channels() == b.channels() {
        return Ok((a.clone(), b.clone()));
    }
    let rgb = |img: &RasterImage, side: Side| {
        img.to_rgb().map_err(|source| PipelineError::Raster {
            what: format!("{side} image"),
            source,
        })
    };
    Ok((rgb(a, Side::Source)?, rgb(b, Side::Target)?))
}

pub fn run_swap(model: &MorphableModel, job: &SwapJob) -> Result<SwapOutcome, PipelineError> {
    job.validate()?;
    let fit = |bundle: &ImageBundle, side| {
        fit_image(&bundle.landmarks, model, &job.fit_params).map_err(|source| PipelineError::Fit { side, source })
    };
    let fit_source = fit(&job.source, Side::Source)?;
    let fit_target = fit(&job.target, Side::Target)?;
    let validity_source = VertexValidity::compute(model, &fit_source, &job.source.mask_or_default(), &job.selection)?;
    let validity_target = VertexValidity::compute(model, &fit_target, &job.target.mask_or_default(), &job.selection)?;

    let mut union: BTreeMap<usize, TrianglePair> = BTreeMap::new();
    let mut pairs_per_part = BTreeMap::new();
    let mut candidate_triangles = 0;
    for &part in &job.parts {
        candidate_triangles += part_triangles(model, part).len();
        let pairs = pairs_for_part(
            model,
            part,
            &fit_source,
            &fit_target,
            &validity_source,
            &validity_target,
            job.selection.min_area,
        );
        pairs_per_part.insert(part, pairs.len());
        for p in pairs {
            union.insert(p.triangle_id, p);
        }
    }
    let pairs: Vec<TrianglePair> = union.into_values().collect();

    let (source_img, target_img) = unify_channels(&job.source.image, &job.target.image)?;
    let mut canvas = WarpCanvas::from_image(&target_img);
    warp_pairs(&source_img, &pairs, &mut canvas)?;
    let region = build_region(&canvas.written, canvas.width(), canvas.height());
    let cloned = seamless_clone(&target_img, &canvas, &region, &job.blend_params)?;

    let status = if pairs.is_empty() || region.is_empty() {
        SwapStatus::NothingSwapped
    } else {
        SwapStatus::Swapped
    };
    let image = match status {
        SwapStatus::Swapped => cloned.image,
        SwapStatus::NothingSwapped => job.target.image.clone(),
    };
    let stats = SwapStats {
        candidate_triangles,
        valid_pairs: pairs.len(),
        pairs_per_part,
        written_pixels: canvas.written_count(),
        region_pixels: region.len(),
        blend_iterations: cloned.solutions.iter().map(|s| s.iterations).collect(),
        blend_residual: cloned.solutions.iter().map(|s| s.relative_residual).fold(0.0, f64::max),
    };
    let outcome = SwapOutcome {
        image,
        status,
        stats,
        intermediates: Intermediates {
            fit_source,
            fit_target,
            validity_source,
            validity_target,
            pairs,
            canvas,
            region,
        },
    };
    if let Some(dir) = &job.debug_dir {
        dump_debug(model, job, &outcome, dir);
    }
    Ok(outcome)
}

/// Runs `f` over `items` on a dedicated pool of `parallelism` threads,
/// returning results in input order.
pub fn run_parallel<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Independent swaps against a shared model.
pub fn run_batch(model: &MorphableModel, jobs: &[SwapJob], parallelism: usize) -> Vec<Result<SwapOutcome, PipelineError>> {
    run_parallel(jobs, parallelism, |job| run_swap(model, job))
}
