//! Part-level face swapping.
//!
//! A morphable face model is fitted to 68 landmarks in a source and a target
//! image. Mesh triangles of the requested parts that are visible and inside
//! the validity masks of both images are warped piecewise-affinely from the
//! source onto the target and merged by Poisson seamless cloning.

pub mod blend;
pub mod camera;
pub mod debug;
pub mod fit;
pub mod hull;
pub mod landmarks;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod raster;
pub mod region;
pub mod synth;
pub mod visibility;
pub mod warp;

pub use blend::{build_region, seamless_clone, solve_poisson, BlendError, BlendParams, BlendRegion, ChannelSolution};
pub use camera::{estimate_camera, extract_rotation, AffineCamera, CameraError};
pub use fit::{fit_image, solve_coefficients, FitError, FitParams, FitResult};
pub use model::{load_model, save_model, ModelError, MorphableModel, Part, Shape3D, LANDMARK_COUNT};
pub use pipeline::{run_batch, run_swap, ImageBundle, PipelineError, SwapJob, SwapOutcome, SwapStatus};
pub use raster::{Mask, RasterImage};
pub use region::{select_valid_pairs, SelectionParams, TrianglePair};
pub use visibility::{hpr_visibility, VisibilityResult};
pub use warp::{triangle_affine, warp_pairs, Affine2D, WarpCanvas};
