//! JSON batch manifests.
//!
//! ```json
//! {
//!   "model": "model.bin",
//!   "jobs": [
//!     { "source": "a.png", "target": "b.png",
//!       "source_landmarks": "a.json", "target_landmarks": "b.json",
//!       "source_mask": "a_mask.png", "parts": ["eyes", "nose"],
//!       "lambda": 0.05, "iters": 2, "blend_tol": 1e-6,
//!       "debug_dir": "dbg/0", "output": "out/0.png" }
//!   ]
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory. `model` may be
//! omitted when the caller supplies one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::FitParams;
use crate::model::{MorphableModel, Part};
use crate::pipeline::{run_parallel, run_swap, ImageBundle, PipelineError, Side, SwapJob, SwapStatus};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub source: PathBuf,
    pub target: PathBuf,
    pub source_landmarks: PathBuf,
    pub target_landmarks: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_mask: Option<PathBuf>,
    pub parts: Vec<Part>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug_dir: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub jobs: Vec<JobSpec>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl JobSpec {
    fn resolved(&self, base: &Path) -> Self {
        let r = |p: &Path| resolve(base, p);
        Self {
            source: r(&self.source),
            target: r(&self.target),
            source_landmarks: r(&self.source_landmarks),
            target_landmarks: r(&self.target_landmarks),
            source_mask: self.source_mask.as_deref().map(r),
            target_mask: self.target_mask.as_deref().map(r),
            parts: self.parts.clone(),
            lambda: self.lambda,
            iters: self.iters,
            blend_tol: self.blend_tol,
            debug_dir: self.debug_dir.as_deref().map(r),
            output: r(&self.output),
        }
    }

    /// Loads the images, landmarks and masks into a runnable job.
    pub fn load(&self) -> Result<SwapJob, PipelineError> {
        let source = ImageBundle::load(&self.source, &self.source_landmarks, self.source_mask.as_deref(), Side::Source)?;
        let target = ImageBundle::load(&self.target, &self.target_landmarks, self.target_mask.as_deref(), Side::Target)?;
        let mut job = SwapJob::new(source, target, self.parts.clone());
        let defaults = FitParams::default();
        job.fit_params = FitParams {
            lambda: self.lambda.unwrap_or(defaults.lambda),
            n_iterations: self.iters.unwrap_or(defaults.n_iterations),
        };
        if let Some(tol) = self.blend_tol {
            job.blend_params.tol = tol;
        }
        job.debug_dir = self.debug_dir.clone();
        Ok(job)
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a manifest and resolves its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let m = Self::parse(&fs::read_to_string(path)?)?;
        Ok(m.resolved(base))
    }

    pub fn resolved(&self, base: &Path) -> Self {
        Self {
            model: self.model.as_deref().map(|p| resolve(base, p)),
            jobs: self.jobs.iter().map(|j| j.resolved(base)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Debug)]
pub struct JobReport {
    pub output: PathBuf,
    pub result: Result<SwapStatus, PipelineError>,
}

/// Loads, runs and saves one job.
pub fn execute_job(model: &MorphableModel, spec: &JobSpec) -> Result<SwapStatus, PipelineError> {
    let job = spec.load()?;
    let outcome = run_swap(model, &job)?;
    if let Some(parent) = spec.output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::Raster {
                what: format!("output dir {}", parent.display()),
                source: image::ImageError::IoError(e).into(),
            })?;
        }
    }
    outcome.image.save(&spec.output).map_err(|source| PipelineError::Raster {
        what: format!("output {}", spec.output.display()),
        source,
    })?;
    Ok(outcome.status)
}

/// Runs every job on `parallelism` threads; reports follow manifest order.
pub fn execute_manifest(model: &MorphableModel, manifest: &Manifest, parallelism: usize) -> Vec<JobReport> {
    run_parallel(&manifest.jobs, parallelism, |spec| JobReport {
        output: spec.output.clone(),
        result: execute_job(model, spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"{
        "model": "m.bin",
        "jobs": [{
            "source": "a.png", "target": "/abs/b.png",
            "source_landmarks": "a.json", "target_landmarks": "b.json",
            "parts": ["eyes", "mouth"], "iters": 3, "output": "out/x.png"
        }]
    }"#;

    #[test]
    fn parse_and_resolve() {
        let m = Manifest::parse(TEXT).unwrap().resolved(Path::new("/data/run"));
        assert_eq!(m.model, Some(PathBuf::from("/data/run/m.bin")));
        let j = &m.jobs[0];
        assert_eq!(j.source, PathBuf::from("/data/run/a.png"));
        assert_eq!(j.target, PathBuf::from("/abs/b.png"));
        assert_eq!(j.parts, vec![Part::Eyes, Part::Mouth]);
        assert_eq!(j.iters, Some(3));
        assert_eq!(j.lambda, None);
        assert_eq!(j.output, PathBuf::from("/data/run/out/x.png"));
    }

    #[test]
    fn round_trip_and_rejects_unknown() {
        let m = Manifest::parse(TEXT).unwrap();
        assert_eq!(Manifest::parse(&m.to_json()).unwrap(), m);
        assert!(Manifest::parse(r#"{"jobs": [], "extra": 1}"#).is_err());
        assert!(Manifest::parse(r#"{"jobs": [{"source": "a"}]}"#).is_err());
        let bad_part = TEXT.replace("\"mouth\"", "\"ears\"");
        assert!(Manifest::parse(&bad_part).is_err());
    }

    #[test]
    fn missing_files_fail_the_job_only() {
        let m = Manifest::parse(TEXT).unwrap().resolved(Path::new("/nonexistent"));
        let model = crate::synth::generate_synthetic_model(200, 2, 1).unwrap();
        let reports = execute_manifest(&model, &m, 2);
        assert_eq!(reports.len(), 1);
        assert!(reports[0].result.is_err());
    }
}
