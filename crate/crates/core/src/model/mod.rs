//! The morphable face model: a mean shape, a linear deformation dictionary,
//! per-component regularization weights, landmark vertex indices, labeled part
//! regions and the mesh triangulation.
//!
//! Coordinates follow the image-aligned model frame used throughout the crate:
//! `x` to the right, `y` towards the chin (image rows grow downwards) and `z`
//! towards the viewer. A frontal view is then the camera `s·[[1,0,0],[0,1,0]]`.

mod format;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{load_model, read_binary, read_text, save_model, write_binary, write_text, ModelFormat, FORMAT_VERSION};

/// Number of landmarks in the canonical 68-point annotation.
pub const LANDMARK_COUNT: usize = 68;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file ({field}): {reason}")]
    Malformed { field: String, reason: String },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("{field}: index out of range ({index} >= {bound})")]
    IndexOutOfRange { field: String, index: usize, bound: usize },
    #[error("reg_weights[{index}]: non-positive weight {value}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("{field}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch { field: String, expected: usize, found: usize },
    #[error("{field}: non-finite value")]
    NonFinite { field: String },
    #[error("triangulation[{index}]: repeated vertex index")]
    DegenerateTriangle { index: usize },
    #[error("part_regions: missing region \"{0}\"")]
    MissingRegion(Part),
    #[error("part_regions: unknown region \"{0}\"")]
    UnknownRegion(String),
    #[error("part_regions: \"full\" does not contain vertex {vertex} of \"{part}\"")]
    RegionNotNested { part: Part, vertex: usize },
    #[error("vertex count {m} too small (need at least {min})")]
    TooFewVertices { m: usize, min: usize },
    #[error("component count must be at least 1")]
    NoComponents,
}

/// A labeled facial part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Eyes,
    Nose,
    Mouth,
    Full,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Eyes, Part::Nose, Part::Mouth, Part::Full];

    pub fn name(self) -> &'static str {
        match self {
            Part::Eyes => "eyes",
            Part::Nose => "nose",
            Part::Mouth => "mouth",
            Part::Full => "full",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown part \"{0}\" (expected eyes, nose, mouth or full)")]
pub struct UnknownPart(pub String);

impl FromStr for Part {
    type Err = UnknownPart;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eyes" => Ok(Part::Eyes),
            "nose" => Ok(Part::Nose),
            "mouth" => Ok(Part::Mouth),
            "full" => Ok(Part::Full),
            other => Err(UnknownPart(other.to_string())),
        }
    }
}

/// A deformed (or mean) face shape. Vertex `i` corresponds to vertex `i` of the
/// owning model.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape3D {
    pub vertices: Vec<Point3<f64>>,
}

impl Shape3D {
    pub fn new(vertices: Vec<Point3<f64>>) -> Self {
        Self { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Immutable after construction; every constructor validates the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    mean_shape: Vec<Point3<f64>>,
    dictionary: Vec<Vec<Vector3<f64>>>,
    reg_weights: Vec<f64>,
    landmark_indices: Vec<usize>,
    part_regions: BTreeMap<Part, Vec<usize>>,
    triangulation: Vec<[usize; 3]>,
}

impl MorphableModel {
    pub fn new(
        mean_shape: Vec<Point3<f64>>,
        dictionary: Vec<Vec<Vector3<f64>>>,
        reg_weights: Vec<f64>,
        landmark_indices: Vec<usize>,
        part_regions: BTreeMap<Part, Vec<usize>>,
        triangulation: Vec<[usize; 3]>,
    ) -> Result<Self, ModelError> {
        let model = Self {
            mean_shape,
            dictionary,
            reg_weights,
            landmark_indices,
            part_regions,
            triangulation,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let m = self.mean_shape.len();
        let k = self.dictionary.len();
        if self.mean_shape.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(ModelError::NonFinite { field: "mean_shape".into() });
        }
        if k == 0 {
            return Err(ModelError::NoComponents);
        }
        for (i, component) in self.dictionary.iter().enumerate() {
            if component.len() != m {
                return Err(ModelError::DimensionMismatch {
                    field: format!("dictionary[{i}]"),
                    expected: m,
                    found: component.len(),
                });
            }
            if component.iter().any(|d| !d.iter().all(|c| c.is_finite())) {
                return Err(ModelError::NonFinite { field: format!("dictionary[{i}]") });
            }
        }
        if self.reg_weights.len() != k {
            return Err(ModelError::DimensionMismatch {
                field: "reg_weights".into(),
                expected: k,
                found: self.reg_weights.len(),
            });
        }
        for (index, &value) in self.reg_weights.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { field: format!("reg_weights[{index}]") });
            }
            if value <= 0.0 {
                return Err(ModelError::NonPositiveWeight { index, value });
            }
        }
        if self.landmark_indices.len() != LANDMARK_COUNT {
            return Err(ModelError::DimensionMismatch {
                field: "landmark_indices".into(),
                expected: LANDMARK_COUNT,
                found: self.landmark_indices.len(),
            });
        }
        check_indices("landmark_indices", &self.landmark_indices, m)?;
        for (index, tri) in self.triangulation.iter().enumerate() {
            check_indices(&format!("triangulation[{index}]"), tri, m)?;
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(ModelError::DegenerateTriangle { index });
            }
        }
        for part in Part::ALL {
            let region = self.part_regions.get(&part).ok_or(ModelError::MissingRegion(part))?;
            check_indices(&format!("part_regions.{part}"), region, m)?;
        }
        let full: BTreeSet<usize> = self.part_regions[&Part::Full].iter().copied().collect();
        for part in [Part::Eyes, Part::Nose, Part::Mouth] {
            if let Some(&vertex) = self.part_regions[&part].iter().find(|v| !full.contains(v)) {
                return Err(ModelError::RegionNotNested { part, vertex });
            }
        }
        Ok(())
    }

    /// Vertex count `m`.
    pub fn vertex_count(&self) -> usize {
        self.mean_shape.len()
    }

    /// Deformation component count `k`.
    pub fn component_count(&self) -> usize {
        self.dictionary.len()
    }

    pub fn mean_shape(&self) -> &[Point3<f64>] {
        &self.mean_shape
    }

    pub fn dictionary(&self) -> &[Vec<Vector3<f64>>] {
        &self.dictionary
    }

    pub fn reg_weights(&self) -> &[f64] {
        &self.reg_weights
    }

    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmark_indices
    }

    pub fn triangulation(&self) -> &[[usize; 3]] {
        &self.triangulation
    }

    pub fn part_regions(&self) -> &BTreeMap<Part, Vec<usize>> {
        &self.part_regions
    }

    pub fn region(&self, part: Part) -> &[usize] {
        &self.part_regions[&part]
    }

    pub fn mean(&self) -> Shape3D {
        Shape3D::new(self.mean_shape.clone())
    }

    /// `S = mean + Σ alpha_i · D_i`.
    pub fn deform_shape(&self, alpha: &[f64]) -> Result<Shape3D, ModelError> {
        if alpha.len() != self.component_count() {
            return Err(ModelError::DimensionMismatch {
                field: "alpha".into(),
                expected: self.component_count(),
                found: alpha.len(),
            });
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(ModelError::NonFinite { field: "alpha".into() });
        }
        let mut vertices = self.mean_shape.clone();
        for (&a, component) in alpha.iter().zip(&self.dictionary) {
            if a == 0.0 {
                continue;
            }
            for (v, d) in vertices.iter_mut().zip(component) {
                *v += d * a;
            }
        }
        Ok(Shape3D::new(vertices))
    }

    /// The landmark vertices of `shape`, in landmark order.
    pub fn extract_landmarks3d(&self, shape: &Shape3D) -> Result<Vec<Point3<f64>>, ModelError> {
        if shape.len() != self.vertex_count() {
            return Err(ModelError::DimensionMismatch {
                field: "shape".into(),
                expected: self.vertex_count(),
                found: shape.len(),
            });
        }
        Ok(self.landmark_indices.iter().map(|&i| shape.vertices[i]).collect())
    }

    /// Landmarks of the mean shape, the `L` used for camera and coefficient estimation.
    pub fn mean_landmarks(&self) -> Vec<Point3<f64>> {
        self.landmark_indices.iter().map(|&i| self.mean_shape[i]).collect()
    }
}

fn check_indices(field: &str, indices: &[usize], bound: usize) -> Result<(), ModelError> {
    match indices.iter().find(|&&i| i >= bound) {
        Some(&index) => Err(ModelError::IndexOutOfRange {
            field: field.to_string(),
            index,
            bound,
        }),
        None => Ok(()),
    }
}
