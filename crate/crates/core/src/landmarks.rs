//! 68-point landmark files.
//!
//! Accepted inputs: a JSON array of `[x, y]` pairs, a JSON object with a
//! `"landmarks"` array, or an IBUG-style `.pts` file.

use std::fs;
use std::path::Path;

use nalgebra::Point2;
use serde::Deserialize;
use thiserror::Error;

use crate::model::LANDMARK_COUNT;

#[derive(Debug, Error)]
pub enum LandmarkError {
    #[error("landmark i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed landmark file: {0}")]
    Malformed(String),
    #[error("expected {expected} landmarks, found {found}")]
    Count { expected: usize, found: usize },
    #[error("landmark {0} is not finite")]
    NonFinite(usize),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonLandmarks {
    Array(Vec<[f64; 2]>),
    Object { landmarks: Vec<[f64; 2]> },
}

fn check(points: Vec<[f64; 2]>) -> Result<Vec<Point2<f64>>, LandmarkError> {
    if points.len() != LANDMARK_COUNT {
        return Err(LandmarkError::Count {
            expected: LANDMARK_COUNT,
            found: points.len(),
        });
    }
    if let Some(i) = points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(LandmarkError::NonFinite(i));
    }
    Ok(points.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
}

pub fn parse_json(text: &str) -> Result<Vec<Point2<f64>>, LandmarkError> {
    let parsed: JsonLandmarks = serde_json::from_str(text).map_err(|e| LandmarkError::Malformed(e.to_string()))?;
    check(match parsed {
        JsonLandmarks::Array(v) | JsonLandmarks::Object { landmarks: v } => v,
    })
}

pub fn parse_pts(text: &str) -> Result<Vec<Point2<f64>>, LandmarkError> {
    let body = match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => &text[a + 1..b],
        _ => return Err(LandmarkError::Malformed("missing '{ … }' block".into())),
    };
    let mut points = Vec::new();
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let coords: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| LandmarkError::Malformed(format!("bad coordinate {t:?}"))))
            .collect::<Result<_, _>>()?;
        match coords[..] {
            [x, y] => points.push([x, y]),
            _ => return Err(LandmarkError::Malformed(format!("expected two coordinates in {line:?}"))),
        }
    }
    check(points)
}

pub fn parse_landmarks(text: &str) -> Result<Vec<Point2<f64>>, LandmarkError> {
    match text.trim_start().chars().next() {
        Some('[') | Some('{') => parse_json(text),
        _ => parse_pts(text),
    }
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<Vec<Point2<f64>>, LandmarkError> {
    parse_landmarks(&fs::read_to_string(path)?)
}

pub fn landmarks_to_json(points: &[Point2<f64>]) -> String {
    let raw: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    serde_json::to_string(&raw).expect("finite floats serialize")
}

pub fn save_landmarks(path: impl AsRef<Path>, points: &[Point2<f64>]) -> Result<(), LandmarkError> {
    fs::write(path, landmarks_to_json(points))?;
    Ok(())
}
