//! Model serialization.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic             8 bytes  "3DMMBIN\0"
//! format_version    u32
//! m, k              u32, u32
//! mean_shape        m × 3 f64, row-major
//! dictionary        k × m × 3 f64
//! reg_weights       k f64
//! landmark_indices  68 u32
//! triangulation     u32 count, then count × 3 u32
//! part_regions      u32 region count, then per region:
//!                   u32 name length, UTF-8 name, u32 count, count × u32
//! ```
//!
//! The text variant is a JSON object with the same field names
//! (`format_version`, `m`, `k`, `mean_shape`, `dictionary`, `reg_weights`,
//! `landmark_indices`, `triangulation`, `part_regions`).

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ModelError, MorphableModel, Part, LANDMARK_COUNT};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"3DMMBIN\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Binary,
    Text,
}

impl ModelFormat {
    /// `.json` selects the text variant, anything else the binary one.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ModelFormat::Text,
            _ => ModelFormat::Binary,
        }
    }
}

/// Loads a model, detecting the variant from the leading magic bytes.
pub fn load_model(path: impl AsRef<Path>) -> Result<MorphableModel, ModelError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        read_binary(&mut Cursor::new(bytes))
    } else {
        let text = String::from_utf8(bytes).map_err(|_| ModelError::Malformed {
            field: "header".into(),
            reason: "neither binary magic nor UTF-8 text".into(),
        })?;
        read_text(&text)
    }
}

pub fn save_model(model: &MorphableModel, path: impl AsRef<Path>, format: ModelFormat) -> Result<(), ModelError> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    match format {
        ModelFormat::Binary => write_binary(model, &mut file)?,
        ModelFormat::Text => write_text(model, &mut file)?,
    }
    file.flush()?;
    Ok(())
}

pub fn write_binary<W: Write>(model: &MorphableModel, w: &mut W) -> Result<(), ModelError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(to_u32(model.vertex_count())?)?;
    w.write_u32::<LittleEndian>(to_u32(model.component_count())?)?;
    for p in model.mean_shape() {
        for c in p.iter() {
            w.write_f64::<LittleEndian>(*c)?;
        }
    }
    for component in model.dictionary() {
        for d in component {
            for c in d.iter() {
                w.write_f64::<LittleEndian>(*c)?;
            }
        }
    }
    for &weight in model.reg_weights() {
        w.write_f64::<LittleEndian>(weight)?;
    }
    for &i in model.landmark_indices() {
        w.write_u32::<LittleEndian>(to_u32(i)?)?;
    }
    w.write_u32::<LittleEndian>(to_u32(model.triangulation().len())?)?;
    for tri in model.triangulation() {
        for &i in tri {
            w.write_u32::<LittleEndian>(to_u32(i)?)?;
        }
    }
    w.write_u32::<LittleEndian>(to_u32(model.part_regions().len())?)?;
    for (part, indices) in model.part_regions() {
        let name = part.name().as_bytes();
        w.write_u32::<LittleEndian>(to_u32(name.len())?)?;
        w.write_all(name)?;
        w.write_u32::<LittleEndian>(to_u32(indices.len())?)?;
        for &i in indices {
            w.write_u32::<LittleEndian>(to_u32(i)?)?;
        }
    }
    Ok(())
}

fn to_u32(v: usize) -> Result<u32, ModelError> {
    u32::try_from(v).map_err(|_| ModelError::Malformed {
        field: "size".into(),
        reason: format!("{v} does not fit in u32"),
    })
}

struct BinReader<'a> {
    cur: &'a mut Cursor<Vec<u8>>,
}

impl BinReader<'_> {
    fn remaining(&self) -> usize {
        self.cur.get_ref().len().saturating_sub(self.cur.position() as usize)
    }

    fn ensure(&self, field: &str, bytes: usize) -> Result<(), ModelError> {
        if self.remaining() < bytes {
            return Err(eof(field));
        }
        Ok(())
    }

    fn u32(&mut self, field: &str) -> Result<u32, ModelError> {
        self.cur.read_u32::<LittleEndian>().map_err(|_| eof(field))
    }

    fn f64(&mut self, field: &str) -> Result<f64, ModelError> {
        self.cur.read_f64::<LittleEndian>().map_err(|_| eof(field))
    }

    fn f64x3(&mut self, field: &str) -> Result<[f64; 3], ModelError> {
        Ok([self.f64(field)?, self.f64(field)?, self.f64(field)?])
    }

    fn indices(&mut self, field: &str, count: usize) -> Result<Vec<usize>, ModelError> {
        self.ensure(field, count.saturating_mul(4))?;
        (0..count).map(|_| self.u32(field).map(|v| v as usize)).collect()
    }
}

fn eof(field: &str) -> ModelError {
    ModelError::Malformed {
        field: field.to_string(),
        reason: "unexpected end of file".into(),
    }
}

pub fn read_binary(cursor: &mut Cursor<Vec<u8>>) -> Result<MorphableModel, ModelError> {
    let mut magic = [0u8; 8];
    cursor.read_exact(&mut magic).map_err(|_| eof("magic"))?;
    if &magic != MAGIC {
        return Err(ModelError::Malformed {
            field: "magic".into(),
            reason: "not a binary model file".into(),
        });
    }
    let mut r = BinReader { cur: cursor };
    let version = r.u32("format_version")?;
    if version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let m = r.u32("m")? as usize;
    let k = r.u32("k")? as usize;

    r.ensure("mean_shape", m.saturating_mul(24))?;
    let mean_shape = (0..m)
        .map(|_| r.f64x3("mean_shape").map(Point3::from))
        .collect::<Result<Vec<_>, _>>()?;
    r.ensure("dictionary", k.saturating_mul(m).saturating_mul(24))?;
    let mut dictionary = Vec::with_capacity(k);
    for _ in 0..k {
        dictionary.push(
            (0..m)
                .map(|_| r.f64x3("dictionary").map(Vector3::from))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    r.ensure("reg_weights", k.saturating_mul(8))?;
    let reg_weights = (0..k).map(|_| r.f64("reg_weights")).collect::<Result<Vec<_>, _>>()?;
    let landmark_indices = r.indices("landmark_indices", LANDMARK_COUNT)?;
    let n_tri = r.u32("triangulation")? as usize;
    let flat = r.indices("triangulation", n_tri.saturating_mul(3))?;
    let triangulation = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();

    let n_regions = r.u32("part_regions")? as usize;
    let mut named = BTreeMap::new();
    for _ in 0..n_regions {
        let len = r.u32("part_regions")? as usize;
        r.ensure("part_regions", len)?;
        let mut name = vec![0u8; len];
        r.cur.read_exact(&mut name).map_err(|_| eof("part_regions"))?;
        let name = String::from_utf8(name).map_err(|_| ModelError::Malformed {
            field: "part_regions".into(),
            reason: "region name is not UTF-8".into(),
        })?;
        let count = r.u32("part_regions")? as usize;
        let indices = r.indices(&format!("part_regions.{name}"), count)?;
        named.insert(name, indices);
    }
    if r.remaining() != 0 {
        return Err(ModelError::Malformed {
            field: "part_regions".into(),
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }
    MorphableModel::new(
        mean_shape,
        dictionary,
        reg_weights,
        landmark_indices,
        named_regions(named)?,
        triangulation,
    )
}

fn named_regions(named: BTreeMap<String, Vec<usize>>) -> Result<BTreeMap<Part, Vec<usize>>, ModelError> {
    named
        .into_iter()
        .map(|(name, indices)| {
            name.parse::<Part>()
                .map(|p| (p, indices))
                .map_err(|_| ModelError::UnknownRegion(name))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TextModel {
    format_version: u32,
    m: usize,
    k: usize,
    mean_shape: Vec<[f64; 3]>,
    dictionary: Vec<Vec<[f64; 3]>>,
    reg_weights: Vec<f64>,
    landmark_indices: Vec<usize>,
    triangulation: Vec<[usize; 3]>,
    part_regions: BTreeMap<String, Vec<usize>>,
}

pub fn write_text<W: Write>(model: &MorphableModel, w: &mut W) -> Result<(), ModelError> {
    let text = TextModel {
        format_version: FORMAT_VERSION,
        m: model.vertex_count(),
        k: model.component_count(),
        mean_shape: model.mean_shape().iter().map(|p| [p.x, p.y, p.z]).collect(),
        dictionary: model
            .dictionary()
            .iter()
            .map(|c| c.iter().map(|d| [d.x, d.y, d.z]).collect())
            .collect(),
        reg_weights: model.reg_weights().to_vec(),
        landmark_indices: model.landmark_indices().to_vec(),
        triangulation: model.triangulation().to_vec(),
        part_regions: model
            .part_regions()
            .iter()
            .map(|(p, v)| (p.name().to_string(), v.clone()))
            .collect(),
    };
    serde_json::to_writer(&mut *w, &text).map_err(|e| ModelError::Malformed {
        field: "text".into(),
        reason: e.to_string(),
    })?;
    Ok(())
}

pub fn read_text(text: &str) -> Result<MorphableModel, ModelError> {
    let t: TextModel = serde_json::from_str(text).map_err(|e| ModelError::Malformed {
        field: "text".into(),
        reason: e.to_string(),
    })?;
    if t.format_version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(t.format_version));
    }
    if t.mean_shape.len() != t.m {
        return Err(ModelError::DimensionMismatch {
            field: "mean_shape".into(),
            expected: t.m,
            found: t.mean_shape.len(),
        });
    }
    if t.dictionary.len() != t.k {
        return Err(ModelError::DimensionMismatch {
            field: "dictionary".into(),
            expected: t.k,
            found: t.dictionary.len(),
        });
    }
    MorphableModel::new(
        t.mean_shape.into_iter().map(Point3::from).collect(),
        t.dictionary
            .into_iter()
            .map(|c| c.into_iter().map(Vector3::from).collect())
            .collect(),
        t.reg_weights,
        t.landmark_indices,
        named_regions(t.part_regions)?,
        t.triangulation,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_synthetic_model;

    #[test]
    fn binary_and_text_round_trip() {
        let model = generate_synthetic_model(300, 4, 11).unwrap();
        let mut bin = Vec::new();
        write_binary(&model, &mut bin).unwrap();
        assert_eq!(read_binary(&mut Cursor::new(bin)).unwrap(), model);

        let mut txt = Vec::new();
        write_text(&model, &mut txt).unwrap();
        assert_eq!(read_text(std::str::from_utf8(&txt).unwrap()).unwrap(), model);
    }

    #[test]
    fn header_declares_m_and_k() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = generate_synthetic_model(250, 3, 2).unwrap();
        save_model(&model, &path, ModelFormat::Binary).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 250);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.vertex_count(), 250);
        assert_eq!(loaded.component_count(), 3);
    }

    fn text_of(model: &MorphableModel) -> serde_json::Value {
        let mut txt = Vec::new();
        write_text(model, &mut txt).unwrap();
        serde_json::from_slice(&txt).unwrap()
    }

    #[test]
    fn landmark_index_equal_to_m_is_out_of_range() {
        let model = generate_synthetic_model(200, 2, 5).unwrap();
        let mut v = text_of(&model);
        v["landmark_indices"][3] = serde_json::json!(200);
        let err = read_text(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("index out of range"), "{err}");
        assert!(err.to_string().contains("landmark_indices"), "{err}");
    }

    #[test]
    fn short_dictionary_component_in_text_is_rejected() {
        let model = generate_synthetic_model(200, 2, 5).unwrap();
        let mut v = text_of(&model);
        v["dictionary"][0].as_array_mut().unwrap().pop();
        let err = read_text(&v.to_string()).unwrap_err();
        assert!(
            matches!(err, ModelError::DimensionMismatch { expected: 200, found: 199, .. }),
            "{err}"
        );
    }

    #[test]
    fn non_positive_weight_in_text_is_rejected() {
        let model = generate_synthetic_model(200, 2, 5).unwrap();
        let mut v = text_of(&model);
        v["reg_weights"][1] = serde_json::json!(-0.5);
        assert!(matches!(
            read_text(&v.to_string()),
            Err(ModelError::NonPositiveWeight { index: 1, .. })
        ));
    }

    #[test]
    fn truncated_binary_names_the_field() {
        let model = generate_synthetic_model(200, 2, 5).unwrap();
        let mut bin = Vec::new();
        write_binary(&model, &mut bin).unwrap();
        // cut into the dictionary block
        bin.truncate(20 + 200 * 24 + 100);
        let err = read_binary(&mut Cursor::new(bin)).unwrap_err();
        assert!(err.to_string().contains("dictionary"), "{err}");
    }

    #[test]
    fn unknown_region_name_is_rejected() {
        let model = generate_synthetic_model(200, 2, 5).unwrap();
        let mut v = text_of(&model);
        v["part_regions"]["ears"] = serde_json::json!([1, 2]);
        assert!(matches!(read_text(&v.to_string()), Err(ModelError::UnknownRegion(_))));
    }
}
