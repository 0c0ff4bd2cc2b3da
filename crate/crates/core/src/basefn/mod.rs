//! Base functions: segmentation stand-ins, geometric measurements, intensity
//! statistics, and the embedding-similarity labeler, plus the attribute types
//! their results flow through.

mod embed;
mod measure;
mod segment;

pub use embed::{
    classify_label, cosine_similarity, EmbeddingProvider, HashEmbedding, ProviderError,
};
pub use measure::{
    boundary_mask, border_thickness_mm, calc_mass_diameter_cm, diameter_bbox_mm,
    diameter_equiv_sphere_mm, diameter_feret_mm, fill_cavities, hausdorff_mm, mean_intensity_hu,
    DiameterMethod,
};
pub use segment::{segment_masses, segment_organ};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{DimensionMismatch, Mask};

#[derive(Debug, Error)]
pub enum BaseFnError {
    #[error("mask is empty")]
    EmptyMask,
    #[error(transparent)]
    Dims(#[from] DimensionMismatch),
    #[error("vector length mismatch: {left} vs {right}")]
    VectorLen { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("attribute {0:?} already bound")]
    DuplicateAttribute(String),
    #[error("segmentation window must satisfy hu_low < hu_high, got [{low}, {high}]")]
    BadWindow { low: f64, high: f64 },
    #[error("min_component_voxels must be >= 1")]
    BadMinComponent,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Physical unit attached to every real-valued attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mm")]
    Mm,
    #[serde(rename = "cm")]
    Cm,
    #[serde(rename = "HU")]
    Hu,
    #[serde(rename = "mm3")]
    Mm3,
    #[serde(rename = "years")]
    Years,
}

impl Unit {
    /// Units sharing a dimension can be converted; everything else cannot.
    pub fn convert(value: f64, from: Unit, to: Unit) -> Option<f64> {
        match (from, to) {
            (a, b) if a == b => Some(value),
            (Unit::Mm, Unit::Cm) => Some(value / 10.0),
            (Unit::Cm, Unit::Mm) => Some(value * 10.0),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Mm => "mm",
            Unit::Cm => "cm",
            Unit::Hu => "HU",
            Unit::Mm3 => "mm3",
            Unit::Years => "years",
        }
    }
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One measured, classified, or patient-derived value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TypedValue {
    Real { value: f64, unit: Unit },
    Category { value: String },
    Boolean { value: bool },
}

impl TypedValue {
    pub fn real(value: f64, unit: Unit) -> Self {
        TypedValue::Real { value, unit }
    }
    pub fn category<S: Into<String>>(value: S) -> Self {
        TypedValue::Category {
            value: value.into(),
        }
    }
    pub fn boolean(value: bool) -> Self {
        TypedValue::Boolean { value }
    }
}

/// Named attribute values; each name binds at most once.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeMap(BTreeMap<String, TypedValue>);

impl AttributeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set<S: Into<String>>(&mut self, name: S, value: TypedValue) -> Result<(), BaseFnError> {
        let name = name.into();
        if self.0.contains_key(&name) {
            return Err(BaseFnError::DuplicateAttribute(name));
        }
        self.0.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TypedValue> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TypedValue)> {
        self.0.iter()
    }

    /// Union of two maps; a shared name is an error.
    pub fn merged(&self, other: &AttributeMap) -> Result<AttributeMap, BaseFnError> {
        let mut out = self.clone();
        for (name, value) in other.iter() {
            out.set(name.clone(), value.clone())?;
        }
        Ok(out)
    }
}

/// One segmented mass with its accumulated attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionRecord {
    pub lesion_id: u32,
    pub mask: Mask,
    pub attributes: AttributeMap,
}

/// Ordered lesion collection: descending voxel count, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LesionSet {
    pub lesions: Vec<LesionRecord>,
    pub source_organ: String,
}

impl LesionSet {
    pub fn len(&self) -> usize {
        self.lesions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.lesions.is_empty()
    }
}

/// Threshold window driving the segmentation stand-ins. Component
/// connectivity is fixed at 26.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub hu_low: f64,
    pub hu_high: f64,
    pub min_component_voxels: usize,
}

impl SegmentationParams {
    pub fn new(hu_low: f64, hu_high: f64, min_component_voxels: usize) -> Result<Self, BaseFnError> {
        if !matches!(hu_low.partial_cmp(&hu_high), Some(std::cmp::Ordering::Less)) {
            return Err(BaseFnError::BadWindow {
                low: hu_low,
                high: hu_high,
            });
        }
        if min_component_voxels < 1 {
            return Err(BaseFnError::BadMinComponent);
        }
        Ok(Self {
            hu_low,
            hu_high,
            min_component_voxels,
        })
    }

    pub fn contains(&self, hu: i16) -> bool {
        let v = hu as f64;
        self.hu_low <= v && v <= self.hu_high
    }
}
