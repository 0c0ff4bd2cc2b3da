//! Desk-scale benchmark: synthetic phantom cases with known oracle paths,
//! the deterministic report-to-path matcher, the path-similarity baseline,
//! the ablation harness, and evaluation metrics.

pub mod files;
mod metrics;
mod run;

pub use metrics::{compute_metrics, ClassMetrics, EvalResult};
pub use run::{
    attr_bins, baseline_path_similarity, match_report_to_path, random_baseline_accuracy,
    run_benchmark, AblationLabeler, BaselineOptions, BenchProviders, Bins, Mode, RunOutcome,
};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basefn::{
    AttributeMap, BaseFnError, EmbeddingProvider, HashEmbedding, ProviderError, TypedValue, Unit,
};
use crate::executor::{
    aggregate_recommendations, assess_patient, execute_tree, patient_base_attrs, Aggregated,
    ExecError, LesionOutcome, PatientRecord, Phase,
};
use crate::guideline::{
    AttrType, AttributeDecl, GuidelineError, GuidelineTree, Node, Producer,
};
use crate::planner::PlanError;
use crate::volume::{Dims, Volume};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("no enumerated path is consistent with the stated facts")]
    NoConsistentPath,
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Guideline(#[from] GuidelineError),
    #[error(transparent)]
    Base(#[from] BaseFnError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
}

/// Phantom intensity scheme: air background, soft-tissue organ, and one HU
/// band per declared category of the tree's classify attribute. Lesions are
/// rasterized at their band's representative intensity so a calibrated
/// labeler can recover the category from the measured mean.
pub const BACKGROUND_HU: i16 = -1000;
pub const ORGAN_HU: i16 = 60;
pub const ORGAN_MARGIN_VOXELS: u32 = 4;
const BAND_BASE_HU: f64 = 100.0;
const BAND_WIDTH_HU: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HuBand {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub rep: i16,
}

/// One band per category, in declaration order, inside the mass window.
pub fn category_hu_bands(categories: &[String]) -> Result<Vec<HuBand>, BenchError> {
    if categories.len() > 4 {
        return Err(BenchError::Spec(format!(
            "at most 4 categories fit the phantom HU bands, got {}",
            categories.len()
        )));
    }
    Ok(categories
        .iter()
        .enumerate()
        .map(|(n, label)| {
            let lo = BAND_BASE_HU + BAND_WIDTH_HU * n as f64;
            HuBand {
                label: label.clone(),
                lo,
                hi: lo + BAND_WIDTH_HU,
                rep: (lo + 10.0) as i16,
            }
        })
        .collect())
}

/// Embedding provider calibrated to the phantom HU scheme: a canonical
/// measurement subject embeds as its HU band's label, so cosine argmax
/// recovers the encoded category exactly. All other text hashes as usual.
pub struct PhantomLabelProvider {
    bands: Vec<HuBand>,
    inner: HashEmbedding,
}

impl PhantomLabelProvider {
    pub fn for_tree(tree: &GuidelineTree, seed: u64) -> Result<Self, BenchError> {
        let bands = match classify_attr(tree) {
            Some(decl) => category_hu_bands(&decl.categories)?,
            None => Vec::new(),
        };
        Ok(Self {
            bands,
            inner: HashEmbedding::new(seed),
        })
    }
}

fn parse_mean_hu(text: &str) -> Option<f64> {
    text.split("; ")
        .find_map(|part| part.strip_prefix("mean_hu="))
        .and_then(|v| v.parse::<f64>().ok())
}

impl EmbeddingProvider for PhantomLabelProvider {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        if let Some(hu) = parse_mean_hu(text) {
            if let Some(band) = self.bands.iter().find(|b| b.lo <= hu && hu < b.hi) {
                return self.inner.embed(&band.label);
            }
        }
        self.inner.embed(text)
    }
}

/// The tree's single classify-producer attribute, if any. The phantom HU
/// encoding carries one category per lesion, so trees with more than one
/// classify attribute cannot be synthesized.
pub fn classify_attr(tree: &GuidelineTree) -> Option<&AttributeDecl> {
    tree.attributes
        .iter()
        .find(|a| a.producer == Producer::Classify)
}

fn measure_attrs(tree: &GuidelineTree) -> impl Iterator<Item = &AttributeDecl> {
    tree.attributes
        .iter()
        .filter(|a| a.producer == Producer::Measure)
}

/// The measure attribute carrying the lesion diameter, if any.
pub fn diameter_attr(tree: &GuidelineTree) -> Option<&AttributeDecl> {
    measure_attrs(tree).find(|a| {
        matches!(
            a.method.as_deref(),
            Some("feret") | Some("equiv_sphere") | Some("bbox")
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub center_mm: [f64; 3],
    pub diameter_mm: f64,
    /// Value for the tree's classify attribute; also selects the HU band.
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub organ: String,
    pub dims: Dims,
    pub spacing_mm: [f32; 3],
    pub lesions: Vec<LesionSpec>,
    pub patient: PatientRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionFacts {
    pub lesion_id: u32,
    pub diameter_cm: f64,
    pub intensity_hu: f64,
    pub category: String,
}

/// Stated observations for one case, mirroring a radiology report: lesions
/// ordered most-significant first, plus patient background and a free-text
/// rendering. Facts never carry the oracle path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFacts {
    pub lesions: Vec<LesionFacts>,
    pub patient: PatientRecord,
    pub text: String,
}

impl ReportFacts {
    pub fn patient_text(&self) -> String {
        let flags: Vec<String> = self
            .patient
            .flags
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!(
            "Patient: age {}, sex {}, phase {}{}{}.",
            self.patient.age_years,
            self.patient.sex,
            self.patient.phase,
            if flags.is_empty() { "" } else { ", " },
            flags.join(", ")
        )
    }
}

/// Ground truth for one case: the per-lesion trajectories on nominal
/// attribute values and their aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOracle {
    pub per_lesion: Vec<LesionOutcome>,
    pub aggregated: Aggregated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub case_id: String,
    pub spec: SyntheticSpec,
    pub volume: Volume,
    pub facts: ReportFacts,
    pub oracle: CaseOracle,
}

fn organ_box_mm(dims: Dims, spacing: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let m = ORGAN_MARGIN_VOXELS;
    let lo = [m as f64 * spacing[0], m as f64 * spacing[1], m as f64 * spacing[2]];
    let hi = [
        (dims.nx - m - 1) as f64 * spacing[0],
        (dims.ny - m - 1) as f64 * spacing[1],
        (dims.nz - m - 1) as f64 * spacing[2],
    ];
    (lo, hi)
}

/// Nominal attribute values for one lesion spec, in declared units.
fn nominal_attrs(
    tree: &GuidelineTree,
    lesion: &LesionSpec,
    band_rep: i16,
) -> Result<AttributeMap, BenchError> {
    let mut attrs = AttributeMap::new();
    for decl in measure_attrs(tree) {
        let value = match decl.method.as_deref() {
            Some("feret") | Some("equiv_sphere") | Some("bbox") => {
                let unit = decl.unit.unwrap_or(Unit::Mm);
                let converted = Unit::convert(lesion.diameter_mm, Unit::Mm, unit).ok_or_else(
                    || BenchError::Spec(format!("diameter attribute {:?} is not a length", decl.name)),
                )?;
                TypedValue::real(converted, unit)
            }
            Some("mean_hu") => TypedValue::real(band_rep as f64, Unit::Hu),
            Some("lesion_present") => TypedValue::boolean(true),
            other => {
                return Err(BenchError::Spec(format!(
                    "cannot synthesize a nominal value for measure method {other:?}"
                )))
            }
        };
        attrs.set(decl.name.clone(), value)?;
    }
    if let Some(decl) = classify_attr(tree) {
        attrs.set(decl.name.clone(), TypedValue::category(lesion.category.clone()))?;
    }
    Ok(attrs)
}

/// Patient attributes exactly as the executor's assessment step builds them:
/// record-derived base values, declared boolean attributes defaulting to
/// false, and rule outputs.
pub fn oracle_patient_attrs(
    tree: &GuidelineTree,
    patient: &PatientRecord,
) -> Result<AttributeMap, BenchError> {
    let mut base = patient_base_attrs(patient);
    for decl in &tree.attributes {
        if decl.producer == Producer::Patient
            && decl.attr_type == AttrType::Boolean
            && !base.contains(&decl.name)
        {
            base.set(decl.name.clone(), TypedValue::boolean(false))?;
        }
    }
    let outputs = assess_patient(&tree.risk_rules, patient)?;
    Ok(base.merged(&outputs)?)
}

/// Thresholds a measured value must stay clear of, per estimation method.
fn digitization_margin(method: Option<&str>, diameter_mm: f64, max_spacing: f64) -> f64 {
    match method {
        Some("equiv_sphere") => 0.05 * diameter_mm,
        _ => 2.0 * max_spacing,
    }
}

/// Generates one case: validates the spec, rasterizes the phantom, derives
/// the oracle trajectory from nominal attributes, and renders report facts.
pub fn gen_case(spec: &SyntheticSpec, tree: &GuidelineTree) -> Result<BenchCase, BenchError> {
    if spec.organ != tree.organ {
        return Err(BenchError::Spec(format!(
            "spec organ {:?} does not match tree organ {:?}",
            spec.organ, tree.organ
        )));
    }
    spec.patient.validate()?;
    let spacing = [
        spec.spacing_mm[0] as f64,
        spec.spacing_mm[1] as f64,
        spec.spacing_mm[2] as f64,
    ];
    let max_spacing = spacing[0].max(spacing[1]).max(spacing[2]);
    let dims = spec.dims;
    if dims.nx <= 2 * ORGAN_MARGIN_VOXELS || dims.ny <= 2 * ORGAN_MARGIN_VOXELS || dims.nz <= 2 * ORGAN_MARGIN_VOXELS
    {
        return Err(BenchError::Spec("volume too small for the organ box".to_string()));
    }

    let classify = classify_attr(tree);
    let bands = match classify {
        Some(decl) => category_hu_bands(&decl.categories)?,
        None => Vec::new(),
    };
    let band_for = |category: &str| -> Result<&HuBand, BenchError> {
        bands
            .iter()
            .find(|b| b.label == category)
            .ok_or_else(|| BenchError::Spec(format!("category {category:?} has no HU band")))
    };

    // containment, separation, and threshold-adjacency checks
    let (box_lo, box_hi) = organ_box_mm(dims, spacing);
    for (n, lesion) in spec.lesions.iter().enumerate() {
        let r = lesion.diameter_mm / 2.0;
        if lesion.diameter_mm < 2.0 * max_spacing {
            return Err(BenchError::Spec(format!(
                "lesion {n} diameter {} mm is below the resolvable size",
                lesion.diameter_mm
            )));
        }
        for axis in 0..3 {
            if lesion.center_mm[axis] - r < box_lo[axis] + max_spacing
                || lesion.center_mm[axis] + r > box_hi[axis] - max_spacing
            {
                return Err(BenchError::Spec(format!(
                    "lesion {n} extends outside the organ region"
                )));
            }
        }
        for (m, other) in spec.lesions.iter().enumerate().take(n) {
            let d2: f64 = (0..3)
                .map(|a| (lesion.center_mm[a] - other.center_mm[a]).powi(2))
                .sum();
            let min_dist = r + other.diameter_mm / 2.0 + 2.0 * max_spacing;
            if d2.sqrt() <= min_dist {
                return Err(BenchError::Spec(format!("lesions {m} and {n} overlap")));
            }
        }
        if classify.is_some() {
            band_for(&lesion.category)?;
        }
        if let Some(decl) = diameter_attr(tree) {
            let unit = decl.unit.unwrap_or(Unit::Mm);
            let margin = digitization_margin(decl.method.as_deref(), lesion.diameter_mm, max_spacing);
            for threshold_mm in attr_thresholds_mm(tree, &decl.name, unit) {
                if (lesion.diameter_mm - threshold_mm).abs() <= margin {
                    return Err(BenchError::Spec(format!(
                        "lesion {n} diameter {} mm is within the digitization margin of threshold {} mm",
                        lesion.diameter_mm, threshold_mm
                    )));
                }
            }
        }
    }

    // rasterize: background, organ box, then each lesion ball
    let mut voxels = vec![BACKGROUND_HU; dims.len()];
    let m = ORGAN_MARGIN_VOXELS;
    for k in m..dims.nz - m {
        for j in m..dims.ny - m {
            for i in m..dims.nx - m {
                voxels[dims.index(i, j, k)] = ORGAN_HU;
            }
        }
    }
    // (first foreground voxel, count) per spec lesion, for id assignment
    let mut stats: Vec<(usize, usize, usize)> = Vec::new(); // (spec idx, min index, count)
    for (n, lesion) in spec.lesions.iter().enumerate() {
        let hu = if classify.is_some() {
            band_for(&lesion.category)?.rep
        } else {
            150
        };
        let r2 = (lesion.diameter_mm / 2.0).powi(2);
        let mut min_index = usize::MAX;
        let mut count = 0usize;
        for k in 0..dims.nz {
            for j in 0..dims.ny {
                for i in 0..dims.nx {
                    let dx = i as f64 * spacing[0] - lesion.center_mm[0];
                    let dy = j as f64 * spacing[1] - lesion.center_mm[1];
                    let dz = k as f64 * spacing[2] - lesion.center_mm[2];
                    if dx * dx + dy * dy + dz * dz <= r2 {
                        let idx = dims.index(i, j, k);
                        voxels[idx] = hu;
                        min_index = min_index.min(idx);
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return Err(BenchError::Spec(format!("lesion {n} rasterizes to no voxels")));
        }
        stats.push((n, min_index, count));
    }
    let volume = Volume::new(dims, spec.spacing_mm, voxels)
        .map_err(|e| BenchError::Spec(e.to_string()))?;

    // ids follow segmentation discovery order (first voxel in scan order);
    // the oracle set is then ordered like a LesionSet
    stats.sort_by_key(|&(_, min_index, _)| min_index);
    let ids: Vec<(usize, u32, usize)> = stats
        .iter()
        .enumerate()
        .map(|(rank, &(spec_idx, _, count))| (spec_idx, rank as u32 + 1, count))
        .collect();

    let patient_attrs = oracle_patient_attrs(tree, &spec.patient)?;
    let mut per_lesion: Vec<LesionOutcome> = Vec::with_capacity(spec.lesions.len());
    for &(spec_idx, lesion_id, _count) in &ids {
        let lesion = &spec.lesions[spec_idx];
        let band_rep = if classify.is_some() {
            band_for(&lesion.category)?.rep
        } else {
            150
        };
        let attrs = nominal_attrs(tree, lesion, band_rep)?;
        let full = attrs.merged(&patient_attrs)?;
        let path = execute_tree(tree, &full)?;
        let severity = match tree.node(&path.leaf_id) {
            Some(Node::Leaf { severity, .. }) => *severity,
            _ => return Err(BenchError::Spec(format!("path leaf {:?} missing", path.leaf_id))),
        };
        per_lesion.push(LesionOutcome {
            lesion_id,
            attributes: attrs,
            recommendation: path.recommendation.clone(),
            severity,
            path,
        });
    }
    // order like a LesionSet: descending voxel count, ties by ascending id
    let count_of = |id: u32| ids.iter().find(|&&(_, i, _)| i == id).map(|&(_, _, c)| c).unwrap();
    per_lesion.sort_by_key(|o| (std::cmp::Reverse(count_of(o.lesion_id)), o.lesion_id));
    let aggregated = aggregate_recommendations(&per_lesion, tree)?;

    // report facts lead with the most significant finding
    let mut fact_order: Vec<&LesionOutcome> = per_lesion.iter().collect();
    fact_order.sort_by_key(|o| (std::cmp::Reverse(o.severity), o.lesion_id));
    let lesions: Vec<LesionFacts> = fact_order
        .iter()
        .map(|o| {
            let spec_lesion = ids
                .iter()
                .find(|&&(_, id, _)| id == o.lesion_id)
                .map(|&(spec_idx, _, _)| &spec.lesions[spec_idx])
                .expect("id assigned above");
            let band_rep = if classify.is_some() {
                band_for(&spec_lesion.category).expect("validated above").rep
            } else {
                150
            };
            LesionFacts {
                lesion_id: o.lesion_id,
                diameter_cm: spec_lesion.diameter_mm / 10.0,
                intensity_hu: band_rep as f64,
                category: spec_lesion.category.clone(),
            }
        })
        .collect();
    let classify_name = classify.map(|d| d.name.as_str()).unwrap_or("category");
    let text = if lesions.is_empty() {
        format!("No focal {} lesions identified.", tree.organ)
    } else {
        lesions
            .iter()
            .map(|l| {
                format!(
                    "{} lesion {}: diameter {:.1} cm, mean intensity {:.1} HU, {} {}.",
                    tree.organ, l.lesion_id, l.diameter_cm, l.intensity_hu, classify_name, l.category
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    Ok(BenchCase {
        case_id: format!("{}-{:016x}", spec.organ, spec.seed),
        spec: spec.clone(),
        volume,
        facts: ReportFacts {
            lesions,
            patient: spec.patient.clone(),
            text,
        },
        oracle: CaseOracle {
            per_lesion,
            aggregated,
        },
    })
}

/// Thresholds the tree tests on `attr`, in millimeters.
fn attr_thresholds_mm(tree: &GuidelineTree, attr: &str, attr_unit: Unit) -> Vec<f64> {
    run::attr_thresholds(tree, attr, attr_unit)
        .into_iter()
        .filter_map(|t| Unit::convert(t, attr_unit, Unit::Mm))
        .collect()
}

/// Deterministic suite generation parameters.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub n_cases: usize,
    pub seed: u64,
    pub grid: u32,
    pub max_lesions: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n_cases: 200,
            seed: 17,
            grid: 56,
            max_lesions: 2,
        }
    }
}

/// Seeded synthetic suite for one tree: lesion diameters sampled inside
/// threshold regions (clear of digitization margins), categories and patient
/// flags sampled uniformly, placements rejection-sampled inside the organ
/// box.
pub fn generate_suite(
    tree: &GuidelineTree,
    config: &SuiteConfig,
) -> Result<Vec<BenchCase>, BenchError> {
    let dims = Dims::new(config.grid, config.grid, config.grid)
        .map_err(|e| BenchError::Spec(e.to_string()))?;
    let spacing = [1.0f32, 1.0, 1.0];
    let diameter_decl =
        diameter_attr(tree).ok_or_else(|| BenchError::Spec("tree has no diameter attribute".into()))?;
    let unit = diameter_decl.unit.unwrap_or(Unit::Mm);
    let mut thresholds = attr_thresholds_mm(tree, &diameter_decl.name, unit);
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // sampling margin strictly wider than the 2 mm digitization margin
    let margin = 2.2;
    let min_d = 5.0;
    let max_d = (config.grid as f64 - 2.0 * ORGAN_MARGIN_VOXELS as f64) / 2.0 - 2.0;
    let mut regions: Vec<(f64, f64)> = Vec::new();
    let mut lo = min_d;
    for &t in &thresholds {
        if t - margin > lo {
            regions.push((lo, t - margin));
        }
        lo = t + margin;
    }
    if max_d > lo {
        regions.push((lo, max_d));
    }
    if regions.is_empty() {
        return Err(BenchError::Spec("no samplable diameter region".into()));
    }

    let categories: Vec<String> = classify_attr(tree)
        .map(|d| d.categories.clone())
        .unwrap_or_default();
    let flags: Vec<String> = tree
        .attributes
        .iter()
        .filter(|a| a.producer == Producer::Patient && a.attr_type == AttrType::Boolean)
        .map(|a| a.name.clone())
        .collect();
    let phase = match tree.organ.as_str() {
        "renal" => Phase::Arterial,
        _ => Phase::Venous,
    };
    let (box_lo, box_hi) = organ_box_mm(dims, [1.0, 1.0, 1.0]);

    let mut cases = Vec::with_capacity(config.n_cases);
    for case_idx in 0..config.n_cases {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(case_idx as u64 + 1);

        let n_lesions = {
            let roll: f64 = rng.random();
            if roll < 0.2 {
                0
            } else if roll < 0.7 || config.max_lesions < 2 {
                1
            } else {
                2.min(config.max_lesions)
            }
        };

        let mut placed: Vec<LesionSpec> = Vec::new();
        for _ in 0..n_lesions {
            let mut attempt = 0;
            'place: while attempt < 60 {
                attempt += 1;
                let region = regions[rng.random_range(0..regions.len())];
                let diameter = rng.random_range(region.0..=region.1);
                let r = diameter / 2.0;
                let mut center = [0.0f64; 3];
                for (axis, c) in center.iter_mut().enumerate() {
                    let lo = box_lo[axis] + r + 1.5;
                    let hi = box_hi[axis] - r - 1.5;
                    if hi <= lo {
                        continue 'place;
                    }
                    *c = rng.random_range(lo..=hi);
                }
                let clear = placed.iter().all(|other| {
                    let d2: f64 = (0..3)
                        .map(|a| (center[a] - other.center_mm[a]).powi(2))
                        .sum();
                    d2.sqrt() > r + other.diameter_mm / 2.0 + 2.5
                });
                if !clear {
                    continue;
                }
                let category = if categories.is_empty() {
                    String::new()
                } else {
                    categories[rng.random_range(0..categories.len())].clone()
                };
                placed.push(LesionSpec {
                    center_mm: center,
                    diameter_mm: diameter,
                    category,
                });
                break;
            }
        }

        let patient = PatientRecord {
            patient_id: format!("{}-pt-{case_idx:04}", tree.organ),
            age_years: rng.random_range(30..=85),
            sex: if rng.random_bool(0.5) { "F" } else { "M" }.to_string(),
            flags: flags
                .iter()
                .map(|f| (f.clone(), rng.random_bool(0.3)))
                .collect(),
            phase,
        };

        let spec = SyntheticSpec {
            seed: config.seed ^ ((case_idx as u64) << 20),
            organ: tree.organ.clone(),
            dims,
            spacing_mm: spacing,
            lesions: placed,
            patient,
        };
        cases.push(gen_case(&spec, tree)?);
    }
    Ok(cases)
}

#[cfg(test)]
mod tests;
