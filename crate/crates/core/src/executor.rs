//! Plan interpreter: runs a validated plan against one case (volume plus
//! patient record), walking the guideline tree per lesion and aggregating
//! into a patient-level recommendation with a full execution trace.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basefn::{
    calc_mass_diameter_cm, classify_label, mean_intensity_hu, segment_masses, segment_organ,
    AttributeMap, BaseFnError, DiameterMethod, EmbeddingProvider, LesionRecord, TypedValue, Unit,
};
use crate::guideline::{
    enumerate_paths, path_text, CmpOp, DecisionPath, GuidelineError, GuidelineTree, Literal, Node,
    PathStep, PatientRule, Predicate,
};
use crate::planner::{Plan, Step, StepOp};
use crate::volume::Volume;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("missing attribute {attr:?}{}", .node.as_ref().map(|n| format!(" at node {n:?}")).unwrap_or_default())]
    MissingAttribute {
        attr: String,
        node: Option<String>,
    },
    #[error("unit mismatch on {attr:?}: cannot convert {from} to {to}")]
    UnitMismatch { attr: String, from: Unit, to: Unit },
    #[error("type mismatch on {attr:?}: {message}")]
    TypeMismatch { attr: String, message: String },
    #[error("tree declares no no-lesion leaf but the case has no lesions")]
    NoLesionLeafUndefined,
    #[error("node {node:?} has no branch labeled {label:?}")]
    BranchNotFound { node: String, label: String },
    #[error("invalid patient record: {0}")]
    BadPatient(String),
    #[error("plan state: {0}")]
    State(String),
    #[error(transparent)]
    Base(#[from] BaseFnError),
    #[error(transparent)]
    Guideline(#[from] GuidelineError),
}

/// Contrast phase of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Venous,
    Arterial,
    Other,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Venous => "venous",
            Phase::Arterial => "arterial",
            Phase::Other => "other",
        })
    }
}

/// Clinical background data for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub age_years: u32,
    pub sex: String,
    #[serde(default)]
    pub flags: BTreeMap<String, bool>,
    pub phase: Phase,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.age_years > 150 {
            return Err(ExecError::BadPatient(format!(
                "age {} exceeds 150",
                self.age_years
            )));
        }
        Ok(())
    }
}

/// One lesion's walk through the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionOutcome {
    pub lesion_id: u32,
    pub attributes: AttributeMap,
    pub path: DecisionPath,
    pub recommendation: String,
    pub severity: u32,
}

/// Patient-level result of aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregated {
    pub recommendation: String,
    pub severity: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_lesion_id: Option<u32>,
    pub leaf_id: String,
    pub path: DecisionPath,
}

/// One executed step. Wall time is kept in memory for inspection but not
/// serialized, so result files stay byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step_id: String,
    pub step_kind: String,
    pub inputs: String,
    pub output: String,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub per_lesion: Vec<LesionOutcome>,
    pub patient_attrs: AttributeMap,
    pub aggregated: Aggregated,
    /// Rendered trajectory of the aggregated path.
    pub trajectory: String,
    pub trace: Vec<TraceEvent>,
}

impl CaseResult {
    pub fn to_document(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("case result always serializes");
        text.push('\n');
        text
    }

    pub fn from_document(text: &str) -> Result<Self, ExecError> {
        serde_json::from_str(text).map_err(|e| ExecError::State(format!("case result: {e}")))
    }
}

/// Services the executor needs beyond the deterministic base functions.
pub struct ExecProviders<'a> {
    pub embedding: &'a dyn EmbeddingProvider,
}

fn real_value(attrs: &AttributeMap, attr: &str) -> Result<(f64, Unit), ExecError> {
    match attrs.get(attr) {
        None => Err(ExecError::MissingAttribute {
            attr: attr.to_string(),
            node: None,
        }),
        Some(TypedValue::Real { value, unit }) => Ok((*value, *unit)),
        Some(other) => Err(ExecError::TypeMismatch {
            attr: attr.to_string(),
            message: format!("expected a real value, found {other:?}"),
        }),
    }
}

fn convert_to(attr: &str, value: f64, from: Unit, to: Unit) -> Result<f64, ExecError> {
    Unit::convert(value, from, to).ok_or(ExecError::UnitMismatch {
        attr: attr.to_string(),
        from,
        to,
    })
}

fn bool_label(b: bool) -> String {
    if b { "true" } else { "false" }.to_string()
}

/// Evaluates a predicate against an attribute map, returning the branch
/// label: "true"/"false" for boolean predicates, the category value for
/// `category_of`. Real comparisons normalize the literal to the attribute's
/// unit first.
pub fn evaluate_predicate(pred: &Predicate, attrs: &AttributeMap) -> Result<String, ExecError> {
    match pred {
        Predicate::Compare { attr, op, value } => match value {
            Literal::Real {
                value: lit,
                unit: lit_unit,
            } => {
                let (actual, actual_unit) = real_value(attrs, attr)?;
                let lit = convert_to(attr, *lit, *lit_unit, actual_unit)?;
                let result = match op {
                    CmpOp::Le => actual <= lit,
                    CmpOp::Lt => actual < lit,
                    CmpOp::Gt => actual > lit,
                    CmpOp::Ge => actual >= lit,
                    CmpOp::Eq => actual == lit,
                };
                Ok(bool_label(result))
            }
            Literal::Category(expected) => match attrs.get(attr) {
                None => Err(ExecError::MissingAttribute {
                    attr: attr.clone(),
                    node: None,
                }),
                Some(TypedValue::Category { value }) => {
                    if *op != CmpOp::Eq {
                        return Err(ExecError::TypeMismatch {
                            attr: attr.clone(),
                            message: format!("operator {:?} on a category", op.as_str()),
                        });
                    }
                    Ok(bool_label(value == expected))
                }
                Some(other) => Err(ExecError::TypeMismatch {
                    attr: attr.clone(),
                    message: format!("expected a category, found {other:?}"),
                }),
            },
            Literal::Bool(expected) => match attrs.get(attr) {
                None => Err(ExecError::MissingAttribute {
                    attr: attr.clone(),
                    node: None,
                }),
                Some(TypedValue::Boolean { value }) => {
                    if *op != CmpOp::Eq {
                        return Err(ExecError::TypeMismatch {
                            attr: attr.clone(),
                            message: format!("operator {:?} on a boolean", op.as_str()),
                        });
                    }
                    Ok(bool_label(value == expected))
                }
                Some(other) => Err(ExecError::TypeMismatch {
                    attr: attr.clone(),
                    message: format!("expected a boolean, found {other:?}"),
                }),
            },
        },
        Predicate::InRange {
            attr,
            lo,
            hi,
            unit,
            lo_closed,
            hi_closed,
        } => {
            let (actual, actual_unit) = real_value(attrs, attr)?;
            let lo = convert_to(attr, *lo, *unit, actual_unit)?;
            let hi = convert_to(attr, *hi, *unit, actual_unit)?;
            let above = if *lo_closed { actual >= lo } else { actual > lo };
            let below = if *hi_closed { actual <= hi } else { actual < hi };
            Ok(bool_label(above && below))
        }
        Predicate::CategoryOf { attr } => match attrs.get(attr) {
            None => Err(ExecError::MissingAttribute {
                attr: attr.clone(),
                node: None,
            }),
            Some(TypedValue::Category { value }) => Ok(value.clone()),
            Some(other) => Err(ExecError::TypeMismatch {
                attr: attr.clone(),
                message: format!("category_of expects a category, found {other:?}"),
            }),
        },
        Predicate::And(children) => {
            for c in children {
                if !eval_bool(c, attrs)? {
                    return Ok(bool_label(false));
                }
            }
            Ok(bool_label(true))
        }
        Predicate::Or(children) => {
            for c in children {
                if eval_bool(c, attrs)? {
                    return Ok(bool_label(true));
                }
            }
            Ok(bool_label(false))
        }
        Predicate::Not(child) => Ok(bool_label(!eval_bool(child, attrs)?)),
    }
}

fn eval_bool(pred: &Predicate, attrs: &AttributeMap) -> Result<bool, ExecError> {
    match evaluate_predicate(pred, attrs)?.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ExecError::TypeMismatch {
            attr: String::new(),
            message: format!("combinator child produced category {other:?}"),
        }),
    }
}

/// Walks the tree from the root, taking the branch each predicate selects,
/// until a leaf is reached.
pub fn execute_tree(tree: &GuidelineTree, attrs: &AttributeMap) -> Result<DecisionPath, ExecError> {
    let mut current = &tree.root_id;
    let mut steps = Vec::new();
    for _ in 0..=tree.nodes.len() {
        match tree.node(current) {
            None => {
                return Err(ExecError::State(format!(
                    "node {current:?} is not in the tree"
                )))
            }
            Some(Node::Leaf { recommendation, .. }) => {
                return Ok(DecisionPath {
                    steps,
                    leaf_id: current.clone(),
                    recommendation: recommendation.clone(),
                });
            }
            Some(Node::Decision {
                predicate,
                branches,
                ..
            }) => {
                let label = evaluate_predicate(predicate, attrs).map_err(|e| match e {
                    ExecError::MissingAttribute { attr, .. } => ExecError::MissingAttribute {
                        attr,
                        node: Some(current.clone()),
                    },
                    other => other,
                })?;
                let next = branches.get(&label).ok_or_else(|| ExecError::BranchNotFound {
                    node: current.clone(),
                    label: label.clone(),
                })?;
                steps.push(PathStep {
                    node_id: current.clone(),
                    branch: label,
                });
                current = next;
            }
        }
    }
    Err(ExecError::State("tree walk exceeded node count".to_string()))
}

/// Attributes derived directly from the patient record: age, sex, phase, and
/// every flag.
pub fn patient_base_attrs(patient: &PatientRecord) -> AttributeMap {
    let mut attrs = AttributeMap::new();
    attrs
        .set(
            "age_years",
            TypedValue::real(patient.age_years as f64, Unit::Years),
        )
        .expect("fresh map");
    attrs
        .set("sex", TypedValue::category(patient.sex.clone()))
        .expect("fresh map");
    attrs
        .set("phase", TypedValue::category(patient.phase.to_string()))
        .expect("fresh map");
    for (flag, value) in &patient.flags {
        // record field names are disjoint from the fixed three by schema
        if attrs.set(flag.clone(), TypedValue::boolean(*value)).is_err() {
            continue;
        }
    }
    attrs
}

/// Applies each rule in order: first matching case wins, else the default.
/// A condition referencing an attribute the record lacks simply fails to
/// match. Returns only the rule outputs.
pub fn assess_patient(
    rules: &[PatientRule],
    patient: &PatientRecord,
) -> Result<AttributeMap, ExecError> {
    let base = patient_base_attrs(patient);
    let mut out = AttributeMap::new();
    for rule in rules {
        let mut chosen = rule.default.clone();
        for case in &rule.cases {
            match eval_bool(&case.condition, &base) {
                Ok(true) => {
                    chosen = case.category.clone();
                    break;
                }
                Ok(false) => {}
                Err(ExecError::MissingAttribute { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        out.set(rule.output_attr.clone(), TypedValue::category(chosen))?;
    }
    Ok(out)
}

/// Patient-level result: the per-lesion entry with maximum severity (ties to
/// the lowest lesion id), or the tree's designated no-lesion leaf when the
/// case has no lesions.
pub fn aggregate_recommendations(
    per_lesion: &[LesionOutcome],
    tree: &GuidelineTree,
) -> Result<Aggregated, ExecError> {
    if per_lesion.is_empty() {
        let leaf_id = tree
            .no_lesion_leaf
            .clone()
            .ok_or(ExecError::NoLesionLeafUndefined)?;
        let Some(Node::Leaf {
            recommendation,
            severity,
            ..
        }) = tree.node(&leaf_id)
        else {
            return Err(ExecError::State(format!(
                "designated no-lesion leaf {leaf_id:?} is not a leaf"
            )));
        };
        let path = enumerate_paths(tree)
            .into_iter()
            .find(|p| p.leaf_id == leaf_id)
            .ok_or_else(|| {
                ExecError::State(format!("no path reaches designated leaf {leaf_id:?}"))
            })?;
        return Ok(Aggregated {
            recommendation: recommendation.clone(),
            severity: *severity,
            source_lesion_id: None,
            leaf_id,
            path,
        });
    }
    let winner = per_lesion
        .iter()
        .max_by(|a, b| {
            a.severity
                .cmp(&b.severity)
                .then(b.lesion_id.cmp(&a.lesion_id))
        })
        .expect("nonempty");
    Ok(Aggregated {
        recommendation: winner.recommendation.clone(),
        severity: winner.severity,
        source_lesion_id: Some(winner.lesion_id),
        leaf_id: winner.path.leaf_id.clone(),
        path: winner.path.clone(),
    })
}

fn leaf_severity(tree: &GuidelineTree, leaf_id: &str) -> Result<u32, ExecError> {
    match tree.node(leaf_id) {
        Some(Node::Leaf { severity, .. }) => Ok(*severity),
        _ => Err(ExecError::State(format!("{leaf_id:?} is not a leaf"))),
    }
}

/// Canonical text bridge from measurements to the labeler: organ plus the
/// diameter and mean intensity when they have been measured.
pub fn classify_subject(organ: &str, attrs: &AttributeMap) -> String {
    let mut subject = format!("organ={organ}");
    if let Ok((value, unit)) = real_value(attrs, "diameter_cm") {
        if let Some(cm) = Unit::convert(value, unit, Unit::Cm) {
            subject.push_str(&format!("; diameter_cm={cm:.2}"));
        }
    }
    if let Ok((value, _)) = real_value(attrs, "mean_hu") {
        subject.push_str(&format!("; mean_hu={value:.1}"));
    }
    subject
}

struct ExecState {
    organ_mask: Option<crate::volume::Mask>,
    lesions: Option<Vec<LesionRecord>>,
    patient_attrs: Option<AttributeMap>,
    outcomes: Option<Vec<LesionOutcome>>,
    aggregated: Option<Aggregated>,
}

/// Runs every plan step in order against one case. The per-lesion paths
/// equal `execute_tree` applied to each lesion's final attribute map; the
/// interpreter adds orchestration and tracing only.
pub fn execute_plan(
    plan: &Plan,
    tree: &GuidelineTree,
    vol: &Volume,
    patient: &PatientRecord,
    providers: &ExecProviders,
) -> Result<CaseResult, ExecError> {
    if plan.tree_ref.organ != tree.organ || plan.tree_ref.version != tree.version() {
        return Err(ExecError::State(format!(
            "plan targets {}-{}, tree is {}-{}",
            plan.tree_ref.organ,
            plan.tree_ref.version,
            tree.organ,
            tree.version()
        )));
    }
    patient.validate()?;

    let mut state = ExecState {
        organ_mask: None,
        lesions: None,
        patient_attrs: None,
        outcomes: None,
        aggregated: None,
    };
    let mut trace: Vec<TraceEvent> = Vec::new();

    for step in &plan.steps {
        let started = Instant::now();
        let (inputs, output) = run_step(step, tree, vol, patient, providers, &mut state)?;
        trace.push(TraceEvent {
            step_id: step.id.clone(),
            step_kind: step.op.kind_name().to_string(),
            inputs,
            output,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let aggregated = state
        .aggregated
        .ok_or_else(|| ExecError::State("plan finished without aggregation".to_string()))?;
    let trajectory = path_text(tree, &aggregated.path)?;
    Ok(CaseResult {
        per_lesion: state.outcomes.unwrap_or_default(),
        patient_attrs: state.patient_attrs.unwrap_or_default(),
        aggregated,
        trajectory,
        trace,
    })
}

fn run_step(
    step: &Step,
    tree: &GuidelineTree,
    vol: &Volume,
    patient: &PatientRecord,
    providers: &ExecProviders,
    state: &mut ExecState,
) -> Result<(String, String), ExecError> {
    use crate::volume::VoxelGrid;
    match &step.op {
        StepOp::SegmentOrgan { params } => {
            let mask = segment_organ(vol, params);
            let summary = format!("organ mask: {} voxels", mask.popcount());
            state.organ_mask = Some(mask);
            Ok((
                format!(
                    "volume {:?}, window [{}, {}]",
                    vol.dims(),
                    params.hu_low,
                    params.hu_high
                ),
                summary,
            ))
        }
        StepOp::SegmentMasses { params } => {
            let organ = state
                .organ_mask
                .as_ref()
                .ok_or_else(|| ExecError::State("segment_masses before segment_organ".into()))?;
            let set = segment_masses(vol, organ, params, &tree.organ)?;
            let sizes: Vec<usize> = set.lesions.iter().map(|l| l.mask.popcount()).collect();
            let summary = format!("{} lesion(s), sizes {:?}", set.lesions.len(), sizes);
            state.lesions = Some(set.lesions);
            Ok((
                format!("window [{}, {}]", params.hu_low, params.hu_high),
                summary,
            ))
        }
        StepOp::MeasureEach { attr, method } => {
            let lesions = state
                .lesions
                .as_mut()
                .ok_or_else(|| ExecError::State("measure_each before segment_masses".into()))?;
            let decl = tree.attribute(attr).ok_or_else(|| {
                ExecError::State(format!("attribute {attr:?} is not in the manifest"))
            })?;
            for lesion in lesions.iter_mut() {
                let value = match method.as_str() {
                    "feret" | "equiv_sphere" | "bbox" => {
                        let m: DiameterMethod = method.parse().expect("matched above");
                        let cm = calc_mass_diameter_cm(&lesion.mask, m)?;
                        let unit = decl.unit.unwrap_or(Unit::Cm);
                        TypedValue::real(convert_to(attr, cm, Unit::Cm, unit)?, unit)
                    }
                    "mean_hu" => {
                        let hu = mean_intensity_hu(vol, &lesion.mask)?;
                        let unit = decl.unit.unwrap_or(Unit::Hu);
                        TypedValue::real(convert_to(attr, hu, Unit::Hu, unit)?, unit)
                    }
                    "lesion_present" => TypedValue::boolean(true),
                    other => {
                        return Err(ExecError::State(format!(
                            "unknown measure method {other:?}"
                        )))
                    }
                };
                lesion.attributes.set(attr.clone(), value)?;
            }
            Ok((
                format!("method {method}"),
                format!("{attr} set on {} lesion(s)", lesions.len()),
            ))
        }
        StepOp::ClassifyEach { attr, labels } => {
            let lesions = state
                .lesions
                .as_mut()
                .ok_or_else(|| ExecError::State("classify_each before segment_masses".into()))?;
            let mut chosen = Vec::with_capacity(lesions.len());
            for lesion in lesions.iter_mut() {
                let subject = classify_subject(&tree.organ, &lesion.attributes);
                let (label, _scores) = classify_label(providers.embedding, &subject, labels)?;
                chosen.push(label.clone());
                lesion
                    .attributes
                    .set(attr.clone(), TypedValue::category(label))?;
            }
            Ok((
                format!("{} label(s)", labels.len()),
                format!("{attr} = {chosen:?}"),
            ))
        }
        StepOp::AssessPatient { attrs } => {
            let mut base = patient_base_attrs(patient);
            // declared boolean patient attributes default to false when the
            // record does not carry the flag
            for decl in &tree.attributes {
                if decl.producer == crate::guideline::Producer::Patient
                    && decl.attr_type == crate::guideline::AttrType::Boolean
                    && !base.contains(&decl.name)
                {
                    base.set(decl.name.clone(), TypedValue::boolean(false))?;
                }
            }
            let outputs = assess_patient(&tree.risk_rules, patient)?;
            let merged = base.merged(&outputs)?;
            for attr in attrs {
                if !merged.contains(attr) {
                    return Err(ExecError::MissingAttribute {
                        attr: attr.clone(),
                        node: None,
                    });
                }
            }
            let summary = format!(
                "patient attrs: {}",
                merged
                    .iter()
                    .map(|(k, _)| k.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            state.patient_attrs = Some(merged);
            Ok((format!("{} rule(s)", tree.risk_rules.len()), summary))
        }
        StepOp::EvaluateTree => {
            let lesions = state
                .lesions
                .as_ref()
                .ok_or_else(|| ExecError::State("evaluate_tree before segment_masses".into()))?;
            let patient_attrs = match &state.patient_attrs {
                Some(attrs) => attrs.clone(),
                None => patient_base_attrs(patient),
            };
            let mut outcomes = Vec::with_capacity(lesions.len());
            for lesion in lesions {
                let attrs = lesion.attributes.merged(&patient_attrs)?;
                let path = execute_tree(tree, &attrs)?;
                let severity = leaf_severity(tree, &path.leaf_id)?;
                outcomes.push(LesionOutcome {
                    lesion_id: lesion.lesion_id,
                    attributes: lesion.attributes.clone(),
                    recommendation: path.recommendation.clone(),
                    severity,
                    path,
                });
            }
            let summary = format!(
                "leaves {:?}",
                outcomes
                    .iter()
                    .map(|o| o.path.leaf_id.as_str())
                    .collect::<Vec<_>>()
            );
            state.outcomes = Some(outcomes);
            Ok((format!("{} lesion(s)", lesions.len()), summary))
        }
        StepOp::Aggregate => {
            let outcomes = state
                .outcomes
                .as_ref()
                .ok_or_else(|| ExecError::State("aggregate before evaluate_tree".into()))?;
            let aggregated = aggregate_recommendations(outcomes, tree)?;
            let summary = format!(
                "leaf {} severity {} ({})",
                aggregated.leaf_id, aggregated.severity, aggregated.recommendation
            );
            state.aggregated = Some(aggregated);
            Ok((format!("{} outcome(s)", outcomes.len()), summary))
        }
    }
}
