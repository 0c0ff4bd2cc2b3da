//! Plan synthesis, validation, and refinement: turns a guideline tree plus a
//! base-function registry into an ordered executable plan, checks it against
//! the syntactic/semantic STOP criterion, and repairs rule violations.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basefn::{ProviderError, SegmentationParams, Unit};
use crate::guideline::{serialize_guideline, AttrType, GuidelineTree, Node, Producer};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no registered producer for attribute {attr:?}")]
    UnresolvableProducer { attr: String },
    #[error("unrepairable plan issue: {0}")]
    Unrepairable(PlanIssue),
    #[error("no valid plan after {iterations} iteration(s); last report had {} issue(s)", .report.issues.len())]
    MaxIterationsExceeded {
        iterations: usize,
        report: ValidationReport,
    },
    #[error("plan rejected: {} issue(s)", .0.issues.len())]
    ValidationFailed(ValidationReport),
    #[error("plan schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Result/value kinds a registered function can return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Real,
    Category,
    Boolean,
    Mask,
    LesionSet,
    AttributeMap,
    DecisionPath,
    CaseResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnKind {
    Segment,
    Measure,
    Classify,
    Patient,
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnType {
    #[serde(rename = "type")]
    pub value: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<Unit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSig {
    pub kind: FnKind,
    pub params: Vec<String>,
    pub returns: ReturnType,
}

/// Default HU windows used when synthesizing segmentation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDefaults {
    pub organ_window: (f64, f64),
    pub mass_window: (f64, f64),
    pub min_component_voxels: usize,
}

impl Default for SegmentationDefaults {
    fn default() -> Self {
        Self {
            organ_window: (0.0, 200.0),
            mass_window: (100.0, 200.0),
            min_component_voxels: 1,
        }
    }
}

impl SegmentationDefaults {
    pub fn organ_params(&self) -> SegmentationParams {
        SegmentationParams::new(
            self.organ_window.0,
            self.organ_window.1,
            self.min_component_voxels,
        )
        .expect("defaults form a valid window")
    }

    pub fn mass_params(&self) -> SegmentationParams {
        SegmentationParams::new(
            self.mass_window.0,
            self.mass_window.1,
            self.min_component_voxels,
        )
        .expect("defaults form a valid window")
    }
}

/// Registered base functions plus segmentation defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRegistry {
    pub functions: IndexMap<String, FunctionSig>,
    #[serde(default)]
    pub segmentation: SegmentationDefaults,
}

impl FunctionRegistry {
    pub fn function(&self, name: &str) -> Option<&FunctionSig> {
        self.functions.get(name)
    }

    pub fn has_kind(&self, kind: FnKind) -> bool {
        self.functions.values().any(|f| f.kind == kind)
    }

    pub fn to_manifest(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("registry always serializes");
        text.push('\n');
        text
    }

    pub fn from_manifest(text: &str) -> Result<Self, PlanError> {
        serde_json::from_str(text).map_err(|e| PlanError::Schema(e.to_string()))
    }
}

impl Default for FunctionRegistry {
    /// The built-in base functions.
    fn default() -> Self {
        let real = |unit| ReturnType {
            value: ValueKind::Real,
            unit: Some(unit),
        };
        let plain = |value| ReturnType { value, unit: None };
        let sig = |kind, params: &[&str], returns| FunctionSig {
            kind,
            params: params.iter().map(|p| p.to_string()).collect(),
            returns,
        };
        let functions: IndexMap<String, FunctionSig> = [
            (
                "segment_organ",
                sig(FnKind::Segment, &["volume", "params"], plain(ValueKind::Mask)),
            ),
            (
                "segment_masses",
                sig(
                    FnKind::Segment,
                    &["volume", "mask", "params"],
                    plain(ValueKind::LesionSet),
                ),
            ),
            ("feret", sig(FnKind::Measure, &["mask"], real(Unit::Mm))),
            (
                "equiv_sphere",
                sig(FnKind::Measure, &["mask"], real(Unit::Mm)),
            ),
            ("bbox", sig(FnKind::Measure, &["mask"], real(Unit::Mm))),
            (
                "mean_hu",
                sig(FnKind::Measure, &["volume", "mask"], real(Unit::Hu)),
            ),
            (
                "lesion_present",
                sig(FnKind::Measure, &["mask"], plain(ValueKind::Boolean)),
            ),
            (
                "classify_label",
                sig(
                    FnKind::Classify,
                    &["provider", "text", "labels"],
                    plain(ValueKind::Category),
                ),
            ),
            (
                "assess_patient",
                sig(
                    FnKind::Patient,
                    &["rules", "record"],
                    plain(ValueKind::AttributeMap),
                ),
            ),
            (
                "evaluate_tree",
                sig(
                    FnKind::Aggregate,
                    &["tree", "attrs"],
                    plain(ValueKind::DecisionPath),
                ),
            ),
            (
                "aggregate",
                sig(
                    FnKind::Aggregate,
                    &["tree", "results"],
                    plain(ValueKind::CaseResult),
                ),
            ),
        ]
        .into_iter()
        .map(|(name, sig)| (name.to_string(), sig))
        .collect();
        Self {
            functions,
            segmentation: SegmentationDefaults::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRef {
    pub organ: String,
    pub version: String,
}

/// One executable plan step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepOp {
    SegmentOrgan { params: SegmentationParams },
    SegmentMasses { params: SegmentationParams },
    MeasureEach { attr: String, method: String },
    ClassifyEach { attr: String, labels: Vec<String> },
    AssessPatient { attrs: Vec<String> },
    EvaluateTree,
    Aggregate,
}

impl StepOp {
    /// Canonical pipeline stage, used for ordering checks and repairs.
    fn stage(&self) -> u8 {
        match self {
            StepOp::SegmentOrgan { .. } => 0,
            StepOp::SegmentMasses { .. } => 1,
            StepOp::MeasureEach { .. } | StepOp::ClassifyEach { .. } => 2,
            StepOp::AssessPatient { .. } => 3,
            StepOp::EvaluateTree => 4,
            StepOp::Aggregate => 5,
        }
    }

    /// Attribute this step produces, if any.
    fn produces(&self) -> Option<&str> {
        match self {
            StepOp::MeasureEach { attr, .. } | StepOp::ClassifyEach { attr, .. } => Some(attr),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StepOp::SegmentOrgan { .. } => "segment_organ",
            StepOp::SegmentMasses { .. } => "segment_masses",
            StepOp::MeasureEach { .. } => "measure_each",
            StepOp::ClassifyEach { .. } => "classify_each",
            StepOp::AssessPatient { .. } => "assess_patient",
            StepOp::EvaluateTree => "evaluate_tree",
            StepOp::Aggregate => "aggregate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub id: String,
    #[serde(flatten)]
    pub op: StepOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub plan_id: String,
    pub tree_ref: TreeRef,
    pub steps: Vec<Step>,
}

impl Plan {
    pub fn to_document(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("plan always serializes");
        text.push('\n');
        text
    }

    pub fn from_document(text: &str) -> Result<Self, PlanError> {
        serde_json::from_str(text).map_err(|e| PlanError::Schema(e.to_string()))
    }
}

/// Validation rule identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanRule {
    UnknownFunction,
    UnknownAttribute,
    KindMismatch,
    ReturnMismatch,
    LabelsMismatch,
    DuplicateId,
    DuplicateStep,
    DuplicateProducer,
    MissingStep,
    Ordering,
    AttributeNotProduced,
    PatientAttrsIncomplete,
}

impl PlanRule {
    fn is_semantic(&self) -> bool {
        matches!(
            self,
            PlanRule::AttributeNotProduced | PlanRule::PatientAttrsIncomplete
        )
    }

    /// Rules the deterministic repair set can fix.
    fn is_repairable(&self) -> bool {
        !matches!(
            self,
            PlanRule::UnknownFunction
                | PlanRule::UnknownAttribute
                | PlanRule::KindMismatch
                | PlanRule::ReturnMismatch
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanIssue {
    pub step_id: Option<String>,
    pub attr: Option<String>,
    pub rule: PlanRule,
    pub message: String,
}

impl std::fmt::Display for PlanIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.rule)?;
        if let Some(step) = &self.step_id {
            write!(f, " at step {step}")?;
        }
        if let Some(attr) = &self.attr {
            write!(f, " (attribute {attr})")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// The STOP criterion: syntactic correctness and semantic validity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub syntactic_ok: bool,
    pub semantic_ok: bool,
    pub issues: Vec<PlanIssue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.syntactic_ok && self.semantic_ok
    }

    fn from_issues(issues: Vec<PlanIssue>) -> Self {
        Self {
            syntactic_ok: !issues.iter().any(|i| !i.rule.is_semantic()),
            semantic_ok: !issues.iter().any(|i| i.rule.is_semantic()),
            issues,
        }
    }
}

fn units_compatible(a: Option<Unit>, b: Option<Unit>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => Unit::convert(1.0, a, b).is_some(),
        (None, None) => true,
        _ => false,
    }
}

/// Deterministic draft: segmentation, one producer per manifest attribute in
/// manifest order, patient assessment, tree evaluation, aggregation.
pub fn synthesize_plan(
    tree: &GuidelineTree,
    registry: &FunctionRegistry,
) -> Result<Plan, PlanError> {
    let mut ops: Vec<StepOp> = vec![
        StepOp::SegmentOrgan {
            params: registry.segmentation.organ_params(),
        },
        StepOp::SegmentMasses {
            params: registry.segmentation.mass_params(),
        },
    ];

    let mut patient_attrs = Vec::new();
    for decl in &tree.attributes {
        match decl.producer {
            Producer::Measure => {
                let method = decl.method.clone().ok_or_else(|| {
                    PlanError::UnresolvableProducer {
                        attr: decl.name.clone(),
                    }
                })?;
                let resolvable = registry
                    .function(&method)
                    .is_some_and(|f| f.kind == FnKind::Measure);
                if !resolvable {
                    return Err(PlanError::UnresolvableProducer {
                        attr: decl.name.clone(),
                    });
                }
                ops.push(StepOp::MeasureEach {
                    attr: decl.name.clone(),
                    method,
                });
            }
            Producer::Classify => {
                if !registry.has_kind(FnKind::Classify) {
                    return Err(PlanError::UnresolvableProducer {
                        attr: decl.name.clone(),
                    });
                }
                ops.push(StepOp::ClassifyEach {
                    attr: decl.name.clone(),
                    labels: decl.categories.clone(),
                });
            }
            Producer::Patient => {
                if !registry.has_kind(FnKind::Patient) {
                    return Err(PlanError::UnresolvableProducer {
                        attr: decl.name.clone(),
                    });
                }
                patient_attrs.push(decl.name.clone());
            }
        }
    }
    if !patient_attrs.is_empty() {
        ops.push(StepOp::AssessPatient {
            attrs: patient_attrs,
        });
    }
    ops.push(StepOp::EvaluateTree);
    ops.push(StepOp::Aggregate);

    Ok(Plan {
        plan_id: format!("{}-{}-plan", tree.organ, tree.version()),
        tree_ref: TreeRef {
            organ: tree.organ.clone(),
            version: tree.version().to_string(),
        },
        steps: ops
            .into_iter()
            .enumerate()
            .map(|(n, op)| Step {
                id: format!("s{}", n + 1),
                op,
            })
            .collect(),
    })
}

/// Attribute names referenced by any node predicate.
fn referenced_attrs(tree: &GuidelineTree) -> Vec<String> {
    let mut attrs = Vec::new();
    for node in tree.nodes.values() {
        if let Node::Decision { predicate, .. } = node {
            predicate.referenced_attrs(&mut attrs);
        }
    }
    attrs.sort();
    attrs.dedup();
    attrs
}

/// Syntactic checks (registered functions, step multiplicity, ordering) and
/// semantic checks (every predicate attribute produced before tree
/// evaluation); the report is the STOP criterion input.
pub fn validate_plan(
    plan: &Plan,
    tree: &GuidelineTree,
    registry: &FunctionRegistry,
) -> ValidationReport {
    let mut issues: Vec<PlanIssue> = Vec::new();
    let mut push = |step_id: Option<&str>, attr: Option<&str>, rule: PlanRule, message: String| {
        issues.push(PlanIssue {
            step_id: step_id.map(str::to_string),
            attr: attr.map(str::to_string),
            rule,
            message,
        });
    };

    // unique step ids
    for (n, step) in plan.steps.iter().enumerate() {
        if plan.steps[..n].iter().any(|s| s.id == step.id) {
            push(
                Some(&step.id),
                None,
                PlanRule::DuplicateId,
                format!("step id {:?} appears more than once", step.id),
            );
        }
    }

    // per-step function resolution
    for step in &plan.steps {
        match &step.op {
            StepOp::MeasureEach { attr, method } => {
                match registry.function(method) {
                    None => push(
                        Some(&step.id),
                        Some(attr),
                        PlanRule::UnknownFunction,
                        format!("measure method {method:?} is not registered"),
                    ),
                    Some(sig) if sig.kind != FnKind::Measure => push(
                        Some(&step.id),
                        Some(attr),
                        PlanRule::KindMismatch,
                        format!("{method:?} is registered as {:?}, not measure", sig.kind),
                    ),
                    Some(sig) => match tree.attribute(attr) {
                        None => push(
                            Some(&step.id),
                            Some(attr),
                            PlanRule::UnknownAttribute,
                            format!("attribute {attr:?} is not in the tree manifest"),
                        ),
                        Some(decl) => {
                            if decl.producer != Producer::Measure {
                                push(
                                    Some(&step.id),
                                    Some(attr),
                                    PlanRule::KindMismatch,
                                    format!(
                                        "attribute {attr:?} is declared with producer {:?}",
                                        decl.producer
                                    ),
                                );
                            }
                            let type_ok = match decl.attr_type {
                                AttrType::Real => {
                                    sig.returns.value == ValueKind::Real
                                        && units_compatible(sig.returns.unit, decl.unit)
                                }
                                AttrType::Boolean => sig.returns.value == ValueKind::Boolean,
                                AttrType::Category => sig.returns.value == ValueKind::Category,
                            };
                            if !type_ok {
                                push(
                                    Some(&step.id),
                                    Some(attr),
                                    PlanRule::ReturnMismatch,
                                    format!(
                                        "{method:?} returns {:?} {:?}, attribute wants {:?} {:?}",
                                        sig.returns.value,
                                        sig.returns.unit,
                                        decl.attr_type,
                                        decl.unit
                                    ),
                                );
                            }
                        }
                    },
                }
            }
            StepOp::ClassifyEach { attr, labels } => {
                if !registry.has_kind(FnKind::Classify) {
                    push(
                        Some(&step.id),
                        Some(attr),
                        PlanRule::UnknownFunction,
                        "no classify-kind function is registered".to_string(),
                    );
                }
                match tree.attribute(attr) {
                    None => push(
                        Some(&step.id),
                        Some(attr),
                        PlanRule::UnknownAttribute,
                        format!("attribute {attr:?} is not in the tree manifest"),
                    ),
                    Some(decl) => {
                        if decl.producer != Producer::Classify {
                            push(
                                Some(&step.id),
                                Some(attr),
                                PlanRule::KindMismatch,
                                format!(
                                    "attribute {attr:?} is declared with producer {:?}",
                                    decl.producer
                                ),
                            );
                        }
                        let mut want: Vec<&str> =
                            decl.categories.iter().map(String::as_str).collect();
                        let mut got: Vec<&str> = labels.iter().map(String::as_str).collect();
                        want.sort_unstable();
                        got.sort_unstable();
                        if want != got {
                            push(
                                Some(&step.id),
                                Some(attr),
                                PlanRule::LabelsMismatch,
                                format!("labels {got:?} must equal declared categories {want:?}"),
                            );
                        }
                    }
                }
            }
            StepOp::AssessPatient { attrs } => {
                if !registry.has_kind(FnKind::Patient) {
                    push(
                        Some(&step.id),
                        None,
                        PlanRule::UnknownFunction,
                        "no patient-kind function is registered".to_string(),
                    );
                }
                for attr in attrs {
                    match tree.attribute(attr) {
                        None => push(
                            Some(&step.id),
                            Some(attr),
                            PlanRule::UnknownAttribute,
                            format!("attribute {attr:?} is not in the tree manifest"),
                        ),
                        Some(decl) if decl.producer != Producer::Patient => push(
                            Some(&step.id),
                            Some(attr),
                            PlanRule::KindMismatch,
                            format!(
                                "attribute {attr:?} is declared with producer {:?}",
                                decl.producer
                            ),
                        ),
                        Some(_) => {}
                    }
                }
            }
            StepOp::SegmentOrgan { .. }
            | StepOp::SegmentMasses { .. }
            | StepOp::EvaluateTree
            | StepOp::Aggregate => {}
        }
    }

    // singleton steps: exactly one of each
    for (kind_name, count) in [
        ("segment_organ", 0usize),
        ("segment_masses", 0),
        ("evaluate_tree", 0),
        ("aggregate", 0),
    ]
    .map(|(k, _)| {
        (
            k,
            plan.steps.iter().filter(|s| s.op.kind_name() == k).count(),
        )
    }) {
        if count == 0 {
            push(
                None,
                None,
                PlanRule::MissingStep,
                format!("plan lacks a {kind_name} step"),
            );
        } else if count > 1 {
            push(
                None,
                None,
                PlanRule::DuplicateStep,
                format!("plan has {count} {kind_name} steps, expected 1"),
            );
        }
    }

    // duplicate producers
    let mut produced: Vec<&str> = Vec::new();
    for step in &plan.steps {
        if let Some(attr) = step.op.produces() {
            if produced.contains(&attr) {
                push(
                    Some(&step.id),
                    Some(attr),
                    PlanRule::DuplicateProducer,
                    format!("attribute {attr:?} is produced more than once"),
                );
            }
            produced.push(attr);
        }
    }

    // stage ordering
    let mut last_stage = 0u8;
    for step in &plan.steps {
        let stage = step.op.stage();
        if stage < last_stage {
            push(
                Some(&step.id),
                None,
                PlanRule::Ordering,
                format!(
                    "{} step appears after a later pipeline stage",
                    step.op.kind_name()
                ),
            );
        }
        last_stage = last_stage.max(stage);
    }
    if let Some(last) = plan.steps.last() {
        if !matches!(last.op, StepOp::Aggregate) {
            push(
                Some(&last.id),
                None,
                PlanRule::Ordering,
                "aggregate must be the final step".to_string(),
            );
        }
    }

    // semantic: every predicate attribute produced before tree evaluation
    let eval_pos = plan
        .steps
        .iter()
        .position(|s| matches!(s.op, StepOp::EvaluateTree));
    let mut available: Vec<&str> = Vec::new();
    let upto = eval_pos.unwrap_or(plan.steps.len());
    for step in &plan.steps[..upto] {
        match &step.op {
            StepOp::MeasureEach { attr, .. } | StepOp::ClassifyEach { attr, .. } => {
                available.push(attr)
            }
            StepOp::AssessPatient { attrs } => available.extend(attrs.iter().map(String::as_str)),
            _ => {}
        }
    }
    for attr in referenced_attrs(tree) {
        if !available.contains(&attr.as_str()) {
            push(
                None,
                Some(&attr),
                PlanRule::AttributeNotProduced,
                format!("attribute {attr:?} is tested by the tree but never produced"),
            );
        }
    }

    ValidationReport::from_issues(issues)
}

/// Applies the deterministic repair rules: reinsert missing producers in
/// manifest order, restore canonical stage ordering, deduplicate singleton
/// steps and producers, and fix label sets. Never removes a correct step.
pub fn refine_plan(
    plan: &Plan,
    report: &ValidationReport,
    tree: &GuidelineTree,
    registry: &FunctionRegistry,
) -> Result<Plan, PlanError> {
    if report.ok() {
        return Ok(plan.clone());
    }
    if let Some(issue) = report.issues.iter().find(|i| !i.rule.is_repairable()) {
        return Err(PlanError::Unrepairable(issue.clone()));
    }

    // keep first occurrence of singleton steps and producers
    let mut steps: Vec<Step> = Vec::new();
    let mut seen_singletons: Vec<&'static str> = Vec::new();
    let mut seen_attrs: Vec<String> = Vec::new();
    for step in &plan.steps {
        let op = &step.op;
        let singleton = matches!(
            op,
            StepOp::SegmentOrgan { .. }
                | StepOp::SegmentMasses { .. }
                | StepOp::AssessPatient { .. }
                | StepOp::EvaluateTree
                | StepOp::Aggregate
        );
        if singleton {
            if seen_singletons.contains(&op.kind_name()) {
                continue;
            }
            seen_singletons.push(op.kind_name());
        }
        if let Some(attr) = op.produces() {
            if seen_attrs.iter().any(|a| a == attr) {
                continue;
            }
            seen_attrs.push(attr.to_string());
        }
        steps.push(step.clone());
    }

    // fix classify label sets in place
    for step in &mut steps {
        if let StepOp::ClassifyEach { attr, labels } = &mut step.op {
            if let Some(decl) = tree.attribute(attr) {
                if labels != &decl.categories {
                    *labels = decl.categories.clone();
                }
            }
        }
    }

    // insert missing singleton steps
    let have = |steps: &[Step], name: &str| steps.iter().any(|s| s.op.kind_name() == name);
    if !have(&steps, "segment_organ") {
        steps.push(Step {
            id: String::new(),
            op: StepOp::SegmentOrgan {
                params: registry.segmentation.organ_params(),
            },
        });
    }
    if !have(&steps, "segment_masses") {
        steps.push(Step {
            id: String::new(),
            op: StepOp::SegmentMasses {
                params: registry.segmentation.mass_params(),
            },
        });
    }
    if !have(&steps, "evaluate_tree") {
        steps.push(Step {
            id: String::new(),
            op: StepOp::EvaluateTree,
        });
    }
    if !have(&steps, "aggregate") {
        steps.push(Step {
            id: String::new(),
            op: StepOp::Aggregate,
        });
    }

    // reinsert missing producers for attributes the tree actually tests
    let needed = referenced_attrs(tree);
    let mut missing_patient: Vec<String> = Vec::new();
    for decl in &tree.attributes {
        if !needed.contains(&decl.name) {
            continue;
        }
        let already = steps.iter().any(|s| match &s.op {
            StepOp::MeasureEach { attr, .. } | StepOp::ClassifyEach { attr, .. } => {
                attr == &decl.name
            }
            StepOp::AssessPatient { attrs } => attrs.contains(&decl.name),
            _ => false,
        });
        if already {
            continue;
        }
        match decl.producer {
            Producer::Measure => {
                let method = decl.method.clone().ok_or(PlanError::UnresolvableProducer {
                    attr: decl.name.clone(),
                })?;
                steps.push(Step {
                    id: String::new(),
                    op: StepOp::MeasureEach {
                        attr: decl.name.clone(),
                        method,
                    },
                });
            }
            Producer::Classify => steps.push(Step {
                id: String::new(),
                op: StepOp::ClassifyEach {
                    attr: decl.name.clone(),
                    labels: decl.categories.clone(),
                },
            }),
            Producer::Patient => missing_patient.push(decl.name.clone()),
        }
    }
    if !missing_patient.is_empty() {
        let mut extended = false;
        for step in &mut steps {
            if let StepOp::AssessPatient { attrs } = &mut step.op {
                attrs.extend(missing_patient.iter().cloned());
                extended = true;
                break;
            }
        }
        if !extended {
            steps.push(Step {
                id: String::new(),
                op: StepOp::AssessPatient {
                    attrs: missing_patient,
                },
            });
        }
    }

    // canonical order: stable sort keeps surviving steps' relative order
    steps.sort_by_key(|s| s.op.stage());

    // renumber only where ids are missing or duplicated
    let mut used: Vec<String> = Vec::new();
    let mut next = 1usize;
    for step in &mut steps {
        if step.id.is_empty() || used.contains(&step.id) {
            while used.iter().any(|u| u == &format!("s{next}")) {
                next += 1;
            }
            step.id = format!("s{next}");
        }
        used.push(step.id.clone());
    }

    Ok(Plan {
        plan_id: plan.plan_id.clone(),
        tree_ref: plan.tree_ref.clone(),
        steps,
    })
}

/// Synthesize-validate-refine until the STOP criterion passes or the
/// iteration budget is spent.
pub fn plan_loop(
    tree: &GuidelineTree,
    registry: &FunctionRegistry,
    max_iter: usize,
) -> Result<Plan, PlanError> {
    let draft = synthesize_plan(tree, registry)?;
    plan_loop_from(draft, tree, registry, max_iter)
}

/// As [`plan_loop`], starting from an externally supplied draft.
pub fn plan_loop_from(
    draft: Plan,
    tree: &GuidelineTree,
    registry: &FunctionRegistry,
    max_iter: usize,
) -> Result<Plan, PlanError> {
    assert!(max_iter >= 1, "max_iter must be >= 1");
    let mut plan = draft;
    for iteration in 1..=max_iter {
        let report = validate_plan(&plan, tree, registry);
        if report.ok() {
            return Ok(plan);
        }
        if iteration == max_iter {
            return Err(PlanError::MaxIterationsExceeded {
                iterations: max_iter,
                report,
            });
        }
        plan = refine_plan(&plan, &report, tree, registry)?;
    }
    unreachable!("loop always returns")
}

/// Remote plan-producing service; the returned document must still pass
/// [`validate_plan`] before acceptance.
pub trait PlanService {
    fn generate_plan(
        &self,
        tree_document: &str,
        registry_manifest: &str,
    ) -> Result<String, ProviderError>;
}

pub fn external_plan(
    tree: &GuidelineTree,
    registry: &FunctionRegistry,
    client: &dyn PlanService,
) -> Result<Plan, PlanError> {
    let body = client.generate_plan(&serialize_guideline(tree), &registry.to_manifest())?;
    let plan = Plan::from_document(&body)?;
    let report = validate_plan(&plan, tree, registry);
    if !report.ok() {
        return Err(PlanError::ValidationFailed(report));
    }
    Ok(plan)
}
