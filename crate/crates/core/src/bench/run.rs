//! Benchmark execution modes: the full pipeline, the measurement-ablated
//! variant, the path-similarity baseline, and the seeded random baseline,
//! plus the deterministic report-to-path matcher.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::basefn::{
    classify_label, cosine_similarity, AttributeMap, EmbeddingProvider, TypedValue, Unit,
};
use crate::executor::{
    aggregate_recommendations, execute_plan, execute_tree, ExecProviders, LesionOutcome,
};
use crate::guideline::{
    enumerate_paths, path_text, AttrType, AttributeDecl, CmpOp, DecisionPath, GuidelineTree,
    Literal, Node, Predicate, Producer,
};
use crate::planner::{plan_loop, FunctionRegistry};

use super::{
    classify_attr, compute_metrics, diameter_attr, oracle_patient_attrs, BenchCase, BenchError,
    EvalResult, ReportFacts,
};

/// Benchmark execution variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Ablated,
    Baseline,
    Random,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "ablated" => Ok(Mode::Ablated),
            "baseline" => Ok(Mode::Baseline),
            "random" => Ok(Mode::Random),
            other => Err(format!(
                "unknown mode {other:?} (expected full, ablated, baseline, or random)"
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Ablated => "ablated",
            Mode::Baseline => "baseline",
            Mode::Random => "random",
        })
    }
}

/// Where the patient background text goes in the baseline similarity query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BaselineOptions {
    /// False (default): background is appended to each path text. True:
    /// background is appended to the findings query instead.
    pub background_in_query: bool,
}

/// How ablated mode labels quantized categories.
#[derive(Debug, Clone, Copy)]
pub enum AblationLabeler {
    /// Cosine argmax of the report text against the bin labels.
    Embedding,
    /// Always the true bin; models a perfect labeler.
    Oracle,
    /// True bin flipped to a uniformly chosen other bin at the given rate,
    /// deterministically per (seed, case, lesion, attribute).
    Noisy { flip_rate: f64, seed: u64 },
}

impl AblationLabeler {
    fn pick(
        &self,
        provider: &dyn EmbeddingProvider,
        subject: &str,
        key: &str,
        labels: &[String],
        truth_idx: usize,
    ) -> Result<usize, BenchError> {
        debug_assert!(truth_idx < labels.len());
        match self {
            AblationLabeler::Oracle => Ok(truth_idx),
            AblationLabeler::Embedding => {
                let (label, _) = classify_label(provider, subject, labels)?;
                Ok(labels.iter().position(|l| *l == label).expect("label from set"))
            }
            AblationLabeler::Noisy { flip_rate, seed } => {
                if labels.len() < 2 {
                    return Ok(truth_idx);
                }
                let mut hasher = Sha256::new();
                hasher.update(seed.to_le_bytes());
                hasher.update(key.as_bytes());
                let digest = hasher.finalize();
                let roll = u64::from_le_bytes(digest[0..8].try_into().unwrap());
                let unit = roll as f64 / u64::MAX as f64;
                if unit >= *flip_rate {
                    return Ok(truth_idx);
                }
                let shift = u64::from_le_bytes(digest[8..16].try_into().unwrap());
                let offset = 1 + (shift as usize % (labels.len() - 1));
                Ok((truth_idx + offset) % labels.len())
            }
        }
    }
}

/// Services and knobs for a benchmark run.
pub struct BenchProviders<'a> {
    pub embedding: &'a dyn EmbeddingProvider,
    pub ablation: AblationLabeler,
    pub baseline: BaselineOptions,
    pub random_seed: u64,
}

impl<'a> BenchProviders<'a> {
    pub fn new(embedding: &'a dyn EmbeddingProvider) -> Self {
        Self {
            embedding,
            ablation: AblationLabeler::Embedding,
            baseline: BaselineOptions::default(),
            random_seed: 0,
        }
    }
}

/// 1 / path count: the accuracy of uniformly guessing a path.
pub fn random_baseline_accuracy(tree: &GuidelineTree) -> f64 {
    1.0 / enumerate_paths(tree).len() as f64
}

/// Real-valued thresholds the tree tests on `attr`, in the attribute's unit,
/// sorted ascending and deduplicated.
pub fn attr_thresholds(tree: &GuidelineTree, attr: &str, attr_unit: Unit) -> Vec<f64> {
    let mut out = Vec::new();
    fn collect(pred: &Predicate, attr: &str, attr_unit: Unit, out: &mut Vec<f64>) {
        match pred {
            Predicate::Compare {
                attr: a,
                op,
                value: Literal::Real { value, unit },
            } if a == attr && *op != CmpOp::Eq => {
                if let Some(v) = Unit::convert(*value, *unit, attr_unit) {
                    out.push(v);
                }
            }
            Predicate::InRange {
                attr: a,
                lo,
                hi,
                unit,
                ..
            } if a == attr => {
                for v in [lo, hi] {
                    if let Some(v) = Unit::convert(*v, *unit, attr_unit) {
                        out.push(v);
                    }
                }
            }
            Predicate::And(children) | Predicate::Or(children) => {
                for c in children {
                    collect(c, attr, attr_unit, out);
                }
            }
            Predicate::Not(child) => collect(child, attr, attr_unit, out),
            _ => {}
        }
    }
    for node in tree.nodes.values() {
        if let Node::Decision { predicate, .. } = node {
            collect(predicate, attr, attr_unit, &mut out);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}

/// Quantization bins between consecutive tree thresholds, matching the
/// `(lo, hi]` comparison semantics, with an interior representative value
/// per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
    pub reps: Vec<f64>,
}

impl Bins {
    pub fn index_of(&self, value: f64) -> usize {
        for (n, &edge) in self.edges.iter().enumerate() {
            if value <= edge {
                return n;
            }
        }
        self.edges.len()
    }
}

/// Bins for a real attribute derived from the tree's thresholds; `None` when
/// the tree never compares the attribute.
pub fn attr_bins(tree: &GuidelineTree, decl: &AttributeDecl) -> Option<Bins> {
    let unit = decl.unit?;
    let edges = attr_thresholds(tree, &decl.name, unit);
    if edges.is_empty() {
        return None;
    }
    let unit_str = unit.as_str();
    let mut labels = Vec::with_capacity(edges.len() + 1);
    let mut reps = Vec::with_capacity(edges.len() + 1);
    let first_gap = if edges.len() > 1 {
        (edges[1] - edges[0]) / 2.0
    } else {
        edges[0] / 2.0
    };
    labels.push(format!("{} up to {} {}", decl.name, edges[0], unit_str));
    reps.push(edges[0] - first_gap);
    for w in edges.windows(2) {
        labels.push(format!("{} {} to {} {}", decl.name, w[0], w[1], unit_str));
        reps.push((w[0] + w[1]) / 2.0);
    }
    let last = *edges.last().expect("nonempty");
    let last_gap = if edges.len() > 1 {
        (last - edges[edges.len() - 2]) / 2.0
    } else {
        last / 2.0
    };
    labels.push(format!("{} over {} {}", decl.name, last, unit_str));
    reps.push(last + last_gap);
    Some(Bins { edges, labels, reps })
}

fn candidate_attr_sets(
    tree: &GuidelineTree,
    facts: &ReportFacts,
) -> Result<Vec<AttributeMap>, BenchError> {
    let patient_attrs = oracle_patient_attrs(tree, &facts.patient)?;
    let classify = classify_attr(tree);
    let diameter = diameter_attr(tree);
    let mean_hu = tree
        .attributes
        .iter()
        .find(|a| a.method.as_deref() == Some("mean_hu"));
    let presence = tree
        .attributes
        .iter()
        .find(|a| a.method.as_deref() == Some("lesion_present"));

    if facts.lesions.is_empty() {
        let mut attrs = AttributeMap::new();
        if let Some(decl) = presence {
            attrs.set(decl.name.clone(), TypedValue::boolean(false))?;
        }
        return Ok(vec![attrs.merged(&patient_attrs)?]);
    }

    let mut candidates = Vec::with_capacity(facts.lesions.len());
    for lesion in &facts.lesions {
        let mut attrs = AttributeMap::new();
        if let Some(decl) = presence {
            attrs.set(decl.name.clone(), TypedValue::boolean(true))?;
        }
        if let Some(decl) = diameter {
            let unit = decl.unit.unwrap_or(Unit::Cm);
            if let Some(v) = Unit::convert(lesion.diameter_cm, Unit::Cm, unit) {
                attrs.set(decl.name.clone(), TypedValue::real(v, unit))?;
            }
        }
        if let Some(decl) = mean_hu {
            attrs.set(
                decl.name.clone(),
                TypedValue::real(lesion.intensity_hu, Unit::Hu),
            )?;
        }
        if let Some(decl) = classify {
            attrs.set(
                decl.name.clone(),
                TypedValue::category(lesion.category.clone()),
            )?;
        }
        candidates.push(attrs.merged(&patient_attrs)?);
    }
    Ok(candidates)
}

/// Does every step of the path evaluate to its taken branch under `attrs`?
/// Steps over unstated attributes are neutral: they neither confirm nor
/// reject the path.
fn path_consistent(tree: &GuidelineTree, path: &DecisionPath, attrs: &AttributeMap) -> bool {
    for step in &path.steps {
        let Some(Node::Decision { predicate, .. }) = tree.node(&step.node_id) else {
            return false;
        };
        match crate::executor::evaluate_predicate(predicate, attrs) {
            Ok(label) => {
                if label != step.branch {
                    return false;
                }
            }
            Err(crate::executor::ExecError::MissingAttribute { .. }) => {}
            Err(_) => return false,
        }
    }
    true
}

/// Deterministic replacement for report-driven path selection: candidate
/// attribute sets are tried most-significant finding first; within one
/// candidate, a step contradicting the stated facts rejects the path, and
/// the first fully consistent path in enumeration order wins.
pub fn match_report_to_path(
    tree: &GuidelineTree,
    facts: &ReportFacts,
) -> Result<DecisionPath, BenchError> {
    let paths = enumerate_paths(tree);
    for candidate in candidate_attr_sets(tree, facts)? {
        for path in &paths {
            if path_consistent(tree, path, &candidate) {
                return Ok(path.clone());
            }
        }
    }
    Err(BenchError::NoConsistentPath)
}

/// Embeds the findings text and every rendered path (with the patient
/// background appended per the options) and returns the argmax-cosine path,
/// ties to the first in enumeration order.
pub fn baseline_path_similarity(
    tree: &GuidelineTree,
    facts_text: &str,
    patient_text: &str,
    provider: &dyn EmbeddingProvider,
    options: BaselineOptions,
) -> Result<DecisionPath, BenchError> {
    let paths = enumerate_paths(tree);
    let query = if options.background_in_query {
        format!("{facts_text} {patient_text}")
    } else {
        facts_text.to_string()
    };
    let query_vec = provider.embed(&query)?;
    let mut best: Option<(usize, f64)> = None;
    for (n, path) in paths.iter().enumerate() {
        let rendered = path_text(tree, path)?;
        let side = if options.background_in_query {
            rendered
        } else {
            format!("{rendered} {patient_text}")
        };
        let score = cosine_similarity(&query_vec, &provider.embed(&side)?)?;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((n, score));
        }
    }
    let (idx, _) = best.ok_or(BenchError::NoConsistentPath)?;
    Ok(paths[idx].clone())
}

/// Result of a benchmark run plus any per-case failures (counted as wrong).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub eval: EvalResult,
    pub case_errors: Vec<(String, String)>,
}

const ERROR_LEAF: &str = "__error__";

fn error_path() -> DecisionPath {
    DecisionPath {
        steps: vec![],
        leaf_id: ERROR_LEAF.to_string(),
        recommendation: String::new(),
    }
}

fn ablated_case(
    tree: &GuidelineTree,
    case: &BenchCase,
    providers: &BenchProviders,
) -> Result<DecisionPath, BenchError> {
    let patient_attrs = oracle_patient_attrs(tree, &case.facts.patient)?;
    let mut outcomes: Vec<LesionOutcome> = Vec::with_capacity(case.facts.lesions.len());
    for lesion in &case.facts.lesions {
        let mut attrs = AttributeMap::new();
        let key_base = format!("{}/{}", case.case_id, lesion.lesion_id);
        for decl in &tree.attributes {
            if decl.producer != Producer::Measure {
                continue;
            }
            let key = format!("{key_base}/{}", decl.name);
            match decl.attr_type {
                AttrType::Boolean => {
                    let labels = vec!["false".to_string(), "true".to_string()];
                    let idx = providers.ablation.pick(
                        providers.embedding,
                        &case.facts.text,
                        &key,
                        &labels,
                        1,
                    )?;
                    attrs.set(decl.name.clone(), TypedValue::boolean(labels[idx] == "true"))?;
                }
                AttrType::Real => {
                    let Some(bins) = attr_bins(tree, decl) else {
                        continue; // never compared by the tree
                    };
                    let unit = decl.unit.expect("bins require a unit");
                    let nominal = match decl.method.as_deref() {
                        Some("mean_hu") => Unit::convert(lesion.intensity_hu, Unit::Hu, unit),
                        _ => Unit::convert(lesion.diameter_cm, Unit::Cm, unit),
                    }
                    .ok_or_else(|| {
                        BenchError::Spec(format!("attribute {:?} unit mismatch", decl.name))
                    })?;
                    let truth_idx = bins.index_of(nominal);
                    let idx = providers.ablation.pick(
                        providers.embedding,
                        &case.facts.text,
                        &key,
                        &bins.labels,
                        truth_idx,
                    )?;
                    attrs.set(decl.name.clone(), TypedValue::real(bins.reps[idx], unit))?;
                }
                AttrType::Category => {
                    let truth_idx = decl
                        .categories
                        .iter()
                        .position(|c| *c == lesion.category)
                        .unwrap_or(0);
                    let idx = providers.ablation.pick(
                        providers.embedding,
                        &case.facts.text,
                        &key,
                        &decl.categories,
                        truth_idx,
                    )?;
                    attrs.set(
                        decl.name.clone(),
                        TypedValue::category(decl.categories[idx].clone()),
                    )?;
                }
            }
        }
        if let Some(decl) = classify_attr(tree) {
            let truth_idx = decl
                .categories
                .iter()
                .position(|c| *c == lesion.category)
                .unwrap_or(0);
            let key = format!("{key_base}/{}", decl.name);
            let idx = providers.ablation.pick(
                providers.embedding,
                &case.facts.text,
                &key,
                &decl.categories,
                truth_idx,
            )?;
            attrs.set(
                decl.name.clone(),
                TypedValue::category(decl.categories[idx].clone()),
            )?;
        }
        let full = attrs.merged(&patient_attrs)?;
        let path = execute_tree(tree, &full)?;
        let severity = match tree.node(&path.leaf_id) {
            Some(Node::Leaf { severity, .. }) => *severity,
            _ => 0,
        };
        outcomes.push(LesionOutcome {
            lesion_id: lesion.lesion_id,
            attributes: attrs,
            recommendation: path.recommendation.clone(),
            severity,
            path,
        });
    }
    Ok(aggregate_recommendations(&outcomes, tree)?.path)
}

/// Runs every case under the chosen mode and scores the aggregated
/// predictions against the oracle paths. Per-case failures are counted as
/// wrong and reported alongside the metrics.
pub fn run_benchmark(
    tree: &GuidelineTree,
    cases: &[BenchCase],
    mode: Mode,
    providers: &BenchProviders,
) -> Result<RunOutcome, BenchError> {
    if cases.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let registry = FunctionRegistry::default();
    let plan = match mode {
        Mode::Full => Some(plan_loop(tree, &registry, 3)?),
        _ => None,
    };
    let paths = enumerate_paths(tree);

    let mut pred_leaves = Vec::with_capacity(cases.len());
    let mut pred_paths = Vec::with_capacity(cases.len());
    let mut truth_leaves = Vec::with_capacity(cases.len());
    let mut truth_paths = Vec::with_capacity(cases.len());
    let mut case_errors = Vec::new();

    for (case_idx, case) in cases.iter().enumerate() {
        let predicted: Result<DecisionPath, BenchError> = match mode {
            Mode::Full => {
                let plan = plan.as_ref().expect("built above");
                execute_plan(
                    plan,
                    tree,
                    &case.volume,
                    &case.spec.patient,
                    &ExecProviders {
                        embedding: providers.embedding,
                    },
                )
                .map(|r| r.aggregated.path)
                .map_err(BenchError::from)
            }
            Mode::Ablated => ablated_case(tree, case, providers),
            Mode::Baseline => baseline_path_similarity(
                tree,
                &case.facts.text,
                &case.facts.patient_text(),
                providers.embedding,
                providers.baseline,
            ),
            Mode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(providers.random_seed);
                rng.set_stream(case_idx as u64 + 1);
                Ok(paths[rng.random_range(0..paths.len())].clone())
            }
        };
        let path = match predicted {
            Ok(path) => path,
            Err(e) => {
                case_errors.push((case.case_id.clone(), e.to_string()));
                error_path()
            }
        };
        pred_leaves.push(path.leaf_id.clone());
        pred_paths.push(path);
        truth_leaves.push(case.oracle.aggregated.leaf_id.clone());
        truth_paths.push(case.oracle.aggregated.path.clone());
    }

    let eval = compute_metrics(&pred_leaves, &truth_leaves, &pred_paths, &truth_paths)?;
    Ok(RunOutcome { eval, case_errors })
}
