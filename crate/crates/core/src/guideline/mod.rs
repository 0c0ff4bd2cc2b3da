//! Parsed-guideline data model: typed decision trees with a boolean predicate
//! grammar, an attribute manifest, patient-level risk rules, structural
//! validation, path enumeration, and path-to-text rendering.

mod schema;
pub mod shipped;

pub use schema::{parse_guideline, parse_guideline_unchecked, serialize_guideline};

use indexmap::IndexMap;
use thiserror::Error;

use crate::basefn::Unit;

pub type NodeId = String;

#[derive(Debug, Error)]
pub enum GuidelineError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("graph{}: {message}", node_suffix(.node))]
    Graph {
        node: Option<NodeId>,
        message: String,
    },
    #[error("predicate{}: {message}", node_suffix(.node))]
    Predicate {
        node: Option<NodeId>,
        message: String,
    },
    #[error("path does not belong to tree: {0}")]
    PathMismatch(String),
}

fn node_suffix(node: &Option<NodeId>) -> String {
    match node {
        Some(id) => format!(" at node {id:?}"),
        None => String::new(),
    }
}

/// Attribute value type as declared in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrType {
    Real,
    Category,
    Boolean,
}

/// Which plan step produces an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Producer {
    Measure,
    Classify,
    Patient,
}

/// One entry of the tree's attribute manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDecl {
    pub name: String,
    pub attr_type: AttrType,
    pub unit: Option<Unit>,
    pub producer: Producer,
    pub method: Option<String>,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeMetadata {
    pub source_title: Option<String>,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOp::Le => "le",
            CmpOp::Lt => "lt",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
            CmpOp::Eq => "eq",
        }
    }
}

/// Right-hand side of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Real { value: f64, unit: Unit },
    Category(String),
    Bool(bool),
}

/// Boolean or categorical test over attribute values.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Compare {
        attr: String,
        op: CmpOp,
        value: Literal,
    },
    /// Interval test; defaults to half-open (lo, hi].
    InRange {
        attr: String,
        lo: f64,
        hi: f64,
        unit: Unit,
        lo_closed: bool,
        hi_closed: bool,
    },
    /// Branches by the attribute's category value.
    CategoryOf { attr: String },
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    /// Attribute names referenced anywhere in this predicate.
    pub fn referenced_attrs(&self, out: &mut Vec<String>) {
        match self {
            Predicate::Compare { attr, .. }
            | Predicate::InRange { attr, .. }
            | Predicate::CategoryOf { attr } => out.push(attr.clone()),
            Predicate::And(children) | Predicate::Or(children) => {
                for c in children {
                    c.referenced_attrs(out);
                }
            }
            Predicate::Not(child) => child.referenced_attrs(out),
        }
    }

    /// True when the predicate evaluates to "true"/"false" rather than a
    /// category label.
    pub fn is_boolean(&self) -> bool {
        !matches!(self, Predicate::CategoryOf { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Decision {
        predicate: Predicate,
        branches: IndexMap<String, NodeId>,
        display_text: String,
    },
    Leaf {
        recommendation: String,
        severity: u32,
        display_text: String,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// Ordered first-match-wins mapping from patient state to a category.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRule {
    pub output_attr: String,
    pub cases: Vec<RuleCase>,
    pub default: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleCase {
    pub condition: Predicate,
    pub category: String,
}

/// A parsed guideline: one decision tree plus its attribute manifest and
/// patient risk rules.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidelineTree {
    pub organ: String,
    pub metadata: TreeMetadata,
    pub attributes: Vec<AttributeDecl>,
    pub risk_rules: Vec<PatientRule>,
    pub root_id: NodeId,
    /// Leaf cited by aggregation when a case has no lesions.
    pub no_lesion_leaf: Option<NodeId>,
    pub nodes: IndexMap<NodeId, Node>,
}

impl GuidelineTree {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.values().filter(|n| n.is_leaf()).count()
    }

    pub fn version(&self) -> &str {
        &self.metadata.version
    }
}

/// One root-to-leaf trajectory ending in a recommendation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecisionPath {
    pub steps: Vec<PathStep>,
    pub leaf_id: NodeId,
    pub recommendation: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PathStep {
    pub node_id: NodeId,
    pub branch: String,
}

/// Validation rule identifiers; stable across releases so callers can match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueRule {
    RootMissing,
    RootReferenced,
    DanglingBranch,
    SharedNode,
    Cycle,
    Unreachable,
    FewBranches,
    BranchLabels,
    UndeclaredAttribute,
    TypeMismatch,
    MalformedPredicate,
    NoLesionLeaf,
    RiskRule,
    AttributeDecl,
    EmptyRecommendation,
}

impl IssueRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            IssueRule::RootMissing => "root missing",
            IssueRule::RootReferenced => "root referenced as branch target",
            IssueRule::DanglingBranch => "dangling branch",
            IssueRule::SharedNode => "node shared by multiple branches",
            IssueRule::Cycle => "cycle",
            IssueRule::Unreachable => "unreachable node",
            IssueRule::FewBranches => "fewer than 2 branches",
            IssueRule::BranchLabels => "branch labels do not match predicate",
            IssueRule::UndeclaredAttribute => "undeclared attribute",
            IssueRule::TypeMismatch => "attribute type mismatch",
            IssueRule::MalformedPredicate => "malformed predicate",
            IssueRule::NoLesionLeaf => "invalid no-lesion leaf",
            IssueRule::RiskRule => "invalid risk rule",
            IssueRule::AttributeDecl => "invalid attribute declaration",
            IssueRule::EmptyRecommendation => "empty recommendation",
        }
    }

    fn is_graph(&self) -> bool {
        matches!(
            self,
            IssueRule::RootMissing
                | IssueRule::RootReferenced
                | IssueRule::DanglingBranch
                | IssueRule::SharedNode
                | IssueRule::Cycle
                | IssueRule::Unreachable
                | IssueRule::FewBranches
                | IssueRule::BranchLabels
                | IssueRule::NoLesionLeaf
                | IssueRule::EmptyRecommendation
        )
    }
}

/// One violated invariant found by [`validate_tree`].
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub node_id: Option<NodeId>,
    pub rule: IssueRule,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.node_id {
            Some(id) => write!(f, "{} [{}]: {}", id, self.rule.as_str(), self.message),
            None => write!(f, "[{}]: {}", self.rule.as_str(), self.message),
        }
    }
}

pub(crate) fn issue_to_error(issue: &Issue) -> GuidelineError {
    if issue.rule.is_graph() {
        GuidelineError::Graph {
            node: issue.node_id.clone(),
            message: format!("{} ({})", issue.message, issue.rule.as_str()),
        }
    } else {
        GuidelineError::Predicate {
            node: issue.node_id.clone(),
            message: format!("{} ({})", issue.message, issue.rule.as_str()),
        }
    }
}

fn units_compatible(a: Unit, b: Unit) -> bool {
    Unit::convert(1.0, a, b).is_some()
}

fn check_predicate(
    tree: &GuidelineTree,
    node_id: Option<&NodeId>,
    pred: &Predicate,
    nested: bool,
    issues: &mut Vec<Issue>,
) {
    let issue = |rule: IssueRule, message: String, issues: &mut Vec<Issue>| {
        issues.push(Issue {
            node_id: node_id.cloned(),
            rule,
            message,
        });
    };
    let check_attr = |attr: &str, issues: &mut Vec<Issue>| -> Option<AttributeDecl> {
        if attr.is_empty() {
            issue(
                IssueRule::MalformedPredicate,
                "empty attribute name".into(),
                issues,
            );
            return None;
        }
        match tree.attribute(attr) {
            Some(decl) => Some(decl.clone()),
            None => {
                issue(
                    IssueRule::UndeclaredAttribute,
                    format!("attribute {attr:?} is not in the manifest"),
                    issues,
                );
                None
            }
        }
    };

    match pred {
        Predicate::Compare { attr, op, value } => {
            let Some(decl) = check_attr(attr, issues) else {
                return;
            };
            match (op, value) {
                (CmpOp::Eq, Literal::Category(c)) => {
                    if decl.attr_type != AttrType::Category {
                        issue(
                            IssueRule::TypeMismatch,
                            format!("{attr:?} is not a category attribute"),
                            issues,
                        );
                    } else if !decl.categories.contains(c) {
                        issue(
                            IssueRule::TypeMismatch,
                            format!("{c:?} is not a declared category of {attr:?}"),
                            issues,
                        );
                    }
                }
                (CmpOp::Eq, Literal::Bool(_)) => {
                    if decl.attr_type != AttrType::Boolean {
                        issue(
                            IssueRule::TypeMismatch,
                            format!("{attr:?} is not a boolean attribute"),
                            issues,
                        );
                    }
                }
                (_, Literal::Real { unit, .. }) => {
                    if decl.attr_type != AttrType::Real {
                        issue(
                            IssueRule::TypeMismatch,
                            format!("{attr:?} is not a real attribute"),
                            issues,
                        );
                    } else if let Some(decl_unit) = decl.unit {
                        if !units_compatible(*unit, decl_unit) {
                            issue(
                                IssueRule::TypeMismatch,
                                format!(
                                    "unit {unit} is incompatible with {attr:?} declared in {decl_unit}"
                                ),
                                issues,
                            );
                        }
                    }
                }
                (op, lit) => {
                    issue(
                        IssueRule::TypeMismatch,
                        format!("operator {:?} cannot apply to literal {lit:?}", op.as_str()),
                        issues,
                    );
                }
            }
        }
        Predicate::InRange {
            attr, lo, hi, unit, ..
        } => {
            if !matches!(lo.partial_cmp(hi), Some(std::cmp::Ordering::Less)) {
                issue(
                    IssueRule::MalformedPredicate,
                    format!("in_range requires lo < hi, got [{lo}, {hi}]"),
                    issues,
                );
            }
            if let Some(decl) = check_attr(attr, issues) {
                if decl.attr_type != AttrType::Real {
                    issue(
                        IssueRule::TypeMismatch,
                        format!("{attr:?} is not a real attribute"),
                        issues,
                    );
                } else if let Some(decl_unit) = decl.unit {
                    if !units_compatible(*unit, decl_unit) {
                        issue(
                            IssueRule::TypeMismatch,
                            format!(
                                "unit {unit} is incompatible with {attr:?} declared in {decl_unit}"
                            ),
                            issues,
                        );
                    }
                }
            }
        }
        Predicate::CategoryOf { attr } => {
            if nested {
                issue(
                    IssueRule::MalformedPredicate,
                    "category_of cannot nest inside boolean combinators".into(),
                    issues,
                );
            }
            if let Some(decl) = check_attr(attr, issues) {
                if decl.attr_type != AttrType::Category {
                    issue(
                        IssueRule::TypeMismatch,
                        format!("{attr:?} is not a category attribute"),
                        issues,
                    );
                }
            }
        }
        Predicate::And(children) | Predicate::Or(children) => {
            if children.len() < 2 {
                issue(
                    IssueRule::MalformedPredicate,
                    "and/or require at least 2 children".into(),
                    issues,
                );
            }
            for c in children {
                check_predicate(tree, node_id, c, true, issues);
            }
        }
        Predicate::Not(child) => check_predicate(tree, node_id, child, true, issues),
    }
}

/// Checks every structural invariant; an empty result means the tree is valid.
pub fn validate_tree(tree: &GuidelineTree) -> Vec<Issue> {
    let mut issues = Vec::new();

    // attribute manifest
    for (n, decl) in tree.attributes.iter().enumerate() {
        let mut bad = |message: String| {
            issues.push(Issue {
                node_id: None,
                rule: IssueRule::AttributeDecl,
                message,
            })
        };
        if decl.name.is_empty() {
            bad("attribute with empty name".into());
        }
        if tree.attributes[..n].iter().any(|d| d.name == decl.name) {
            bad(format!("duplicate attribute {:?}", decl.name));
        }
        match decl.attr_type {
            AttrType::Real => {
                if decl.unit.is_none() {
                    bad(format!("real attribute {:?} needs a unit", decl.name));
                }
            }
            AttrType::Category => {
                if decl.categories.is_empty() {
                    bad(format!(
                        "category attribute {:?} needs declared categories",
                        decl.name
                    ));
                }
            }
            AttrType::Boolean => {}
        }
        if decl.producer == Producer::Measure && decl.method.is_none() {
            bad(format!(
                "measure attribute {:?} needs a method",
                decl.name
            ));
        }
    }

    // graph shape
    if tree.node(&tree.root_id).is_none() {
        issues.push(Issue {
            node_id: Some(tree.root_id.clone()),
            rule: IssueRule::RootMissing,
            message: format!("root {:?} is not a node", tree.root_id),
        });
        return issues;
    }

    let mut indegree: IndexMap<&str, usize> = tree.nodes.keys().map(|k| (k.as_str(), 0)).collect();
    for (id, node) in &tree.nodes {
        if let Node::Decision { branches, .. } = node {
            for target in branches.values() {
                match indegree.get_mut(target.as_str()) {
                    Some(d) => *d += 1,
                    None => issues.push(Issue {
                        node_id: Some(id.clone()),
                        rule: IssueRule::DanglingBranch,
                        message: format!("branch target {target:?} does not exist"),
                    }),
                }
            }
        }
    }
    for (id, d) in &indegree {
        if *id == tree.root_id {
            if *d > 0 {
                issues.push(Issue {
                    node_id: Some(tree.root_id.clone()),
                    rule: IssueRule::RootReferenced,
                    message: "root must not be a branch target".into(),
                });
            }
        } else if *d > 1 {
            issues.push(Issue {
                node_id: Some((*id).to_string()),
                rule: IssueRule::SharedNode,
                message: format!("node {id:?} has {d} incoming branches"),
            });
        }
    }

    // reachability and cycles via depth-first search
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unvisited,
        InProgress,
        Done,
    }
    fn dfs(
        tree: &GuidelineTree,
        id: &str,
        marks: &mut IndexMap<String, Mark>,
        issues: &mut Vec<Issue>,
    ) {
        marks.insert(id.to_string(), Mark::InProgress);
        if let Some(Node::Decision { branches, .. }) = tree.node(id) {
            for target in branches.values() {
                if tree.node(target).is_none() {
                    continue; // dangling already reported
                }
                match marks.get(target).copied().unwrap_or(Mark::Unvisited) {
                    Mark::InProgress => issues.push(Issue {
                        node_id: Some(target.clone()),
                        rule: IssueRule::Cycle,
                        message: format!("cycle through {target:?}"),
                    }),
                    Mark::Unvisited => dfs(tree, target, marks, issues),
                    Mark::Done => {}
                }
            }
        }
        marks.insert(id.to_string(), Mark::Done);
    }
    let mut marks: IndexMap<String, Mark> = IndexMap::new();
    dfs(tree, &tree.root_id, &mut marks, &mut issues);
    for id in tree.nodes.keys() {
        if !marks.contains_key(id.as_str()) {
            issues.push(Issue {
                node_id: Some(id.clone()),
                rule: IssueRule::Unreachable,
                message: format!("node {id:?} is unreachable from root"),
            });
        }
    }

    // per-node checks
    for (id, node) in &tree.nodes {
        match node {
            Node::Leaf { recommendation, .. } => {
                if recommendation.is_empty() {
                    issues.push(Issue {
                        node_id: Some(id.clone()),
                        rule: IssueRule::EmptyRecommendation,
                        message: "leaf has an empty recommendation".into(),
                    });
                }
            }
            Node::Decision {
                predicate,
                branches,
                ..
            } => {
                if branches.len() < 2 {
                    issues.push(Issue {
                        node_id: Some(id.clone()),
                        rule: IssueRule::FewBranches,
                        message: format!("decision has {} branch(es)", branches.len()),
                    });
                }
                check_predicate(tree, Some(id), predicate, false, &mut issues);
                if predicate.is_boolean() {
                    let mut labels: Vec<&str> = branches.keys().map(String::as_str).collect();
                    labels.sort_unstable();
                    if labels != ["false", "true"] {
                        issues.push(Issue {
                            node_id: Some(id.clone()),
                            rule: IssueRule::BranchLabels,
                            message: "boolean predicate requires exactly {true,false} branches"
                                .into(),
                        });
                    }
                } else if let Predicate::CategoryOf { attr } = predicate {
                    if let Some(decl) = tree.attribute(attr) {
                        let mut want: Vec<&str> =
                            decl.categories.iter().map(String::as_str).collect();
                        let mut got: Vec<&str> = branches.keys().map(String::as_str).collect();
                        want.sort_unstable();
                        got.sort_unstable();
                        if want != got {
                            issues.push(Issue {
                                node_id: Some(id.clone()),
                                rule: IssueRule::BranchLabels,
                                message: format!(
                                    "branches {got:?} must cover the declared categories {want:?}"
                                ),
                            });
                        }
                    }
                }
            }
        }
    }

    // designated no-lesion leaf
    if let Some(id) = &tree.no_lesion_leaf {
        match tree.node(id) {
            Some(node) if node.is_leaf() => {}
            Some(_) => issues.push(Issue {
                node_id: Some(id.clone()),
                rule: IssueRule::NoLesionLeaf,
                message: format!("no_lesion_leaf {id:?} is not a leaf"),
            }),
            None => issues.push(Issue {
                node_id: Some(id.clone()),
                rule: IssueRule::NoLesionLeaf,
                message: format!("no_lesion_leaf {id:?} does not exist"),
            }),
        }
    }

    // risk rules
    for rule in &tree.risk_rules {
        let decl = tree.attribute(&rule.output_attr);
        match decl {
            None => issues.push(Issue {
                node_id: None,
                rule: IssueRule::RiskRule,
                message: format!("output attribute {:?} is not declared", rule.output_attr),
            }),
            Some(decl) => {
                if decl.producer != Producer::Patient || decl.attr_type != AttrType::Category {
                    issues.push(Issue {
                        node_id: None,
                        rule: IssueRule::RiskRule,
                        message: format!(
                            "output attribute {:?} must be a patient-producer category",
                            rule.output_attr
                        ),
                    });
                } else {
                    for case in &rule.cases {
                        if !decl.categories.contains(&case.category) {
                            issues.push(Issue {
                                node_id: None,
                                rule: IssueRule::RiskRule,
                                message: format!(
                                    "case category {:?} is not declared for {:?}",
                                    case.category, rule.output_attr
                                ),
                            });
                        }
                    }
                    if !decl.categories.contains(&rule.default) {
                        issues.push(Issue {
                            node_id: None,
                            rule: IssueRule::RiskRule,
                            message: format!(
                                "default category {:?} is not declared for {:?}",
                                rule.default, rule.output_attr
                            ),
                        });
                    }
                }
            }
        }
        for case in &rule.cases {
            check_predicate(tree, None, &case.condition, true, &mut issues);
        }
    }

    issues
}

/// Depth-first path enumeration, branches in document order: exactly one path
/// per leaf, deterministically ordered.
pub fn enumerate_paths(tree: &GuidelineTree) -> Vec<DecisionPath> {
    let mut paths = Vec::new();
    let mut steps: Vec<PathStep> = Vec::new();
    walk(tree, &tree.root_id, &mut steps, &mut paths, 0);
    paths
}

fn walk(
    tree: &GuidelineTree,
    id: &NodeId,
    steps: &mut Vec<PathStep>,
    paths: &mut Vec<DecisionPath>,
    depth: usize,
) {
    if depth > tree.nodes.len() {
        return; // malformed tree; validate_tree reports the cycle
    }
    match tree.node(id) {
        None => {}
        Some(Node::Leaf { recommendation, .. }) => paths.push(DecisionPath {
            steps: steps.clone(),
            leaf_id: id.clone(),
            recommendation: recommendation.clone(),
        }),
        Some(Node::Decision { branches, .. }) => {
            for (label, target) in branches {
                steps.push(PathStep {
                    node_id: id.clone(),
                    branch: label.clone(),
                });
                walk(tree, target, steps, paths, depth + 1);
                steps.pop();
            }
        }
    }
}

/// Verifies the path is a connected root-to-leaf walk of this tree.
pub fn validate_path(tree: &GuidelineTree, path: &DecisionPath) -> Result<(), GuidelineError> {
    let mut current = &tree.root_id;
    for step in &path.steps {
        if &step.node_id != current {
            return Err(GuidelineError::PathMismatch(format!(
                "step at {:?} does not continue the walk from {:?}",
                step.node_id, current
            )));
        }
        match tree.node(current) {
            Some(Node::Decision { branches, .. }) => match branches.get(&step.branch) {
                Some(next) => current = next,
                None => {
                    return Err(GuidelineError::PathMismatch(format!(
                        "node {current:?} has no branch {:?}",
                        step.branch
                    )))
                }
            },
            _ => {
                return Err(GuidelineError::PathMismatch(format!(
                    "step node {current:?} is not a decision node"
                )))
            }
        }
    }
    match tree.node(current) {
        Some(Node::Leaf { recommendation, .. })
            if *current == path.leaf_id && *recommendation == path.recommendation =>
        {
            Ok(())
        }
        Some(Node::Leaf { .. }) => Err(GuidelineError::PathMismatch(format!(
            "walk ends at {current:?}, path claims leaf {:?}",
            path.leaf_id
        ))),
        _ => Err(GuidelineError::PathMismatch(format!(
            "walk ends at non-leaf {current:?}"
        ))),
    }
}

/// Renders a path as `text -> branch; ...; recommendation`.
pub fn path_text(tree: &GuidelineTree, path: &DecisionPath) -> Result<String, GuidelineError> {
    validate_path(tree, path)?;
    let mut parts = Vec::with_capacity(path.steps.len() + 1);
    for step in &path.steps {
        let Some(Node::Decision { display_text, .. }) = tree.node(&step.node_id) else {
            unreachable!("validate_path checked every step");
        };
        parts.push(format!("{display_text} -> {}", step.branch));
    }
    parts.push(path.recommendation.clone());
    Ok(parts.join("; "))
}
