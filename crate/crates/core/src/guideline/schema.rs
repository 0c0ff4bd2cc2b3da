//! JSON document schema for guideline trees: the format the parser accepts
//! and the canonical form the serializer emits.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::basefn::Unit;

use super::{
    issue_to_error, validate_tree, AttrType, AttributeDecl, CmpOp, GuidelineTree, Literal, Node,
    PatientRule, Predicate, Producer, RuleCase, TreeMetadata,
};

#[derive(Debug, Serialize, Deserialize)]
struct TreeDoc {
    organ: String,
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_title: Option<String>,
    attributes: Vec<AttributeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    risk_rules: Vec<RiskRuleDoc>,
    root: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    no_lesion_leaf: Option<String>,
    nodes: IndexMap<String, NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AttributeDoc {
    name: String,
    #[serde(rename = "type")]
    attr_type: AttrType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<Unit>,
    producer: Producer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    categories: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RiskRuleDoc {
    output_attr: String,
    cases: Vec<RuleCaseDoc>,
    default: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleCaseDoc {
    condition: PredicateDoc,
    category: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeDoc {
    Decision {
        predicate: PredicateDoc,
        branches: IndexMap<String, String>,
        text: String,
    },
    Leaf {
        recommendation: String,
        severity: u32,
        text: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum LiteralDoc {
    Bool(bool),
    Real(f64),
    Category(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum PredicateDoc {
    Le(CompareDoc),
    Lt(CompareDoc),
    Gt(CompareDoc),
    Ge(CompareDoc),
    Eq(CompareDoc),
    InRange {
        attr: String,
        lo: f64,
        hi: f64,
        unit: Unit,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo_closed: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi_closed: Option<bool>,
    },
    CategoryOf {
        attr: String,
    },
    And {
        args: Vec<PredicateDoc>,
    },
    Or {
        args: Vec<PredicateDoc>,
    },
    Not {
        arg: Box<PredicateDoc>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct CompareDoc {
    attr: String,
    value: LiteralDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<Unit>,
}

fn compare_to_model(op: CmpOp, doc: CompareDoc) -> Result<Predicate, String> {
    let value = match doc.value {
        LiteralDoc::Bool(b) => Literal::Bool(b),
        LiteralDoc::Category(c) => Literal::Category(c),
        LiteralDoc::Real(value) => {
            let unit = doc
                .unit
                .ok_or_else(|| format!("comparison on {:?}: real value needs a unit", doc.attr))?;
            Literal::Real { value, unit }
        }
    };
    Ok(Predicate::Compare {
        attr: doc.attr,
        op,
        value,
    })
}

fn predicate_to_model(doc: PredicateDoc) -> Result<Predicate, String> {
    Ok(match doc {
        PredicateDoc::Le(c) => compare_to_model(CmpOp::Le, c)?,
        PredicateDoc::Lt(c) => compare_to_model(CmpOp::Lt, c)?,
        PredicateDoc::Gt(c) => compare_to_model(CmpOp::Gt, c)?,
        PredicateDoc::Ge(c) => compare_to_model(CmpOp::Ge, c)?,
        PredicateDoc::Eq(c) => compare_to_model(CmpOp::Eq, c)?,
        PredicateDoc::InRange {
            attr,
            lo,
            hi,
            unit,
            lo_closed,
            hi_closed,
        } => Predicate::InRange {
            attr,
            lo,
            hi,
            unit,
            // default interval shape is half-open (lo, hi]
            lo_closed: lo_closed.unwrap_or(false),
            hi_closed: hi_closed.unwrap_or(true),
        },
        PredicateDoc::CategoryOf { attr } => Predicate::CategoryOf { attr },
        PredicateDoc::And { args } => Predicate::And(
            args.into_iter()
                .map(predicate_to_model)
                .collect::<Result<_, _>>()?,
        ),
        PredicateDoc::Or { args } => Predicate::Or(
            args.into_iter()
                .map(predicate_to_model)
                .collect::<Result<_, _>>()?,
        ),
        PredicateDoc::Not { arg } => Predicate::Not(Box::new(predicate_to_model(*arg)?)),
    })
}

fn compare_to_doc(attr: &str, value: &Literal) -> CompareDoc {
    match value {
        Literal::Bool(b) => CompareDoc {
            attr: attr.to_string(),
            value: LiteralDoc::Bool(*b),
            unit: None,
        },
        Literal::Category(c) => CompareDoc {
            attr: attr.to_string(),
            value: LiteralDoc::Category(c.clone()),
            unit: None,
        },
        Literal::Real { value, unit } => CompareDoc {
            attr: attr.to_string(),
            value: LiteralDoc::Real(*value),
            unit: Some(*unit),
        },
    }
}

fn predicate_to_doc(pred: &Predicate) -> PredicateDoc {
    match pred {
        Predicate::Compare { attr, op, value } => {
            let doc = compare_to_doc(attr, value);
            match op {
                CmpOp::Le => PredicateDoc::Le(doc),
                CmpOp::Lt => PredicateDoc::Lt(doc),
                CmpOp::Gt => PredicateDoc::Gt(doc),
                CmpOp::Ge => PredicateDoc::Ge(doc),
                CmpOp::Eq => PredicateDoc::Eq(doc),
            }
        }
        Predicate::InRange {
            attr,
            lo,
            hi,
            unit,
            lo_closed,
            hi_closed,
        } => PredicateDoc::InRange {
            attr: attr.clone(),
            lo: *lo,
            hi: *hi,
            unit: *unit,
            lo_closed: (*lo_closed).then_some(true),
            hi_closed: if *hi_closed { None } else { Some(false) },
        },
        Predicate::CategoryOf { attr } => PredicateDoc::CategoryOf { attr: attr.clone() },
        Predicate::And(children) => PredicateDoc::And {
            args: children.iter().map(predicate_to_doc).collect(),
        },
        Predicate::Or(children) => PredicateDoc::Or {
            args: children.iter().map(predicate_to_doc).collect(),
        },
        Predicate::Not(child) => PredicateDoc::Not {
            arg: Box::new(predicate_to_doc(child)),
        },
    }
}

fn doc_to_tree(doc: TreeDoc) -> Result<GuidelineTree, super::GuidelineError> {
    let predicate_err = |message: String| super::GuidelineError::Predicate {
        node: None,
        message,
    };
    let mut nodes = IndexMap::with_capacity(doc.nodes.len());
    for (id, node) in doc.nodes {
        let node = match node {
            NodeDoc::Leaf {
                recommendation,
                severity,
                text,
            } => Node::Leaf {
                recommendation,
                severity,
                display_text: text,
            },
            NodeDoc::Decision {
                predicate,
                branches,
                text,
            } => Node::Decision {
                predicate: predicate_to_model(predicate).map_err(|m| {
                    super::GuidelineError::Predicate {
                        node: Some(id.clone()),
                        message: m,
                    }
                })?,
                branches,
                display_text: text,
            },
        };
        nodes.insert(id, node);
    }

    let attributes = doc
        .attributes
        .into_iter()
        .map(|a| AttributeDecl {
            name: a.name,
            attr_type: a.attr_type,
            unit: a.unit,
            producer: a.producer,
            method: a.method,
            categories: a.categories,
        })
        .collect();

    let risk_rules = doc
        .risk_rules
        .into_iter()
        .map(|r| {
            Ok(PatientRule {
                output_attr: r.output_attr,
                cases: r
                    .cases
                    .into_iter()
                    .map(|c| {
                        Ok(RuleCase {
                            condition: predicate_to_model(c.condition).map_err(&predicate_err)?,
                            category: c.category,
                        })
                    })
                    .collect::<Result<_, super::GuidelineError>>()?,
                default: r.default,
            })
        })
        .collect::<Result<_, super::GuidelineError>>()?;

    Ok(GuidelineTree {
        organ: doc.organ,
        metadata: TreeMetadata {
            source_title: doc.source_title,
            version: doc.version,
        },
        attributes,
        risk_rules,
        root_id: doc.root,
        no_lesion_leaf: doc.no_lesion_leaf,
        nodes,
    })
}

fn tree_to_doc(tree: &GuidelineTree) -> TreeDoc {
    TreeDoc {
        organ: tree.organ.clone(),
        version: tree.metadata.version.clone(),
        source_title: tree.metadata.source_title.clone(),
        attributes: tree
            .attributes
            .iter()
            .map(|a| AttributeDoc {
                name: a.name.clone(),
                attr_type: a.attr_type,
                unit: a.unit,
                producer: a.producer,
                method: a.method.clone(),
                categories: a.categories.clone(),
            })
            .collect(),
        risk_rules: tree
            .risk_rules
            .iter()
            .map(|r| RiskRuleDoc {
                output_attr: r.output_attr.clone(),
                cases: r
                    .cases
                    .iter()
                    .map(|c| RuleCaseDoc {
                        condition: predicate_to_doc(&c.condition),
                        category: c.category.clone(),
                    })
                    .collect(),
                default: r.default.clone(),
            })
            .collect(),
        root: tree.root_id.clone(),
        no_lesion_leaf: tree.no_lesion_leaf.clone(),
        nodes: tree
            .nodes
            .iter()
            .map(|(id, node)| {
                let doc = match node {
                    Node::Leaf {
                        recommendation,
                        severity,
                        display_text,
                    } => NodeDoc::Leaf {
                        recommendation: recommendation.clone(),
                        severity: *severity,
                        text: display_text.clone(),
                    },
                    Node::Decision {
                        predicate,
                        branches,
                        display_text,
                    } => NodeDoc::Decision {
                        predicate: predicate_to_doc(predicate),
                        branches: branches.clone(),
                        text: display_text.clone(),
                    },
                };
                (id.clone(), doc)
            })
            .collect(),
    }
}

/// Parses and fully validates a guideline document.
pub fn parse_guideline(document: &str) -> Result<GuidelineTree, super::GuidelineError> {
    let tree = parse_guideline_unchecked(document)?;
    let issues = validate_tree(&tree);
    if let Some(first) = issues.first() {
        return Err(issue_to_error(first));
    }
    Ok(tree)
}

/// Schema-level parse without invariant validation, for callers that want
/// the full issue list from [`validate_tree`].
pub fn parse_guideline_unchecked(document: &str) -> Result<GuidelineTree, super::GuidelineError> {
    let doc: TreeDoc =
        serde_json::from_str(document).map_err(|e| super::GuidelineError::Schema(e.to_string()))?;
    doc_to_tree(doc)
}

/// Emits the canonical document form; `parse_guideline` accepts its output.
pub fn serialize_guideline(tree: &GuidelineTree) -> String {
    let doc = tree_to_doc(tree);
    let mut text = serde_json::to_string_pretty(&doc).expect("tree document always serializes");
    text.push('\n');
    text
}
