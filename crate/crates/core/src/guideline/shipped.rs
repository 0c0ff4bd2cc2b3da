//! Example guideline documents bundled with the crate, one per organ.

use super::{parse_guideline, GuidelineTree};

pub const LIVER_DOC: &str = include_str!("../../../../guidelines/liver.json");
pub const RENAL_DOC: &str = include_str!("../../../../guidelines/renal.json");
pub const PANCREAS_DOC: &str = include_str!("../../../../guidelines/pancreas.json");

pub fn liver() -> GuidelineTree {
    parse_guideline(LIVER_DOC).expect("bundled liver tree is valid")
}

pub fn renal() -> GuidelineTree {
    parse_guideline(RENAL_DOC).expect("bundled renal tree is valid")
}

pub fn pancreas() -> GuidelineTree {
    parse_guideline(PANCREAS_DOC).expect("bundled pancreas tree is valid")
}

/// All bundled trees in a fixed order.
pub fn all() -> Vec<GuidelineTree> {
    vec![liver(), renal(), pancreas()]
}

pub fn by_organ(organ: &str) -> Option<GuidelineTree> {
    match organ {
        "liver" => Some(liver()),
        "renal" => Some(renal()),
        "pancreas" => Some(pancreas()),
        _ => None,
    }
}
