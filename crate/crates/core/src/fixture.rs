//! The hand-built four-leaf inference engine used as a reference fixture.
//!
//! ```text
//! duration < 605.5
//! ├─ month in {5,8,10}      -> NO         "1 - 5"
//! ├─ month in {3,6,9,12}    -> YES        "1 - 6"
//! └─ other months           -> UNDEFINED
//! duration >= 605.5         -> YES        "1 - 3"
//! ```

use crate::cart::{ClassCounts, Node, NodeKind, Outcome, Split, Tree};
use crate::dataset::{Schema, DURATION, MONTH};
use crate::rules::{extract_rules, RuleSet};

pub const DURATION_CUT: f64 = 605.5;
pub const NO_MONTHS: [i64; 3] = [5, 8, 10];
pub const YES_MONTHS: [i64; 4] = [3, 6, 9, 12];
pub const OPEN_MONTHS: [i64; 5] = [1, 2, 4, 7, 11];

/// A customer routed to the `"1 - 5"` leaf.
pub const SAMPLE_CUSTOMER: [i64; 16] = [41, 7, 3, 2, 0, 270, 1, 0, 1, 5, 5, 222, 1, -1, 0, 1];

fn leaf(outcome: Outcome, tag: Option<&str>) -> Node {
    Node {
        counts: ClassCounts::default(),
        kind: NodeKind::Leaf { outcome, tag: tag.map(str::to_string) },
    }
}

fn internal(split: Split, left: usize, right: usize) -> Node {
    Node { counts: ClassCounts::default(), kind: NodeKind::Internal { split, left, right } }
}

fn others(excluded: &[i64]) -> Vec<i64> {
    (1..=12).filter(|m| !excluded.contains(m)).collect()
}

/// The fixture tree over the bank schema. Node counts are empty; call
/// [`Tree::refit_counts`] to attach training support.
pub fn engine_tree() -> Tree {
    let nodes = vec![
        internal(Split::below(DURATION, DURATION_CUT), 1, 6),
        internal(Split::subset(MONTH, NO_MONTHS, others(&NO_MONTHS)), 2, 3),
        leaf(Outcome::No, Some("1 - 5")),
        internal(Split::subset(MONTH, YES_MONTHS, OPEN_MONTHS), 4, 5),
        leaf(Outcome::Yes, Some("1 - 6")),
        leaf(Outcome::Undefined, None),
        leaf(Outcome::Yes, Some("1 - 3")),
    ];
    Tree::from_nodes(Schema::bank(), nodes).expect("fixture tree is well formed")
}

pub fn engine_rules() -> RuleSet {
    extract_rules(&engine_tree())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;

    #[test]
    fn sample_customer_lands_in_no_leaf() {
        let v = engine_rules().infer(&SAMPLE_CUSTOMER).unwrap();
        assert_eq!(v.label, Label::No);
        assert_eq!(v.rule_id, "1 - 5");
    }

    #[test]
    fn month_partition_is_complete() {
        let mut all: Vec<i64> = NO_MONTHS.iter().chain(&YES_MONTHS).chain(&OPEN_MONTHS).copied().collect();
        all.sort();
        assert_eq!(all, (1..=12).collect::<Vec<_>>());
    }
}
