//! Advising from partial evidence.
//!
//! The tree is walked with a per-attribute feasible domain built from the
//! evidence. Where the evidence forces a branch the segment is *decided*;
//! where both branches stay open the walk forks and every later segment is
//! *suggested*. Reachable YES leaves become ranked strategies over the
//! actionable attributes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{NodeKind, Outcome, Side, Split, SplitRule, Tree};
use crate::dataset::{AttributeKind, DataError, Dataset, Evidence, Label, Predicate, Schema};
use crate::rules::{simplify, Condition, Op};

const TEMPLATE: &str = include_str!("../resources/suggestion.txt");

#[derive(Debug, Error)]
pub enum AdvisorError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidencePanel {
    pub evidence: Evidence,
    /// Attributes the campaign can choose.
    pub actionable: BTreeSet<usize>,
    /// Actionable attributes whose value only exists after the contact; their
    /// conditions are left out of support counts.
    pub prospective: BTreeSet<usize>,
}

impl EvidencePanel {
    /// Panel with the schema's actionable set and `duration` as the only
    /// prospective attribute.
    pub fn new(evidence: Evidence, schema: &Schema) -> Self {
        EvidencePanel {
            evidence,
            actionable: schema.actionable_positions(),
            prospective: schema.position("duration").into_iter().collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Decided,
    Suggested,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSegment {
    pub node: usize,
    /// Branch taken out of `node`; `None` on the final leaf.
    pub branch: Option<Side>,
    pub status: Status,
}

/// Root-to-leaf path of a fully specified record, all decided.
pub fn decision_path(tree: &Tree, x: &[i64]) -> Vec<PathSegment> {
    tree.route(x)
        .path
        .into_iter()
        .map(|(node, branch)| PathSegment { node, branch, status: Status::Decided })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafPath {
    pub leaf: usize,
    pub rule_id: String,
    pub outcome: Outcome,
    pub segments: Vec<PathSegment>,
    /// Branch conditions at forks, i.e. where both sides were open.
    pub choices: Vec<Condition>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Reachability {
    pub paths: Vec<LeafPath>,
}

impl Reachability {
    pub fn leaves(&self) -> BTreeSet<usize> {
        self.paths.iter().map(|p| p.leaf).collect()
    }
}

/// Values an attribute may still take: an integer interval, optionally
/// restricted to a finite set.
#[derive(Clone, Debug)]
struct Domain {
    lo: Option<i64>,
    hi: Option<i64>,
    set: Option<BTreeSet<i64>>,
}

fn ceil(x: f64) -> i64 {
    x.ceil() as i64
}

impl Domain {
    fn of(kind: &AttributeKind) -> Self {
        let set = match kind {
            AttributeKind::Numeric => None,
            AttributeKind::Flag => Some([0, 1].into()),
            AttributeKind::Categorical { labels } => Some((1..=labels.len() as i64).collect()),
        };
        Domain { lo: None, hi: None, set }
    }

    fn raise(&mut self, lo: i64) {
        self.lo = Some(self.lo.map_or(lo, |l| l.max(lo)));
    }

    fn lower(&mut self, hi: i64) {
        self.hi = Some(self.hi.map_or(hi, |h| h.min(hi)));
    }

    fn keep(&mut self, allowed: &BTreeSet<i64>) {
        self.set = Some(match &self.set {
            Some(s) => s.intersection(allowed).copied().collect(),
            None => allowed.clone(),
        });
    }

    fn admits(&self, v: i64) -> bool {
        self.lo.is_none_or(|l| v >= l) && self.hi.is_none_or(|h| v <= h)
    }

    fn feasible(&self) -> bool {
        match &self.set {
            Some(s) => s.iter().any(|&v| self.admits(v)),
            None => match (self.lo, self.hi) {
                (Some(l), Some(h)) => l <= h,
                _ => true,
            },
        }
    }

    fn restrict(&mut self, p: &Predicate) {
        match p {
            Predicate::Equals(v) => self.keep(&[*v].into()),
            Predicate::OneOf(s) => self.keep(s),
            Predicate::Range { min, below } => {
                if let Some(m) = min {
                    self.raise(ceil(*m));
                }
                if let Some(b) = below {
                    self.lower(ceil(*b) - 1);
                }
            }
        }
    }

    fn branch(&mut self, split: &Split, side: Side) {
        match &split.rule {
            SplitRule::Below { threshold } => match side {
                Side::Left => self.lower(ceil(*threshold) - 1),
                Side::Right => self.raise(ceil(*threshold)),
            },
            SplitRule::Subset { left, right, unseen } => match &self.set {
                Some(s) => {
                    let kept: BTreeSet<i64> = s.iter().copied().filter(|&c| split.side(c) == side).collect();
                    self.set = Some(kept);
                }
                None => {
                    if side != *unseen {
                        self.keep(if side == Side::Left { left } else { right });
                    }
                }
            },
        }
    }
}

fn initial_domains(schema: &Schema, evidence: &Evidence) -> Vec<Domain> {
    let mut doms: Vec<Domain> = schema.attributes.iter().map(|a| Domain::of(&a.kind)).collect();
    for (&pos, p) in &evidence.constraints {
        if let Some(d) = doms.get_mut(pos) {
            d.restrict(p);
        }
    }
    doms
}

/// Every leaf some completion of the evidence can reach, with its path.
pub fn reachable(tree: &Tree, panel: &EvidencePanel) -> Reachability {
    let doms = initial_domains(&tree.schema, &panel.evidence);
    let mut out = Reachability::default();
    if doms.iter().all(Domain::feasible) {
        walk(tree, 0, doms, Vec::new(), Vec::new(), false, &mut out);
    }
    out
}

fn walk(
    tree: &Tree,
    id: usize,
    doms: Vec<Domain>,
    mut segments: Vec<PathSegment>,
    choices: Vec<Condition>,
    forked: bool,
    out: &mut Reachability,
) {
    let status = if forked { Status::Suggested } else { Status::Decided };
    match &tree.node(id).kind {
        NodeKind::Leaf { outcome, .. } => {
            segments.push(PathSegment { node: id, branch: None, status });
            out.paths.push(LeafPath { leaf: id, rule_id: tree.leaf_id(id), outcome: *outcome, segments, choices });
        }
        NodeKind::Internal { split, left, right } => {
            let open: Vec<(Side, usize, Vec<Domain>)> = [(Side::Left, *left), (Side::Right, *right)]
                .into_iter()
                .filter_map(|(side, child)| {
                    let mut d = doms.clone();
                    d[split.attribute].branch(split, side);
                    d[split.attribute].feasible().then_some((side, child, d))
                })
                .collect();
            let fork = open.len() == 2;
            let status = if forked || fork { Status::Suggested } else { status };
            for (side, child, d) in open {
                let mut segs = segments.clone();
                segs.push(PathSegment { node: id, branch: Some(side), status });
                let mut ch = choices.clone();
                if fork {
                    ch.push(Condition::of_branch(split, side, &tree.schema));
                }
                walk(tree, child, d, segs, ch, forked || fork, out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub rule_id: String,
    pub leaf: usize,
    /// What the campaign should do, over actionable attributes only.
    pub conditions: Vec<Condition>,
    /// Open tests on fixed customer traits that the path also requires.
    pub assumptions: Vec<Condition>,
    pub outcome: Outcome,
    pub support_count: usize,
    pub leaf_yes_rate: f64,
    pub score: f64,
    /// Attributes among `conditions` excluded from `support_count`.
    pub prospective: Vec<usize>,
    pub segments: Vec<PathSegment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    /// Records matching the evidence alone.
    pub evidence_matches: usize,
    pub suggestions: Vec<Suggestion>,
}

/// Intersection of an evidence predicate with a condition, as one predicate.
fn conjoin(p: Option<&Predicate>, c: &Condition) -> Predicate {
    let as_pred = match &c.op {
        Op::Less(t) => Predicate::Range { min: None, below: Some(*t) },
        Op::AtLeast(t) => Predicate::Range { min: Some(*t), below: None },
        Op::In(s) => Predicate::OneOf(s.clone()),
    };
    let Some(p) = p else { return as_pred };
    match (p, &as_pred) {
        (Predicate::Range { min: a, below: b }, Predicate::Range { min: c, below: d }) => Predicate::Range {
            min: max_opt(*a, *c),
            below: min_opt(*b, *d),
        },
        (Predicate::Equals(v), _) => Predicate::OneOf([*v].into_iter().filter(|&v| as_pred.matches(v)).collect()),
        (Predicate::OneOf(s), _) => Predicate::OneOf(s.iter().copied().filter(|&v| as_pred.matches(v)).collect()),
        (Predicate::Range { .. }, Predicate::OneOf(s)) => {
            Predicate::OneOf(s.iter().copied().filter(|&v| p.matches(v)).collect())
        }
        (Predicate::Range { .. }, Predicate::Equals(_)) => unreachable!("conditions never map to Equals"),
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) | (None, x) => x,
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) | (None, x) => x,
    }
}

/// The evidence tightened by `conditions`.
pub fn restrict_evidence(evidence: &Evidence, conditions: &[Condition]) -> Evidence {
    let mut ev = evidence.clone();
    for c in conditions {
        let merged = conjoin(ev.constraints.get(&c.attribute), c);
        ev.constraints.insert(c.attribute, merged);
    }
    ev
}

/// Ranks strategies that lead to reachable YES leaves by
/// `support_count * leaf_yes_rate`, ties broken by rule id.
pub fn suggest(tree: &Tree, panel: &EvidencePanel, dataset: &Dataset) -> Advice {
    let evidence_matches = dataset.filter(&panel.evidence).count;
    let mut suggestions = Vec::new();
    for path in reachable(tree, panel).paths {
        if path.outcome != Outcome::Yes {
            continue;
        }
        let (act, fixed): (Vec<Condition>, Vec<Condition>) =
            path.choices.iter().cloned().partition(|c| panel.actionable.contains(&c.attribute));
        let conditions = simplify(&act, &tree.schema);
        let assumptions = simplify(&fixed, &tree.schema);
        let counted: Vec<Condition> =
            conditions.iter().filter(|c| !panel.prospective.contains(&c.attribute)).cloned().collect();
        let prospective: BTreeSet<usize> = conditions
            .iter()
            .map(|c| c.attribute)
            .filter(|a| panel.prospective.contains(a))
            .collect();
        let support_count = dataset.filter(&restrict_evidence(&panel.evidence, &counted)).count;
        let leaf_yes_rate = tree.node(path.leaf).counts.fraction(Label::Yes).unwrap_or(0.0);
        suggestions.push(Suggestion {
            rule_id: path.rule_id,
            leaf: path.leaf,
            conditions,
            assumptions,
            outcome: path.outcome,
            support_count,
            leaf_yes_rate,
            score: support_count as f64 * leaf_yes_rate,
            prospective: prospective.into_iter().collect(),
            segments: path.segments,
        });
    }
    suggestions.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.rule_id.cmp(&b.rule_id)));
    Advice { evidence_matches, suggestions }
}

/// Fills the shared advisory template.
pub fn render(advice: &Advice, schema: &Schema) -> String {
    let mut alternatives = String::new();
    if advice.suggestions.is_empty() {
        alternatives.push_str("No strategy reaches a YES outcome under this evidence.");
    }
    for (i, s) in advice.suggestions.iter().enumerate() {
        let conds = if s.conditions.is_empty() {
            "no campaign change needed".to_string()
        } else {
            s.conditions.iter().map(|c| c.describe(schema)).collect::<Vec<_>>().join(" and ")
        };
        if i > 0 {
            alternatives.push('\n');
        }
        alternatives.push_str(&format!(
            "  option {}: {conds} (rule {}, {} supporting records, yes rate {:.3})",
            i + 1,
            s.rule_id,
            s.support_count,
            s.leaf_yes_rate
        ));
        if !s.assumptions.is_empty() {
            let a: Vec<String> = s.assumptions.iter().map(|c| c.describe(schema)).collect();
            alternatives.push_str(&format!(" provided {}", a.join(" and ")));
        }
    }
    TEMPLATE.replace("{matches}", &advice.evidence_matches.to_string()).replace("{alternatives}", &alternatives)
}

/// A base customer, real or imagined, and values to change.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub base: Vec<i64>,
    /// Attribute name to replacement code.
    pub overrides: BTreeMap<String, i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub record: Vec<i64>,
    pub label: Label,
    pub outcome: Outcome,
    pub rule_id: String,
    pub path: Vec<PathSegment>,
    pub base_label: Label,
    pub base_rule_id: String,
    pub changed: bool,
}

/// `base` with `overrides` applied, validated against the schema.
pub fn apply_overrides(schema: &Schema, base: &[i64], overrides: &BTreeMap<String, i64>) -> Result<Vec<i64>, AdvisorError> {
    schema.validate(base)?;
    let mut x = base.to_vec();
    for (name, &v) in overrides {
        let pos = schema.position(name).ok_or_else(|| AdvisorError::UnknownAttribute(name.clone()))?;
        x[pos] = v;
    }
    schema.validate(&x)?;
    Ok(x)
}

pub fn what_if(tree: &Tree, scenario: &Scenario) -> Result<WhatIf, AdvisorError> {
    let record = apply_overrides(&tree.schema, &scenario.base, &scenario.overrides)?;
    let base = tree.route(&scenario.base);
    let now = tree.route(&record);
    Ok(WhatIf {
        label: now.label,
        outcome: now.outcome,
        rule_id: tree.leaf_id(now.leaf),
        path: decision_path(tree, &record),
        base_label: base.label,
        base_rule_id: tree.leaf_id(base.leaf),
        changed: now.label != base.label,
        record,
    })
}
