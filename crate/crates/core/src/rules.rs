//! If-then inference engine compiled from a tree.
//!
//! Each leaf becomes one [`Rule`] whose conditions are the merged tests on
//! the root-to-leaf path. Rule sets derived from a tree keep the tree's
//! branching as a router, so inference walks one path and then confirms that
//! the selected rule's conditions hold. Rule sets imported from text are
//! evaluated by scanning all rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{ClassCounts, NodeKind, Outcome, Side, Split, SplitRule, Tree};
use crate::dataset::{AttributeKind, Label, Schema};

#[derive(Debug, Error, PartialEq)]
pub enum RuleError {
    #[error("no rule fires for the record")]
    NoRuleFired,
    #[error("rules {0:?} fire together for one record")]
    Overlap(Vec<String>),
    #[error("router selected rule `{0}` but its conditions do not hold")]
    RouterMismatch(String),
    #[error("rule sets do not share one schema")]
    SchemaMismatch,
    #[error("nothing to compose")]
    EmptyComposition,
    #[error("record has {found} values, schema has {expected}")]
    Arity { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Less(f64),
    AtLeast(f64),
    In(BTreeSet<i64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub attribute: usize,
    pub op: Op,
}

impl Condition {
    pub fn less(attribute: usize, threshold: f64) -> Self {
        Condition { attribute, op: Op::Less(threshold) }
    }

    pub fn at_least(attribute: usize, threshold: f64) -> Self {
        Condition { attribute, op: Op::AtLeast(threshold) }
    }

    pub fn within(attribute: usize, codes: impl IntoIterator<Item = i64>) -> Self {
        Condition { attribute, op: Op::In(codes.into_iter().collect()) }
    }

    pub fn holds(&self, x: &[i64]) -> bool {
        let v = x[self.attribute];
        match &self.op {
            Op::Less(t) => (v as f64) < *t,
            Op::AtLeast(t) => (v as f64) >= *t,
            Op::In(set) => set.contains(&v),
        }
    }

    /// `duration < 605.5`, `month in {3,6,9,12}`.
    pub fn render(&self, schema: &Schema) -> String {
        let name = schema.name(self.attribute);
        match &self.op {
            Op::Less(t) => format!("{name} < {t}"),
            Op::AtLeast(t) => format!("{name} >= {t}"),
            Op::In(set) => {
                let codes: Vec<String> = set.iter().map(i64::to_string).collect();
                format!("{name} in {{{}}}", codes.join(","))
            }
        }
    }

    /// Like [`Condition::render`] but with category labels instead of codes
    /// and flag thresholds spelled as `= yes` / `= no`.
    pub fn describe(&self, schema: &Schema) -> String {
        let attr = &schema.attributes[self.attribute];
        let flag = matches!(attr.kind, AttributeKind::Flag);
        match &self.op {
            Op::In(set) => {
                let names: Vec<String> = set.iter().map(|&c| attr.display_value(c)).collect();
                format!("{} in {{{}}}", attr.name, names.join(", "))
            }
            Op::Less(t) if flag && *t > 0.0 && *t <= 1.0 => format!("{} = no", attr.name),
            Op::AtLeast(t) if flag && *t > 0.0 && *t <= 1.0 => format!("{} = yes", attr.name),
            _ => self.render(schema),
        }
    }

    /// The condition a record satisfies when it takes `side` at `split`.
    /// Category tests are spelled out over the whole schema domain so that
    /// codes unseen in training are covered exactly as the tree routes them.
    pub fn of_branch(split: &Split, side: Side, schema: &Schema) -> Condition {
        match &split.rule {
            SplitRule::Below { threshold } => match side {
                Side::Left => Condition::less(split.attribute, *threshold),
                Side::Right => Condition::at_least(split.attribute, *threshold),
            },
            SplitRule::Subset { .. } => {
                let all = schema.attributes[split.attribute].codes();
                Condition::within(split.attribute, split.codes_to(side, &all))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub conditions: Vec<Condition>,
    pub outcome: Outcome,
    /// Label reported when `outcome` is UNDEFINED.
    pub fallback: Label,
    pub support: ClassCounts,
}

impl Rule {
    pub fn fires(&self, x: &[i64]) -> bool {
        self.conditions.iter().all(|c| c.holds(x))
    }

    pub fn label(&self) -> Label {
        self.outcome.label().unwrap_or(self.fallback)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub raw_outcome: Outcome,
    pub rule_id: String,
    pub fired: Vec<Condition>,
}

/// Tree-shaped index over the rules of a tree-derived rule set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Route {
    Branch { split: Split, left: usize, right: usize },
    Rule(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub schema: Schema,
    pub rules: Vec<Rule>,
    /// Digest of the tree the rules were extracted from.
    #[serde(default)]
    pub source_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    router: Option<Vec<Route>>,
}

/// Per-attribute region accumulated along a path.
#[derive(Clone, Debug)]
enum Region {
    Interval { min: Option<f64>, below: Option<f64> },
    Codes(BTreeSet<i64>),
}

/// Merges conditions per attribute: numeric tests collapse to a half-open
/// interval, category tests to one set. Attributes keep first-seen order.
pub fn simplify(conds: &[Condition], schema: &Schema) -> Vec<Condition> {
    let mut order = Vec::new();
    let mut region: BTreeMap<usize, Region> = BTreeMap::new();
    let mut verbatim: BTreeMap<usize, Vec<Condition>> = BTreeMap::new();
    for c in conds {
        let r = region.entry(c.attribute).or_insert_with(|| {
            order.push(c.attribute);
            if schema.attributes[c.attribute].is_categorical() {
                Region::Codes(schema.attributes[c.attribute].codes().into_iter().collect())
            } else {
                Region::Interval { min: None, below: None }
            }
        });
        match (r, &c.op) {
            (Region::Interval { below, .. }, Op::Less(t)) => *below = Some(below.map_or(*t, |b| b.min(*t))),
            (Region::Interval { min, .. }, Op::AtLeast(t)) => *min = Some(min.map_or(*t, |m| m.max(*t))),
            (Region::Codes(set), Op::In(s)) => *set = set.intersection(s).copied().collect(),
            // mixed forms on one attribute: keep both tests verbatim
            (Region::Interval { .. }, Op::In(_)) | (Region::Codes(_), _) => {
                verbatim.entry(c.attribute).or_default().push(c.clone());
            }
        }
    }
    let mut out = Vec::new();
    for a in order {
        match &region[&a] {
            Region::Interval { min, below } => {
                if let Some(m) = min {
                    out.push(Condition::at_least(a, *m));
                }
                if let Some(b) = below {
                    out.push(Condition::less(a, *b));
                }
            }
            Region::Codes(set) => {
                let all = schema.attributes[a].codes().len();
                if set.len() != all {
                    out.push(Condition::within(a, set.iter().copied()));
                }
            }
        }
        out.extend(verbatim.remove(&a).unwrap_or_default());
    }
    out
}

/// Flattens `tree` into one rule per leaf with merged path conditions.
pub fn extract_rules(tree: &Tree) -> RuleSet {
    extract(tree, true)
}

/// Same as [`extract_rules`] but keeps one condition per path node.
pub fn extract_rules_unsimplified(tree: &Tree) -> RuleSet {
    extract(tree, false)
}

fn extract(tree: &Tree, merged: bool) -> RuleSet {
    let mut rules = Vec::new();
    let mut router = vec![Route::Rule(0); tree.len()];
    let mut stack: Vec<(usize, Vec<Condition>, Label)> = vec![(0, Vec::new(), Label::No)];
    let mut leaf_order = Vec::new();
    // preorder with left first so rules come out left-to-right
    while let Some((id, conds, fallback)) = stack.pop() {
        let node = tree.node(id);
        let fallback = if node.counts.total() > 0 { node.counts.majority() } else { fallback };
        match &node.kind {
            NodeKind::Internal { split, left, right } => {
                router[id] = Route::Branch { split: split.clone(), left: *left, right: *right };
                let mut rc = conds.clone();
                rc.push(Condition::of_branch(split, Side::Right, &tree.schema));
                let mut lc = conds;
                lc.push(Condition::of_branch(split, Side::Left, &tree.schema));
                stack.push((*right, rc, fallback));
                stack.push((*left, lc, fallback));
            }
            NodeKind::Leaf { outcome, .. } => {
                router[id] = Route::Rule(rules.len());
                leaf_order.push(id);
                let conditions = if merged { simplify(&conds, &tree.schema) } else { conds };
                rules.push(Rule {
                    id: tree.leaf_id(id),
                    conditions,
                    outcome: *outcome,
                    fallback,
                    support: node.counts,
                });
            }
        }
    }
    RuleSet { schema: tree.schema.clone(), rules, source_digest: Some(tree.digest()), router: Some(router) }
}

impl RuleSet {
    /// A rule set without a router; inference scans every rule.
    pub fn from_rules(schema: Schema, rules: Vec<Rule>) -> Self {
        RuleSet { schema, rules, source_digest: None, router: None }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn is_routed(&self) -> bool {
        self.router.is_some()
    }

    /// Indices of every rule whose conditions hold.
    pub fn firing(&self, x: &[i64]) -> Vec<usize> {
        (0..self.rules.len()).filter(|&i| self.rules[i].fires(x)).collect()
    }

    fn routed_index(&self, router: &[Route], x: &[i64]) -> usize {
        let mut at = 0;
        loop {
            match &router[at] {
                Route::Branch { split, left, right } => {
                    at = if split.side(x[split.attribute]) == Side::Left { *left } else { *right };
                }
                Route::Rule(i) => return *i,
            }
        }
    }

    pub fn infer(&self, x: &[i64]) -> Result<Verdict, RuleError> {
        if x.len() != self.schema.len() {
            return Err(RuleError::Arity { expected: self.schema.len(), found: x.len() });
        }
        let idx = match &self.router {
            Some(router) => {
                let i = self.routed_index(router, x);
                if !self.rules[i].fires(x) {
                    return Err(RuleError::RouterMismatch(self.rules[i].id.clone()));
                }
                i
            }
            None => match self.firing(x).as_slice() {
                [] => return Err(RuleError::NoRuleFired),
                [i] => *i,
                many => return Err(RuleError::Overlap(many.iter().map(|&i| self.rules[i].id.clone()).collect())),
            },
        };
        let rule = &self.rules[idx];
        Ok(Verdict {
            label: rule.label(),
            raw_outcome: rule.outcome,
            rule_id: rule.id.clone(),
            fired: rule.conditions.clone(),
        })
    }

    /// One rule per line:
    /// `IF duration < 605.5 AND month in {5,8,10} THEN NO ; id="1 - 5" ; fallback=no ; support=no:3,yes:1`
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            let cond = if r.conditions.is_empty() {
                "TRUE".to_string()
            } else {
                r.conditions.iter().map(|c| c.render(&self.schema)).collect::<Vec<_>>().join(" AND ")
            };
            out.push_str(&format!(
                "IF {cond} THEN {} ; id=\"{}\" ; fallback={} ; support=no:{},yes:{}\n",
                r.outcome, r.id, r.fallback, r.support.no, r.support.yes
            ));
        }
        out
    }

    /// Parses the output of [`RuleSet::to_text`] into a scanning evaluator.
    pub fn from_text(text: &str, schema: &Schema) -> Result<RuleSet, RuleError> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| RuleError::Parse { line: n + 1, message: m.to_string() };
            let body = line.strip_prefix("IF ").ok_or_else(|| err("expected `IF`"))?;
            let (cond_text, rest) = body.split_once(" THEN ").ok_or_else(|| err("expected `THEN`"))?;
            let mut parts = rest.split(" ; ");
            let outcome = Outcome::parse(parts.next().unwrap_or("")).ok_or_else(|| err("bad outcome"))?;
            let mut id = None;
            let mut fallback = Label::No;
            let mut support = ClassCounts::default();
            for p in parts {
                let (k, v) = p.split_once('=').ok_or_else(|| err("expected key=value"))?;
                match k.trim() {
                    "id" => id = Some(v.trim().trim_matches('"').to_string()),
                    "fallback" => fallback = Label::parse(v).ok_or_else(|| err("bad fallback"))?,
                    "support" => {
                        for kv in v.split(',') {
                            let (cls, cnt) = kv.split_once(':').ok_or_else(|| err("bad support"))?;
                            let cnt: u64 = cnt.trim().parse().map_err(|_| err("bad support count"))?;
                            match Label::parse(cls) {
                                Some(Label::No) => support.no = cnt,
                                Some(Label::Yes) => support.yes = cnt,
                                None => return Err(err("bad support class")),
                            }
                        }
                    }
                    other => return Err(err(&format!("unknown key `{other}`"))),
                }
            }
            let conditions = if cond_text.trim() == "TRUE" {
                Vec::new()
            } else {
                cond_text
                    .split(" AND ")
                    .map(|c| parse_condition(c, schema).ok_or_else(|| err(&format!("bad condition `{c}`"))))
                    .collect::<Result<_, _>>()?
            };
            rules.push(Rule {
                id: id.ok_or_else(|| err("missing id"))?,
                conditions,
                outcome,
                fallback,
                support,
            });
        }
        Ok(RuleSet::from_rules(schema.clone(), rules))
    }
}

fn parse_condition(text: &str, schema: &Schema) -> Option<Condition> {
    let text = text.trim();
    if let Some((name, v)) = text.split_once(" >= ") {
        return Some(Condition::at_least(schema.position(name)?, v.trim().parse().ok()?));
    }
    if let Some((name, v)) = text.split_once(" < ") {
        return Some(Condition::less(schema.position(name)?, v.trim().parse().ok()?));
    }
    let (name, set) = text.split_once(" in ")?;
    let inner = set.trim().strip_prefix('{')?.strip_suffix('}')?;
    let codes = inner
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().ok())
        .collect::<Option<BTreeSet<i64>>>()?;
    Some(Condition { attribute: schema.position(name)?, op: Op::In(codes) })
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// First member with a defined outcome wins.
    PriorityOrder,
    /// Modal member label wins; ties go to NO.
    MajorityVote,
}

/// An evaluator: a single rule set or a composition of evaluators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Rules(RuleSet),
    Composite { policy: Policy, members: Vec<Engine> },
}

impl From<RuleSet> for Engine {
    fn from(r: RuleSet) -> Self {
        Engine::Rules(r)
    }
}

impl Engine {
    pub fn schema(&self) -> &Schema {
        match self {
            Engine::Rules(r) => &r.schema,
            Engine::Composite { members, .. } => members[0].schema(),
        }
    }

    pub fn infer(&self, x: &[i64]) -> Result<Verdict, RuleError> {
        match self {
            Engine::Rules(r) => r.infer(x),
            Engine::Composite { policy: Policy::PriorityOrder, members } => {
                let mut first = None;
                for m in members {
                    let v = m.infer(x)?;
                    if v.raw_outcome != Outcome::Undefined {
                        return Ok(v);
                    }
                    first.get_or_insert(v);
                }
                first.ok_or(RuleError::EmptyComposition)
            }
            Engine::Composite { policy: Policy::MajorityVote, members } => {
                let verdicts = members.iter().map(|m| m.infer(x)).collect::<Result<Vec<_>, _>>()?;
                let yes = verdicts.iter().filter(|v| v.label == Label::Yes).count();
                let label = if 2 * yes > verdicts.len() { Label::Yes } else { Label::No };
                let lead = verdicts.into_iter().find(|v| v.label == label).ok_or(RuleError::EmptyComposition)?;
                Ok(Verdict { label, raw_outcome: label.into(), rule_id: lead.rule_id, fired: lead.fired })
            }
        }
    }
}

/// Combines evaluators over one schema under `policy`.
pub fn compose(members: Vec<Engine>, policy: Policy) -> Result<Engine, RuleError> {
    let Some(first) = members.first() else {
        return Err(RuleError::EmptyComposition);
    };
    if members.iter().any(|m| m.schema() != first.schema()) {
        return Err(RuleError::SchemaMismatch);
    }
    Ok(Engine::Composite { policy, members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::{grow, GrowParams};
    use crate::dataset::{Attribute, Dataset, EncodedRecord};

    fn toy() -> Tree {
        use Label::*;
        let schema = Schema::new(vec![Attribute::numeric("x")]);
        let recs = [(1, No), (2, No), (3, Yes), (4, Yes)].iter().map(|&(x, y)| EncodedRecord { x: vec![x], y }).collect();
        let ds = Dataset::from_records(schema, recs).unwrap();
        grow(&ds, &GrowParams { min_parent: 2, ..Default::default() }).unwrap()
    }

    #[test]
    fn single_leaf_tree_gives_one_unconditional_rule() {
        let schema = Schema::new(vec![Attribute::numeric("x")]);
        let ds = Dataset::from_records(schema, vec![EncodedRecord { x: vec![1], y: Label::Yes }]).unwrap();
        let t = grow(&ds, &GrowParams::default()).unwrap();
        let rs = extract_rules(&t);
        assert_eq!(rs.len(), 1);
        assert!(rs.rules[0].conditions.is_empty());
        assert_eq!(rs.rules[0].outcome, Outcome::Yes);
    }

    #[test]
    fn depth_one_split_gives_two_rules() {
        let rs = extract_rules(&toy());
        assert_eq!(rs.len(), 2);
        assert_eq!(rs.rules[0].conditions, vec![Condition::less(0, 2.5)]);
        assert_eq!(rs.rules[0].outcome, Outcome::No);
        assert_eq!(rs.rules[1].conditions, vec![Condition::at_least(0, 2.5)]);
        assert_eq!(rs.rules[1].outcome, Outcome::Yes);
        assert_eq!(rs.infer(&[2]).unwrap().label, Label::No);
        assert_eq!(rs.infer(&[3]).unwrap().label, Label::Yes);
    }

    #[test]
    fn text_round_trip_scans_to_same_verdicts() {
        let rs = extract_rules(&toy());
        let text = rs.to_text();
        let back = RuleSet::from_text(&text, &rs.schema).unwrap();
        assert!(!back.is_routed());
        for x in -3..8 {
            assert_eq!(back.infer(&[x]).unwrap(), rs.infer(&[x]).unwrap());
        }
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn scanning_evaluator_reports_gaps_and_overlaps() {
        let schema = Schema::new(vec![Attribute::numeric("x")]);
        let rule = |id: &str, c: Condition| Rule {
            id: id.into(),
            conditions: vec![c],
            outcome: Outcome::No,
            fallback: Label::No,
            support: ClassCounts::default(),
        };
        let rs = RuleSet::from_rules(
            schema,
            vec![rule("a", Condition::less(0, 5.0)), rule("b", Condition::at_least(0, 3.0))],
        );
        assert!(matches!(rs.infer(&[4]), Err(RuleError::Overlap(_))));
        let gap = RuleSet::from_rules(rs.schema.clone(), vec![rs.rules[0].clone()]);
        assert_eq!(gap.infer(&[9]), Err(RuleError::NoRuleFired));
    }

    #[test]
    fn compose_rejects_mismatched_schemas() {
        let a = extract_rules(&toy());
        let mut b = a.clone();
        b.schema.attributes[0].name = "z".into();
        assert_eq!(compose(vec![a.into(), b.into()], Policy::PriorityOrder), Err(RuleError::SchemaMismatch));
        assert_eq!(compose(vec![], Policy::MajorityVote), Err(RuleError::EmptyComposition));
    }
}
