//! Binary classification trees: impurity measures, split search, growth,
//! weakest-link pruning, prediction and attribute importance.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, EncodedRecord, Label, Schema};

/// Scores closer than this are treated as ties so that the tie-break order
/// decides, not floating-point noise.
const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum CartError {
    #[error("class counts are empty")]
    EmptyCounts,
    #[error("cannot grow a tree on an empty dataset")]
    EmptyDataset,
    #[error("invalid grow parameters: {0}")]
    Params(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("record does not match the tree schema: {0}")]
    Record(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassCounts {
    pub no: u64,
    pub yes: u64,
}

impl ClassCounts {
    pub fn new(no: u64, yes: u64) -> Self {
        ClassCounts { no, yes }
    }

    pub fn of(labels: impl IntoIterator<Item = Label>) -> Self {
        let mut c = ClassCounts::default();
        for l in labels {
            c.add(l);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.no + self.yes
    }

    pub fn get(&self, label: Label) -> u64 {
        match label {
            Label::No => self.no,
            Label::Yes => self.yes,
        }
    }

    pub fn add(&mut self, label: Label) {
        match label {
            Label::No => self.no += 1,
            Label::Yes => self.yes += 1,
        }
    }

    pub fn remove(&mut self, label: Label) {
        match label {
            Label::No => self.no -= 1,
            Label::Yes => self.yes -= 1,
        }
    }

    /// Argmax class; ties go to NO, the globally dominant class.
    pub fn majority(&self) -> Label {
        if self.yes > self.no {
            Label::Yes
        } else {
            Label::No
        }
    }

    pub fn is_pure(&self) -> bool {
        self.no == 0 || self.yes == 0
    }

    /// Records not in the majority class.
    pub fn errors(&self) -> u64 {
        self.no.min(self.yes)
    }

    pub fn fraction(&self, label: Label) -> Option<f64> {
        (self.total() > 0).then(|| self.get(label) as f64 / self.total() as f64)
    }

    fn probabilities(&self) -> Result<[f64; 2], CartError> {
        let n = self.total();
        if n == 0 {
            return Err(CartError::EmptyCounts);
        }
        let n = n as f64;
        Ok([self.no as f64 / n, self.yes as f64 / n])
    }
}

impl std::ops::Add for ClassCounts {
    type Output = ClassCounts;
    fn add(self, rhs: ClassCounts) -> ClassCounts {
        ClassCounts { no: self.no + rhs.no, yes: self.yes + rhs.yes }
    }
}

/// Gini diversity index `1 - Σ p(i)²`.
pub fn gini(counts: ClassCounts) -> Result<f64, CartError> {
    let p = counts.probabilities()?;
    Ok(1.0 - p.iter().map(|q| q * q).sum::<f64>())
}

/// Deviance `-Σ p(i) ln p(i)`; empty classes contribute nothing.
pub fn deviance(counts: ClassCounts) -> Result<f64, CartError> {
    let p = counts.probabilities()?;
    Ok(-p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>())
}

/// Twoing value `P(L) P(R) (Σ |L(i) - R(i)|)²` of a binary split. Larger is
/// better. An empty child contributes a zero class distribution.
pub fn twoing(left: ClassCounts, right: ClassCounts) -> Result<f64, CartError> {
    let n = left.total() + right.total();
    if n == 0 {
        return Err(CartError::EmptyCounts);
    }
    let pl = left.total() as f64 / n as f64;
    let pr = right.total() as f64 / n as f64;
    let l = left.probabilities().unwrap_or([0.0, 0.0]);
    let r = right.probabilities().unwrap_or([0.0, 0.0]);
    let diff: f64 = l.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
    Ok(pl * pr * diff * diff)
}

/// Misclassified fraction `1 - p(majority)`.
pub fn node_error(counts: ClassCounts) -> Result<f64, CartError> {
    let p = counts.probabilities()?;
    Ok(1.0 - p[0].max(p[1]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
    Deviance,
    Twoing,
}

impl Criterion {
    /// Node impurity used for split scoring and importance. Twoing has no
    /// node-level impurity, so Gini stands in for it.
    pub fn impurity(self, counts: ClassCounts) -> Result<f64, CartError> {
        match self {
            Criterion::Deviance => deviance(counts),
            Criterion::Gini | Criterion::Twoing => gini(counts),
        }
    }

    /// Split goodness; higher is better for every criterion. For Gini and
    /// deviance this is the negated size-weighted child impurity.
    pub fn goodness(self, left: ClassCounts, right: ClassCounts) -> f64 {
        match self {
            Criterion::Twoing => twoing(left, right).unwrap_or(0.0),
            Criterion::Gini | Criterion::Deviance => -weighted_impurity(self, left, right),
        }
    }

    /// The reported score of a candidate: the twoing value, or the weighted
    /// child impurity.
    pub fn score_of(self, goodness: f64) -> f64 {
        match self {
            Criterion::Twoing => goodness,
            _ => -goodness,
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = CartError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gini" | "gdi" => Ok(Criterion::Gini),
            "deviance" | "entropy" => Ok(Criterion::Deviance),
            "twoing" => Ok(Criterion::Twoing),
            other => Err(CartError::Params(format!("unknown criterion `{other}`"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Gini => "gini",
            Criterion::Deviance => "deviance",
            Criterion::Twoing => "twoing",
        })
    }
}

/// Size-weighted child impurity of a split.
pub fn weighted_impurity(criterion: Criterion, left: ClassCounts, right: ClassCounts) -> f64 {
    let n = (left.total() + right.total()) as f64;
    let part = |c: ClassCounts| {
        if c.total() == 0 {
            0.0
        } else {
            c.total() as f64 / n * criterion.impurity(c).expect("nonempty")
        }
    };
    part(left) + part(right)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// How a split sends a record left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Left iff `value < threshold`.
    Below { threshold: f64 },
    /// Left iff the code is in `left`. `right` lists the codes seen going
    /// right during training; any other code follows `unseen`.
    Subset { left: BTreeSet<i64>, right: BTreeSet<i64>, unseen: Side },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub attribute: usize,
    pub rule: SplitRule,
}

impl Split {
    pub fn below(attribute: usize, threshold: f64) -> Self {
        Split { attribute, rule: SplitRule::Below { threshold } }
    }

    /// Category-subset split with an explicit complement; codes outside both
    /// sets go right.
    pub fn subset(attribute: usize, left: impl IntoIterator<Item = i64>, right: impl IntoIterator<Item = i64>) -> Self {
        Split {
            attribute,
            rule: SplitRule::Subset {
                left: left.into_iter().collect(),
                right: right.into_iter().collect(),
                unseen: Side::Right,
            },
        }
    }

    pub fn side(&self, value: i64) -> Side {
        match &self.rule {
            SplitRule::Below { threshold } => {
                if (value as f64) < *threshold {
                    Side::Left
                } else {
                    Side::Right
                }
            }
            SplitRule::Subset { left, right, unseen } => {
                if left.contains(&value) {
                    Side::Left
                } else if right.contains(&value) {
                    Side::Right
                } else {
                    *unseen
                }
            }
        }
    }

    /// Codes of `all` routed to `side` (categorical splits only).
    pub fn codes_to(&self, side: Side, all: &[i64]) -> BTreeSet<i64> {
        all.iter().copied().filter(|&c| self.side(c) == side).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub split: Split,
    /// Twoing value, or weighted child impurity for Gini/deviance.
    pub score: f64,
    pub left: ClassCounts,
    pub right: ClassCounts,
}

/// Raw outcome stored at a leaf. Grown trees only produce YES/NO; hand-built
/// engines may leave regions UNDEFINED.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    No,
    Yes,
    Undefined,
}

impl Outcome {
    pub fn label(self) -> Option<Label> {
        match self {
            Outcome::No => Some(Label::No),
            Outcome::Yes => Some(Label::Yes),
            Outcome::Undefined => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::No => "NO",
            Outcome::Yes => "YES",
            Outcome::Undefined => "UNDEFINED",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NO" => Some(Outcome::No),
            "YES" => Some(Outcome::Yes),
            "UNDEFINED" => Some(Outcome::Undefined),
            _ => None,
        }
    }
}

impl From<Label> for Outcome {
    fn from(l: Label) -> Self {
        match l {
            Label::No => Outcome::No,
            Label::Yes => Outcome::Yes,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum NodeKind {
    Leaf {
        outcome: Outcome,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
    Internal {
        split: Split,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub counts: ClassCounts,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl Node {
    pub fn leaf(counts: ClassCounts) -> Self {
        Node { counts, kind: NodeKind::Leaf { outcome: counts.majority().into(), tag: None } }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn split(&self) -> Option<&Split> {
        match &self.kind {
            NodeKind::Internal { split, .. } => Some(split),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn outcome(&self) -> Option<Outcome> {
        match &self.kind {
            NodeKind::Leaf { outcome, .. } => Some(*outcome),
            NodeKind::Internal { .. } => None,
        }
    }

    pub fn node_error(&self) -> Option<f64> {
        node_error(self.counts).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowParams {
    pub criterion: Criterion,
    pub min_parent: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Growth is deterministic; the seed is recorded for provenance only.
    pub seed: u64,
}

impl Default for GrowParams {
    fn default() -> Self {
        GrowParams { criterion: Criterion::Gini, min_parent: 10, min_leaf: 1, max_depth: None, seed: 0 }
    }
}

impl GrowParams {
    pub fn with_criterion(criterion: Criterion) -> Self {
        GrowParams { criterion, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), CartError> {
        if self.min_leaf < 1 {
            return Err(CartError::Params("min_leaf must be at least 1".into()));
        }
        if self.min_parent < 2 * self.min_leaf {
            return Err(CartError::Params("min_parent must be at least 2 * min_leaf".into()));
        }
        Ok(())
    }
}

/// A classification tree stored as a node arena in preorder; node 0 is the
/// root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub schema: Schema,
    #[serde(default)]
    pub params: Option<GrowParams>,
    /// Weakest-link steps applied since growth.
    #[serde(default)]
    pub prune_level: usize,
    pub nodes: Vec<Node>,
}

/// Where a record ended up and what the tree says about it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Routing {
    /// Node ids from the root to the leaf, with the branch taken at each
    /// internal node.
    pub path: Vec<(usize, Option<Side>)>,
    pub leaf: usize,
    pub outcome: Outcome,
    pub label: Label,
}

impl Tree {
    /// Assembles a tree from an arena, checking that it is a proper binary
    /// tree rooted at node 0 and that every split fits the schema.
    pub fn from_nodes(schema: Schema, nodes: Vec<Node>) -> Result<Self, CartError> {
        let tree = Tree { schema, params: None, prune_level: 0, nodes };
        tree.check()?;
        Ok(tree.compacted())
    }

    fn check(&self) -> Result<(), CartError> {
        if self.nodes.is_empty() {
            return Err(CartError::Malformed("no nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return Err(CartError::Malformed(format!("node {id} reached twice")));
            }
            if let NodeKind::Internal { split, left, right } = &self.nodes[id].kind {
                let attr = self
                    .schema
                    .attribute(split.attribute)
                    .ok_or_else(|| CartError::Malformed(format!("node {id}: unknown attribute")))?;
                let ok = matches!(
                    (&split.rule, attr.is_categorical()),
                    (SplitRule::Below { .. }, false) | (SplitRule::Subset { .. }, true)
                );
                if !ok {
                    return Err(CartError::Malformed(format!("node {id}: split form does not fit `{}`", attr.name)));
                }
                for &c in [left, right] {
                    if c >= self.nodes.len() {
                        return Err(CartError::Malformed(format!("node {id}: child {c} out of range")));
                    }
                    stack.push(c);
                }
            }
        }
        Ok(())
    }

    /// Re-lays the reachable nodes out in preorder.
    fn compacted(mut self) -> Self {
        let mut out = Vec::with_capacity(self.nodes.len());
        fn visit(nodes: &[Node], id: usize, out: &mut Vec<Node>) -> usize {
            let me = out.len();
            out.push(nodes[id].clone());
            if let NodeKind::Internal { left, right, .. } = &nodes[id].kind {
                let (l, r) = (*left, *right);
                let nl = visit(nodes, l, out);
                let nr = visit(nodes, r, out);
                if let NodeKind::Internal { left, right, .. } = &mut out[me].kind {
                    *left = nl;
                    *right = nr;
                }
            }
            me
        }
        visit(&self.nodes, 0, &mut out);
        self.nodes = out;
        self
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        match self.nodes[id].kind {
            NodeKind::Internal { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn d(t: &Tree, id: usize) -> usize {
            match t.children(id) {
                Some((l, r)) => 1 + d(t, l).max(d(t, r)),
                None => 0,
            }
        }
        d(self, 0)
    }

    /// Parent of every node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Internal { left, right, .. } = n.kind {
                parent[left] = Some(id);
                parent[right] = Some(id);
            }
        }
        parent
    }

    pub fn route(&self, x: &[i64]) -> Routing {
        let mut path = Vec::new();
        let mut id = 0;
        // label fallback for UNDEFINED leaves: deepest populated node on the path
        let mut fallback = Label::No;
        loop {
            let node = &self.nodes[id];
            if node.counts.total() > 0 {
                fallback = node.counts.majority();
            }
            match &node.kind {
                NodeKind::Internal { split, left, right } => {
                    let side = split.side(x[split.attribute]);
                    path.push((id, Some(side)));
                    id = if side == Side::Left { *left } else { *right };
                }
                NodeKind::Leaf { outcome, .. } => {
                    path.push((id, None));
                    let label = outcome.label().unwrap_or(fallback);
                    return Routing { path, leaf: id, outcome: *outcome, label };
                }
            }
        }
    }

    pub fn predict(&self, x: &[i64]) -> Label {
        self.route(x).label
    }

    /// Like [`Tree::predict`] but validates the record first.
    pub fn try_predict(&self, x: &[i64]) -> Result<Label, CartError> {
        self.schema.validate(x).map_err(|e| CartError::Record(e.to_string()))?;
        Ok(self.predict(x))
    }

    /// Replaces every node's class counts by those of `records` routed
    /// through the tree.
    pub fn refit_counts(&mut self, records: &[EncodedRecord]) {
        for n in &mut self.nodes {
            n.counts = ClassCounts::default();
        }
        for r in records {
            for (id, _) in self.route(&r.x).path {
                self.nodes[id].counts.add(r.y);
            }
        }
    }

    /// Rule-style identifier of a leaf: its explicit tag, or
    /// `"depth - ordinal"` with the 1-based left-to-right leaf ordinal.
    pub fn leaf_id(&self, leaf: usize) -> String {
        if let NodeKind::Leaf { tag: Some(t), .. } = &self.nodes[leaf].kind {
            return t.clone();
        }
        let depth = self.depth_of(leaf);
        let ordinal = self.leaves().iter().position(|&l| l == leaf).map_or(0, |p| p + 1);
        format!("{depth} - {ordinal}")
    }

    pub fn depth_of(&self, id: usize) -> usize {
        let parents = self.parents();
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = parents[cur] {
            d += 1;
            cur = p;
        }
        d
    }

    /// Content digest of the structure (SHA-256 of the canonical JSON).
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("tree serializes");
        crate::dataset::hex(&Sha256::digest(&json))
    }
}

/// Column-major view used during growth.
struct Columns<'a> {
    cols: Vec<Vec<i64>>,
    labels: Vec<Label>,
    schema: &'a Schema,
}

impl<'a> Columns<'a> {
    fn new(records: &[EncodedRecord], schema: &'a Schema) -> Self {
        let mut cols = vec![Vec::with_capacity(records.len()); schema.len()];
        for r in records {
            for (c, &v) in cols.iter_mut().zip(&r.x) {
                c.push(v);
            }
        }
        Columns { cols, labels: records.iter().map(|r| r.y).collect(), schema }
    }

    fn counts(&self, idx: &[u32]) -> ClassCounts {
        ClassCounts::of(idx.iter().map(|&i| self.labels[i as usize]))
    }
}

/// Numeric attributes carry their node members sorted by value; categorical
/// ones need no order.
struct NodeData {
    members: Vec<u32>,
    sorted: Vec<Option<Vec<u32>>>,
}

fn better(goodness: f64, best: Option<f64>) -> bool {
    match best {
        None => true,
        Some(b) => goodness > b + SCORE_EPS * (1.0 + b.abs()),
    }
}

fn best_numeric(
    data: &Columns,
    attribute: usize,
    sorted: &[u32],
    total: ClassCounts,
    criterion: Criterion,
    min_leaf: usize,
) -> Option<(f64, Split, ClassCounts, ClassCounts)> {
    let col = &data.cols[attribute];
    let mut left = ClassCounts::default();
    let mut best: Option<(f64, Split, ClassCounts, ClassCounts)> = None;
    let n = sorted.len();
    for i in 0..n.saturating_sub(1) {
        let cur = col[sorted[i] as usize];
        left.add(data.labels[sorted[i] as usize]);
        let next = col[sorted[i + 1] as usize];
        if cur == next {
            continue;
        }
        let nl = i + 1;
        if nl < min_leaf || n - nl < min_leaf {
            continue;
        }
        let right = ClassCounts::new(total.no - left.no, total.yes - left.yes);
        let g = criterion.goodness(left, right);
        if better(g, best.as_ref().map(|b| b.0)) {
            let threshold = (cur as f64 + next as f64) / 2.0;
            best = Some((g, Split::below(attribute, threshold), left, right));
        }
    }
    best
}

/// Canonical left sets of the binary partitions to evaluate for one
/// categorical attribute, in lexicographic order. Every left set contains the
/// smallest present code.
fn subset_candidates(per_code: &BTreeMap<i64, ClassCounts>) -> Vec<BTreeSet<i64>> {
    let codes: Vec<i64> = per_code.keys().copied().collect();
    let k = codes.len();
    if k < 2 {
        return Vec::new();
    }
    let min = codes[0];
    let mut out: Vec<BTreeSet<i64>> = if k <= 4 {
        // exhaustive: masks over codes[1..], code[0] always left
        (0u32..(1 << (k - 1)) - 1)
            .map(|mask| {
                let mut s: BTreeSet<i64> = [min].into();
                for (j, &c) in codes[1..].iter().enumerate() {
                    if mask & (1 << j) != 0 {
                        s.insert(c);
                    }
                }
                s
            })
            .collect()
    } else {
        let mut order = codes.clone();
        order.sort_by(|a, b| {
            let fa = per_code[a].fraction(Label::Yes).unwrap_or(0.0);
            let fb = per_code[b].fraction(Label::Yes).unwrap_or(0.0);
            fa.partial_cmp(&fb).unwrap_or(Ordering::Equal).then(a.cmp(b))
        });
        (1..k)
            .map(|j| {
                let prefix: BTreeSet<i64> = order[..j].iter().copied().collect();
                if prefix.contains(&min) {
                    prefix
                } else {
                    order[j..].iter().copied().collect()
                }
            })
            .collect()
    };
    out.sort_by(|a, b| a.iter().cmp(b.iter()));
    out.dedup();
    out
}

fn best_categorical(
    data: &Columns,
    attribute: usize,
    members: &[u32],
    total: ClassCounts,
    criterion: Criterion,
    min_leaf: usize,
) -> Option<(f64, Split, ClassCounts, ClassCounts)> {
    let col = &data.cols[attribute];
    let mut per_code: BTreeMap<i64, ClassCounts> = BTreeMap::new();
    for &i in members {
        per_code.entry(col[i as usize]).or_default().add(data.labels[i as usize]);
    }
    let mut best: Option<(f64, Split, ClassCounts, ClassCounts)> = None;
    for left_set in subset_candidates(&per_code) {
        let left = left_set.iter().fold(ClassCounts::default(), |acc, c| acc + per_code[c]);
        let right = ClassCounts::new(total.no - left.no, total.yes - left.yes);
        if (left.total() as usize) < min_leaf || (right.total() as usize) < min_leaf {
            continue;
        }
        let g = criterion.goodness(left, right);
        if better(g, best.as_ref().map(|b| b.0)) {
            let right_set: BTreeSet<i64> = per_code.keys().filter(|c| !left_set.contains(c)).copied().collect();
            let unseen = if left.total() >= right.total() { Side::Left } else { Side::Right };
            let split = Split { attribute, rule: SplitRule::Subset { left: left_set, right: right_set, unseen } };
            best = Some((g, split, left, right));
        }
    }
    best
}

fn find_split(data: &Columns, node: &NodeData, criterion: Criterion, min_leaf: usize) -> Option<SplitCandidate> {
    let total = data.counts(&node.members);
    if total.is_pure() {
        return None;
    }
    let mut best: Option<(f64, Split, ClassCounts, ClassCounts)> = None;
    for attribute in 0..data.schema.len() {
        let found = match &node.sorted[attribute] {
            Some(sorted) => best_numeric(data, attribute, sorted, total, criterion, min_leaf),
            None => best_categorical(data, attribute, &node.members, total, criterion, min_leaf),
        };
        if let Some(f) = found {
            if better(f.0, best.as_ref().map(|b| b.0)) {
                best = Some(f);
            }
        }
    }
    best.map(|(g, split, left, right)| SplitCandidate { split, score: criterion.score_of(g), left, right })
}

fn root_data(data: &Columns) -> NodeData {
    let n = data.labels.len() as u32;
    let members: Vec<u32> = (0..n).collect();
    let sorted = (0..data.schema.len())
        .map(|a| {
            if data.schema.attributes[a].is_categorical() {
                None
            } else {
                let mut s = members.clone();
                let col = &data.cols[a];
                s.sort_by_key(|&i| (col[i as usize], i));
                Some(s)
            }
        })
        .collect();
    NodeData { members, sorted }
}

/// Best binary split of `records` or `None` when the records are pure or no
/// candidate leaves `min_leaf` records on both sides. Ties go to the lowest
/// attribute, then the lowest threshold or lexicographically smallest subset.
pub fn best_split(
    records: &[EncodedRecord],
    schema: &Schema,
    criterion: Criterion,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    if records.is_empty() {
        return None;
    }
    let data = Columns::new(records, schema);
    find_split(&data, &root_data(&data), criterion, min_leaf.max(1))
}

/// Grows a tree by recursive partitioning. A node stays a leaf when it is
/// pure, has fewer than `min_parent` records, sits at `max_depth`, or has no
/// admissible split.
pub fn grow(dataset: &Dataset, params: &GrowParams) -> Result<Tree, CartError> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(CartError::EmptyDataset);
    }
    let data = Columns::new(&dataset.records, &dataset.schema);
    let mut nodes = Vec::new();
    let mut in_left = vec![false; data.labels.len()];
    grow_node(&data, root_data(&data), 0, params, &mut nodes, &mut in_left);
    Ok(Tree { schema: dataset.schema.clone(), params: Some(params.clone()), prune_level: 0, nodes })
}

fn grow_node(
    data: &Columns,
    node: NodeData,
    depth: usize,
    params: &GrowParams,
    nodes: &mut Vec<Node>,
    in_left: &mut [bool],
) -> usize {
    let counts = data.counts(&node.members);
    let id = nodes.len();
    nodes.push(Node::leaf(counts));
    let stop = counts.is_pure()
        || node.members.len() < params.min_parent
        || params.max_depth.is_some_and(|d| depth >= d);
    if stop {
        return id;
    }
    let Some(cand) = find_split(data, &node, params.criterion, params.min_leaf) else {
        return id;
    };
    let col = &data.cols[cand.split.attribute];
    for &i in &node.members {
        in_left[i as usize] = cand.split.side(col[i as usize]) == Side::Left;
    }
    let part = |v: &[u32]| -> (Vec<u32>, Vec<u32>) { v.iter().partition(|&&i| in_left[i as usize]) };
    let (lm, rm) = part(&node.members);
    let mut ls = Vec::with_capacity(node.sorted.len());
    let mut rs = Vec::with_capacity(node.sorted.len());
    for s in &node.sorted {
        match s {
            Some(s) => {
                let (a, b) = part(s);
                ls.push(Some(a));
                rs.push(Some(b));
            }
            None => {
                ls.push(None);
                rs.push(None);
            }
        }
    }
    drop(node);
    let left = grow_node(data, NodeData { members: lm, sorted: ls }, depth + 1, params, nodes, in_left);
    let right = grow_node(data, NodeData { members: rm, sorted: rs }, depth + 1, params, nodes, in_left);
    nodes[id].kind = NodeKind::Internal { split: cand.split, left, right };
    id
}

/// Misclassified training records in the subtree, and its leaf count.
fn subtree_cost(tree: &Tree, id: usize) -> (u64, u64) {
    match tree.children(id) {
        None => (tree.nodes[id].counts.errors(), 1),
        Some((l, r)) => {
            let (el, ll) = subtree_cost(tree, l);
            let (er, lr) = subtree_cost(tree, r);
            (el + er, ll + lr)
        }
    }
}

/// One weakest-link step: collapses every internal node whose per-leaf
/// error increase `(R(t) - R(T_t)) / (|T_t| - 1)` is minimal. Returns false
/// when the tree is already a single leaf.
fn prune_step(tree: &mut Tree) -> bool {
    if tree.nodes[0].is_leaf() {
        return false;
    }
    // link strength as a rational (numerator, denominator)
    let mut links: Vec<(usize, u64, u64)> = Vec::new();
    for id in 0..tree.nodes.len() {
        if tree.nodes[id].is_leaf() {
            continue;
        }
        let (sub_err, leaves) = subtree_cost(tree, id);
        let own = tree.nodes[id].counts.errors();
        links.push((id, own.saturating_sub(sub_err), leaves - 1));
    }
    let (_, bn, bd) = *links
        .iter()
        .min_by(|a, b| (a.1 as u128 * b.2 as u128).cmp(&(b.1 as u128 * a.2 as u128)))
        .expect("at least the root is internal");
    for (id, n, d) in links {
        if n as u128 * bd as u128 == bn as u128 * d as u128 {
            let counts = tree.nodes[id].counts;
            tree.nodes[id] = Node::leaf(counts);
        }
    }
    true
}

/// Applies `level` weakest-link steps. Level 0 is the identity; a level past
/// the end of the pruning sequence leaves only the root.
pub fn prune(tree: &Tree, level: usize) -> Tree {
    let mut out = tree.clone();
    let mut applied = 0;
    while applied < level && prune_step(&mut out) {
        applied += 1;
    }
    out.prune_level += applied;
    out.compacted()
}

/// Number of steps in the weakest-link sequence, i.e. the smallest level at
/// which [`prune`] returns a single leaf.
pub fn prune_sequence_len(tree: &Tree) -> usize {
    let mut t = tree.clone();
    let mut n = 0;
    while prune_step(&mut t) {
        n += 1;
    }
    n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub attribute: usize,
    pub name: String,
    pub score: f64,
}

/// Total size-weighted impurity decrease per splitting attribute, normalised
/// by the root size. Zero scores are dropped; order is descending score, then
/// attribute position.
pub fn importance(tree: &Tree) -> Vec<Importance> {
    let criterion = tree.params.as_ref().map_or(Criterion::Gini, |p| p.criterion);
    let n_root = tree.root().counts.total() as f64;
    let mut score = vec![0.0; tree.schema.len()];
    if n_root == 0.0 {
        return Vec::new();
    }
    let weighted = |c: ClassCounts| c.total() as f64 / n_root * criterion.impurity(c).unwrap_or(0.0);
    for node in &tree.nodes {
        if let NodeKind::Internal { split, left, right } = &node.kind {
            let dec = weighted(node.counts) - weighted(tree.nodes[*left].counts) - weighted(tree.nodes[*right].counts);
            score[split.attribute] += dec;
        }
    }
    let mut out: Vec<Importance> = score
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(a, &s)| Importance { attribute: a, name: tree.schema.name(a).to_string(), score: s })
        .collect();
    out.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then(a.attribute.cmp(&b.attribute)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Attribute;
    use approx::assert_abs_diff_eq;

    fn one_numeric(points: &[(i64, Label)]) -> Dataset {
        let schema = Schema::new(vec![Attribute::numeric("x")]);
        let recs = points.iter().map(|&(x, y)| EncodedRecord { x: vec![x], y }).collect();
        Dataset::from_records(schema, recs).unwrap()
    }

    #[test]
    fn impurity_values() {
        assert_eq!(gini(ClassCounts::new(10, 0)).unwrap(), 0.0);
        assert_abs_diff_eq!(gini(ClassCounts::new(5, 5)).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(gini(ClassCounts::new(3, 1)).unwrap(), 0.375, epsilon = 1e-12);
        assert_eq!(deviance(ClassCounts::new(7, 0)).unwrap(), 0.0);
        assert_abs_diff_eq!(deviance(ClassCounts::new(5, 5)).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(deviance(ClassCounts::new(3, 1)).unwrap(), 0.5623351446188083, epsilon = 1e-12);
        assert_abs_diff_eq!(node_error(ClassCounts::new(3, 1)).unwrap(), 0.25, epsilon = 1e-12);
        assert_eq!(node_error(ClassCounts::new(10, 0)).unwrap(), 0.0);
        assert_abs_diff_eq!(node_error(ClassCounts::new(5, 5)).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn impurity_of_empty_counts_is_an_error() {
        assert_eq!(gini(ClassCounts::default()), Err(CartError::EmptyCounts));
        assert_eq!(deviance(ClassCounts::default()), Err(CartError::EmptyCounts));
        assert_eq!(node_error(ClassCounts::default()), Err(CartError::EmptyCounts));
        assert_eq!(twoing(ClassCounts::default(), ClassCounts::default()), Err(CartError::EmptyCounts));
    }

    #[test]
    fn twoing_values() {
        let v = twoing(ClassCounts::new(5, 0), ClassCounts::new(0, 5)).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        let v = twoing(ClassCounts::new(6, 2), ClassCounts::new(3, 1)).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        let v = twoing(ClassCounts::new(3, 1), ClassCounts::new(1, 3)).unwrap();
        assert_abs_diff_eq!(v, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn separable_numeric_split() {
        use Label::*;
        let ds = one_numeric(&[(1, No), (2, No), (3, Yes), (4, Yes)]);
        let cand = best_split(&ds.records, &ds.schema, Criterion::Gini, 1).unwrap();
        assert_eq!(cand.split, Split::below(0, 2.5));
        assert_eq!(cand.score, 0.0);
        let pure = one_numeric(&[(1, No), (2, No)]);
        assert!(best_split(&pure.records, &pure.schema, Criterion::Gini, 1).is_none());
    }

    #[test]
    fn min_leaf_can_forbid_every_split() {
        use Label::*;
        let ds = one_numeric(&[(1, No), (2, Yes), (3, No)]);
        assert!(best_split(&ds.records, &ds.schema, Criterion::Gini, 2).is_none());
    }

    #[test]
    fn grow_small_cases() {
        use Label::*;
        let single = one_numeric(&[(7, Yes)]);
        let t = grow(&single, &GrowParams::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.predict(&[0]), Yes);

        let ds = one_numeric(&[(1, No), (2, No), (3, Yes), (4, Yes)]);
        let params = GrowParams { min_parent: 2, ..Default::default() };
        let t = grow(&ds, &params).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.leaf_count(), 2);
        assert!(t.leaves().iter().all(|&l| t.node(l).counts.is_pure()));
        assert_eq!(importance(&t).iter().map(|i| i.name.as_str()).collect::<Vec<_>>(), vec!["x"]);
    }

    #[test]
    fn grow_rejects_bad_input() {
        let empty = one_numeric(&[]);
        assert_eq!(grow(&empty, &GrowParams::default()).unwrap_err(), CartError::EmptyDataset);
        let ds = one_numeric(&[(1, Label::No)]);
        let bad = GrowParams { min_leaf: 3, min_parent: 4, ..Default::default() };
        assert!(matches!(grow(&ds, &bad), Err(CartError::Params(_))));
    }

    #[test]
    fn categorical_subset_and_unseen_code() {
        use Label::*;
        let schema = Schema::new(vec![Attribute::categorical("c", &["a", "b", "c", "d", "e"])]);
        let mut recs = Vec::new();
        for (code, y, n) in [(1, Yes, 5), (2, No, 5), (3, Yes, 5), (4, No, 6)] {
            for _ in 0..n {
                recs.push(EncodedRecord { x: vec![code], y });
            }
        }
        let ds = Dataset::from_records(schema, recs).unwrap();
        let t = grow(&ds, &GrowParams { min_parent: 2, ..Default::default() }).unwrap();
        let split = t.root().split().unwrap();
        match &split.rule {
            SplitRule::Subset { left, right, unseen } => {
                assert_eq!(left, &BTreeSet::from([1, 3]));
                assert_eq!(right, &BTreeSet::from([2, 4]));
                // right holds 11 of 21 records
                assert_eq!(*unseen, Side::Right);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.predict(&[5]), No);
        assert_eq!(t.predict(&[3]), Yes);
    }

    #[test]
    fn prune_levels() {
        use Label::*;
        let ds = one_numeric(&[(1, No), (2, Yes), (3, No), (4, No), (5, Yes), (6, Yes), (7, No), (8, No)]);
        let t = grow(&ds, &GrowParams { min_parent: 2, ..Default::default() }).unwrap();
        assert_eq!(prune(&t, 0), t);
        let all = prune(&t, 1000);
        assert_eq!(all.len(), 1);
        assert_eq!(all.predict(&[2]), No);
        let mut prev = t.leaf_count();
        for level in 0..=prune_sequence_len(&t) {
            let p = prune(&t, level);
            assert!(p.leaf_count() <= prev);
            prev = p.leaf_count();
        }
        let leaf = one_numeric(&[(1, No)]);
        let lt = grow(&leaf, &GrowParams::default()).unwrap();
        assert_eq!(prune(&lt, 5).nodes, lt.nodes);
    }

    #[test]
    fn criterion_parse() {
        assert_eq!("Twoing".parse::<Criterion>().unwrap(), Criterion::Twoing);
        assert!("c4.5".parse::<Criterion>().is_err());
    }
}
