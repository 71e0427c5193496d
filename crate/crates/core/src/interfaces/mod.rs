//! Operations shared by the command line and the HTTP service.
//!
//! Both front ends parse their inputs, call the functions here and render the
//! returned values, so identical inputs give identical answers.

pub mod cli;
pub mod http;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advisor::{self, Advice, EvidencePanel, LeafPath, PathSegment, Scenario, WhatIf};
use crate::baselines::{self, BaselineConfig, BaselineKind, ClassWeight};
use crate::cart::{self, Criterion, GrowParams};
use crate::dataset::{self, Dataset, Dialect, Evidence, Schema};
use crate::fixture;
use crate::kb::{ArtifactKind, KbError, Store};
use crate::metrics::{self, Comparison, CompareConfig, ConfusionMatrix, ModelKind, RateReport};
use crate::model::{self, Model, ModelError, ModelFile, Prediction};
use crate::rules::{self, Engine, RuleError};

/// Structured error shared by both front ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl Problem {
    pub fn new(code: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        Problem { code: code.to_string(), message: message.into(), field: field.map(str::to_string) }
    }

    pub fn usage(message: impl Into<String>, field: &str) -> Self {
        Problem::new("usage", message, Some(field))
    }

    pub fn invalid(message: impl Into<String>, field: &str) -> Self {
        Problem::new("invalid", message, Some(field))
    }

    pub fn not_found(message: impl Into<String>, field: &str) -> Self {
        Problem::new("not-found", message, Some(field))
    }

    /// HTTP status for this problem.
    pub fn status(&self) -> u16 {
        match self.code.as_str() {
            "usage" | "invalid" => 400,
            "not-found" => 404,
            "conflict" => 409,
            "data" | "model" | "rules" => 422,
            _ => 500,
        }
    }

    /// Process exit status: 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.code == "usage" {
            2
        } else {
            1
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{}: {} ({})", self.code, self.message, field),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

impl std::error::Error for Problem {}

impl From<dataset::DataError> for Problem {
    fn from(e: dataset::DataError) -> Self {
        Problem::new("data", e.to_string(), None)
    }
}

impl From<KbError> for Problem {
    fn from(e: KbError) -> Self {
        match e {
            KbError::NotFound(id) => Problem::not_found(format!("artifact `{id}` not found"), "id"),
            KbError::EmptyPayload => Problem::invalid(e.to_string(), "payload"),
            KbError::Kind(_) => Problem::invalid(e.to_string(), "kind"),
            other => Problem::new("storage", other.to_string(), None),
        }
    }
}

impl From<ModelError> for Problem {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Rules(r) => r.into(),
            other => Problem::new("model", other.to_string(), Some("model")),
        }
    }
}

impl From<RuleError> for Problem {
    fn from(e: RuleError) -> Self {
        Problem::new("rules", e.to_string(), None)
    }
}

impl From<cart::CartError> for Problem {
    fn from(e: cart::CartError) -> Self {
        match e {
            cart::CartError::Params(_) => Problem::invalid(e.to_string(), "params"),
            other => Problem::new("data", other.to_string(), None),
        }
    }
}

impl From<advisor::AdvisorError> for Problem {
    fn from(e: advisor::AdvisorError) -> Self {
        match e {
            advisor::AdvisorError::UnknownAttribute(a) => {
                Problem::invalid(format!("unknown attribute `{a}`"), "overrides")
            }
            advisor::AdvisorError::Data(d) => d.into(),
        }
    }
}

impl From<metrics::MetricsError> for Problem {
    fn from(e: metrics::MetricsError) -> Self {
        Problem::invalid(e.to_string(), "fraction")
    }
}

pub type Result<T> = std::result::Result<T, Problem>;

/// Name of the built-in fixture tree.
pub const FIXTURE: &str = "fixture";
/// Name of the built-in fixture rule set.
pub const FIXTURE_RULES: &str = "fixture-rules";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: Option<String>,
    pub rows: usize,
    pub yes: usize,
    pub no: usize,
    pub digest: String,
    pub attributes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_matches: Option<usize>,
}

pub fn load_dataset(path: &Path, dialect: Dialect) -> Result<Dataset> {
    if !path.exists() {
        return Err(Problem::not_found(format!("no dataset at {}", path.display()), "data"));
    }
    Ok(dataset::load_path(path, dialect, &Schema::bank())?)
}

pub fn summarize(ds: &Dataset, evidence: Option<&str>) -> Result<DatasetSummary> {
    let evidence_matches = match evidence {
        Some(text) => Some(ds.filter(&parse_evidence(text, &ds.schema)?).count),
        None => None,
    };
    Ok(DatasetSummary {
        source: ds.provenance.source.clone(),
        rows: ds.len(),
        yes: ds.count_label(dataset::Label::Yes),
        no: ds.count_label(dataset::Label::No),
        digest: ds.provenance.digest.clone(),
        attributes: ds.schema.attributes.iter().map(|a| a.name.clone()).collect(),
        evidence_matches,
    })
}

pub fn parse_evidence(text: &str, schema: &Schema) -> Result<Evidence> {
    Evidence::parse(text, schema).map_err(|e| Problem::invalid(e.to_string(), "evidence"))
}

pub fn parse_record(text: &str, schema: &Schema) -> Result<Vec<i64>> {
    schema.parse_codes(text).map_err(|e| Problem::invalid(e.to_string(), "record"))
}

/// Everything needed to fit one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub kind: ModelKind,
    pub criterion: Criterion,
    pub min_parent: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub k: usize,
    pub balanced: bool,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let g = GrowParams::default();
        TrainSpec {
            kind: ModelKind::Dt,
            criterion: g.criterion,
            min_parent: g.min_parent,
            min_leaf: g.min_leaf,
            max_depth: g.max_depth,
            k: 5,
            balanced: false,
            seed: 0,
        }
    }
}

pub fn train(ds: &Dataset, spec: &TrainSpec) -> Result<Model> {
    let cfg = BaselineConfig {
        k: spec.k,
        class_weight: if spec.balanced { ClassWeight::Balanced } else { ClassWeight::Uniform },
        seed: spec.seed,
        ..Default::default()
    };
    let base = |k| baselines::train(k, ds, &cfg).map(Model::Baseline).map_err(|e| Problem::new("data", e.to_string(), None));
    match spec.kind {
        ModelKind::Dt => {
            let params = GrowParams {
                criterion: spec.criterion,
                min_parent: spec.min_parent,
                min_leaf: spec.min_leaf,
                max_depth: spec.max_depth,
                seed: spec.seed,
            };
            Ok(Model::Tree(cart::grow(ds, &params)?))
        }
        ModelKind::Nb => base(BaselineKind::Nb),
        ModelKind::Lr => base(BaselineKind::Lr),
        ModelKind::Knn => base(BaselineKind::Knn),
    }
}

/// A model with the digest of its file body.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub model: Model,
    pub digest: String,
    pub dataset_digest: Option<String>,
}

/// Resolves `fixture`, `fixture-rules`, a store artifact id or a file path.
pub fn resolve_model(store: Option<&Store>, reference: &str) -> Result<Loaded> {
    let from_file = |f: ModelFile| -> Result<Loaded> {
        Ok(Loaded { model: f.unwrap()?, digest: f.digest.clone(), dataset_digest: f.dataset_digest.clone() })
    };
    let builtin = match reference {
        FIXTURE => Some(Model::Tree(fixture::engine_tree())),
        FIXTURE_RULES => Some(Model::Rules(fixture::engine_rules().into())),
        _ => None,
    };
    if let Some(m) = builtin {
        return from_file(ModelFile::wrap(&m, None));
    }
    if let Some(store) = store {
        if let Some(meta) = store.meta(reference) {
            if meta.kind != ArtifactKind::Model {
                return Err(Problem::invalid(format!("artifact `{reference}` is a {}", meta.kind.as_str()), "model"));
            }
            let art = store.get(reference)?;
            let f: ModelFile = serde_json::from_slice(&art.payload).map_err(ModelError::from)?;
            return from_file(f);
        }
    }
    let path = Path::new(reference);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(ModelError::from)?;
        let f: ModelFile = serde_json::from_str(&text).map_err(ModelError::from)?;
        return from_file(f);
    }
    Err(Problem::not_found(format!("no model `{reference}`"), "model"))
}

/// Saves a model file into the store; `token` makes retries idempotent.
pub fn store_model(store: &mut Store, model: &Model, dataset_digest: Option<String>, token: Option<&str>) -> Result<String> {
    let file = ModelFile::wrap(model, dataset_digest.clone());
    let payload = serde_json::to_vec(&file).expect("model file serializes");
    let mut tags = BTreeSet::from([format!("kind:{}", model.kind())]);
    if let Some(d) = dataset_digest {
        tags.insert(format!("dataset:{d}"));
    }
    if let Model::Tree(t) = model {
        if let Some(p) = &t.params {
            tags.insert(format!("criterion:{}", p.criterion));
        }
    }
    Ok(match token {
        Some(t) => store.put_once(ArtifactKind::Model, &payload, tags, t)?,
        None => store.put(ArtifactKind::Model, &payload, tags)?,
    })
}

pub fn tree_of<'a>(loaded: &'a Loaded, op: &str) -> Result<&'a cart::Tree> {
    loaded
        .model
        .tree()
        .ok_or_else(|| Problem::invalid(format!("{op} needs a tree model, got `{}`", loaded.model.kind()), "model"))
}

pub fn prune(loaded: &Loaded, level: usize) -> Result<Model> {
    Ok(Model::Tree(cart::prune(tree_of(loaded, "prune")?, level)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleFormat {
    Text,
    Json,
}

pub fn rule_engine(loaded: &Loaded) -> Result<Engine> {
    match &loaded.model {
        Model::Tree(t) => Ok(Engine::Rules(rules::extract_rules(t))),
        Model::Rules(e) => Ok(e.clone()),
        Model::Baseline(_) => Err(Problem::invalid("baseline models have no rules", "model")),
    }
}

pub fn export_rules(loaded: &Loaded, format: RuleFormat) -> Result<String> {
    let engine = rule_engine(loaded)?;
    match (format, &engine) {
        (RuleFormat::Text, Engine::Rules(rs)) => Ok(rs.to_text()),
        (RuleFormat::Text, Engine::Composite { .. }) => {
            Err(Problem::invalid("composed engines export as json only", "format"))
        }
        (RuleFormat::Json, _) => Ok(serde_json::to_string(&engine).expect("engine serializes")),
    }
}

pub fn predict(loaded: &Loaded, x: &[i64]) -> Result<Prediction> {
    if let Some(schema) = loaded.model.schema() {
        schema.validate(x).map_err(|e| Problem::invalid(e.to_string(), "record"))?;
    }
    Ok(loaded.model.predict(x)?)
}

/// Panel options besides the evidence itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelOptions {
    pub actionable: Option<Vec<String>>,
    pub prospective: Option<Vec<String>>,
}

fn positions(names: &[String], schema: &Schema, field: &str) -> Result<BTreeSet<usize>> {
    names
        .iter()
        .map(|n| schema.position(n).ok_or_else(|| Problem::invalid(format!("unknown attribute `{n}`"), field)))
        .collect()
}

pub fn panel(evidence: Evidence, schema: &Schema, opts: &PanelOptions) -> Result<EvidencePanel> {
    evidence.validate(schema).map_err(|e| Problem::invalid(e.to_string(), "evidence"))?;
    let mut p = EvidencePanel::new(evidence, schema);
    if let Some(a) = &opts.actionable {
        p.actionable = positions(a, schema, "actionable")?;
    }
    if let Some(a) = &opts.prospective {
        p.prospective = positions(a, schema, "prospective")?;
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdviceReport {
    #[serde(flatten)]
    pub advice: Advice,
    pub text: String,
}

/// Advice over `ds`. A tree without stored class counts (such as the
/// fixture) is first refitted on the dataset.
pub fn advise(loaded: &Loaded, ds: &Dataset, panel: &EvidencePanel) -> Result<AdviceReport> {
    let mut tree = tree_of(loaded, "advise")?.clone();
    if tree.root().counts.total() == 0 {
        tree.refit_counts(&ds.records);
    }
    let advice = advisor::suggest(&tree, panel, ds);
    let text = advisor::render(&advice, &tree.schema);
    Ok(AdviceReport { advice, text })
}

pub fn what_if(loaded: &Loaded, base: &[i64], overrides: &BTreeMap<String, String>) -> Result<WhatIf> {
    let tree = tree_of(loaded, "whatif")?;
    let mut codes = BTreeMap::new();
    for (name, value) in overrides {
        let pos = tree
            .schema
            .position(name)
            .ok_or_else(|| Problem::invalid(format!("unknown attribute `{name}`"), "overrides"))?;
        let code = tree.schema.attributes[pos]
            .code_of(value)
            .or_else(|| value.trim().parse().ok())
            .ok_or_else(|| Problem::invalid(format!("bad value `{value}` for `{name}`"), "overrides"))?;
        codes.insert(tree.schema.name(pos).to_string(), code);
    }
    let scenario = Scenario { base: base.to_vec(), overrides: codes };
    Ok(advisor::what_if(tree, &scenario)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathsReport {
    Decision { segments: Vec<PathSegment>, rule_id: String },
    Reachable { paths: Vec<LeafPath> },
}

pub fn paths(loaded: &Loaded, record: Option<&[i64]>, panel: Option<&EvidencePanel>) -> Result<PathsReport> {
    let tree = tree_of(loaded, "paths")?;
    match (record, panel) {
        (Some(x), _) => {
            tree.schema.validate(x).map_err(|e| Problem::invalid(e.to_string(), "record"))?;
            let segments = advisor::decision_path(tree, x);
            let leaf = segments.last().expect("path ends at a leaf").node;
            Ok(PathsReport::Decision { segments, rule_id: tree.leaf_id(leaf) })
        }
        (None, Some(p)) => Ok(PathsReport::Reachable { paths: advisor::reachable(tree, p).paths }),
        (None, None) => Err(Problem::usage("give a record or evidence", "record")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub model_digest: String,
    pub dataset_digest: String,
    pub orientation: String,
    pub matrix: ConfusionMatrix,
    pub rates: RateReport,
}

impl Evaluation {
    pub fn to_text(&self) -> String {
        let r = &self.rates;
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        format!(
            "model {} on dataset {}\n{}sensitivity {}\nspecificity {}\nbalanced accuracy {}\naccuracy {}\n",
            self.model_digest,
            self.dataset_digest,
            self.matrix.render(),
            f(r.sensitivity),
            f(r.specificity),
            f(r.balanced_accuracy),
            f(r.accuracy)
        )
    }
}

/// Scores a model on every record of `ds`.
pub fn evaluate(loaded: &Loaded, ds: &Dataset) -> Result<Evaluation> {
    let mut predicted = Vec::with_capacity(ds.len());
    for r in &ds.records {
        predicted.push(loaded.model.predict(&r.x)?.label);
    }
    let matrix = metrics::confusion(&ds.labels(), &predicted).map_err(|e| Problem::new("data", e.to_string(), None))?;
    Ok(Evaluation {
        model_digest: loaded.digest.clone(),
        dataset_digest: ds.provenance.digest.clone(),
        orientation: metrics::ORIENTATION.to_string(),
        rates: metrics::rates(&matrix),
        matrix,
    })
}

pub fn parse_kinds(text: &str) -> Result<Vec<ModelKind>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| ModelKind::parse(s).ok_or_else(|| Problem::usage(format!("unknown model kind `{s}`"), "models")))
        .collect()
}

pub fn compare(ds: &Dataset, kinds: &[ModelKind], fraction: f64, seed: u64) -> Result<Comparison> {
    Ok(metrics::compare(ds, kinds, fraction, seed, &CompareConfig::default())?)
}

/// The model file of a loaded model.
pub fn model_file_json(loaded: &Loaded) -> String {
    model::to_json(&loaded.model, loaded.dataset_digest.clone())
}
