//! Versioned model files.
//!
//! ```json
//! {"format":"campaign-dss-model","version":1,"kind":"tree",
//!  "digest":"<sha256 of body>","dataset_digest":"...","body":{...}}
//! ```
//!
//! `kind` is one of `tree`, `rules`, `nb`, `lr`, `knn`. The digest covers the
//! canonical JSON of `body` (object keys sorted), so any edit to the body is
//! caught on load. Floats round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::BaselineModel;
use crate::cart::{Outcome, Tree};
use crate::dataset::{Label, Schema};
use crate::rules::{Engine, RuleError};

pub const FORMAT: &str = "campaign-dss-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a model file (format `{0}`)")]
    Format(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("unknown model kind `{0}`")]
    Kind(String),
    #[error("body digest mismatch: file says {stored}, body hashes to {actual}")]
    Digest { stored: String, actual: String },
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Rules(#[from] RuleError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Tree(Tree),
    Rules(Engine),
    Baseline(BaselineModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Raw engine outcome for trees and rule sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    /// YES score for baseline models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Tree(_) => "tree",
            Model::Rules(_) => "rules",
            Model::Baseline(b) => match b {
                BaselineModel::Nb(_) => "nb",
                BaselineModel::Lr(_) => "lr",
                BaselineModel::Knn(_) => "knn",
            },
        }
    }

    pub fn schema(&self) -> Option<&Schema> {
        match self {
            Model::Tree(t) => Some(&t.schema),
            Model::Rules(e) => Some(e.schema()),
            Model::Baseline(_) => None,
        }
    }

    pub fn tree(&self) -> Option<&Tree> {
        match self {
            Model::Tree(t) => Some(t),
            _ => None,
        }
    }

    pub fn predict(&self, x: &[i64]) -> Result<Prediction, ModelError> {
        Ok(match self {
            Model::Tree(t) => {
                let r = t.route(x);
                Prediction { label: r.label, outcome: Some(r.outcome), score: None, rule_id: Some(t.leaf_id(r.leaf)) }
            }
            Model::Rules(e) => {
                let v = e.infer(x)?;
                Prediction { label: v.label, outcome: Some(v.raw_outcome), score: None, rule_id: Some(v.rule_id) }
            }
            Model::Baseline(b) => {
                let (label, score) = b.predict(x);
                Prediction { label, outcome: None, score: Some(score), rule_id: None }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_digest: Option<String>,
    pub body: Value,
}

fn body_digest(body: &Value) -> String {
    let bytes = serde_json::to_vec(body).expect("value serializes");
    crate::dataset::hex(&Sha256::digest(&bytes))
}

impl ModelFile {
    pub fn wrap(model: &Model, dataset_digest: Option<String>) -> ModelFile {
        let body = match model {
            Model::Tree(t) => serde_json::to_value(t),
            Model::Rules(e) => serde_json::to_value(e),
            Model::Baseline(b) => serde_json::to_value(b),
        }
        .expect("models serialize");
        ModelFile {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: model.kind().to_string(),
            digest: body_digest(&body),
            dataset_digest,
            body,
        }
    }

    pub fn unwrap(&self) -> Result<Model, ModelError> {
        if self.format != FORMAT {
            return Err(ModelError::Format(self.format.clone()));
        }
        if self.version != VERSION {
            return Err(ModelError::Version(self.version));
        }
        let actual = body_digest(&self.body);
        if actual != self.digest {
            return Err(ModelError::Digest { stored: self.digest.clone(), actual });
        }
        let body = self.body.clone();
        let model = match self.kind.as_str() {
            "tree" => Model::Tree(serde_json::from_value(body)?),
            "rules" => Model::Rules(serde_json::from_value(body)?),
            "nb" | "lr" | "knn" => Model::Baseline(serde_json::from_value(body)?),
            other => return Err(ModelError::Kind(other.to_string())),
        };
        if model.kind() != self.kind {
            return Err(ModelError::Kind(self.kind.clone()));
        }
        Ok(model)
    }
}

pub fn to_json(model: &Model, dataset_digest: Option<String>) -> String {
    serde_json::to_string(&ModelFile::wrap(model, dataset_digest)).expect("model file serializes")
}

pub fn from_json(text: &str) -> Result<Model, ModelError> {
    serde_json::from_str::<ModelFile>(text)?.unwrap()
}

pub fn save(model: &Model, dataset_digest: Option<String>, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_json(model, dataset_digest))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, ModelError> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{engine_rules, engine_tree, SAMPLE_CUSTOMER};

    #[test]
    fn tree_file_round_trips() {
        let m = Model::Tree(engine_tree());
        let text = to_json(&m, None);
        assert_eq!(from_json(&text).unwrap(), m);
    }

    #[test]
    fn rules_file_predicts_sample_customer() {
        let m = from_json(&to_json(&Model::Rules(engine_rules().into()), None)).unwrap();
        let p = m.predict(&SAMPLE_CUSTOMER).unwrap();
        assert_eq!((p.label, p.rule_id.as_deref()), (Label::No, Some("1 - 5")));
    }

    #[test]
    fn tampered_body_is_rejected() {
        let mut f = ModelFile::wrap(&Model::Tree(engine_tree()), None);
        f.body["prune_level"] = Value::from(3);
        assert!(matches!(f.unwrap(), Err(ModelError::Digest { .. })));
        let mut f = ModelFile::wrap(&Model::Tree(engine_tree()), None);
        f.version = 9;
        assert!(matches!(f.unwrap(), Err(ModelError::Version(9))));
    }
}
