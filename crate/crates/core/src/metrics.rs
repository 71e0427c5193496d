//! Confusion matrices, class-wise rates, seeded holdout splits and the
//! multi-model comparison table.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, BaselineConfig, BaselineKind, ClassWeight};
use crate::cart::{grow, GrowParams};
use crate::dataset::{Dataset, EncodedRecord, Label};

pub const ORIENTATION: &str = "rows = predicted class, columns = actual class";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{actual} actual labels but {predicted} predictions")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no labels to score")]
    Empty,
    #[error("test fraction {0} is outside (0, 1)")]
    Fraction(f64),
    #[error("split leaves an empty side ({train} train, {test} test)")]
    EmptySide { train: usize, test: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn actual_yes(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn actual_no(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn add(&mut self, actual: Label, predicted: Label) {
        match (predicted, actual) {
            (Label::Yes, Label::Yes) => self.tp += 1,
            (Label::No, Label::No) => self.tn += 1,
            (Label::Yes, Label::No) => self.fp += 1,
            (Label::No, Label::Yes) => self.fn_ += 1,
        }
    }

    /// Two-by-two table with marginals.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "({ORIENTATION})");
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10}", "", "actual NO", "actual YES", "total");
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10}", "predicted NO", self.tn, self.fn_, self.tn + self.fn_);
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10}", "predicted YES", self.fp, self.tp, self.fp + self.tp);
        let _ = writeln!(s, "{:>14} {:>10} {:>10} {:>10}", "total", self.actual_no(), self.actual_yes(), self.total());
        s
    }
}

pub fn confusion(actual: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { actual: actual.len(), predicted: predicted.len() });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&a, &p) in actual.iter().zip(predicted) {
        cm.add(a, p);
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn sensitivity(tp: u64, fn_: u64) -> Option<f64> {
    ratio(tp, tp + fn_)
}

pub fn specificity(tn: u64, fp: u64) -> Option<f64> {
    ratio(tn, tn + fp)
}

/// Rates in `[0, 1]`; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub no_success: Option<f64>,
    pub no_failure: Option<f64>,
    pub yes_success: Option<f64>,
    pub yes_failure: Option<f64>,
    /// Mean of the two per-class success rates.
    pub balanced_accuracy: Option<f64>,
    /// Share of all records classified correctly.
    pub accuracy: Option<f64>,
}

pub fn rates(cm: &ConfusionMatrix) -> RateReport {
    let sens = sensitivity(cm.tp, cm.fn_);
    let spec = specificity(cm.tn, cm.fp);
    RateReport {
        sensitivity: sens,
        specificity: spec,
        no_success: spec,
        no_failure: spec.map(|s| 1.0 - s),
        yes_success: sens,
        yes_failure: sens.map(|s| 1.0 - s),
        balanced_accuracy: sens.zip(spec).map(|(a, b)| (a + b) / 2.0),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub fraction: f64,
}

/// Random partition of `0..n` with `round(fraction * n)` test indices. Both
/// sides are returned in ascending order.
pub fn holdout(n: usize, fraction: f64, seed: u64) -> Result<HoldoutSplit, MetricsError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(MetricsError::Fraction(fraction));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (fraction * n as f64).round() as usize;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(HoldoutSplit { train, test, seed, fraction })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dt,
    Nb,
    Lr,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Dt, ModelKind::Nb, ModelKind::Lr, ModelKind::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dt => "DT",
            ModelKind::Nb => "NB",
            ModelKind::Lr => "LR",
            ModelKind::Knn => "KNN",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dt" | "tree" => Some(ModelKind::Dt),
            "nb" => Some(ModelKind::Nb),
            "lr" => Some(ModelKind::Lr),
            "knn" => Some(ModelKind::Knn),
            _ => None,
        }
    }
}

/// Training settings for every model in a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub tree: GrowParams,
    pub nb: BaselineConfig,
    pub lr: BaselineConfig,
    pub knn: BaselineConfig,
}

impl Default for CompareConfig {
    /// Logistic regression and k-NN are trained with balanced class weights;
    /// the tree and naive Bayes use the data as is.
    fn default() -> Self {
        let balanced = BaselineConfig { class_weight: ClassWeight::Balanced, ..Default::default() };
        CompareConfig { tree: GrowParams::default(), nb: BaselineConfig::default(), lr: balanced.clone(), knn: balanced }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub matrix: Option<ConfusionMatrix>,
    pub rates: Option<RateReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset_digest: String,
    pub seed: u64,
    pub fraction: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub orientation: String,
    pub rows: Vec<ComparisonRow>,
}

fn predictions(kind: ModelKind, train: &Dataset, test: &[EncodedRecord], cfg: &CompareConfig) -> Result<Vec<Label>, String> {
    let base = |k: BaselineKind, c: &BaselineConfig| -> Result<Vec<Label>, String> {
        let m = baselines::train(k, train, c).map_err(|e| e.to_string())?;
        Ok(m.predict_all(test))
    };
    match kind {
        ModelKind::Dt => {
            let tree = grow(train, &cfg.tree).map_err(|e| e.to_string())?;
            Ok(test.iter().map(|r| tree.predict(&r.x)).collect())
        }
        ModelKind::Nb => base(BaselineKind::Nb, &cfg.nb),
        ModelKind::Lr => base(BaselineKind::Lr, &cfg.lr),
        ModelKind::Knn => base(BaselineKind::Knn, &cfg.knn),
    }
}

/// Trains each kind on the training side of a seeded holdout split and
/// scores it on the test side. A model that fails to train is reported in
/// its row; the others still run.
pub fn compare(
    dataset: &Dataset,
    kinds: &[ModelKind],
    fraction: f64,
    seed: u64,
    config: &CompareConfig,
) -> Result<Comparison, MetricsError> {
    let split = holdout(dataset.len(), fraction, seed)?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(MetricsError::EmptySide { train: split.train.len(), test: split.test.len() });
    }
    let train = dataset.subset(&split.train);
    let test: Vec<EncodedRecord> = split.test.iter().map(|&i| dataset.records[i].clone()).collect();
    let actual: Vec<Label> = test.iter().map(|r| r.y).collect();
    let rows = kinds
        .iter()
        .map(|&model| match predictions(model, &train, &test, config) {
            Ok(pred) => {
                let cm = confusion(&actual, &pred).expect("one prediction per test record");
                ComparisonRow { model, matrix: Some(cm), rates: Some(rates(&cm)), error: None }
            }
            Err(e) => ComparisonRow { model, matrix: None, rates: None, error: Some(e) },
        })
        .collect();
    Ok(Comparison {
        dataset_digest: dataset.provenance.digest.clone(),
        seed,
        fraction,
        train_size: split.train.len(),
        test_size: split.test.len(),
        orientation: ORIENTATION.to_string(),
        rows,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

impl Comparison {
    /// Per-class success and failure percentages, one column per model.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "dataset {} | seed {} | test fraction {} | train {} | test {}",
            self.dataset_digest, self.seed, self.fraction, self.train_size, self.test_size
        );
        let _ = write!(s, "{:<8} {:<18}", "Actual", "Predict (%)");
        for r in &self.rows {
            let _ = write!(s, " {:>8}", r.model.as_str());
        }
        s.push('\n');
        type Pick = fn(&RateReport) -> Option<f64>;
        let lines: [(&str, &str, Pick); 6] = [
            ("NO", "Success", |r| r.no_success),
            ("", "Failure", |r| r.no_failure),
            ("YES", "Success", |r| r.yes_success),
            ("", "Failure", |r| r.yes_failure),
            ("Balanced accuracy", "", |r| r.balanced_accuracy),
            ("Raw accuracy", "", |r| r.accuracy),
        ];
        for (a, b, pick) in lines {
            let head = if b.is_empty() { a.to_string() } else { format!("{a:<8} {b}") };
            let _ = write!(s, "{head:<27}");
            for r in &self.rows {
                let _ = write!(s, " {:>8}", r.rates.as_ref().map_or("error".to_string(), |x| pct(pick(x))));
            }
            s.push('\n');
        }
        for r in &self.rows {
            if let Some(e) = &r.error {
                let _ = writeln!(s, "{} failed: {e}", r.model.as_str());
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "model", "no_success", "no_failure", "yes_success", "yes_failure", "balanced_accuracy", "accuracy", "tp",
            "tn", "fp", "fn", "error", "dataset_digest", "seed", "fraction",
        ];
        w.write_record(header).expect("in-memory write");
        for r in &self.rows {
            let f = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let rr = r.rates.as_ref();
            let m = r.matrix.as_ref();
            let count = |g: fn(&ConfusionMatrix) -> u64| m.map_or(String::new(), |m| g(m).to_string());
            w.write_record([
                r.model.as_str().to_string(),
                f(rr.and_then(|x| x.no_success)),
                f(rr.and_then(|x| x.no_failure)),
                f(rr.and_then(|x| x.yes_success)),
                f(rr.and_then(|x| x.yes_failure)),
                f(rr.and_then(|x| x.balanced_accuracy)),
                f(rr.and_then(|x| x.accuracy)),
                count(|m| m.tp),
                count(|m| m.tn),
                count(|m| m.fp),
                count(|m| m.fn_),
                r.error.clone().unwrap_or_default(),
                self.dataset_digest.clone(),
                self.seed.to_string(),
                self.fraction.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_counts_each_cell() {
        use Label::*;
        let cm = confusion(&[Yes, Yes, No, No, No], &[Yes, No, No, Yes, No]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fn_: 1, tn: 2, fp: 1 });
        assert!(matches!(confusion(&[Yes], &[]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn undefined_rates_are_flagged() {
        let r = rates(&ConfusionMatrix { tp: 0, fn_: 0, tn: 3, fp: 1 });
        assert_eq!(r.sensitivity, None);
        assert_eq!(r.balanced_accuracy, None);
        assert_eq!(r.specificity, Some(0.75));
    }

    #[test]
    fn holdout_sizes_and_determinism() {
        let a = holdout(45_211, 0.4, 7).unwrap();
        assert_eq!(a.test.len(), 18_084);
        assert_eq!(a, holdout(45_211, 0.4, 7).unwrap());
        assert_eq!(holdout(10, 1.0, 0), Err(MetricsError::Fraction(1.0)));
    }
}
