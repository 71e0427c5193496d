//! Reference classifiers: naive Bayes, logistic regression and k-nearest
//! neighbours.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AttributeKind, Dataset, EncodedRecord, Label, Schema};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("training set is empty")]
    Empty,
    #[error("training set holds a single class")]
    SingleClass,
    #[error("k = {k} exceeds the {n} training records")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Nb,
    Lr,
    Knn,
}

/// How training records of each class are weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    #[default]
    Uniform,
    /// Each class carries half of the total weight.
    Balanced,
}

impl ClassWeight {
    fn weights(self, records: &[EncodedRecord]) -> [f64; 2] {
        match self {
            ClassWeight::Uniform => [1.0, 1.0],
            ClassWeight::Balanced => {
                let n = records.len() as f64;
                let yes = records.iter().filter(|r| r.y == Label::Yes).count() as f64;
                let no = n - yes;
                let w = |c: f64| if c > 0.0 { n / (2.0 * c) } else { 1.0 };
                [w(no), w(yes)]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub k: usize,
    /// Additive smoothing for naive Bayes category frequencies.
    pub smoothing: f64,
    pub max_iter: usize,
    /// Convergence threshold on the change in logistic loss.
    pub tol: f64,
    /// Ridge penalty on logistic weights (not the bias).
    pub l2: f64,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { k: 5, smoothing: 1.0, max_iter: 200, tol: 1e-6, l2: 1e-6, class_weight: ClassWeight::Uniform, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
enum Transform {
    Standard { attribute: usize, mean: f64, scale: f64 },
    OneHot { attribute: usize, codes: Vec<i64> },
}

/// Standardized numerics and one-hot categories, fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    transforms: Vec<Transform>,
    width: usize,
}

impl FeatureMap {
    pub fn fit(schema: &Schema, records: &[EncodedRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mut transforms = Vec::new();
        let mut width = 0;
        for (pos, attr) in schema.attributes.iter().enumerate() {
            match &attr.kind {
                AttributeKind::Categorical { .. } => {
                    let codes = attr.codes();
                    width += codes.len();
                    transforms.push(Transform::OneHot { attribute: pos, codes });
                }
                AttributeKind::Numeric | AttributeKind::Flag => {
                    let mean = records.iter().map(|r| r.x[pos] as f64).sum::<f64>() / n;
                    let var = records.iter().map(|r| (r.x[pos] as f64 - mean).powi(2)).sum::<f64>() / n;
                    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                    width += 1;
                    transforms.push(Transform::Standard { attribute: pos, mean, scale });
                }
            }
        }
        FeatureMap { transforms, width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn apply_into(&self, x: &[i64], out: &mut Vec<f64>) {
        for t in &self.transforms {
            match t {
                Transform::Standard { attribute, mean, scale } => out.push((x[*attribute] as f64 - mean) / scale),
                Transform::OneHot { attribute, codes } => {
                    out.extend(codes.iter().map(|&c| if x[*attribute] == c { 1.0 } else { 0.0 }))
                }
            }
        }
    }

    pub fn apply(&self, x: &[i64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.width);
        self.apply_into(x, &mut v);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "likelihood", rename_all = "snake_case")]
enum NbTerm {
    Gaussian { attribute: usize, mean: [f64; 2], var: [f64; 2] },
    Frequency { attribute: usize, codes: Vec<i64>, log_prob: [Vec<f64>; 2] },
}

/// Gaussian likelihoods for numeric attributes, smoothed frequencies for
/// flags and categories. Works on raw codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    class_count: [u64; 2],
    terms: Vec<NbTerm>,
}

impl NaiveBayes {
    pub fn fit(schema: &Schema, records: &[EncodedRecord], smoothing: f64) -> Result<Self, BaselineError> {
        if records.is_empty() {
            return Err(BaselineError::Empty);
        }
        if smoothing <= 0.0 {
            return Err(BaselineError::Config("smoothing must be positive".into()));
        }
        let mut class_count = [0u64; 2];
        for r in records {
            class_count[r.y.index()] += 1;
        }
        let mut terms = Vec::new();
        let mut max_var = 0.0f64;
        for (pos, attr) in schema.attributes.iter().enumerate() {
            match &attr.kind {
                AttributeKind::Numeric => {
                    let mut mean = [0.0; 2];
                    let mut var = [0.0; 2];
                    for c in 0..2 {
                        let vals: Vec<f64> = records.iter().filter(|r| r.y.index() == c).map(|r| r.x[pos] as f64).collect();
                        if vals.is_empty() {
                            continue;
                        }
                        let m = vals.iter().sum::<f64>() / vals.len() as f64;
                        mean[c] = m;
                        var[c] = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
                        max_var = max_var.max(var[c]);
                    }
                    terms.push(NbTerm::Gaussian { attribute: pos, mean, var });
                }
                AttributeKind::Flag | AttributeKind::Categorical { .. } => {
                    let codes = if attr.is_categorical() { attr.codes() } else { vec![0, 1] };
                    let mut log_prob = [Vec::new(), Vec::new()];
                    for c in 0..2 {
                        let denom = class_count[c] as f64 + smoothing * codes.len() as f64;
                        log_prob[c] = codes
                            .iter()
                            .map(|&code| {
                                let hits = records.iter().filter(|r| r.y.index() == c && r.x[pos] == code).count();
                                ((hits as f64 + smoothing) / denom).ln()
                            })
                            .collect();
                    }
                    terms.push(NbTerm::Frequency { attribute: pos, codes, log_prob });
                }
            }
        }
        // variance floor keeps constant columns usable
        let floor = 1e-9 * max_var.max(1.0);
        for t in &mut terms {
            if let NbTerm::Gaussian { var, .. } = t {
                for v in var.iter_mut() {
                    *v += floor;
                }
            }
        }
        Ok(NaiveBayes { class_count, terms })
    }

    /// Posterior `[P(no|x), P(yes|x)]`.
    pub fn posterior(&self, x: &[i64]) -> [f64; 2] {
        let n = (self.class_count[0] + self.class_count[1]) as f64;
        for c in 0..2 {
            if self.class_count[c] == 0 {
                let mut p = [0.0; 2];
                p[1 - c] = 1.0;
                return p;
            }
        }
        let mut logp = [0.0; 2];
        for c in 0..2 {
            let mut s = (self.class_count[c] as f64 / n).ln();
            for t in &self.terms {
                s += match t {
                    NbTerm::Gaussian { attribute, mean, var } => {
                        let d = x[*attribute] as f64 - mean[c];
                        -0.5 * ((2.0 * std::f64::consts::PI * var[c]).ln() + d * d / var[c])
                    }
                    NbTerm::Frequency { attribute, codes, log_prob } => match codes.binary_search(&x[*attribute]) {
                        Ok(i) => log_prob[c][i],
                        Err(_) => 0.0,
                    },
                };
            }
            logp[c] = s;
        }
        let m = logp[0].max(logp[1]);
        let e = [(logp[0] - m).exp(), (logp[1] - m).exp()];
        let z = e[0] + e[1];
        [e[0] / z, e[1] / z]
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic regression on the feature map, fitted by Newton steps
/// (iteratively reweighted least squares) with step halving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub map: FeatureMap,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Penalized training loss after each accepted step, starting with the
    /// loss at zero weights.
    pub loss_history: Vec<f64>,
}

struct LrProblem {
    x: DMatrix<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    l2: f64,
}

impl LrProblem {
    /// Coefficients are `[bias, weights..]`; column 0 of `x` is all ones.
    fn loss(&self, beta: &DVector<f64>) -> f64 {
        let z = &self.x * beta;
        let mut s = 0.0;
        for i in 0..self.y.len() {
            // log(1 + e^z) - y z, computed stably
            let zi = z[i];
            let softplus = if zi > 0.0 { zi + (-zi).exp().ln_1p() } else { zi.exp().ln_1p() };
            s += self.w[i] * (softplus - self.y[i] * zi);
        }
        let wsum: f64 = self.w.iter().sum();
        s / wsum + 0.5 * self.l2 * beta.rows(1, beta.len() - 1).norm_squared()
    }

    fn gradient_hessian(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let z = &self.x * beta;
        let wsum: f64 = self.w.iter().sum();
        let d = beta.len();
        let mut r = DVector::zeros(self.y.len());
        let mut h_w = DVector::zeros(self.y.len());
        for i in 0..self.y.len() {
            let p = sigmoid(z[i]);
            r[i] = self.w[i] * (p - self.y[i]) / wsum;
            h_w[i] = self.w[i] * p * (1.0 - p) / wsum;
        }
        let mut grad = self.x.tr_mul(&r);
        let mut xw = self.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= h_w[i];
        }
        let mut hess = self.x.tr_mul(&xw);
        for j in 1..d {
            grad[j] += self.l2 * beta[j];
            hess[(j, j)] += self.l2;
        }
        (grad, hess)
    }
}

impl Logistic {
    pub fn fit(schema: &Schema, records: &[EncodedRecord], config: &BaselineConfig) -> Result<Self, BaselineError> {
        if records.is_empty() {
            return Err(BaselineError::Empty);
        }
        let yes = records.iter().filter(|r| r.y == Label::Yes).count();
        if yes == 0 || yes == records.len() {
            return Err(BaselineError::SingleClass);
        }
        if config.l2 < 0.0 || config.tol <= 0.0 {
            return Err(BaselineError::Config("l2 must be >= 0 and tol > 0".into()));
        }
        let map = FeatureMap::fit(schema, records);
        let d = map.width() + 1;
        let mut data = Vec::with_capacity(records.len() * d);
        let mut row = Vec::with_capacity(d);
        for r in records {
            row.clear();
            row.push(1.0);
            map.apply_into(&r.x, &mut row);
            data.extend_from_slice(&row);
        }
        let cw = config.class_weight.weights(records);
        let problem = LrProblem {
            x: DMatrix::from_row_slice(records.len(), d, &data),
            y: records.iter().map(|r| if r.y == Label::Yes { 1.0 } else { 0.0 }).collect(),
            w: records.iter().map(|r| cw[r.y.index()]).collect(),
            l2: config.l2,
        };
        let mut beta = DVector::zeros(d);
        let mut loss = problem.loss(&beta);
        let mut history = vec![loss];
        for _ in 0..config.max_iter {
            let (grad, hess) = problem.gradient_hessian(&beta);
            let direction = match hess.cholesky() {
                Some(ch) => ch.solve(&grad),
                // ill-conditioned: plain gradient step
                None => grad.clone(),
            };
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = &beta - &direction * step;
                let l = problem.loss(&cand);
                if l.is_finite() && l <= loss {
                    accepted = Some((cand, l));
                    break;
                }
                step *= 0.5;
            }
            let Some((next, l)) = accepted else { break };
            let delta = loss - l;
            beta = next;
            loss = l;
            history.push(loss);
            if delta < config.tol {
                break;
            }
        }
        Ok(Logistic { map, bias: beta[0], weights: beta.rows(1, d - 1).iter().copied().collect(), loss_history: history })
    }

    pub fn probability(&self, x: &[i64]) -> f64 {
        let f = self.map.apply(x);
        sigmoid(self.bias + f.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

/// Stored form of a k-NN model: the raw training records. The standardized
/// matrix is rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct KnnFile {
    map: FeatureMap,
    k: usize,
    vote_weight: [f64; 2],
    x: Vec<Vec<i64>>,
    y: Vec<Label>,
}

/// Brute-force k-nearest neighbours under Euclidean distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "KnnFile", into = "KnnFile")]
pub struct Knn {
    pub map: FeatureMap,
    pub k: usize,
    /// Vote weight per class; `[1, 1]` is a plain majority.
    pub vote_weight: [f64; 2],
    raw: Vec<Vec<i64>>,
    labels: Vec<Label>,
    matrix: Vec<f64>,
}

impl From<KnnFile> for Knn {
    fn from(f: KnnFile) -> Self {
        let mut matrix = Vec::with_capacity(f.x.len() * f.map.width());
        for x in &f.x {
            f.map.apply_into(x, &mut matrix);
        }
        Knn { map: f.map, k: f.k, vote_weight: f.vote_weight, raw: f.x, labels: f.y, matrix }
    }
}

impl From<Knn> for KnnFile {
    fn from(k: Knn) -> Self {
        KnnFile { map: k.map, k: k.k, vote_weight: k.vote_weight, x: k.raw, y: k.labels }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Knn {
    pub fn fit(schema: &Schema, records: &[EncodedRecord], config: &BaselineConfig) -> Result<Self, BaselineError> {
        if config.k == 0 {
            return Err(BaselineError::Config("k must be at least 1".into()));
        }
        if config.k > records.len() {
            return Err(BaselineError::KTooLarge { k: config.k, n: records.len() });
        }
        Ok(KnnFile {
            map: FeatureMap::fit(schema, records),
            k: config.k,
            vote_weight: config.class_weight.weights(records),
            x: records.iter().map(|r| r.x.clone()).collect(),
            y: records.iter().map(|r| r.y).collect(),
        }
        .into())
    }

    /// Indices of the `k` nearest training records; equal distances keep the
    /// earlier record.
    pub fn neighbours(&self, x: &[i64]) -> Vec<usize> {
        let q = self.map.apply(x);
        let w = self.map.width();
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for (i, row) in self.matrix.chunks_exact(w).enumerate() {
            let d = squared_distance(&q, row);
            if best.len() == self.k && d >= best[self.k - 1].0 {
                continue;
            }
            let at = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(at, (d, i));
            best.truncate(self.k);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Weighted YES share of the neighbours.
    pub fn yes_share(&self, x: &[i64]) -> f64 {
        let mut votes = [0.0; 2];
        for i in self.neighbours(x) {
            let c = self.labels[i].index();
            votes[c] += self.vote_weight[c];
        }
        votes[1] / (votes[0] + votes[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineModel {
    Nb(NaiveBayes),
    Lr(Logistic),
    Knn(Knn),
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Nb(_) => BaselineKind::Nb,
            BaselineModel::Lr(_) => BaselineKind::Lr,
            BaselineModel::Knn(_) => BaselineKind::Knn,
        }
    }

    /// Label and YES score. NB and LR call YES at a posterior of 0.5 or more;
    /// k-NN needs a strict weighted majority, so ties go to NO.
    pub fn predict(&self, x: &[i64]) -> (Label, f64) {
        let (score, yes) = match self {
            BaselineModel::Nb(m) => {
                let p = m.posterior(x)[1];
                (p, p >= 0.5)
            }
            BaselineModel::Lr(m) => {
                let p = m.probability(x);
                (p, p >= 0.5)
            }
            BaselineModel::Knn(m) => {
                let s = m.yes_share(x);
                (s, s > 0.5)
            }
        };
        (if yes { Label::Yes } else { Label::No }, score)
    }

    /// Predictions for many records, in parallel.
    pub fn predict_all(&self, records: &[EncodedRecord]) -> Vec<Label> {
        records.par_iter().map(|r| self.predict(&r.x).0).collect()
    }
}

pub fn train(kind: BaselineKind, dataset: &Dataset, config: &BaselineConfig) -> Result<BaselineModel, BaselineError> {
    let (schema, records) = (&dataset.schema, &dataset.records);
    if records.is_empty() {
        return Err(BaselineError::Empty);
    }
    Ok(match kind {
        BaselineKind::Nb => BaselineModel::Nb(NaiveBayes::fit(schema, records, config.smoothing)?),
        BaselineKind::Lr => BaselineModel::Lr(Logistic::fit(schema, records, config)?),
        BaselineKind::Knn => BaselineModel::Knn(Knn::fit(schema, records, config)?),
    })
}
