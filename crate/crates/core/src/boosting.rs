//! Second-order gradient-boosted regression trees for binary classification
//! with logistic loss.
//!
//! Trees are grown depth-wise to `max_depth` with exact greedy split search:
//! every midpoint between consecutive distinct feature values is a candidate
//! and the split maximizing
//!
//! ```text
//! gain = 1/2 [ G_L^2 / (H_L + lambda) + G_R^2 / (H_R + lambda) - G^2 / (H + lambda) ] - gamma
//! ```
//!
//! is taken. Leaves hold the Newton step `-G / (H + lambda)` already scaled by
//! the learning rate, so a prediction is a plain sum over trees.
//!
//! Rows with equal feature values are ordered by their full feature vector,
//! which makes every gradient sum, and therefore the trained model, independent
//! of the order in which training rows are supplied.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            reg_lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            seed: 42,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::invalid("boost params", reason));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return bad("reg_lambda must be >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be >= 0");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be >= 0");
        }
        Ok(())
    }
}

/// A regression tree node. Internal nodes send `x[feature] < threshold`
/// to the left child and everything else to the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: Box<TreeNode>,
        #[serde(rename = "r")]
        right: Box<TreeNode>,
    },
    Leaf {
        #[serde(rename = "w")]
        weight: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    fn check(&self, feature_dim: usize) -> std::result::Result<(), String> {
        match self {
            TreeNode::Leaf { weight } if weight.is_finite() => Ok(()),
            TreeNode::Leaf { .. } => Err("non-finite leaf weight".into()),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= feature_dim {
                    return Err(format!("feature index {feature} >= feature_dim {feature_dim}"));
                }
                if !threshold.is_finite() {
                    return Err("non-finite threshold".into());
                }
                left.check(feature_dim)?;
                right.check(feature_dim)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// SHA-256 over the training rows and labels in canonical row order.
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub trees: Vec<TreeNode>,
    pub base_raw_score: f64,
    pub params: BoostParams,
    pub feature_dim: usize,
    pub metadata: ModelMetadata,
}

impl Model {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::FeatureDim {
                expected: self.feature_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.trees.iter().fold(self.base_raw_score, |acc, t| acc + t.predict(x)))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.predict_raw(x).map(sigmoid)
    }

    pub fn predict_proba_batch<R: AsRef<[f64]>>(&self, rows: &[R]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_proba(r.as_ref())).collect()
    }

    /// Canonical JSON encoding; identical models give identical bytes.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocRef {
            format_version: MODEL_FORMAT_VERSION,
            feature_dim: self.feature_dim,
            base_raw_score: self.base_raw_score,
            params: &self.params,
            trees: &self.trees,
            metadata: &self.metadata,
        };
        let mut text = serde_json::to_string(&doc).map_err(|e| Error::CorruptModel(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(Value::as_i64)
            .ok_or_else(|| Error::CorruptModel("missing format_version".into()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let doc: ModelDoc = serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
        let model = Model {
            trees: doc.trees,
            base_raw_score: doc.base_raw_score,
            params: doc.params,
            feature_dim: doc.feature_dim,
            metadata: doc.metadata,
        };
        model.check().map_err(Error::CorruptModel)?;
        Ok(model)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !self.base_raw_score.is_finite() {
            return Err("non-finite base_raw_score".into());
        }
        if self.trees.len() > self.params.rounds {
            return Err(format!(
                "{} trees exceed {} rounds",
                self.trees.len(),
                self.params.rounds
            ));
        }
        for tree in &self.trees {
            tree.check(self.feature_dim)?;
            if tree.depth() > self.params.max_depth {
                return Err(format!("tree depth {} exceeds max_depth", tree.depth()));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ModelDocRef<'a> {
    format_version: i64,
    feature_dim: usize,
    base_raw_score: f64,
    params: &'a BoostParams,
    trees: &'a [TreeNode],
    metadata: &'a ModelMetadata,
}

#[derive(Deserialize)]
struct ModelDoc {
    #[allow(dead_code)]
    format_version: i64,
    feature_dim: usize,
    base_raw_score: f64,
    params: BoostParams,
    trees: Vec<TreeNode>,
    #[serde(default)]
    metadata: ModelMetadata,
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Model::from_json(&text)
}

pub fn sigmoid(raw: f64) -> f64 {
    1.0 / (1.0 + (-raw).exp())
}

/// Newton step for a leaf: `-G / (H + lambda)`.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, reg_lambda: f64) -> Result<f64> {
    let denom = hess_sum + reg_lambda;
    // NaN fails both comparisons, so test for the good case
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::invalid(
            "leaf weight",
            format!("hessian sum + lambda = {denom} must be positive"),
        ));
    }
    Ok(-grad_sum / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradStats {
    pub grad: f64,
    pub hess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDecision {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left: GradStats,
    pub right: GradStats,
}

/// Relative slack under which two gains count as tied. Candidates that
/// induce the same partition have equal gains up to summation order.
const GAIN_TIE_RTOL: f64 = 1e-12;

fn improves_on(gain: f64, best: Option<&SplitDecision>) -> bool {
    match best {
        None => true,
        Some(b) => gain > b.gain + GAIN_TIE_RTOL * b.gain.abs().max(1.0),
    }
}

/// Scans one feature whose node rows are already sorted by value.
/// `items` holds `(value, grad, hess)`.
fn scan_sorted_feature(feature: usize, items: &[(f64, f64, f64)], params: &BoostParams) -> Option<SplitDecision> {
    let lambda = params.reg_lambda;
    let (total_g, total_h) = items.iter().fold((0.0, 0.0), |(g, h), it| (g + it.1, h + it.2));
    if total_h + lambda <= 0.0 {
        return None;
    }
    let parent = total_g * total_g / (total_h + lambda);
    let mut best: Option<SplitDecision> = None;
    let (mut gl, mut hl) = (0.0, 0.0);
    for pair in items.windows(2) {
        let (value, g, h) = pair[0];
        gl += g;
        hl += h;
        let next = pair[1].0;
        if next <= value {
            continue;
        }
        let (gr, hr) = (total_g - gl, total_h - hl);
        if hl < params.min_child_weight || hr < params.min_child_weight {
            continue;
        }
        if hl + lambda <= 0.0 || hr + lambda <= 0.0 {
            continue;
        }
        let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent) - params.gamma;
        if gain > 0.0 && improves_on(gain, best.as_ref()) {
            let mut threshold = value + (next - value) / 2.0;
            if threshold <= value {
                threshold = next;
            }
            best = Some(SplitDecision {
                feature,
                threshold,
                gain,
                left: GradStats { grad: gl, hess: hl },
                right: GradStats { grad: gr, hess: hr },
            });
        }
    }
    best
}

/// Picks the best per-feature candidate; gain ties go to the lower feature
/// index (candidates arrive in feature order, thresholds ascending).
fn pick_best(candidates: impl IntoIterator<Item = Option<SplitDecision>>) -> Option<SplitDecision> {
    candidates.into_iter().flatten().fold(None, |best, c| {
        if improves_on(c.gain, best.as_ref()) {
            Some(c)
        } else {
            best
        }
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Exact greedy split search over the rows of one node.
///
/// Returns `None` when fewer than two rows are given or no split has
/// positive gain with both children meeting `min_child_weight`.
pub fn best_split<R: AsRef<[f64]>>(
    rows: &[R],
    grads: &[f64],
    hessians: &[f64],
    params: &BoostParams,
) -> Option<SplitDecision> {
    if rows.len() < 2 || grads.len() != rows.len() || hessians.len() != rows.len() {
        return None;
    }
    let dim = rows[0].as_ref().len();
    let candidates = (0..dim).map(|f| {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (rows[a].as_ref(), rows[b].as_ref());
            ra[f]
                .total_cmp(&rb[f])
                .then_with(|| lexicographic(ra, rb))
                .then(a.cmp(&b))
        });
        let items: Vec<_> = order
            .iter()
            .map(|&i| (rows[i].as_ref()[f], grads[i], hessians[i]))
            .collect();
        scan_sorted_feature(f, &items, params)
    });
    pick_best(candidates)
}

/// Configurable trainer. [`train`] is the common entry point.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: BoostParams,
    allow_single_class: bool,
    trained_at_unix: Option<u64>,
}

impl Trainer {
    pub fn new(params: BoostParams) -> Self {
        Trainer {
            params,
            allow_single_class: false,
            trained_at_unix: None,
        }
    }

    /// Permits training on one class, which is otherwise rejected.
    pub fn allow_single_class(mut self, allow: bool) -> Self {
        self.allow_single_class = allow;
        self
    }

    /// Records a training timestamp in the model metadata.
    pub fn trained_at(mut self, unix_seconds: Option<u64>) -> Self {
        self.trained_at_unix = unix_seconds;
        self
    }

    pub fn fit<R: AsRef<[f64]> + Sync>(&self, rows: &[R], labels: &[bool]) -> Result<Model> {
        self.fit_traced(rows, labels).map(|(model, _)| model)
    }

    /// Trains and also returns the mean training logloss before the first
    /// round and after every round (`rounds + 1` entries).
    pub fn fit_traced<R: AsRef<[f64]> + Sync>(&self, rows: &[R], labels: &[bool]) -> Result<(Model, Vec<f64>)> {
        let params = &self.params;
        params.validate()?;
        if rows.is_empty() {
            return Err(Error::invalid("training set", "no rows"));
        }
        if rows.len() != labels.len() {
            return Err(Error::invalid(
                "training set",
                format!("{} rows vs {} labels", rows.len(), labels.len()),
            ));
        }
        let dim = rows[0].as_ref().len();
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::FeatureDim {
                    expected: dim,
                    actual: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("training set", "non-finite feature value"));
            }
        }
        let positives = labels.iter().filter(|&&l| l).count();
        if !self.allow_single_class && (positives == 0 || positives == labels.len()) {
            return Err(Error::SingleClass);
        }

        let grower = Grower::new(rows, labels, params);
        let targets: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let base_raw_score = 0.0;
        let mut raw = vec![base_raw_score; rows.len()];
        let mut trace = Vec::with_capacity(params.rounds + 1);
        trace.push(mean_logloss(&raw, &targets));
        let mut trees = Vec::with_capacity(params.rounds);
        let mut grads = vec![0.0; rows.len()];
        let mut hess = vec![0.0; rows.len()];
        for _ in 0..params.rounds {
            for i in 0..rows.len() {
                let p = sigmoid(raw[i]);
                grads[i] = p - targets[i];
                hess[i] = p * (1.0 - p);
            }
            let tree = grower.grow(&grads, &hess)?;
            for (i, r) in rows.iter().enumerate() {
                raw[i] += tree.predict(r.as_ref());
            }
            trees.push(tree);
            trace.push(mean_logloss(&raw, &targets));
        }

        let model = Model {
            trees,
            base_raw_score,
            params: *params,
            feature_dim: dim,
            metadata: ModelMetadata {
                fingerprint: grower.fingerprint(),
                trained_at_unix: self.trained_at_unix,
            },
        };
        Ok((model, trace))
    }
}

pub fn train<R: AsRef<[f64]> + Sync>(rows: &[R], labels: &[bool], params: &BoostParams) -> Result<Model> {
    Trainer::new(*params).fit(rows, labels)
}

/// Mean logistic loss, `softplus(raw) - y * raw`.
pub fn mean_logloss(raw: &[f64], targets: &[f64]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(targets)
        .map(|(&r, &y)| {
            let softplus = if r > 0.0 {
                r + (-r).exp().ln_1p()
            } else {
                r.exp().ln_1p()
            };
            softplus - y * r
        })
        .sum();
    total / raw.len() as f64
}

/// Per-training-set state shared by every tree: column-major values and, per
/// feature, row indices presorted by (value, canonical row rank).
struct Grower<'a, R> {
    rows: &'a [R],
    labels: &'a [bool],
    params: &'a BoostParams,
    columns: Vec<Vec<f64>>,
    sorted: Vec<Vec<usize>>,
    canonical: Vec<usize>,
}

impl<'a, R: AsRef<[f64]> + Sync> Grower<'a, R> {
    fn new(rows: &'a [R], labels: &'a [bool], params: &'a BoostParams) -> Self {
        let n = rows.len();
        let dim = rows[0].as_ref().len();
        let mut canonical: Vec<usize> = (0..n).collect();
        canonical.sort_by(|&a, &b| lexicographic(rows[a].as_ref(), rows[b].as_ref()).then(labels[a].cmp(&labels[b])));
        let mut rank = vec![0; n];
        for (r, &i) in canonical.iter().enumerate() {
            rank[i] = r;
        }
        let columns: Vec<Vec<f64>> = (0..dim).map(|f| rows.iter().map(|r| r.as_ref()[f]).collect()).collect();
        let sorted = columns
            .iter()
            .map(|col| {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(rank[a].cmp(&rank[b])));
                order
            })
            .collect();
        Grower {
            rows,
            labels,
            params,
            columns,
            sorted,
            canonical,
        }
    }

    fn grow(&self, grads: &[f64], hess: &[f64]) -> Result<TreeNode> {
        self.grow_node(self.canonical.clone(), 0, grads, hess)
    }

    /// `members` is kept in canonical order.
    fn grow_node(&self, members: Vec<usize>, depth: usize, grads: &[f64], hess: &[f64]) -> Result<TreeNode> {
        if depth < self.params.max_depth && members.len() >= 2 {
            if let Some(split) = self.find_split(&members, grads, hess) {
                let column = &self.columns[split.feature];
                let (left, right): (Vec<usize>, Vec<usize>) =
                    members.into_iter().partition(|&i| column[i] < split.threshold);
                let left = self.grow_node(left, depth + 1, grads, hess)?;
                let right = self.grow_node(right, depth + 1, grads, hess)?;
                return Ok(TreeNode::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                });
            }
        }
        let (g, h) = members
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + grads[i], h + hess[i]));
        let weight = leaf_weight(g, h, self.params.reg_lambda)? * self.params.learning_rate;
        Ok(TreeNode::Leaf { weight })
    }

    fn find_split(&self, members: &[usize], grads: &[f64], hess: &[f64]) -> Option<SplitDecision> {
        let mut in_node = vec![false; self.rows.len()];
        for &i in members {
            in_node[i] = true;
        }
        let per_feature: Vec<Option<SplitDecision>> = self
            .sorted
            .par_iter()
            .enumerate()
            .map(|(f, order)| {
                let column = &self.columns[f];
                let items: Vec<(f64, f64, f64)> = order
                    .iter()
                    .filter(|&&i| in_node[i])
                    .map(|&i| (column[i], grads[i], hess[i]))
                    .collect();
                scan_sorted_feature(f, &items, self.params)
            })
            .collect();
        pick_best(per_feature)
    }

    fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.rows.len() as u64).to_le_bytes());
        hasher.update((self.columns.len() as u64).to_le_bytes());
        for &i in &self.canonical {
            for v in self.rows[i].as_ref() {
                hasher.update(v.to_bits().to_le_bytes());
            }
            hasher.update([self.labels[i] as u8]);
        }
        hex::encode(hasher.finalize())
    }
}
