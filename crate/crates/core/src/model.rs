//! Aspect and sentiment weights, sentence-aspect probabilities, and the
//! model file.
//!
//! A sentence's compatibility with aspect `k` sums, over its words, the
//! aspect weight `theta[k][w]` plus the sentiment weight
//! `phi[k][v_k][w]` selected by the review's rating `v_k` for that aspect.
//! The probability that the sentence discusses `k` is the softmax of those
//! compatibilities over aspects.

use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AspectSchema, Corpus, Sentence, Vocabulary};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "aspectlex-model";
pub const MODEL_VERSION: u32 = 1;

/// Dense `theta` (K x V) followed by `phi` (sum of L_k x V), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    schema: AspectSchema,
    vocab_size: usize,
    level_offsets: Vec<usize>,
    weights: Vec<f64>,
}

/// Per-aspect compatibility of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityRow(Vec<f64>);

impl Deref for CompatibilityRow {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl CompatibilityRow {
    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl ModelParams {
    pub fn zeros(schema: &AspectSchema, vocab_size: usize) -> Self {
        let k = schema.num_aspects();
        let len = (k + schema.total_levels()) * vocab_size;
        ModelParams {
            level_offsets: schema.level_offsets(),
            schema: schema.clone(),
            vocab_size,
            weights: vec![0.0; len],
        }
    }

    pub fn schema(&self) -> &AspectSchema {
        &self.schema
    }

    pub fn num_aspects(&self) -> usize {
        self.schema.num_aspects()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Flat parameter vector, theta block first.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    #[inline]
    pub fn theta_index(&self, k: usize, w: usize) -> usize {
        k * self.vocab_size + w
    }

    #[inline]
    pub fn phi_index(&self, k: usize, level: usize, w: usize) -> usize {
        (self.num_aspects() + self.level_offsets[k] + level) * self.vocab_size + w
    }

    pub fn theta(&self, k: usize, w: usize) -> f64 {
        self.weights[self.theta_index(k, w)]
    }

    pub fn phi(&self, k: usize, level: usize, w: usize) -> f64 {
        self.weights[self.phi_index(k, level, w)]
    }

    pub fn set_theta(&mut self, k: usize, w: usize, value: f64) {
        let i = self.theta_index(k, w);
        self.weights[i] = value;
    }

    pub fn set_phi(&mut self, k: usize, level: usize, w: usize, value: f64) {
        let i = self.phi_index(k, level, w);
        self.weights[i] = value;
    }

    pub fn theta_row(&self, k: usize) -> &[f64] {
        let start = self.theta_index(k, 0);
        &self.weights[start..start + self.vocab_size]
    }

    pub fn phi_row(&self, k: usize, level: usize) -> &[f64] {
        let start = self.phi_index(k, level, 0);
        &self.weights[start..start + self.vocab_size]
    }

    /// Squared l2 norm of theta and phi together.
    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|x| x.is_finite())
    }

    /// Writes the compatibility of `tokens` with each aspect into `out`,
    /// where `levels[k]` is the rating level indexing aspect `k`'s sentiment
    /// weights. Tokens at or beyond the vocabulary size are skipped.
    pub fn compat_into(&self, tokens: &[usize], levels: &[usize], out: &mut [f64]) {
        let v = self.vocab_size;
        let k_count = self.num_aspects();
        for (k, o) in out.iter_mut().enumerate().take(k_count) {
            let theta = &self.weights[k * v..(k + 1) * v];
            let phi_start = self.phi_index(k, levels[k], 0);
            let phi = &self.weights[phi_start..phi_start + v];
            *o = tokens
                .iter()
                .filter(|&&w| w < v)
                .map(|&w| theta[w] + phi[w])
                .sum();
        }
    }

    /// Shifts each `phi[k][.][w]` so it sums to one over levels, moving the
    /// shift into `theta[k][w]`. Compatibilities are unchanged for every
    /// rating vector.
    pub fn normalize_phi(&mut self) {
        for k in 0..self.num_aspects() {
            let levels = self.schema.num_levels(k);
            for w in 0..self.vocab_size {
                let sum: f64 = (0..levels).map(|l| self.phi(k, l, w)).sum();
                let delta = (1.0 - sum) / levels as f64;
                if delta == 0.0 {
                    continue;
                }
                for l in 0..levels {
                    let i = self.phi_index(k, l, w);
                    self.weights[i] += delta;
                }
                let i = self.theta_index(k, w);
                self.weights[i] -= delta;
            }
        }
    }

    /// Largest violation of the `sum_v phi[k][v][w] = 1` constraint.
    pub fn phi_constraint_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.num_aspects() {
            for w in 0..self.vocab_size {
                let sum: f64 = (0..self.schema.num_levels(k))
                    .map(|l| self.phi(k, l, w))
                    .sum();
                worst = worst.max((sum - 1.0).abs());
            }
        }
        worst
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `log(sum(exp(scores)))`, max-subtracted.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

fn levels_for(params: &ModelParams, ratings: &[Option<f64>]) -> Result<Vec<usize>> {
    let schema = params.schema();
    if ratings.len() != schema.num_aspects() {
        return Err(Error::DimensionMismatch(format!(
            "{} ratings for {} aspects",
            ratings.len(),
            schema.num_aspects()
        )));
    }
    crate::corpus::rating_levels(schema, ratings, "<sentence>")
}

/// Compatibility of `sentence` with every aspect under `ratings`. A missing
/// rating is an error: impute it or restrict the aspects first.
pub fn compatibility(
    params: &ModelParams,
    sentence: &Sentence,
    ratings: &[Option<f64>],
) -> Result<CompatibilityRow> {
    let levels = levels_for(params, ratings)?;
    let mut out = vec![0.0; params.num_aspects()];
    params.compat_into(&sentence.tokens, &levels, &mut out);
    Ok(CompatibilityRow(out))
}

/// Probability that `sentence` discusses each aspect.
pub fn sentence_aspect_probs(
    params: &ModelParams,
    sentence: &Sentence,
    ratings: &[Option<f64>],
) -> Result<Vec<f64>> {
    Ok(softmax(&compatibility(params, sentence, ratings)?))
}

/// Sum over every sentence of the log-probability of its assigned aspect.
pub fn corpus_log_likelihood(
    params: &ModelParams,
    corpus: &Corpus,
    assignments: &[Vec<usize>],
) -> Result<f64> {
    if assignments.len() != corpus.reviews.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignment rows for {} reviews",
            assignments.len(),
            corpus.reviews.len()
        )));
    }
    let k_count = params.num_aspects();
    let mut total = 0.0;
    let mut scores = vec![0.0; k_count];
    for (review, labels) in corpus.reviews.iter().zip(assignments) {
        if labels.len() != review.sentences.len() {
            return Err(Error::DimensionMismatch(format!(
                "review `{}` has {} sentences but {} labels",
                review.review_id,
                review.sentences.len(),
                labels.len()
            )));
        }
        for (s, (sentence, &label)) in review.sentences.iter().zip(labels).enumerate() {
            if label >= k_count {
                return Err(Error::UnknownAspect(label.to_string()));
            }
            let levels = review.sentence_levels(&corpus.schema, s)?;
            params.compat_into(&sentence.tokens, &levels, &mut scores);
            total += scores[label] - log_sum_exp(&scores);
        }
    }
    Ok(total)
}

/// Returns a copy of `params` satisfying the sentiment-weight constraint.
pub fn normalize_phi(params: &ModelParams) -> ModelParams {
    let mut out = params.clone();
    out.normalize_phi();
    out
}

/// The `n` highest-weighted words for an aspect: by `theta` when `level` is
/// `None`, otherwise by `phi` at that rating level. Ties break
/// lexicographically.
pub fn top_words(
    params: &ModelParams,
    vocabulary: &Vocabulary,
    aspect: usize,
    level: Option<usize>,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    if aspect >= params.num_aspects() {
        return Err(Error::UnknownAspect(aspect.to_string()));
    }
    if vocabulary.len() != params.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "vocabulary has {} words, model has {}",
            vocabulary.len(),
            params.vocab_size()
        )));
    }
    let row = match level {
        None => params.theta_row(aspect),
        Some(l) if l < params.schema().num_levels(aspect) => params.phi_row(aspect, l),
        Some(l) => {
            return Err(Error::UnknownRating {
                aspect: params.schema().aspect_name(aspect).to_string(),
                level: l,
            })
        }
    };
    let mut ranked: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| vocabulary.word(a.0).cmp(vocabulary.word(b.0)))
    });
    Ok(ranked
        .into_iter()
        .take(n)
        .map(|(w, x)| (vocabulary.word(w).to_string(), x))
        .collect())
}

/// A trained segmentation model with the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub vocabulary: Vocabulary,
    /// Hash of the configuration that produced the model, if known.
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    schema: AspectSchema,
    vocabulary: Vocabulary,
    theta: Vec<Vec<f64>>,
    phi: Vec<Vec<Vec<f64>>>,
}

impl Model {
    pub fn new(params: ModelParams, vocabulary: Vocabulary) -> Self {
        Model {
            params,
            vocabulary,
            config_hash: None,
        }
    }

    /// Fails unless the model was trained for `schema`.
    pub fn check_schema(&self, schema: &AspectSchema) -> Result<()> {
        if self.params.schema() != schema {
            let (a, b) = (self.params.num_aspects(), schema.num_aspects());
            return Err(Error::DimensionMismatch(format!(
                "model schema ({a} aspects) differs from the expected schema ({b} aspects)"
            )));
        }
        Ok(())
    }

    fn to_file(&self) -> Result<ModelFile> {
        if !self.params.is_finite() {
            return Err(Error::NonFinite("model weights".into()));
        }
        let p = &self.params;
        let schema = p.schema();
        Ok(ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config_hash: self.config_hash.clone(),
            schema: schema.clone(),
            vocabulary: self.vocabulary.clone(),
            theta: (0..p.num_aspects()).map(|k| p.theta_row(k).to_vec()).collect(),
            phi: (0..p.num_aspects())
                .map(|k| {
                    (0..schema.num_levels(k))
                        .map(|l| p.phi_row(k, l).to_vec())
                        .collect()
                })
                .collect(),
        })
    }

    fn from_file(file: ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unexpected format `{}`", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        let schema = &file.schema;
        let v = file.vocabulary.len();
        let mut params = ModelParams::zeros(schema, v);
        if file.theta.len() != schema.num_aspects() || file.phi.len() != schema.num_aspects() {
            return Err(Error::DimensionMismatch(format!(
                "schema has {} aspects, weights have {} theta rows and {} phi blocks",
                schema.num_aspects(),
                file.theta.len(),
                file.phi.len()
            )));
        }
        for (k, row) in file.theta.iter().enumerate() {
            check_row(row, v, "theta")?;
            for (w, x) in row.iter().enumerate() {
                params.set_theta(k, w, *x);
            }
            if file.phi[k].len() != schema.num_levels(k) {
                return Err(Error::DimensionMismatch(format!(
                    "aspect `{}` has {} levels, phi has {}",
                    schema.aspect_name(k),
                    schema.num_levels(k),
                    file.phi[k].len()
                )));
            }
            for (l, row) in file.phi[k].iter().enumerate() {
                check_row(row, v, "phi")?;
                for (w, x) in row.iter().enumerate() {
                    params.set_phi(k, l, w, *x);
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("model weights".into()));
        }
        Ok(Model {
            params,
            vocabulary: file.vocabulary,
            config_hash: file.config_hash,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file()?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

fn check_row(row: &[f64], v: usize, what: &str) -> Result<()> {
    if row.len() != v {
        return Err(Error::DimensionMismatch(format!(
            "{what} row has {} entries, vocabulary has {v}",
            row.len()
        )));
    }
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model.to_json()?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Model::from_json(&text)
}
