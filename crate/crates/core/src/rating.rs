//! Predicting aspect ratings from review text.
//!
//! Three predictors of increasing structure: per-aspect word scores over the
//! whole review, the same restricted to the sentences labeled with each
//! aspect, and a joint model adding pairwise rating-compatibility terms
//! between aspects. An observed `overall` rating is always kept as is.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::assignment::{segment_review_with, SegmentOptions};
use crate::corpus::{AspectSchema, Corpus, Review, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const RATING_MODEL_FORMAT: &str = "aspectlex-rating-model";
pub const RATING_MODEL_VERSION: u32 = 1;
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Unsegmented,
    Segmented,
    Joint,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::Unsegmented => "unsegmented",
            Predictor::Segmented => "segmented",
            Predictor::Joint => "joint",
        }
    }

    pub fn needs_segmentation(self) -> bool {
        self != Predictor::Unsegmented
    }
}

impl std::str::FromStr for Predictor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unsegmented" => Ok(Predictor::Unsegmented),
            "segmented" => Ok(Predictor::Segmented),
            "joint" => Ok(Predictor::Joint),
            _ => Err(Error::InvalidArgument(format!("unknown predictor `{s}`"))),
        }
    }
}

/// Per-aspect, per-level word weights `gamma[k][v][w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingParams {
    schema: AspectSchema,
    vocab_size: usize,
    offsets: Vec<usize>,
    weights: Vec<f64>,
}

impl RatingParams {
    pub fn zeros(schema: &AspectSchema, vocab_size: usize) -> Self {
        RatingParams {
            offsets: schema.level_offsets(),
            weights: vec![0.0; schema.total_levels() * vocab_size],
            schema: schema.clone(),
            vocab_size,
        }
    }

    pub fn schema(&self) -> &AspectSchema {
        &self.schema
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    #[inline]
    pub fn index(&self, k: usize, level: usize, w: usize) -> usize {
        (self.offsets[k] + level) * self.vocab_size + w
    }

    pub fn get(&self, k: usize, level: usize, w: usize) -> f64 {
        self.weights[self.index(k, level, w)]
    }

    pub fn set(&mut self, k: usize, level: usize, w: usize, value: f64) {
        let i = self.index(k, level, w);
        self.weights[i] = value;
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// `sum_w count(w) * gamma[k][v][w]` for every level `v` of aspect `k`.
    fn level_scores(&self, k: usize, bag: &[(usize, f64)]) -> Vec<f64> {
        (0..self.schema.num_levels(k))
            .map(|l| {
                let row = &self.weights[self.index(k, l, 0)..self.index(k, l, 0) + self.vocab_size];
                bag.iter().filter(|(w, _)| *w < self.vocab_size).map(|(w, c)| c * row[*w]).sum()
            })
            .collect()
    }
}

/// Pairwise compatibility `alpha[i][j][v_i][v_j]`, stored once per
/// unordered aspect pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseParams {
    levels: Vec<usize>,
    /// Start of the `(i, j)` block, `i < j`, in row-major `(i, j)` order.
    blocks: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl PairwiseParams {
    pub fn zeros(schema: &AspectSchema) -> Self {
        let k = schema.num_aspects();
        let levels: Vec<usize> = (0..k).map(|a| schema.num_levels(a)).collect();
        let mut blocks = vec![vec![usize::MAX; k]; k];
        let mut len = 0;
        for i in 0..k {
            for j in i + 1..k {
                blocks[i][j] = len;
                len += levels[i] * levels[j];
            }
        }
        PairwiseParams {
            levels,
            blocks,
            weights: vec![0.0; len],
        }
    }

    pub fn num_aspects(&self) -> usize {
        self.levels.len()
    }

    fn index(&self, i: usize, j: usize, vi: usize, vj: usize) -> usize {
        debug_assert!(i < j);
        self.blocks[i][j] + vi * self.levels[j] + vj
    }

    /// `alpha` for aspects `i != j` at levels `vi`, `vj`; symmetric in the
    /// sense `get(i, j, u, v) == get(j, i, v, u)`.
    pub fn get(&self, i: usize, j: usize, vi: usize, vj: usize) -> f64 {
        if i < j {
            self.weights[self.index(i, j, vi, vj)]
        } else {
            self.weights[self.index(j, i, vj, vi)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, vi: usize, vj: usize, value: f64) {
        let idx = if i < j {
            self.index(i, j, vi, vj)
        } else {
            self.index(j, i, vj, vi)
        };
        self.weights[idx] = value;
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// `sum_{i != j} alpha[i][j][v_i][v_j]`.
    pub fn score(&self, levels: &[usize]) -> f64 {
        let k = self.num_aspects();
        let mut total = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                total += self.weights[self.index(i, j, levels[i], levels[j])];
            }
        }
        2.0 * total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingPrediction {
    /// Predicted level index per aspect.
    pub levels: Vec<usize>,
    /// The corresponding rating values.
    pub ratings: Vec<f64>,
    pub predictor: Predictor,
}

fn prediction(schema: &AspectSchema, levels: Vec<usize>, predictor: Predictor) -> RatingPrediction {
    RatingPrediction {
        ratings: levels.iter().enumerate().map(|(k, &l)| schema.levels(k)[l]).collect(),
        levels,
        predictor,
    }
}

fn first_max(scores: &[f64]) -> usize {
    crate::assignment::argmax(scores)
}

/// Observed level of the `overall` aspect, if the schema has one.
fn clamped_overall(schema: &AspectSchema, review: &Review) -> Option<(usize, usize)> {
    let k = schema.overall_index()?;
    let value = review.ratings.get(k).copied().flatten()?;
    schema.level_index(k, value).map(|l| (k, l))
}

/// Ratings with every missing aspect filled in so the review can be
/// segmented: the level nearest (on the `[0, 1]` scale) to the observed
/// overall rating, or the middle level when there is none.
pub fn imputed_ratings(schema: &AspectSchema, ratings: &[Option<f64>]) -> Vec<Option<f64>> {
    let anchor = schema
        .overall_index()
        .and_then(|o| ratings.get(o).copied().flatten().map(|v| schema.scaled(o, v)));
    (0..schema.num_aspects())
        .map(|k| {
            if let Some(v) = ratings.get(k).copied().flatten() {
                return Some(v);
            }
            let levels = schema.levels(k);
            let l = match anchor {
                Some(a) => (0..levels.len())
                    .min_by(|&x, &y| {
                        let dx = (schema.scaled(k, levels[x]) - a).abs();
                        let dy = (schema.scaled(k, levels[y]) - a).abs();
                        dx.total_cmp(&dy)
                    })
                    .unwrap_or(0),
                None => (levels.len() - 1) / 2,
            };
            Some(levels[l])
        })
        .collect()
}

/// Sentence aspects of `review` for rating prediction. Only the overall
/// rating is trusted; every other aspect rating is imputed from it, so the
/// ratings being predicted never influence the segmentation.
pub fn segment_for_rating(segmenter: &ModelParams, review: &Review, options: SegmentOptions) -> Result<Vec<usize>> {
    let schema = segmenter.schema();
    let mut known = vec![None; schema.num_aspects()];
    if let Some(o) = schema.overall_index() {
        known[o] = review.ratings.get(o).copied().flatten();
    }
    let mut masked = review.clone();
    masked.ratings = imputed_ratings(schema, &known);
    segment_review_with(segmenter, &masked, options)
}

/// [`segment_for_rating`] over every review, in parallel.
pub fn segment_corpus_for_rating(segmenter: &ModelParams, corpus: &Corpus, options: SegmentOptions) -> Result<Vec<Vec<usize>>> {
    corpus
        .reviews
        .par_iter()
        .map(|r| segment_for_rating(segmenter, r, options))
        .collect()
}

fn bag(review: &Review, keep: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
    let mut words: Vec<usize> = review
        .sentences
        .iter()
        .enumerate()
        .filter(|(s, _)| keep(*s))
        .flat_map(|(_, s)| s.tokens.iter().copied())
        .collect();
    words.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for w in words {
        match out.last_mut() {
            Some((last, c)) if *last == w => *c += 1.0,
            _ => out.push((w, 1.0)),
        }
    }
    out
}

fn segmented_bags(review: &Review, labels: &[usize], k_count: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    if labels.len() != review.sentences.len() {
        return Err(Error::DimensionMismatch(format!(
            "review `{}` has {} sentences but {} labels",
            review.review_id,
            review.sentences.len(),
            labels.len()
        )));
    }
    Ok((0..k_count).map(|k| bag(review, |s| labels[s] == k)).collect())
}

fn independent(gamma: &RatingParams, review: &Review, bags: &[Vec<(usize, f64)>], predictor: Predictor) -> RatingPrediction {
    let schema = gamma.schema();
    let clamp = clamped_overall(schema, review);
    let levels = (0..schema.num_aspects())
        .map(|k| match clamp {
            Some((o, l)) if o == k => l,
            _ => first_max(&gamma.level_scores(k, &bags[k])),
        })
        .collect();
    prediction(schema, levels, predictor)
}

/// Per-aspect argmax over levels of the whole review's word scores; ties
/// go to the lowest level.
pub fn predict_unsegmented(gamma: &RatingParams, review: &Review) -> RatingPrediction {
    let b = bag(review, |_| true);
    let bags = vec![b; gamma.schema().num_aspects()];
    independent(gamma, review, &bags, Predictor::Unsegmented)
}

/// Like [`predict_unsegmented`] but aspect `k` only sees the sentences
/// labeled `k`.
pub fn predict_segmented(gamma: &RatingParams, review: &Review, labels: &[usize]) -> Result<RatingPrediction> {
    let bags = segmented_bags(review, labels, gamma.schema().num_aspects())?;
    Ok(independent(gamma, review, &bags, Predictor::Segmented))
}

/// Exact joint argmax of segmented word scores plus pairwise terms, by
/// enumeration in lexicographic order (ties keep the earliest vector).
/// `budget` bounds the number of rating vectors enumerated.
pub fn predict_joint(
    gamma: &RatingParams,
    alpha: &PairwiseParams,
    review: &Review,
    labels: &[usize],
    budget: u128,
) -> Result<RatingPrediction> {
    let schema = gamma.schema();
    let bags = segmented_bags(review, labels, schema.num_aspects())?;
    let unary: Vec<Vec<f64>> = (0..schema.num_aspects())
        .map(|k| gamma.level_scores(k, &bags[k]))
        .collect();
    let clamp = clamped_overall(schema, review);
    let levels = joint_argmax(&unary, alpha, clamp, budget, None)?;
    Ok(prediction(schema, levels, Predictor::Joint))
}

/// Maximizes `sum_k unary[k][v_k] + alpha.score(v) + loss(v)` over rating
/// vectors, with the optional clamp fixing one coordinate.
fn joint_argmax(
    unary: &[Vec<f64>],
    alpha: &PairwiseParams,
    clamp: Option<(usize, usize)>,
    budget: u128,
    loss: Option<&dyn Fn(&[usize]) -> f64>,
) -> Result<Vec<usize>> {
    let k_count = unary.len();
    let sizes: Vec<usize> = (0..k_count)
        .map(|k| match clamp {
            Some((o, _)) if o == k => 1,
            _ => unary[k].len(),
        })
        .collect();
    let required: u128 = sizes.iter().map(|&s| s as u128).product();
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let lift = |k: usize, i: usize| match clamp {
        Some((o, l)) if o == k => l,
        _ => i,
    };
    let mut idx = vec![0usize; k_count];
    let mut v: Vec<usize> = (0..k_count).map(|k| lift(k, 0)).collect();
    let mut best_v = v.clone();
    let mut best = f64::NEG_INFINITY;
    loop {
        let mut s: f64 = v.iter().enumerate().map(|(k, &l)| unary[k][l]).sum();
        s += alpha.score(&v);
        if let Some(f) = loss {
            s += f(&v);
        }
        if s > best {
            best = s;
            best_v.clone_from(&v);
        }
        // odometer, last coordinate fastest, so vectors come in lex order
        let mut k = k_count;
        loop {
            if k == 0 {
                return Ok(best_v);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                v[k] = lift(k, idx[k]);
                break;
            }
            idx[k] = 0;
            v[k] = lift(k, 0);
        }
    }
}

/// Rating-predictor training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingConfig {
    pub reg_weight: f64,
    pub epochs: usize,
    /// Offset `t0` of the step size `1 / (2 lambda (t + t0))`.
    pub step_offset: f64,
    /// Largest number of rating vectors joint inference may enumerate.
    pub budget: u128,
    pub seed: u64,
}

impl Default for RatingConfig {
    fn default() -> Self {
        RatingConfig {
            reg_weight: 1e-3,
            epochs: 20,
            step_offset: 100.0,
            budget: DEFAULT_BUDGET,
            seed: 0,
        }
    }
}

/// A trained rating predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingModel {
    pub predictor: Predictor,
    pub gamma: RatingParams,
    /// Present for the joint predictor.
    pub alpha: Option<PairwiseParams>,
    pub vocabulary: Vocabulary,
    pub budget: u128,
    pub config_hash: Option<String>,
}

impl RatingModel {
    /// Predicts every aspect of `review`; `labels` are its sentence aspects
    /// and are required unless the predictor is unsegmented.
    pub fn predict(&self, review: &Review, labels: Option<&[usize]>) -> Result<RatingPrediction> {
        let need = || {
            labels.ok_or_else(|| {
                Error::InvalidArgument(format!("the {} predictor needs sentence labels", self.predictor.name()))
            })
        };
        match self.predictor {
            Predictor::Unsegmented => Ok(predict_unsegmented(&self.gamma, review)),
            Predictor::Segmented => predict_segmented(&self.gamma, review, need()?),
            Predictor::Joint => {
                let zero;
                let alpha = match &self.alpha {
                    Some(a) => a,
                    None => {
                        zero = PairwiseParams::zeros(self.gamma.schema());
                        &zero
                    }
                };
                predict_joint(&self.gamma, alpha, review, need()?, self.budget)
            }
        }
    }
}

struct RatingExample {
    bags: Vec<Vec<(usize, f64)>>,
    truth: Vec<usize>,
}

fn sq_loss(schema: &AspectSchema, k: usize, a: usize, b: usize) -> f64 {
    let d = schema.scaled(k, schema.levels(k)[a]) - schema.scaled(k, schema.levels(k)[b]);
    d * d
}

/// Fits a rating predictor on the fully rated reviews of `corpus` by
/// averaged stochastic subgradient descent. Unsegmented and segmented
/// predictors minimize a per-aspect margin loss rescaled by the squared
/// rating difference; the joint predictor minimizes the structured hinge
/// with the summed squared difference. The `overall` aspect is excluded
/// from the loss and clamped to its observed value. `labels[r]` holds
/// review `r`'s sentence aspects when the predictor needs them.
pub fn train_rating_model(
    corpus: &Corpus,
    labels: Option<&[Vec<usize>]>,
    predictor: Predictor,
    config: &RatingConfig,
) -> Result<RatingModel> {
    if !(config.reg_weight > 0.0) || !(config.step_offset >= 1.0) {
        return Err(Error::InvalidArgument("reg_weight must be positive and step_offset at least 1".into()));
    }
    let schema = &corpus.schema;
    let k_count = schema.num_aspects();
    if predictor.needs_segmentation() {
        match labels {
            Some(l) if l.len() == corpus.reviews.len() => {}
            Some(l) => {
                return Err(Error::DimensionMismatch(format!(
                    "{} label rows for {} reviews",
                    l.len(),
                    corpus.reviews.len()
                )))
            }
            None => {
                return Err(Error::InvalidArgument(format!(
                    "the {} predictor needs a segmentation of the training reviews",
                    predictor.name()
                )))
            }
        }
    }
    let mut examples = Vec::new();
    for (r, review) in corpus.reviews.iter().enumerate() {
        if !review.is_fully_rated() {
            continue;
        }
        let truth = crate::corpus::rating_levels(schema, &review.ratings, &review.review_id)?;
        let bags = if predictor.needs_segmentation() {
            segmented_bags(review, &labels.unwrap()[r], k_count)?
        } else {
            vec![bag(review, |_| true); k_count]
        };
        examples.push(RatingExample {
            bags,
            truth,
        });
    }
    if examples.is_empty() {
        return Err(Error::NoData("no fully rated review to train on".into()));
    }
    let overall = schema.overall_index();
    let lambda = config.reg_weight;
    let v = corpus.vocabulary.len();
    let mut gamma = RatingParams::zeros(schema, v);
    let mut alpha = PairwiseParams::zeros(schema);
    let mut scale = 1.0;
    let mut avg_g = vec![0.0; gamma.weights.len()];
    let mut avg_a = vec![0.0; alpha.weights.len()];
    let mut averaged = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut t = 0usize;
    let epochs = config.epochs.max(1);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            t += 1;
            let ex = &examples[e];
            let eta = 1.0 / (2.0 * lambda * (t as f64 + config.step_offset));
            let unary: Vec<Vec<f64>> = (0..k_count)
                .map(|k| {
                    gamma.level_scores(k, &ex.bags[k]).into_iter().map(|x| x * scale).collect()
                })
                .collect();
            // (aspect, predicted level) pairs whose features move
            let pred: Vec<usize> = match predictor {
                Predictor::Joint => {
                    let mut scaled_alpha = alpha.clone();
                    scaled_alpha.weights.iter_mut().for_each(|x| *x *= scale);
                    let loss = |vec: &[usize]| -> f64 {
                        (0..k_count)
                            .filter(|&k| Some(k) != overall)
                            .map(|k| sq_loss(schema, k, vec[k], ex.truth[k]))
                            .sum()
                    };
                    let clamp = overall.map(|o| (o, ex.truth[o]));
                    joint_argmax(&unary, &scaled_alpha, clamp, config.budget, Some(&loss))?
                }
                _ => (0..k_count)
                    .map(|k| {
                        if Some(k) == overall {
                            return ex.truth[k];
                        }
                        let aug: Vec<f64> = unary[k]
                            .iter()
                            .enumerate()
                            .map(|(l, s)| s + sq_loss(schema, k, l, ex.truth[k]))
                            .collect();
                        first_max(&aug)
                    })
                    .collect(),
            };
            scale *= 1.0 - 2.0 * lambda * eta;
            let step = eta / scale;
            for k in 0..k_count {
                if pred[k] == ex.truth[k] {
                    continue;
                }
                for &(w, c) in &ex.bags[k] {
                    let i = gamma.index(k, pred[k], w);
                    gamma.weights[i] -= step * c;
                    let i = gamma.index(k, ex.truth[k], w);
                    gamma.weights[i] += step * c;
                }
            }
            if predictor == Predictor::Joint && pred != ex.truth {
                for i in 0..k_count {
                    for j in i + 1..k_count {
                        let a = alpha.index(i, j, pred[i], pred[j]);
                        alpha.weights[a] -= 2.0 * step;
                        let b = alpha.index(i, j, ex.truth[i], ex.truth[j]);
                        alpha.weights[b] += 2.0 * step;
                    }
                }
            }
            if scale < 1e-6 {
                gamma.weights.iter_mut().for_each(|x| *x *= scale);
                alpha.weights.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
        }
        if epoch >= epochs / 2 {
            for (a, x) in avg_g.iter_mut().zip(&gamma.weights) {
                *a += x * scale;
            }
            for (a, x) in avg_a.iter_mut().zip(&alpha.weights) {
                *a += x * scale;
            }
            averaged += 1;
        }
    }
    let n = averaged as f64;
    gamma.weights = avg_g.into_iter().map(|x| x / n).collect();
    alpha.weights = avg_a.into_iter().map(|x| x / n).collect();
    if gamma.weights.iter().chain(&alpha.weights).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rating weights".into()));
    }
    Ok(RatingModel {
        predictor,
        gamma,
        alpha: (predictor == Predictor::Joint).then_some(alpha),
        vocabulary: corpus.vocabulary.clone(),
        budget: config.budget,
        config_hash: None,
    })
}

#[derive(Serialize, Deserialize)]
struct PairBlock {
    i: usize,
    j: usize,
    table: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RatingModelFile {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    predictor: Predictor,
    budget: u128,
    schema: AspectSchema,
    vocabulary: Vocabulary,
    gamma: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<PairBlock>>,
}

impl RatingModel {
    pub fn to_json(&self) -> Result<String> {
        let g = &self.gamma;
        let schema = g.schema();
        let k = schema.num_aspects();
        if g.weights.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("rating weights".into()));
        }
        let file = RatingModelFile {
            format: RATING_MODEL_FORMAT.into(),
            version: RATING_MODEL_VERSION,
            config_hash: self.config_hash.clone(),
            predictor: self.predictor,
            budget: self.budget,
            schema: schema.clone(),
            vocabulary: self.vocabulary.clone(),
            gamma: (0..k)
                .map(|a| {
                    (0..schema.num_levels(a))
                        .map(|l| (0..g.vocab_size).map(|w| g.get(a, l, w)).collect())
                        .collect()
                })
                .collect(),
            alpha: self.alpha.as_ref().map(|al| {
                let mut blocks = Vec::new();
                for i in 0..k {
                    for j in i + 1..k {
                        blocks.push(PairBlock {
                            i,
                            j,
                            table: (0..al.levels[i])
                                .map(|u| (0..al.levels[j]).map(|v| al.get(i, j, u, v)).collect())
                                .collect(),
                        });
                    }
                }
                blocks
            }),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RatingModelFile = serde_json::from_str(text)?;
        if file.format != RATING_MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unexpected format `{}`", file.format)));
        }
        if file.version != RATING_MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported version {} (expected {RATING_MODEL_VERSION})",
                file.version
            )));
        }
        let schema = &file.schema;
        let v = file.vocabulary.len();
        let mut gamma = RatingParams::zeros(schema, v);
        let dim = |m: String| Error::DimensionMismatch(m);
        if file.gamma.len() != schema.num_aspects() {
            return Err(dim(format!("gamma has {} aspects, schema {}", file.gamma.len(), schema.num_aspects())));
        }
        for (k, block) in file.gamma.iter().enumerate() {
            if block.len() != schema.num_levels(k) {
                return Err(dim(format!("gamma of aspect {k} has {} levels", block.len())));
            }
            for (l, row) in block.iter().enumerate() {
                if row.len() != v {
                    return Err(dim(format!("gamma row has {} entries, vocabulary {v}", row.len())));
                }
                for (w, x) in row.iter().enumerate() {
                    gamma.set(k, l, w, *x);
                }
            }
        }
        let alpha = match file.alpha {
            None => None,
            Some(blocks) => {
                let mut al = PairwiseParams::zeros(schema);
                let k = schema.num_aspects();
                if blocks.len() != k * (k - 1) / 2 {
                    return Err(dim(format!("alpha has {} pair blocks", blocks.len())));
                }
                for b in blocks {
                    if b.i >= b.j || b.j >= k || b.table.len() != al.levels[b.i]
                        || b.table.iter().any(|r| r.len() != al.levels[b.j])
                    {
                        return Err(dim(format!("bad alpha block ({}, {})", b.i, b.j)));
                    }
                    for (u, row) in b.table.iter().enumerate() {
                        for (w, x) in row.iter().enumerate() {
                            al.set(b.i, b.j, u, w, *x);
                        }
                    }
                }
                Some(al)
            }
        };
        if gamma.weights.iter().chain(alpha.iter().flat_map(|a| a.weights.iter())).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("rating weights".into()));
        }
        Ok(RatingModel {
            predictor: file.predictor,
            gamma,
            alpha,
            vocabulary: file.vocabulary,
            budget: file.budget,
            config_hash: file.config_hash,
        })
    }
}

pub fn save_rating_model(model: &RatingModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model.to_json()?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_rating_model(path: impl AsRef<Path>) -> Result<RatingModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RatingModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LoadOptions, RawReview, Sentence};
    use proptest::prelude::*;
    use rand::Rng;

    fn schema(k: usize, l: usize) -> AspectSchema {
        let names: Vec<String> = (0..k).map(|i| format!("a{i}")).collect();
        let lv: Vec<f64> = (1..=l).map(|x| x as f64).collect();
        AspectSchema::new(names, vec![lv; k], None).unwrap()
    }

    fn review(tokens: Vec<Vec<usize>>, ratings: Vec<Option<f64>>) -> Review {
        Review {
            review_id: "r".into(),
            item_id: String::new(),
            user_id: String::new(),
            sentences: tokens
                .into_iter()
                .map(|t| Sentence {
                    tokens: t,
                    raw_text: String::new(),
                    rating: None,
                })
                .collect(),
            ratings,
        }
    }

    fn random_gamma(s: &AspectSchema, v: usize, rng: &mut ChaCha8Rng) -> RatingParams {
        let mut g = RatingParams::zeros(s, v);
        g.weights_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        g
    }

    fn random_alpha(s: &AspectSchema, rng: &mut ChaCha8Rng) -> PairwiseParams {
        let mut a = PairwiseParams::zeros(s);
        a.weights_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        a
    }

    fn random_review(k: usize, v: usize, rng: &mut ChaCha8Rng) -> (Review, Vec<usize>) {
        let n = rng.random_range(1..6);
        let tokens = (0..n)
            .map(|_| (0..rng.random_range(0..5)).map(|_| rng.random_range(0..v)).collect())
            .collect();
        let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
        (review(tokens, vec![None; k]), labels)
    }

    fn brute_joint(g: &RatingParams, a: &PairwiseParams, r: &Review, labels: &[usize]) -> Vec<usize> {
        let s = g.schema();
        let k = s.num_aspects();
        let bags = segmented_bags(r, labels, k).unwrap();
        let sizes: Vec<usize> = (0..k).map(|i| s.num_levels(i)).collect();
        let total: usize = sizes.iter().product();
        let mut best = (f64::NEG_INFINITY, vec![]);
        // enumerate in lexicographic order
        for code in 0..total {
            let mut c = code;
            let mut v = vec![0; k];
            for i in (0..k).rev() {
                v[i] = c % sizes[i];
                c /= sizes[i];
            }
            let mut score = a.score(&v);
            for i in 0..k {
                score += bags[i].iter().map(|(w, n)| n * g.get(i, v[i], *w)).sum::<f64>();
            }
            if score > best.0 {
                best = (score, v);
            }
        }
        best.1
    }

    #[test]
    fn zero_gamma_gives_lowest_levels() {
        let s = schema(3, 5);
        let g = RatingParams::zeros(&s, 4);
        let r = review(vec![vec![0, 1]], vec![None; 3]);
        assert_eq!(predict_unsegmented(&g, &r).levels, vec![0, 0, 0]);
        assert_eq!(predict_segmented(&g, &r, &[1]).unwrap().levels, vec![0, 0, 0]);
    }

    #[test]
    fn single_word_picks_its_level() {
        let s = schema(2, 5);
        let mut g = RatingParams::zeros(&s, 3);
        g.set(1, 4, 2, 1.0);
        let r = review(vec![vec![2]], vec![None; 2]);
        let p = predict_unsegmented(&g, &r);
        assert_eq!(p.levels, vec![0, 4]);
        assert_eq!(p.ratings, vec![1.0, 5.0]);
    }

    #[test]
    fn segmented_uses_only_labeled_sentences() {
        let s = schema(2, 3);
        let mut g = RatingParams::zeros(&s, 2);
        g.set(0, 2, 0, 1.0);
        g.set(1, 1, 1, 1.0);
        g.set(0, 0, 1, 5.0);
        let r = review(vec![vec![0], vec![1]], vec![None; 2]);
        assert_eq!(predict_segmented(&g, &r, &[0, 1]).unwrap().levels, vec![2, 1]);
        // aspect 1 has no sentence: lowest level
        assert_eq!(predict_segmented(&g, &r, &[0, 0]).unwrap().levels, vec![0, 0]);
    }

    #[test]
    fn strong_agreement_pulls_all_aspects_up() {
        let s = schema(3, 5);
        let mut g = RatingParams::zeros(&s, 1);
        g.set(0, 4, 0, 1.0);
        let mut a = PairwiseParams::zeros(&s);
        for i in 0..3 {
            for j in i + 1..3 {
                for u in 0..5 {
                    for v in 0..5 {
                        if u != v {
                            a.set(i, j, u, v, -1e6);
                        }
                    }
                }
            }
        }
        let r = review(vec![vec![0], vec![], vec![]], vec![None; 3]);
        let labels = [0, 1, 2];
        let p = predict_joint(&g, &a, &r, &labels, DEFAULT_BUDGET).unwrap();
        assert_eq!(p.levels, vec![4, 4, 4]);
        assert_eq!(p.levels, brute_joint(&g, &a, &r, &labels));
    }

    #[test]
    fn imputation_follows_overall() {
        let s = AspectSchema::uniform(&["look", "taste", "overall"], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(imputed_ratings(&s, &[None, Some(2.0), Some(4.0)]), vec![Some(4.0), Some(2.0), Some(4.0)]);
        assert_eq!(imputed_ratings(&s, &[None, None, None]), vec![Some(3.0); 3]);
        let coarse = AspectSchema::new(
            vec!["look".into(), "overall".into()],
            vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0, 5.0]],
            None,
        )
        .unwrap();
        // overall 4 of 1..5 is 0.75; the nearest of 0, 0.5, 1 is 0.5 (ties go low)
        assert_eq!(imputed_ratings(&coarse, &[None, Some(4.0)])[0], Some(2.0));
    }

    #[test]
    fn budget_is_enforced() {
        let s = schema(4, 5);
        let g = RatingParams::zeros(&s, 1);
        let a = PairwiseParams::zeros(&s);
        let r = review(vec![vec![0]], vec![None; 4]);
        assert!(matches!(
            predict_joint(&g, &a, &r, &[0], 100),
            Err(Error::BudgetExceeded { required: 625, budget: 100 })
        ));
    }

    #[test]
    fn alpha_access_is_symmetric() {
        let s = schema(3, 4);
        let mut a = PairwiseParams::zeros(&s);
        a.set(2, 0, 3, 1, 7.0);
        assert_eq!(a.get(0, 2, 1, 3), 7.0);
        assert_eq!(a.score(&[1, 0, 3]), 14.0);
    }

    #[test]
    fn overall_is_clamped_when_observed() {
        let s = AspectSchema::uniform(&["look", "overall"], &[1.0, 2.0, 3.0]).unwrap();
        let g = RatingParams::zeros(&s, 1);
        let r = review(vec![vec![0]], vec![None, Some(3.0)]);
        assert_eq!(predict_unsegmented(&g, &r).levels, vec![0, 2]);
        assert_eq!(predict_segmented(&g, &r, &[0]).unwrap().levels, vec![0, 2]);
        let a = PairwiseParams::zeros(&s);
        assert_eq!(predict_joint(&g, &a, &r, &[0], 100).unwrap().levels, vec![0, 2]);
    }

    fn separable_corpus(s: &AspectSchema, n: usize) -> (Corpus, Vec<Vec<usize>>) {
        // word `a{k}l{v}` marks level v of aspect k
        let k = s.num_aspects();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut raw = Vec::new();
        let mut labels = Vec::new();
        for r in 0..n {
            let levels: Vec<usize> = (0..k).map(|_| rng.random_range(0..s.num_levels(0))).collect();
            let sentences = (0..k)
                .map(|a| crate::corpus::TokenizedSentence {
                    raw_text: String::new(),
                    words: vec![format!("a{a}l{}", levels[a]), "filler".into()],
                })
                .collect();
            raw.push(RawReview {
                review_id: format!("r{r}"),
                item_id: String::new(),
                user_id: String::new(),
                sentences,
                ratings: levels.iter().map(|&l| Some(s.levels(0)[l])).collect(),
                sentence_ratings: vec![None; k],
            });
            labels.push((0..k).collect());
        }
        (Corpus::from_raw(s.clone(), raw, &LoadOptions { min_df: 1, vocabulary: None }), labels)
    }

    #[test]
    fn separable_toy_has_zero_training_error() {
        let s = schema(3, 3);
        let (corpus, labels) = separable_corpus(&s, 40);
        for predictor in [Predictor::Segmented, Predictor::Joint] {
            let m = train_rating_model(&corpus, Some(&labels), predictor, &RatingConfig::default()).unwrap();
            for (r, review) in corpus.reviews.iter().enumerate() {
                let mut hidden = review.clone();
                hidden.ratings = vec![None; 3];
                let p = m.predict(&hidden, Some(&labels[r])).unwrap();
                let want: Vec<f64> = review.ratings.iter().map(|x| x.unwrap()).collect();
                assert_eq!(p.ratings, want, "{predictor:?}");
            }
        }
        // the whole review is the bag: each aspect still has private words
        let m = train_rating_model(&corpus, None, Predictor::Unsegmented, &RatingConfig::default()).unwrap();
        for review in &corpus.reviews {
            let want: Vec<f64> = review.ratings.iter().map(|x| x.unwrap()).collect();
            assert_eq!(predict_unsegmented(&m.gamma, review).ratings, want);
        }
    }

    #[test]
    fn rating_model_round_trip() {
        let s = schema(3, 3);
        let (corpus, labels) = separable_corpus(&s, 10);
        let m = train_rating_model(&corpus, Some(&labels), Predictor::Joint, &RatingConfig::default()).unwrap();
        let back = RatingModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let text = m.to_json().unwrap();
        assert!(RatingModel::from_json(&text[..text.len() - 10]).is_err());
    }

    #[test]
    fn training_requires_fully_rated_reviews() {
        let s = schema(2, 3);
        let (mut corpus, labels) = separable_corpus(&s, 3);
        corpus.reviews.iter_mut().for_each(|r| r.ratings[0] = None);
        assert!(matches!(
            train_rating_model(&corpus, Some(&labels), Predictor::Segmented, &RatingConfig::default()),
            Err(Error::NoData(_))
        ));
    }

    proptest! {
        #[test]
        fn joint_without_alpha_is_segmented(seed in any::<u64>(), k in 1usize..=4, l in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = schema(k, l);
            let g = random_gamma(&s, 5, &mut rng);
            let (r, labels) = random_review(k, 5, &mut rng);
            let a = PairwiseParams::zeros(&s);
            prop_assert_eq!(
                predict_joint(&g, &a, &r, &labels, DEFAULT_BUDGET).unwrap().levels,
                predict_segmented(&g, &r, &labels).unwrap().levels
            );
        }

        #[test]
        fn joint_matches_enumeration(seed in any::<u64>(), k in 1usize..=3, l in 1usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = schema(k, l);
            let g = random_gamma(&s, 5, &mut rng);
            let a = random_alpha(&s, &mut rng);
            let (r, labels) = random_review(k, 5, &mut rng);
            prop_assert_eq!(predict_joint(&g, &a, &r, &labels, DEFAULT_BUDGET).unwrap().levels, brute_joint(&g, &a, &r, &labels));
        }

        #[test]
        fn unsegmented_matches_scan(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = schema(3, 4);
            let g = random_gamma(&s, 6, &mut rng);
            let (r, _) = random_review(3, 6, &mut rng);
            let p = predict_unsegmented(&g, &r);
            for k in 0..3 {
                let scores: Vec<f64> = (0..4)
                    .map(|l| r.sentences.iter().flat_map(|s| &s.tokens).map(|&w| g.get(k, l, w)).sum())
                    .collect();
                let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let first = scores.iter().position(|&x| x == best).unwrap();
                prop_assert_eq!(p.levels[k], first);
            }
        }

        #[test]
        fn positive_scaling_keeps_argmax(seed in any::<u64>(), c in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = schema(3, 4);
            let g = random_gamma(&s, 6, &mut rng);
            let a = random_alpha(&s, &mut rng);
            let (r, labels) = random_review(3, 6, &mut rng);
            let mut g2 = g.clone();
            g2.weights_mut().iter_mut().for_each(|x| *x *= c);
            let mut a2 = a.clone();
            a2.weights_mut().iter_mut().for_each(|x| *x *= c);
            prop_assert_eq!(predict_unsegmented(&g, &r).levels, predict_unsegmented(&g2, &r).levels);
            prop_assert_eq!(predict_segmented(&g, &r, &labels).unwrap().levels, predict_segmented(&g2, &r, &labels).unwrap().levels);
            prop_assert_eq!(predict_joint(&g, &a, &r, &labels, DEFAULT_BUDGET).unwrap().levels, predict_joint(&g2, &a2, &r, &labels, DEFAULT_BUDGET).unwrap().levels);
        }
    }
}
