//! Structured hinge training from fully labeled reviews.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assignment::{segment_compat, SegmentOptions};
use crate::corpus::{Corpus, SentenceLabel};
use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::objective::{Item, TrainingSet};
use super::{AssignmentState, LogEntry, TrainConfig, TrainLog, TrainOutcome};

/// A labeled review with its ambiguous sentences removed.
struct Example<'a> {
    review: usize,
    items: Vec<Item<'a>>,
    truth: Vec<usize>,
}

fn examples(corpus: &Corpus) -> Result<Vec<Example<'_>>> {
    let grid = corpus.label_grid()?;
    let mut out = Vec::new();
    for (r, review) in corpus.reviews.iter().enumerate() {
        let row = &grid[r];
        if row.iter().all(Option::is_none) {
            continue;
        }
        if let Some(s) = row.iter().position(Option::is_none) {
            return Err(Error::MissingLabels {
                review_id: review.review_id.clone(),
                message: format!("sentence {s} has no label"),
            });
        }
        let keep: Vec<usize> = (0..row.len())
            .filter(|&s| matches!(row[s], Some(SentenceLabel::Aspect(_))))
            .collect();
        let set = TrainingSet::new(corpus, &[r], |_, s| keep.contains(&s))?;
        if set.items.is_empty() {
            continue;
        }
        out.push(Example {
            review: r,
            items: set.items,
            truth: keep.iter().map(|&s| row[s].and_then(SentenceLabel::aspect).unwrap()).collect(),
        });
    }
    Ok(out)
}

fn compat_rows(params: &ModelParams, items: &[Item], scale: f64) -> Vec<Vec<f64>> {
    let k = params.num_aspects();
    items
        .iter()
        .map(|it| {
            let mut row = vec![0.0; k];
            params.compat_into(it.tokens, &it.levels, &mut row);
            row.iter_mut().for_each(|x| *x *= scale);
            row
        })
        .collect()
}

/// The labeling maximizing compatibility plus the per-sentence 0/1 loss
/// `[label != truth] / n` against `truth`, under the same constraint as
/// prediction.
pub fn loss_augmented_inference(
    compat: &[Vec<f64>],
    truth: &[usize],
    options: SegmentOptions,
) -> Vec<usize> {
    let n = compat.len() as f64;
    let augmented: Vec<Vec<f64>> = compat
        .iter()
        .zip(truth)
        .map(|(row, &t)| {
            row.iter()
                .enumerate()
                .map(|(k, &c)| if k == t { c } else { c + 1.0 / n })
                .collect()
        })
        .collect();
    segment_compat(&augmented, options, &[])
}

fn zero_one(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

fn score(compat: &[Vec<f64>], labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(s, &k)| compat[s][k]).sum()
}

/// Mean structured hinge and mean 0/1 loss of the constrained prediction
/// over the labeled reviews.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeValue {
    pub hinge: f64,
    pub loss: f64,
}

fn hinge_of(params: &ModelParams, examples: &[Example], options: SegmentOptions) -> HingeValue {
    let parts: Vec<(f64, f64)> = examples
        .par_iter()
        .map(|ex| {
            let compat = compat_rows(params, &ex.items, 1.0);
            let aug = loss_augmented_inference(&compat, &ex.truth, options);
            let hinge = score(&compat, &aug) + zero_one(&aug, &ex.truth) - score(&compat, &ex.truth);
            let pred = segment_compat(&compat, options, &[]);
            (hinge, zero_one(&pred, &ex.truth))
        })
        .collect();
    let n = examples.len().max(1) as f64;
    HingeValue {
        hinge: parts.iter().map(|p| p.0).sum::<f64>() / n,
        loss: parts.iter().map(|p| p.1).sum::<f64>() / n,
    }
}

/// Structured hinge of `params` on the corpus's labeled reviews.
pub fn structured_hinge(params: &ModelParams, corpus: &Corpus, options: SegmentOptions) -> Result<HingeValue> {
    Ok(hinge_of(params, &examples(corpus)?, options))
}

/// Adds `coef` times the features of `labels` on `items` to `u`.
fn add_features(u: &mut ModelParams, items: &[Item], labels: &[usize], coef: f64) {
    for (it, &k) in items.iter().zip(labels) {
        let theta = u.theta_index(k, 0);
        let phi = u.phi_index(k, it.levels[k], 0);
        let w = u.weights_mut();
        for &t in it.tokens {
            w[theta + t] += coef;
            w[phi + t] += coef;
        }
    }
}

/// Averaged stochastic subgradient descent on
/// `hinge_reg_weight * |w|^2 + mean structured hinge` over the labeled reviews.
/// Reviews without labels are ignored; a partially labeled review is an
/// error. Ambiguous sentences are dropped.
pub fn train_supervised(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let examples = examples(corpus)?;
    if examples.is_empty() {
        return Err(Error::NoData("no labeled review to train on".into()));
    }
    let options = config.segment_options();
    let lambda = config.hinge_reg_weight;
    let mut u = ModelParams::zeros(&corpus.schema, corpus.vocabulary.len());
    let mut scale = 1.0;
    let mut avg = vec![0.0; u.weights().len()];
    let mut averaged = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = TrainLog::default();
    let mut t = 0usize;
    let epochs = config.epochs.max(1);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            t += 1;
            let ex = &examples[e];
            let eta = 1.0 / (2.0 * lambda * (t as f64 + config.step_offset));
            let compat = compat_rows(&u, &ex.items, scale);
            let pred = loss_augmented_inference(&compat, &ex.truth, options);
            scale *= 1.0 - 2.0 * lambda * eta;
            if pred != ex.truth {
                let step = eta / scale;
                add_features(&mut u, &ex.items, &pred, -step);
                add_features(&mut u, &ex.items, &ex.truth, step);
            }
            if scale < 1e-6 {
                u.weights_mut().iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
        }
        let mut current = u.clone();
        current.weights_mut().iter_mut().for_each(|x| *x *= scale);
        if epoch >= epochs / 2 {
            for (a, x) in avg.iter_mut().zip(current.weights()) {
                *a += x;
            }
            averaged += 1;
        }
        let h = hinge_of(&current, &examples, options);
        log.entries.push(LogEntry {
            restart: 0,
            iteration: epoch,
            objective_after_e: -(lambda * current.norm_sq() + h.hinge),
            m_step_trace: Vec::new(),
            label_changes: (h.loss * examples.iter().map(|e| e.truth.len()).sum::<usize>() as f64 / examples.len() as f64).round() as usize,
        });
    }
    let mut params = ModelParams::zeros(&corpus.schema, corpus.vocabulary.len());
    for (w, a) in params.weights_mut().iter_mut().zip(&avg) {
        *w = a / averaged as f64;
    }
    params.normalize_phi();
    if !params.is_finite() {
        return Err(Error::NonFinite("supervised weights".into()));
    }
    let final_hinge = hinge_of(&params, &examples, options);

    let mut state = AssignmentState {
        review_indices: Vec::new(),
        labels: Vec::new(),
        observed: Vec::new(),
    };
    let grid = corpus.label_grid()?;
    for ex in &examples {
        let review = &corpus.reviews[ex.review];
        state.review_indices.push(ex.review);
        state.labels.push(crate::assignment::segment_review_with(&params, review, options)?);
        state.observed.push(
            grid[ex.review]
                .iter()
                .map(|l| l.and_then(SentenceLabel::aspect))
                .collect(),
        );
    }
    Ok(TrainOutcome {
        objective: -(lambda * params.norm_sq() + final_hinge.hinge),
        params,
        state,
        restart: 0,
        log,
    })
}
