//! The regularized sentence log-likelihood, its gradient, and the
//! gradient-ascent M-step.

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{log_sum_exp, ModelParams};

use super::TrainConfig;

const CHUNK: usize = 512;
const MAX_CHUNKS: usize = 16;

/// One training sentence: its tokens and the rating level indexing each
/// aspect's sentiment weights.
#[derive(Debug, Clone)]
pub(crate) struct Item<'a> {
    pub tokens: &'a [usize],
    pub levels: Vec<usize>,
}

/// Sentences of the training reviews, flattened in review order.
#[derive(Debug, Clone)]
pub(crate) struct TrainingSet<'a> {
    pub items: Vec<Item<'a>>,
    /// `items[offsets[i]..offsets[i + 1]]` belong to training review `i`.
    pub offsets: Vec<usize>,
    pub n_tokens: usize,
}

impl<'a> TrainingSet<'a> {
    /// Sentences of `reviews`, or only those kept by `keep(review, sentence)`.
    pub fn new(
        corpus: &'a Corpus,
        reviews: &[usize],
        keep: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        let mut items = Vec::new();
        let mut offsets = vec![0];
        for (i, &r) in reviews.iter().enumerate() {
            let review = &corpus.reviews[r];
            for (s, sentence) in review.sentences.iter().enumerate() {
                if keep(i, s) {
                    items.push(Item {
                        tokens: &sentence.tokens,
                        levels: review.sentence_levels(&corpus.schema, s)?,
                    });
                }
            }
            offsets.push(items.len());
        }
        let n_tokens = items.iter().map(|it| it.tokens.len()).sum();
        Ok(TrainingSet {
            items,
            offsets,
            n_tokens,
        })
    }

    fn norm(&self) -> f64 {
        self.n_tokens.max(1) as f64
    }

    fn chunks(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.items.len();
        let size = CHUNK.max(n.div_ceil(MAX_CHUNKS));
        (0..n.div_ceil(size.max(1)))
            .map(|c| c * size..((c + 1) * size).min(n))
            .collect()
    }
}

fn check_labels(set: &TrainingSet, labels: &[usize]) {
    debug_assert_eq!(set.items.len(), labels.len());
}

fn compat(params: &ModelParams, item: &Item, out: &mut [f64]) {
    params.compat_into(item.tokens, &item.levels, out);
}

/// Mean per-token log-likelihood of `labels` minus `lambda` times the
/// squared norm of all weights.
pub(crate) fn objective(params: &ModelParams, set: &TrainingSet, labels: &[usize], lambda: f64) -> f64 {
    check_labels(set, labels);
    let k = params.num_aspects();
    let parts: Vec<f64> = set
        .chunks()
        .into_par_iter()
        .map(|range| {
            let mut c = vec![0.0; k];
            let mut ll = 0.0;
            for i in range {
                compat(params, &set.items[i], &mut c);
                ll += c[labels[i]] - log_sum_exp(&c);
            }
            ll
        })
        .collect();
    parts.iter().sum::<f64>() / set.norm() - lambda * params.norm_sq()
}

/// Objective and its gradient with respect to the flat weight vector.
pub(crate) fn objective_gradient(
    params: &ModelParams,
    set: &TrainingSet,
    labels: &[usize],
    lambda: f64,
) -> (f64, Vec<f64>) {
    check_labels(set, labels);
    let k = params.num_aspects();
    let len = params.weights().len();
    let inv = 1.0 / set.norm();
    let parts: Vec<(f64, Vec<f64>)> = set
        .chunks()
        .into_par_iter()
        .map(|range| {
            let mut grad = vec![0.0; len];
            let mut c = vec![0.0; k];
            let mut ll = 0.0;
            for i in range {
                let item = &set.items[i];
                compat(params, item, &mut c);
                let lse = log_sum_exp(&c);
                ll += c[labels[i]] - lse;
                for a in 0..k {
                    let p = (c[a] - lse).exp();
                    let coef = (if a == labels[i] { 1.0 } else { 0.0 } - p) * inv;
                    if coef == 0.0 {
                        continue;
                    }
                    let theta = params.theta_index(a, 0);
                    let phi = params.phi_index(a, item.levels[a], 0);
                    for &w in item.tokens {
                        grad[theta + w] += coef;
                        grad[phi + w] += coef;
                    }
                }
            }
            (ll, grad)
        })
        .collect();
    let mut grad: Vec<f64> = params.weights().iter().map(|x| -2.0 * lambda * x).collect();
    let mut ll = 0.0;
    for (part_ll, part) in parts {
        ll += part_ll;
        for (g, p) in grad.iter_mut().zip(part) {
            *g += p;
        }
    }
    (ll * inv - lambda * params.norm_sq(), grad)
}

/// Removes from each `phi[k][.][w]` block its mean, so a step along the
/// result keeps `sum_v phi[k][v][w]` fixed.
pub(crate) fn project(params: &ModelParams, grad: &mut [f64]) {
    let v = params.vocab_size();
    let schema = params.schema();
    for k in 0..params.num_aspects() {
        let levels = schema.num_levels(k);
        for w in 0..v {
            let mean = (0..levels)
                .map(|l| grad[params.phi_index(k, l, w)])
                .sum::<f64>()
                / levels as f64;
            for l in 0..levels {
                grad[params.phi_index(k, l, w)] -= mean;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of one M-step.
#[derive(Debug, Clone)]
pub(crate) struct MStep {
    pub params: ModelParams,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

/// Projected gradient ascent with Barzilai-Borwein step lengths and Armijo
/// backtracking. `params` must already satisfy the sentiment-weight
/// constraint; every iterate does too, and `normalize_phi` at exit only
/// removes rounding drift.
pub(crate) fn m_step(
    params: &ModelParams,
    set: &TrainingSet,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<MStep> {
    let lambda = config.reg_weight;
    let mut x = params.clone();
    let (mut f, mut g) = objective_gradient(&x, set, labels, lambda);
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("objective {f} at M-step start")));
    }
    project(&x, &mut g);
    let mut trace = vec![f];
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..config.max_inner_iters {
        let gnorm_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm_inf < config.grad_tol {
            break;
        }
        let gg = dot(&g, &g);
        let mut step = match &prev {
            Some((s, y)) => {
                let sy = -dot(s, y);
                if sy > 0.0 {
                    dot(s, s) / sy
                } else {
                    1.0 / gnorm_inf
                }
            }
            None => 1.0 / gnorm_inf,
        }
        .clamp(1e-10, 1e10);
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let mut cand = x.clone();
            for (w, d) in cand.weights_mut().iter_mut().zip(&g) {
                *w += step * d;
            }
            let fc = objective(&cand, set, labels, lambda);
            if fc.is_finite() && fc >= f + config.armijo * step * gg {
                accepted = Some((cand, fc));
                break;
            }
            step *= config.backtrack;
        }
        let Some((cand, fc)) = accepted else { break };
        let (_, mut gc) = objective_gradient(&cand, set, labels, lambda);
        project(&cand, &mut gc);
        let s: Vec<f64> = cand.weights().iter().zip(x.weights()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        prev = Some((s, y));
        x = cand;
        f = fc;
        g = gc;
        trace.push(f);
    }
    x.normalize_phi();
    if !x.is_finite() {
        return Err(Error::NonFinite("weights after M-step".into()));
    }
    Ok(MStep { params: x, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate_synthetic, LexiconSpec, SynthConfig};
    use crate::corpus::AspectSchema;

    fn toy() -> (Corpus, Vec<Vec<usize>>) {
        let schema = AspectSchema::uniform(&["a", "b", "c"], &[1.0, 2.0, 3.0]).unwrap();
        let planted = LexiconSpec::numbered(&schema, 4, 3, 2, 3).build(&schema).unwrap();
        let out = generate_synthetic(
            &planted,
            &SynthConfig {
                n_reviews: 6,
                seed: 2,
                ..SynthConfig::default()
            },
        )
        .unwrap();
        (out.corpus, out.assignments)
    }

    fn random_params(schema: &AspectSchema, v: usize, seed: u64) -> ModelParams {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::zeros(schema, v);
        for x in p.weights_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (corpus, truth) = toy();
        let reviews: Vec<usize> = (0..corpus.reviews.len()).collect();
        let set = TrainingSet::new(&corpus, &reviews, |_, _| true).unwrap();
        let labels: Vec<usize> = truth.concat();
        let p = random_params(&corpus.schema, corpus.vocabulary.len(), 5);
        let (_, g) = objective_gradient(&p, &set, &labels, 0.01);
        let h = 1e-5;
        for i in (0..g.len()).step_by(7) {
            let mut a = p.clone();
            a.weights_mut()[i] += h;
            let mut b = p.clone();
            b.weights_mut()[i] -= h;
            let fd = (objective(&a, &set, &labels, 0.01) - objective(&b, &set, &labels, 0.01)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 + 1e-4 * g[i].abs(), "index {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn m_step_ascends_and_stays_normalized() {
        let (corpus, truth) = toy();
        let reviews: Vec<usize> = (0..corpus.reviews.len()).collect();
        let set = TrainingSet::new(&corpus, &reviews, |_, _| true).unwrap();
        let labels: Vec<usize> = truth.concat();
        let p = crate::model::normalize_phi(&random_params(&corpus.schema, corpus.vocabulary.len(), 1));
        let out = m_step(&p, &set, &labels, &TrainConfig::default()).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.trace.len() > 1);
        assert!(out.params.phi_constraint_violation() < 1e-9);
        let end = objective(&out.params, &set, &labels, TrainConfig::default().reg_weight);
        assert!((end - out.trace.last().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn chunking_covers_every_item() {
        let (corpus, _) = toy();
        let reviews: Vec<usize> = (0..corpus.reviews.len()).collect();
        let set = TrainingSet::new(&corpus, &reviews, |_, _| true).unwrap();
        let covered: usize = set.chunks().iter().map(|r| r.len()).sum();
        assert_eq!(covered, set.items.len());
    }
}
