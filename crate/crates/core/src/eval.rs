//! Scoring segmentations, rating predictions, and sentence rankings.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AspectSchema, Corpus, SentenceLabel};
use crate::error::{Error, Result};
use crate::model::{sentence_aspect_probs, ModelParams};

/// Fraction of positions where `predicted` matches a non-ambiguous truth.
pub fn accuracy(predicted: &[usize], truth: &[SentenceLabel]) -> Result<f64> {
    let (correct, included) = agreement_counts(predicted, truth)?;
    if included == 0 {
        return Err(Error::NoData("no non-ambiguous position to score".into()));
    }
    Ok(correct as f64 / included as f64)
}

fn agreement_counts(predicted: &[usize], truth: &[SentenceLabel]) -> Result<(usize, usize)> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut correct = 0;
    let mut included = 0;
    for (p, t) in predicted.iter().zip(truth) {
        if let SentenceLabel::Aspect(t) = t {
            included += 1;
            correct += usize::from(p == t);
        }
    }
    Ok((correct, included))
}

/// Chance-corrected agreement `(p - 1/K) / (1 - 1/K)`.
pub fn cohens_kappa(agreement: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("kappa needs at least 2 classes, got {k}")));
    }
    if !(0.0..=1.0).contains(&agreement) {
        return Err(Error::InvalidArgument(format!("agreement {agreement} outside [0, 1]")));
    }
    let chance = 1.0 / k as f64;
    Ok((agreement - chance) / (1.0 - chance))
}

/// Squared error per aspect on the `[0, 1]` scale, summed, with counts.
fn rating_errors(
    schema: &AspectSchema,
    predictions: &[Vec<f64>],
    truths: &[Vec<Option<f64>>],
) -> Result<(Vec<f64>, Vec<usize>)> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} reviews",
            predictions.len(),
            truths.len()
        )));
    }
    let k = schema.num_aspects();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0; k];
    for (p, t) in predictions.iter().zip(truths) {
        if p.len() != k || t.len() != k {
            return Err(Error::DimensionMismatch(format!("expected {k} ratings per review")));
        }
        for a in 0..k {
            if Some(a) == schema.overall_index() {
                continue;
            }
            if let Some(truth) = t[a] {
                let d = schema.scaled(a, p[a]) - schema.scaled(a, truth);
                sums[a] += d * d;
                counts[a] += 1;
            }
        }
    }
    Ok((sums, counts))
}

/// Mean squared error over (review, non-overall aspect) pairs with an
/// observed truth, ratings scaled to `[0, 1]`.
pub fn rating_mse(schema: &AspectSchema, predictions: &[Vec<f64>], truths: &[Vec<Option<f64>>]) -> Result<f64> {
    let (sums, counts) = rating_errors(schema, predictions, truths)?;
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::NoData("no observed rating to score".into()));
    }
    Ok(sums.iter().sum::<f64>() / n as f64)
}

/// A sentence's position in the corpus and its aspect probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedSentence {
    pub review: usize,
    pub sentence: usize,
    pub score: f64,
}

/// Every sentence of `corpus` by decreasing probability of `aspect`; equal
/// scores keep corpus order.
pub fn rank_sentences(params: &ModelParams, corpus: &Corpus, aspect: usize) -> Result<Vec<RankedSentence>> {
    let mut ranked = Vec::with_capacity(corpus.num_sentences());
    for (r, review) in corpus.reviews.iter().enumerate() {
        for (s, sentence) in review.sentences.iter().enumerate() {
            let ratings = review.ratings_for_sentence(&corpus.schema, s);
            let probs = sentence_aspect_probs(params, sentence, &ratings)?;
            ranked.push(RankedSentence {
                review: r,
                sentence: s,
                score: probs[aspect],
            });
        }
    }
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` after each rank.
    pub points: Vec<(f64, f64)>,
    pub average_precision: f64,
}

/// Precision and recall at every cut of a ranking, and the precision
/// averaged over the ranks of the positives.
pub fn pr_curve(relevant: &[bool]) -> Result<PrCurve> {
    let positives = relevant.iter().filter(|&&x| x).count();
    if positives == 0 {
        return Err(Error::NoData("ranking has no positive item".into()));
    }
    let mut hits = 0;
    let mut ap = 0.0;
    let mut points = Vec::with_capacity(relevant.len());
    for (i, &rel) in relevant.iter().enumerate() {
        let precision_before = if rel {
            hits += 1;
            let p = hits as f64 / (i + 1) as f64;
            ap += p;
            p
        } else {
            hits as f64 / (i + 1) as f64
        };
        points.push((hits as f64 / positives as f64, precision_before));
    }
    Ok(PrCurve {
        points,
        average_precision: ap / positives as f64,
    })
}

/// Ranking quality of one aspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectRanking {
    pub aspect: String,
    pub curve: PrCurve,
}

/// Ranks the labeled, non-ambiguous sentences of `corpus` for every aspect
/// with at least one positive; positives are sentences labeled with it.
pub fn ranking_eval(params: &ModelParams, corpus: &Corpus) -> Result<Vec<AspectRanking>> {
    let grid = corpus.label_grid()?;
    let mut out = Vec::new();
    for k in 0..corpus.schema.num_aspects() {
        let ranked = rank_sentences(params, corpus, k)?;
        let relevant: Vec<bool> = ranked
            .iter()
            .filter_map(|r| match grid[r.review][r.sentence] {
                Some(SentenceLabel::Aspect(a)) => Some(a == k),
                _ => None,
            })
            .collect();
        if !relevant.iter().any(|&x| x) {
            continue;
        }
        out.push(AspectRanking {
            aspect: corpus.schema.aspect_name(k).to_string(),
            curve: pr_curve(&relevant)?,
        });
    }
    if out.is_empty() {
        return Err(Error::NoData("no labeled sentence to rank".into()));
    }
    Ok(out)
}

pub fn mean_average_precision(rankings: &[AspectRanking]) -> f64 {
    rankings.iter().map(|r| r.curve.average_precision).sum::<f64>() / rankings.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectScore {
    pub aspect: String,
    pub value: f64,
    pub count: usize,
}

/// Summary of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    pub per_aspect: Vec<AspectScore>,
    pub scored: usize,
    pub excluded_ambiguous: usize,
    pub excluded_missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EvalReport {
    fn empty(task: &str) -> Self {
        EvalReport {
            task: task.into(),
            accuracy: None,
            kappa: None,
            mse: None,
            map: None,
            per_aspect: Vec::new(),
            scored: 0,
            excluded_ambiguous: 0,
            excluded_missing: 0,
            config_hash: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Accuracy and kappa of per-review sentence labels against the corpus
/// labels. Per-aspect values are recall on sentences labeled with that aspect.
pub fn evaluate_segmentation(task: &str, predicted: &[Vec<usize>], corpus: &Corpus) -> Result<EvalReport> {
    if predicted.len() != corpus.reviews.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted reviews for {} in the corpus",
            predicted.len(),
            corpus.reviews.len()
        )));
    }
    let grid = corpus.label_grid()?;
    let k = corpus.schema.num_aspects();
    let mut report = EvalReport::empty(task);
    let mut flat_pred = Vec::new();
    let mut flat_truth = Vec::new();
    for (pred, row) in predicted.iter().zip(&grid) {
        if pred.len() != row.len() {
            return Err(Error::DimensionMismatch("sentence count differs from the corpus".into()));
        }
        for (p, t) in pred.iter().zip(row) {
            match t {
                Some(label) => {
                    if *label == SentenceLabel::Ambiguous {
                        report.excluded_ambiguous += 1;
                    }
                    flat_pred.push(*p);
                    flat_truth.push(*label);
                }
                None => report.excluded_missing += 1,
            }
        }
    }
    let (correct, included) = agreement_counts(&flat_pred, &flat_truth)?;
    if included == 0 {
        return Err(Error::NoData("no labeled sentence to score".into()));
    }
    let acc = correct as f64 / included as f64;
    report.accuracy = Some(acc);
    report.kappa = if k >= 2 { Some(cohens_kappa(acc, k)?) } else { None };
    report.scored = included;
    for a in 0..k {
        let (hit, n) = flat_pred
            .iter()
            .zip(&flat_truth)
            .filter(|(_, t)| **t == SentenceLabel::Aspect(a))
            .fold((0, 0), |(h, n), (p, _)| (h + usize::from(*p == a), n + 1));
        if n > 0 {
            report.per_aspect.push(AspectScore {
                aspect: corpus.schema.aspect_name(a).to_string(),
                value: hit as f64 / n as f64,
                count: n,
            });
        }
    }
    Ok(report)
}

/// Scores per-aspect summary sentences: the pick for aspect `k` is correct
/// when that sentence is labeled `k`. Reviews without a summary and picks
/// of ambiguous or unlabeled sentences are excluded.
pub fn evaluate_summaries(task: &str, summaries: &[Option<Vec<usize>>], corpus: &Corpus) -> Result<EvalReport> {
    if summaries.len() != corpus.reviews.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} summaries for {} reviews",
            summaries.len(),
            corpus.reviews.len()
        )));
    }
    let grid = corpus.label_grid()?;
    let k = corpus.schema.num_aspects();
    let mut report = EvalReport::empty(task);
    let mut hits = vec![0usize; k];
    let mut counts = vec![0usize; k];
    for (summary, row) in summaries.iter().zip(&grid) {
        let Some(summary) = summary else {
            report.excluded_missing += k;
            continue;
        };
        for (a, &s) in summary.iter().enumerate() {
            match row.get(s).copied().flatten() {
                Some(SentenceLabel::Aspect(t)) => {
                    counts[a] += 1;
                    hits[a] += usize::from(t == a);
                }
                Some(SentenceLabel::Ambiguous) => report.excluded_ambiguous += 1,
                None => report.excluded_missing += 1,
            }
        }
    }
    let scored: usize = counts.iter().sum();
    if scored == 0 {
        return Err(Error::NoData("no labeled summary sentence to score".into()));
    }
    let acc = hits.iter().sum::<usize>() as f64 / scored as f64;
    report.accuracy = Some(acc);
    report.kappa = if k >= 2 { Some(cohens_kappa(acc, k)?) } else { None };
    report.scored = scored;
    for a in 0..k {
        if counts[a] > 0 {
            report.per_aspect.push(AspectScore {
                aspect: corpus.schema.aspect_name(a).to_string(),
                value: hits[a] as f64 / counts[a] as f64,
                count: counts[a],
            });
        }
    }
    Ok(report)
}

/// Scaled squared error of rating predictions against the corpus ratings.
pub fn evaluate_ratings(task: &str, schema: &AspectSchema, predictions: &[Vec<f64>], truths: &[Vec<Option<f64>>]) -> Result<EvalReport> {
    let (sums, counts) = rating_errors(schema, predictions, truths)?;
    let mut report = EvalReport::empty(task);
    report.mse = Some(rating_mse(schema, predictions, truths)?);
    report.scored = counts.iter().sum();
    for a in 0..schema.num_aspects() {
        if Some(a) == schema.overall_index() {
            continue;
        }
        report.excluded_missing += truths.len() - counts[a];
        if counts[a] > 0 {
            report.per_aspect.push(AspectScore {
                aspect: schema.aspect_name(a).to_string(),
                value: sums[a] / counts[a] as f64,
                count: counts[a],
            });
        }
    }
    Ok(report)
}

/// MAP report from per-aspect rankings.
pub fn ranking_report(task: &str, rankings: &[AspectRanking]) -> EvalReport {
    let mut report = EvalReport::empty(task);
    report.map = Some(mean_average_precision(rankings));
    for r in rankings {
        let n = r.curve.points.len();
        report.scored += n;
        report.per_aspect.push(AspectScore {
            aspect: r.aspect.clone(),
            value: r.curve.average_precision,
            count: n,
        });
    }
    report
}

/// `aspect,recall,precision` rows for every aspect's curve.
pub fn write_pr_csv(out: &mut impl Write, rankings: &[AspectRanking]) -> std::io::Result<()> {
    writeln!(out, "aspect,recall,precision")?;
    for r in rankings {
        for (recall, precision) in &r.curve.points {
            writeln!(out, "{},{recall},{precision}", r.aspect)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(v: &[usize]) -> Vec<SentenceLabel> {
        v.iter().map(|&k| SentenceLabel::Aspect(k)).collect()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &labels(&[0, 1, 2])).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 0], &labels(&[0, 1, 2])).unwrap(), 0.0);
        let mut t = labels(&[0, 1, 2, 0]);
        t[3] = SentenceLabel::Ambiguous;
        assert_eq!(accuracy(&[0, 1, 2, 1], &t).unwrap(), 1.0);
        assert!(accuracy(&[0], &labels(&[0, 1])).is_err());
        assert!(accuracy(&[0], &[SentenceLabel::Ambiguous]).is_err());
    }

    #[test]
    fn kappa_examples() {
        for k in 2..=6 {
            assert_eq!(cohens_kappa(1.0, k).unwrap(), 1.0);
            assert!(cohens_kappa(1.0 / k as f64, k).unwrap().abs() < 1e-15);
        }
        assert_eq!(cohens_kappa(0.25, 4).unwrap(), 0.0);
        // (0.944 - 0.2) / 0.8
        assert!((cohens_kappa(0.944, 5).unwrap() - 0.93).abs() < 1e-12);
        assert!(cohens_kappa(0.5, 1).is_err());
    }

    fn one_to_five() -> AspectSchema {
        AspectSchema::uniform(&["look", "taste"], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()
    }

    #[test]
    fn mse_examples() {
        let s = one_to_five();
        let truth = vec![vec![Some(3.0), Some(4.0)], vec![Some(1.0), None]];
        let exact = vec![vec![3.0, 4.0], vec![1.0, 5.0]];
        assert_eq!(rating_mse(&s, &exact, &truth).unwrap(), 0.0);
        let off = vec![vec![4.0, 5.0], vec![2.0, 1.0]];
        assert!((rating_mse(&s, &off, &truth).unwrap() - 0.0625).abs() < 1e-15);
        assert!(rating_mse(&s, &off, &[vec![None, None], vec![None, None]]).is_err());
    }

    #[test]
    fn mse_skips_overall() {
        let s = AspectSchema::uniform(&["look", "overall"], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let truth = vec![vec![Some(1.0), Some(1.0)]];
        assert_eq!(rating_mse(&s, &[vec![1.0, 5.0]], &truth).unwrap(), 0.0);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(pr_curve(&[true, true, false]).unwrap().average_precision, 1.0);
        assert_eq!(pr_curve(&[false, true]).unwrap().average_precision, 0.5);
        assert!(pr_curve(&[false, false]).is_err());
        let c = pr_curve(&[true, false]).unwrap();
        assert_eq!(c.points, vec![(1.0, 1.0), (1.0, 0.5)]);
    }

    #[test]
    fn random_ranking_ap_is_near_positive_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut items: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
        let trials = 400;
        let mut total = 0.0;
        for _ in 0..trials {
            items.shuffle(&mut rng);
            total += pr_curve(&items).unwrap().average_precision;
        }
        assert!((total / trials as f64 - 0.5).abs() < 0.03);
    }

    proptest! {
        #[test]
        fn kappa_of_self_agreement_is_one(v in proptest::collection::vec(0usize..5, 1..40)) {
            let acc = accuracy(&v, &labels(&v)).unwrap();
            prop_assert_eq!(cohens_kappa(acc, 5).unwrap(), 1.0);
        }

        #[test]
        fn kappa_is_increasing(a in 0.0f64..1.0, b in 0.0f64..1.0, k in 2usize..10) {
            prop_assume!(a < b);
            prop_assert!(cohens_kappa(a, k).unwrap() < cohens_kappa(b, k).unwrap());
        }

        #[test]
        fn mse_is_permutation_invariant(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = one_to_five();
            let mut pairs: Vec<(Vec<f64>, Vec<Option<f64>>)> = (0..n)
                .map(|_| {
                    let p = (0..2).map(|_| rng.random_range(1..=5) as f64).collect();
                    let t = (0..2).map(|_| rng.random_bool(0.8).then(|| rng.random_range(1..=5) as f64)).collect();
                    (p, t)
                })
                .collect();
            prop_assume!(pairs.iter().any(|(_, t)| t.iter().any(Option::is_some)));
            let (p, t): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let a = rating_mse(&s, &p, &t).unwrap();
            pairs.shuffle(&mut rng);
            let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            prop_assert!((a - rating_mse(&s, &p, &t).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn ap_is_within_unit_interval(v in proptest::collection::vec(any::<bool>(), 1..50)) {
            prop_assume!(v.iter().any(|&x| x));
            let c = pr_curve(&v).unwrap();
            prop_assert!(c.average_precision > 0.0 && c.average_precision <= 1.0);
            prop_assert_eq!(c.points.last().unwrap().0, 1.0);
        }
    }
}
