//! Acceptance criteria 1-12. Prints one PASS/FAIL/SKIP line per criterion
//! and exits non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use aspectlex::assignment::review_compatibilities;
use aspectlex::corpus::synth::{generate_synthetic, LexiconSpec, SynthConfig, SyntheticCorpus};
use aspectlex::corpus::{LoadOptions, RawReview, TokenizedSentence};
use aspectlex::eval::{cohens_kappa, evaluate_segmentation, mean_average_precision, ranking_eval, rating_mse};
use aspectlex::learning::objective_gradient;
use aspectlex::model::save_model;
use aspectlex::rating::{segment_corpus_for_rating, segment_for_rating, train_rating_model, RatingConfig};
use aspectlex::{
    kuhn_munkres, load_corpus, load_labels, predict_joint,
    predict_segmented, segment_review, split, summarize_review, train_semisupervised,
    train_supervised, train_unsupervised, AspectSchema, AssignmentState, CostMatrix, Corpus,
    LabeledSentence, Model, ModelParams, PairwiseParams, Predictor, RatingParams, SentenceLabel,
    TrainConfig, Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: Some(ok),
        detail: detail.into(),
    }
}

fn skip(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: None,
        detail: detail.into(),
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/beer_sample")
}

fn random_schema(rng: &mut ChaCha8Rng, k_max: usize, l_max: usize) -> AspectSchema {
    let k = rng.random_range(2..=k_max);
    let names: Vec<String> = (0..k).map(|i| format!("a{i}")).collect();
    let levels: Vec<Vec<f64>> = (0..k)
        .map(|_| (1..=rng.random_range(2..=l_max)).map(|v| v as f64).collect())
        .collect();
    AspectSchema::new(names, levels, None).unwrap()
}

fn random_corpus(rng: &mut ChaCha8Rng, schema: &AspectSchema, vocab: usize, reviews: usize, min_sentences: usize, max_sentences: usize) -> Corpus {
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    let raw: Vec<RawReview> = (0..reviews)
        .map(|r| {
            let n = rng.random_range(min_sentences..=max_sentences);
            let sentences: Vec<TokenizedSentence> = (0..n)
                .map(|_| {
                    let len = rng.random_range(1..=8);
                    let ws: Vec<String> = (0..len).map(|_| words[rng.random_range(0..vocab)].clone()).collect();
                    TokenizedSentence {
                        raw_text: ws.join(" "),
                        words: ws,
                    }
                })
                .collect();
            RawReview {
                review_id: format!("r{r}"),
                item_id: String::new(),
                user_id: String::new(),
                sentence_ratings: vec![None; n],
                sentences,
                ratings: (0..schema.num_aspects())
                    .map(|k| Some(schema.levels(k)[rng.random_range(0..schema.num_levels(k))]))
                    .collect(),
            }
        })
        .collect();
    let vocabulary = Vocabulary::from_parts(words, vec![1; vocab]);
    Corpus::from_raw(
        schema.clone(),
        raw,
        &LoadOptions {
            min_df: 1,
            vocabulary: Some(vocabulary),
        },
    )
}

fn random_params(rng: &mut ChaCha8Rng, schema: &AspectSchema, vocab: usize, scale: f64) -> ModelParams {
    let mut p = ModelParams::zeros(schema, vocab);
    for x in p.weights_mut() {
        *x = rng.random_range(-scale..=scale);
    }
    p
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let schema = random_schema(&mut rng, 4, 4);
        let vocab = rng.random_range(5..=50);
        let reviews = rng.random_range(1..=10);
        let corpus = random_corpus(&mut rng, &schema, vocab, reviews, 1, 6);
        let mut state = AssignmentState::from_corpus(&corpus, false).unwrap();
        for row in &mut state.labels {
            for l in row.iter_mut() {
                *l = rng.random_range(0..schema.num_aspects());
            }
        }
        let params = random_params(&mut rng, &schema, vocab, 1.0);
        let lambda = 1e-2;
        let (_, grad) = objective_gradient(&params, &corpus, &state, lambda).unwrap();
        for i in 0..grad.len() {
            let mut plus = params.clone();
            plus.weights_mut()[i] += h;
            let mut minus = params.clone();
            minus.weights_mut()[i] -= h;
            let fp = objective_gradient(&plus, &corpus, &state, lambda).unwrap().0;
            let fm = objective_gradient(&minus, &corpus, &state, lambda).unwrap().0;
            let numeric = (fp - fm) / (2.0 * h);
            let err = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    pass(worst < 1e-4, format!("max relative error {worst:.2e} over 50 instances"))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let perms: Vec<Vec<Vec<usize>>> = (0..=7).map(permutations).collect();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=7);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        let cover = kuhn_munkres(&CostMatrix::from_rows(&rows).unwrap());
        let brute = perms[n]
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| rows[r][c]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let achieved: f64 = cover.assignment.iter().enumerate().map(|(r, &c)| rows[r][c]).sum();
        worst = worst.max((achieved - brute).abs()).max((cover.value - brute).abs());
    }
    pass(worst < 1e-9, format!("max gap to brute force {worst:.2e} over 1000 matrices"))
}

/// Best total compatibility over injective aspect-to-sentence maps.
fn best_injective(compat: &[Vec<f64>], k: usize) -> f64 {
    fn go(compat: &[Vec<f64>], k: usize, aspect: usize, used: &mut [bool]) -> f64 {
        if aspect == k {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for s in 0..compat.len() {
            if !used[s] {
                used[s] = true;
                best = best.max(compat[s][aspect] + go(compat, k, aspect + 1, used));
                used[s] = false;
            }
        }
        best
    }
    go(compat, k, 0, &mut vec![false; compat.len()])
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let schema = random_schema(&mut rng, 5, 3);
        let k = schema.num_aspects();
        let vocab = 20;
        let corpus = random_corpus(&mut rng, &schema, vocab, 1, k, 7);
        let params = random_params(&mut rng, &schema, vocab, 2.0);
        let review = &corpus.reviews[0];
        let labels = segment_review(&params, review).unwrap();
        if (0..k).any(|a| !labels.contains(&a)) {
            failures.push(format!("trial {trial}: segmentation misses an aspect"));
        }
        let picks = summarize_review(&params, review).unwrap();
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k {
            failures.push(format!("trial {trial}: summary repeats a sentence"));
        }
        let compat = review_compatibilities(&params, review).unwrap();
        let got: f64 = picks.iter().enumerate().map(|(a, &s)| compat[s][a]).sum();
        if (got - best_injective(&compat, k)).abs() > 1e-9 {
            failures.push(format!("trial {trial}: summary is not optimal"));
        }
    }
    match failures.first() {
        None => pass(true, "1000 reviews: all aspects covered, summaries distinct and optimal"),
        Some(f) => pass(false, format!("{} failures, first: {f}", failures.len())),
    }
}

fn sample_corpus() -> Corpus {
    let dir = data_dir();
    let schema = AspectSchema::load(dir.join("schema.json")).unwrap();
    load_corpus(dir.join("corpus.jsonl"), &schema).unwrap()
}

fn criterion_4() -> Outcome {
    let corpus = sample_corpus();
    let config = TrainConfig {
        n_restarts: 8,
        seed: SEED,
        ..TrainConfig::default()
    };
    let out = train_unsupervised(&corpus, &config).unwrap();
    let steps: usize = out.log.entries.iter().map(|e| e.m_step_trace.len().saturating_sub(1)).sum();
    let mut drops = 0;
    for e in &out.log.entries {
        drops += e.m_step_trace.windows(2).filter(|w| w[1] < w[0]).count();
    }
    let restarts: std::collections::BTreeSet<usize> = out.log.entries.iter().map(|e| e.restart).collect();
    pass(
        drops == 0 && restarts.len() == 8 && steps > 0,
        format!("{steps} accepted steps over {} restarts, {drops} decreases", restarts.len()),
    )
}

/// The planted corpus shared by criteria 5, 6 and 10, with its training
/// split (whole reviews holding exactly 100 sentences) and the held-out
/// test reviews.
struct Planted {
    syn: SyntheticCorpus,
    train_reviews: Vec<usize>,
    test: Corpus,
}

fn labels_for(syn: &SyntheticCorpus, reviews: &[usize]) -> Vec<LabeledSentence> {
    reviews
        .iter()
        .flat_map(|&r| {
            syn.assignments[r].iter().enumerate().map(move |(s, &k)| LabeledSentence {
                review_id: syn.corpus.reviews[r].review_id.clone(),
                sentence_index: s,
                label: SentenceLabel::Aspect(k),
            })
        })
        .collect()
}

fn planted() -> Planted {
    let schema = LexiconSpec::numbered_schema();
    let model = LexiconSpec::recovery().build(&schema).unwrap();
    let syn = generate_synthetic(&model, &SynthConfig::recovery(2000, SEED)).unwrap();
    let n = syn.corpus.reviews.len();
    let test_reviews: Vec<usize> = (n - 300..n).collect();
    let mut train_reviews = Vec::new();
    let mut total = 0;
    for (r, review) in syn.corpus.reviews[..n - 300].iter().enumerate() {
        // reviews hold 5 to 8 sentences, so a remainder of 1-4 or 9 could
        // never be filled
        let rest = 100usize.checked_sub(total + review.sentences.len());
        if matches!(rest, Some(x) if x == 0 || (5..=8).contains(&x) || x >= 10) {
            total += review.sentences.len();
            train_reviews.push(r);
        }
        if total == 100 {
            break;
        }
    }
    assert_eq!(total, 100, "training split");
    let mut test = syn.corpus.subset(&test_reviews);
    test.labels = labels_for(&syn, &test_reviews);
    Planted {
        syn,
        train_reviews,
        test,
    }
}

fn evaluate_segmentation_report(predicted: &[Vec<usize>], corpus: &Corpus) -> aspectlex::EvalReport {
    evaluate_segmentation("segmentation", predicted, corpus).unwrap()
}

fn accuracy_on(params: &ModelParams, corpus: &Corpus) -> f64 {
    let predicted: Vec<Vec<usize>> = corpus.reviews.iter().map(|r| segment_review(params, r).unwrap()).collect();
    evaluate_segmentation_report(&predicted, corpus).accuracy.unwrap()
}

fn matched_accuracy(predicted: &[Vec<usize>], truth: &[Vec<usize>], k: usize) -> f64 {
    let total: usize = truth.iter().map(Vec::len).sum();
    permutations(k)
        .iter()
        .map(|p| {
            predicted
                .iter()
                .zip(truth)
                .flat_map(|(a, b)| a.iter().zip(b))
                .filter(|(a, b)| p[**a] == **b)
                .count()
        })
        .max()
        .unwrap() as f64
        / total as f64
}

struct Trained {
    unsupervised: ModelParams,
    semi: ModelParams,
    supervised: ModelParams,
}

fn train_config() -> TrainConfig {
    TrainConfig {
        n_restarts: 8,
        seed: SEED,
        ..TrainConfig::default()
    }
}

fn criterion_5(planted: &Planted) -> (Outcome, ModelParams) {
    let start = Instant::now();
    let out = train_unsupervised(&planted.syn.corpus, &train_config()).unwrap();
    let elapsed = start.elapsed();
    let predicted = out.state.corpus_labels(&planted.syn.corpus);
    let acc = matched_accuracy(&predicted, &planted.syn.assignments, 3);
    let vocab = planted.syn.corpus.vocabulary.len();
    (
        pass(
            acc >= 0.80 && elapsed < Duration::from_secs(300) && vocab == 300,
            format!("matched accuracy {acc:.4} (>= 0.80), vocabulary {vocab}, {:.1}s", elapsed.as_secs_f64()),
        ),
        out.params,
    )
}

fn criterion_6(planted: &Planted, unsupervised: ModelParams) -> (Outcome, Trained) {
    let mut labeled = planted.syn.corpus.clone();
    labeled.labels = labels_for(&planted.syn, &planted.train_reviews);
    let semi = train_semisupervised(&labeled, &train_config()).unwrap().params;
    let supervised = train_supervised(&labeled.subset(&planted.train_reviews), &train_config())
        .unwrap()
        .params;
    let u = accuracy_on(&unsupervised, &planted.test);
    let s = accuracy_on(&semi, &planted.test);
    let f = accuracy_on(&supervised, &planted.test);
    (
        pass(
            f >= s && s >= u,
            format!("held-out accuracy supervised {f:.4} >= semi {s:.4} >= unsupervised {u:.4}"),
        ),
        Trained {
            unsupervised,
            semi,
            supervised,
        },
    )
}

fn criterion_7() -> Outcome {
    let schema = LexiconSpec::beer_schema();
    let model = LexiconSpec::beer().build(&schema).unwrap();
    let syn = generate_synthetic(
        &model,
        &SynthConfig {
            n_reviews: 2000,
            rating_correlation: 0.8,
            seed: SEED,
            ..SynthConfig::default()
        },
    )
    .unwrap();
    let mut corpus = syn.corpus.clone();
    corpus.labels = labels_for(&syn, &(0..corpus.reviews.len()).collect::<Vec<_>>());
    let (train, test) = split(&corpus, 0.75, SEED).unwrap();
    let segmenter = train_supervised(&train, &train_config()).unwrap().params;
    let options = train_config().segment_options();
    let train_labels = segment_corpus_for_rating(&segmenter, &train, options).unwrap();
    let test_labels: Vec<Vec<usize>> = test
        .reviews
        .iter()
        .map(|r| segment_for_rating(&segmenter, r, options).unwrap())
        .collect();
    let truths: Vec<Vec<Option<f64>>> = test.reviews.iter().map(|r| r.ratings.clone()).collect();
    let config = RatingConfig {
        seed: SEED,
        ..RatingConfig::default()
    };
    let mse = |predictor: Predictor| {
        let m = train_rating_model(&train, Some(&train_labels), predictor, &config).unwrap();
        let preds: Vec<Vec<f64>> = test
            .reviews
            .iter()
            .zip(&test_labels)
            .map(|(r, l)| m.predict(r, Some(l)).unwrap().ratings)
            .collect();
        rating_mse(&schema, &preds, &truths).unwrap()
    };
    let unsegmented = mse(Predictor::Unsegmented);
    let segmented = mse(Predictor::Segmented);
    let joint = mse(Predictor::Joint);
    pass(
        joint <= 0.95 * segmented && joint <= 0.95 * unsegmented,
        format!("test MSE joint {joint:.5}, segmented {segmented:.5}, unsegmented {unsegmented:.5}"),
    )
}

fn random_rating_input(rng: &mut ChaCha8Rng, max_product: usize) -> (RatingParams, PairwiseParams, aspectlex::Review, Vec<usize>) {
    let schema = loop {
        let s = random_schema(rng, 5, 6);
        let product: usize = (0..s.num_aspects()).map(|k| s.num_levels(k)).product();
        if product <= max_product {
            break s;
        }
    };
    let vocab = 15;
    let corpus = random_corpus(rng, &schema, vocab, 1, 1, 8);
    let review = corpus.reviews[0].clone();
    let labels: Vec<usize> = (0..review.sentences.len())
        .map(|_| rng.random_range(0..schema.num_aspects()))
        .collect();
    let mut gamma = RatingParams::zeros(&schema, vocab);
    for x in gamma.weights_mut() {
        *x = rng.random_range(-1.0..1.0);
    }
    let mut alpha = PairwiseParams::zeros(&schema);
    for x in alpha.weights_mut() {
        *x = rng.random_range(-1.0..1.0);
    }
    (gamma, alpha, review, labels)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut zero_alpha_mismatch = 0;
    for _ in 0..10_000 {
        let (gamma, _, review, labels) = random_rating_input(&mut rng, 1_000_000);
        let zero = PairwiseParams::zeros(gamma.schema());
        let joint = predict_joint(&gamma, &zero, &review, &labels, 10_000_000).unwrap();
        let seg = predict_segmented(&gamma, &review, &labels).unwrap();
        if joint.levels != seg.levels {
            zero_alpha_mismatch += 1;
        }
    }
    let mut brute_mismatch = 0;
    for _ in 0..1000 {
        let (gamma, alpha, review, labels) = random_rating_input(&mut rng, 10_000);
        let schema = gamma.schema().clone();
        let k_count = schema.num_aspects();
        let unary = |k: usize, l: usize| -> f64 {
            review
                .sentences
                .iter()
                .zip(&labels)
                .filter(|(_, &a)| a == k)
                .flat_map(|(s, _)| s.tokens.iter())
                .map(|&w| gamma.get(k, l, w))
                .sum()
        };
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut levels = vec![0usize; k_count];
        loop {
            let score: f64 = (0..k_count).map(|k| unary(k, levels[k])).sum::<f64>() + alpha.score(&levels);
            if score > best.0 {
                best = (score, levels.clone());
            }
            let mut k = k_count;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                levels[k] += 1;
                if levels[k] < schema.num_levels(k) {
                    break;
                }
                levels[k] = 0;
                if k == 0 {
                    k = usize::MAX;
                    break;
                }
            }
            if k == usize::MAX {
                break;
            }
        }
        let joint = predict_joint(&gamma, &alpha, &review, &labels, 10_000_000).unwrap();
        if joint.levels != best.1 {
            brute_mismatch += 1;
        }
    }
    pass(
        zero_alpha_mismatch == 0 && brute_mismatch == 0,
        format!("{zero_alpha_mismatch}/10000 differ from segmented at zero coupling, {brute_mismatch}/1000 differ from enumeration"),
    )
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    for k in 2..=6 {
        ok &= (cohens_kappa(1.0, k).unwrap() - 1.0).abs() < 1e-12;
        ok &= cohens_kappa(1.0 / k as f64, k).unwrap().abs() < 1e-12;
    }
    let kappa = cohens_kappa(0.944, 5).unwrap();
    ok &= (kappa - 0.93).abs() <= 0.005;
    pass(ok, format!("kappa(0.944, 5) = {kappa:.4}; boundary values exact for K = 2..6"))
}

fn criterion_10(planted: &Planted, trained: &Trained) -> Outcome {
    let map = |p: &ModelParams| mean_average_precision(&ranking_eval(p, &planted.test).unwrap());
    let truth: Vec<usize> = planted.test.labels.iter().filter_map(|l| l.label.aspect()).collect();
    let baseline = (0..3)
        .map(|k| truth.iter().filter(|&&a| a == k).count() as f64 / truth.len() as f64)
        .sum::<f64>()
        / 3.0;
    let unsupervised = map(&trained.unsupervised);
    let supervised = map(&trained.supervised);
    let semi = map(&trained.semi);
    pass(
        unsupervised >= baseline + 0.2 && supervised >= unsupervised,
        format!(
            "MAP supervised {supervised:.4} >= unsupervised {unsupervised:.4} >= baseline {baseline:.4} + 0.2 (semi {semi:.4})"
        ),
    )
}

/// Expects `schema.json`, `corpus.jsonl` and `labels.tsv` in the directory
/// named by `ASPECTLEX_CITYSEARCH_DIR`.
fn criterion_11() -> Outcome {
    let Some(dir) = std::env::var_os("ASPECTLEX_CITYSEARCH_DIR").map(PathBuf::from) else {
        return skip("ASPECTLEX_CITYSEARCH_DIR not set");
    };
    let schema = match AspectSchema::load(dir.join("schema.json")) {
        Ok(s) => s,
        Err(e) => return skip(format!("cannot read schema: {e}")),
    };
    let mut corpus = load_corpus(dir.join("corpus.jsonl"), &schema).unwrap();
    corpus.labels = load_labels(dir.join("labels.tsv"), &schema).unwrap();
    let grid = corpus.label_grid().unwrap();
    let labeled: Vec<usize> = (0..corpus.reviews.len())
        .filter(|&r| grid[r].iter().all(Option::is_some))
        .collect();
    let (train, test) = split(&corpus.subset(&labeled), 0.8, SEED).unwrap();
    let model = train_supervised(&train, &train_config()).unwrap();
    let acc = accuracy_on(&model.params, &test);
    pass(acc >= 0.84, format!("supervised accuracy {acc:.4} (>= 0.84)"))
}

/// Trains on the bundled sample and writes the model and an evaluation
/// report into `dir`.
fn pipeline(dir: &Path) {
    let mut corpus = sample_corpus();
    corpus.labels = load_labels(data_dir().join("labels.tsv"), &corpus.schema).unwrap();
    let config = TrainConfig {
        n_restarts: 4,
        seed: SEED,
        ..TrainConfig::default()
    };
    let out = train_semisupervised(&corpus, &config).unwrap();
    let model = Model::new(out.params, corpus.vocabulary.clone());
    save_model(&model, dir.join("model.json")).unwrap();
    let predicted: Vec<Vec<usize>> = corpus.reviews.iter().map(|r| segment_review(&model.params, r).unwrap()).collect();
    evaluate_segmentation_report(&predicted, &corpus).save(dir.join("report.json")).unwrap();
    out.log.save_csv(dir.join("train_log.csv"), None).unwrap();
}

fn criterion_12() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    pool.install(|| pipeline(b.path()));
    let mut differing = Vec::new();
    for name in ["model.json", "report.json", "train_log.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        if x != y {
            differing.push(name);
        }
    }
    let schema = LexiconSpec::numbered_schema();
    let model = LexiconSpec::recovery().build(&schema).unwrap();
    let gen = || {
        let syn = generate_synthetic(&model, &SynthConfig::recovery(200, SEED)).unwrap();
        let mut buf = Vec::new();
        for r in &syn.corpus.reviews {
            aspectlex::corpus::write_review_line(&mut buf, &schema, r, None).unwrap();
        }
        (buf, syn.assignments)
    };
    if gen() != gen() {
        differing.push("synthetic corpus");
    }
    pass(
        differing.is_empty(),
        if differing.is_empty() {
            "model, report, log and synthetic corpus identical across runs and thread counts".to_string()
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

/// Criteria named on the command line (`cargo test --test acceptance -- 5 7`),
/// or all of them. Other arguments are ignored.
fn selection() -> Vec<usize> {
    let chosen: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if chosen.is_empty() {
        (1..=12).collect()
    } else {
        chosen
    }
}

fn main() {
    let started = Instant::now();
    let chosen = selection();
    let wants = |n: usize| chosen.contains(&n);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        println!("criterion {n:>2}: {tag}  {}", o.detail);
        results.push((n, o));
    };
    let simple: [(usize, fn() -> Outcome); 4] = [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4)];
    for (n, f) in simple {
        if wants(n) {
            report(n, f());
        }
    }
    if wants(5) || wants(6) || wants(10) {
        let planted = planted();
        let (o5, unsupervised) = criterion_5(&planted);
        if wants(5) {
            report(5, o5);
        }
        if wants(6) || wants(10) {
            let (o6, trained) = criterion_6(&planted, unsupervised);
            if wants(6) {
                report(6, o6);
            }
            if wants(10) {
                report(10, criterion_10(&planted, &trained));
            }
        }
    }
    let rest: [(usize, fn() -> Outcome); 5] =
        [(7, criterion_7), (8, criterion_8), (9, criterion_9), (11, criterion_11), (12, criterion_12)];
    for (n, f) in rest {
        if wants(n) {
            report(n, f());
        }
    }
    results.sort_by_key(|(n, _)| *n);
    let failed: Vec<usize> = results.iter().filter(|(_, o)| o.pass == Some(false)).map(|(n, _)| *n).collect();
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
