//! Training regimes for the sentence-aspect model: unsupervised coordinate
//! ascent, the same with some labels clamped, and fully supervised
//! structured hinge minimization.

mod objective;
mod supervised;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{segment_compat, SegmentOptions};
use crate::corpus::{AspectSchema, Corpus, SentenceLabel, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelParams;

use objective::TrainingSet;
pub use supervised::{loss_augmented_inference, structured_hinge, train_supervised, HingeValue};

/// Training hyperparameters. Every field has a default, so a config file
/// only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the squared-norm penalty on the per-token objective.
    pub reg_weight: f64,
    pub n_restarts: usize,
    pub max_outer_iters: usize,
    /// Gradient steps per M-step.
    pub max_inner_iters: usize,
    /// M-step stops once the projected gradient's largest entry is below this.
    pub grad_tol: f64,
    /// Sufficient-increase constant of the backtracking line search.
    pub armijo: f64,
    /// Step shrink factor while backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Enforce that every aspect labels some sentence of each review.
    pub diversity: bool,
    /// Aspects per review allowed to go unused.
    pub relax: usize,
    /// Half-width of the uniform initialization noise.
    pub init_scale: f64,
    /// Weight of the squared-norm penalty on the supervised hinge risk.
    pub hinge_reg_weight: f64,
    /// Passes over the labeled reviews in supervised training.
    pub epochs: usize,
    /// Offset `t0` of the supervised step size `1 / (2 lambda (t + t0))`.
    pub step_offset: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            reg_weight: 1e-3,
            n_restarts: 64,
            max_outer_iters: 50,
            max_inner_iters: 100,
            grad_tol: 1e-6,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
            diversity: true,
            relax: 0,
            init_scale: 0.05,
            hinge_reg_weight: 0.03,
            epochs: 200,
            step_offset: 100.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.reg_weight > 0.0 && self.reg_weight.is_finite()) {
            return bad("reg_weight must be positive");
        }
        if !(self.hinge_reg_weight > 0.0 && self.hinge_reg_weight.is_finite()) {
            return bad("hinge_reg_weight must be positive");
        }
        if self.n_restarts == 0 {
            return bad("n_restarts must be at least 1");
        }
        if self.max_outer_iters == 0 {
            return bad("max_outer_iters must be at least 1");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo must lie in (0, 1)");
        }
        if !(self.grad_tol >= 0.0) || !(self.init_scale >= 0.0) || !(self.step_offset >= 1.0) {
            return bad("grad_tol and init_scale must be non-negative, step_offset at least 1");
        }
        Ok(())
    }

    pub fn segment_options(&self) -> SegmentOptions {
        SegmentOptions {
            diversity: self.diversity,
            relax: self.relax,
        }
    }
}

/// Sentence labels of the training reviews and which of them are observed.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentState {
    /// Corpus positions of the training reviews.
    pub review_indices: Vec<usize>,
    pub labels: Vec<Vec<usize>>,
    /// Observed labels; these are never changed by training.
    pub observed: Vec<Vec<Option<usize>>>,
}

impl AssignmentState {
    /// Every review whose sentences all have complete ratings, with the
    /// corpus's aspect labels observed when `use_labels` is set. Labels
    /// start at the observed value or 0.
    pub fn from_corpus(corpus: &Corpus, use_labels: bool) -> Result<Self> {
        let grid = corpus.label_grid()?;
        let mut state = AssignmentState {
            review_indices: Vec::new(),
            labels: Vec::new(),
            observed: Vec::new(),
        };
        for (r, review) in corpus.reviews.iter().enumerate() {
            if review.sentences.is_empty() {
                continue;
            }
            let complete = (0..review.sentences.len())
                .all(|s| review.sentence_levels(&corpus.schema, s).is_ok());
            if !complete {
                continue;
            }
            let observed: Vec<Option<usize>> = grid[r]
                .iter()
                .map(|l| match (use_labels, l) {
                    (true, Some(SentenceLabel::Aspect(k))) => Some(*k),
                    _ => None,
                })
                .collect();
            state.review_indices.push(r);
            state.labels.push(observed.iter().map(|o| o.unwrap_or(0)).collect());
            state.observed.push(observed);
        }
        Ok(state)
    }

    pub fn num_observed(&self) -> usize {
        self.observed.iter().flatten().filter(|o| o.is_some()).count()
    }

    fn flat_labels(&self) -> Vec<usize> {
        self.labels.concat()
    }

    /// Full-corpus label rows: training reviews get their labels, others
    /// are empty.
    pub fn corpus_labels(&self, corpus: &Corpus) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); corpus.reviews.len()];
        for (i, &r) in self.review_indices.iter().enumerate() {
            out[r] = self.labels[i].clone();
        }
        out
    }
}

/// Seed words get `theta = 1`; other aspect weights are uniform noise of
/// half-width `scale`; sentiment weights are `1 / L_k` plus noise centered
/// over levels, so the result already satisfies the sentiment-weight
/// constraint. Seed words missing from the vocabulary are skipped.
pub fn init_params(
    schema: &AspectSchema,
    vocabulary: &Vocabulary,
    rng: &mut impl Rng,
    scale: f64,
) -> ModelParams {
    let v = vocabulary.len();
    let mut p = ModelParams::zeros(schema, v);
    for x in p.weights_mut() {
        *x = if scale > 0.0 {
            rng.random_range(-scale..=scale)
        } else {
            0.0
        };
    }
    for k in 0..schema.num_aspects() {
        let levels = schema.num_levels(k);
        for w in 0..v {
            let mean = (0..levels).map(|l| p.phi(k, l, w)).sum::<f64>() / levels as f64;
            for l in 0..levels {
                let x = p.phi(k, l, w) - mean + 1.0 / levels as f64;
                p.set_phi(k, l, w, x);
            }
        }
        for seed in schema.seed_words(k) {
            match vocabulary.get(&seed.to_lowercase()) {
                Some(w) => p.set_theta(k, w, 1.0),
                None => log::warn!(
                    "seed word `{seed}` of aspect `{}` is not in the vocabulary; skipped",
                    schema.aspect_name(k)
                ),
            }
        }
    }
    p
}

/// Random stream for restart `restart` under `seed`.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn e_step_set(
    params: &ModelParams,
    set: &TrainingSet,
    state: &AssignmentState,
    options: SegmentOptions,
) -> Vec<Vec<usize>> {
    let k = params.num_aspects();
    (0..state.review_indices.len())
        .into_par_iter()
        .map(|i| {
            let items = &set.items[set.offsets[i]..set.offsets[i + 1]];
            let compat: Vec<Vec<f64>> = items
                .iter()
                .map(|it| {
                    let mut row = vec![0.0; k];
                    params.compat_into(it.tokens, &it.levels, &mut row);
                    row
                })
                .collect();
            segment_compat(&compat, options, &state.observed[i])
        })
        .collect()
}

fn full_set<'a>(corpus: &'a Corpus, state: &AssignmentState) -> Result<TrainingSet<'a>> {
    TrainingSet::new(corpus, &state.review_indices, |_, _| true)
}

/// Relabels the unobserved sentences of every training review under the
/// current weights.
pub fn e_step(
    params: &ModelParams,
    corpus: &Corpus,
    state: &AssignmentState,
    options: SegmentOptions,
) -> Result<AssignmentState> {
    let set = full_set(corpus, state)?;
    let mut next = state.clone();
    next.labels = e_step_set(params, &set, state, options);
    Ok(next)
}

/// Gradient ascent on the regularized objective with labels fixed.
pub fn m_step(
    params: &ModelParams,
    corpus: &Corpus,
    state: &AssignmentState,
    config: &TrainConfig,
) -> Result<ModelParams> {
    let set = full_set(corpus, state)?;
    Ok(objective::m_step(params, &set, &state.flat_labels(), config)?.params)
}

/// Mean per-token log-likelihood of the state's labels minus
/// `reg_weight * (|theta|^2 + |phi|^2)`.
pub fn objective(
    params: &ModelParams,
    corpus: &Corpus,
    state: &AssignmentState,
    reg_weight: f64,
) -> Result<f64> {
    let set = full_set(corpus, state)?;
    Ok(objective::objective(params, &set, &state.flat_labels(), reg_weight))
}

/// The objective and its gradient over the flat weight vector (theta
/// block first, as in [`ModelParams::weights`]).
pub fn objective_gradient(
    params: &ModelParams,
    corpus: &Corpus,
    state: &AssignmentState,
    reg_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let set = full_set(corpus, state)?;
    Ok(objective::objective_gradient(params, &set, &state.flat_labels(), reg_weight))
}

/// One outer iteration of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub restart: usize,
    pub iteration: usize,
    /// Objective after the E-step that opened this iteration.
    pub objective_after_e: f64,
    /// Objective at the start of the M-step and after each accepted step.
    pub m_step_trace: Vec<f64>,
    /// Sentences whose label changed in the E-step that closed it.
    pub label_changes: usize,
}

impl LogEntry {
    pub fn objective(&self) -> f64 {
        *self.m_step_trace.last().unwrap_or(&self.objective_after_e)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "restart,iteration,objective,m_steps,label_changes")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{:.12e},{},{}",
                e.restart,
                e.iteration,
                e.objective(),
                e.m_step_trace.len().saturating_sub(1),
                e.label_changes
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, header_comment: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        if let Some(c) = header_comment {
            writeln!(buf, "# {c}").expect("write to memory");
        }
        self.write_csv(&mut buf).expect("write to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Whether every M-step's accepted iterates have non-decreasing
    /// objective.
    pub fn m_steps_monotone(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.m_step_trace.windows(2).all(|w| w[1] >= w[0]))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub state: AssignmentState,
    /// Regularized objective of the returned weights and labels.
    pub objective: f64,
    /// Index of the winning restart.
    pub restart: usize,
    pub log: TrainLog,
}

struct RunResult {
    params: ModelParams,
    labels: Vec<Vec<usize>>,
    objective: f64,
    log: Vec<LogEntry>,
}

fn coordinate_ascent(
    corpus: &Corpus,
    state: &AssignmentState,
    set: &TrainingSet,
    config: &TrainConfig,
    restart: usize,
    labeled_init: Option<(&TrainingSet, &[usize])>,
) -> Result<RunResult> {
    let mut rng = restart_rng(config.seed, restart);
    let mut params = init_params(&corpus.schema, &corpus.vocabulary, &mut rng, config.init_scale);
    if let Some((labeled, labels)) = labeled_init {
        if !labels.is_empty() {
            params = objective::m_step(&params, labeled, labels, config)?.params;
        }
    }
    let options = config.segment_options();
    let mut current = state.clone();
    current.labels = e_step_set(&params, set, state, options);
    let mut flat = current.flat_labels();
    let mut log = Vec::new();
    for iteration in 0..config.max_outer_iters {
        let before = objective::objective(&params, set, &flat, config.reg_weight);
        let step = objective::m_step(&params, set, &flat, config)?;
        params = step.params;
        let next = e_step_set(&params, set, &current, options);
        let next_flat: Vec<usize> = next.concat();
        let changes = next_flat.iter().zip(&flat).filter(|(a, b)| a != b).count();
        log.push(LogEntry {
            restart,
            iteration,
            objective_after_e: before,
            m_step_trace: step.trace,
            label_changes: changes,
        });
        current.labels = next;
        flat = next_flat;
        if changes == 0 {
            break;
        }
    }
    let objective = objective::objective(&params, set, &flat, config.reg_weight);
    if !objective.is_finite() {
        return Err(Error::NonFinite(format!("objective of restart {restart}")));
    }
    Ok(RunResult {
        params,
        labels: current.labels,
        objective,
        log,
    })
}

fn run_restarts(
    corpus: &Corpus,
    state: AssignmentState,
    config: &TrainConfig,
    semi: bool,
) -> Result<TrainOutcome> {
    config.validate()?;
    if state.review_indices.is_empty() {
        return Err(Error::NoData("no fully rated review to train on".into()));
    }
    let set = full_set(corpus, &state)?;
    let labeled = if semi {
        let set = TrainingSet::new(corpus, &state.review_indices, |i, s| {
            state.observed[i][s].is_some()
        })?;
        let labels: Vec<usize> = state.observed.iter().flatten().flatten().copied().collect();
        Some((set, labels))
    } else {
        None
    };
    let runs: Vec<Result<RunResult>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            coordinate_ascent(
                corpus,
                &state,
                &set,
                config,
                r,
                labeled.as_ref().map(|(s, l)| (s, l.as_slice())),
            )
        })
        .collect();
    let mut best: Option<(usize, RunResult)> = None;
    let mut log = TrainLog::default();
    for (r, run) in runs.into_iter().enumerate() {
        let run = run?;
        log.entries.extend(run.log.iter().cloned());
        log::debug!("restart {r}: objective {:.6}", run.objective);
        if best.as_ref().is_none_or(|(_, b)| run.objective > b.objective) {
            best = Some((r, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    let mut state = state;
    state.labels = run.labels;
    Ok(TrainOutcome {
        params: run.params,
        state,
        objective: run.objective,
        restart,
        log,
    })
}

/// Coordinate ascent from seeded random starts; the restart with the
/// highest regularized objective wins (ties go to the earliest). Reviews
/// with missing ratings are left out.
pub fn train_unsupervised(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    let state = AssignmentState::from_corpus(corpus, false)?;
    run_restarts(corpus, state, config, false)
}

/// Like [`train_unsupervised`], but the corpus's aspect labels are clamped
/// and each restart first fits the weights to the labeled sentences alone.
pub fn train_semisupervised(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    let state = AssignmentState::from_corpus(corpus, true)?;
    if state.num_observed() == 0 {
        log::warn!("no usable sentence labels; training is unsupervised");
    }
    run_restarts(corpus, state, config, true)
}
