//! Aspect segmentation, summarization, and rating recovery for reviews that
//! carry several per-aspect ratings.
//!
//! Each sentence is assigned to one rated aspect by a log-linear model with
//! separate aspect weights (`theta`) and rating-dependent sentiment weights
//! (`phi`). Inference enforces that every aspect is discussed by solving a
//! bipartite assignment per review. The weights can be learned without
//! labels (coordinate ascent), from a few labels, or fully supervised, and
//! the segmentations feed predictors for missing aspect ratings.

pub mod assignment;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod learning;
pub mod model;
pub mod rating;

pub use assignment::{
    kuhn_munkres, relax, segment_review, segment_review_with, summarize_review, CostMatrix,
    Cover, SegmentOptions,
};
pub use corpus::{
    load_corpus, load_labels, split, AspectSchema, Corpus, LabeledSentence, Review, Sentence,
    SentenceLabel, Vocabulary,
};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use learning::{
    train_semisupervised, train_supervised, train_unsupervised, AssignmentState, TrainConfig,
};
pub use model::{
    compatibility, corpus_log_likelihood, normalize_phi, sentence_aspect_probs, top_words,
    CompatibilityRow, Model, ModelParams,
};
pub use rating::{
    predict_joint, predict_segmented, predict_unsegmented, PairwiseParams, Predictor,
    RatingModel, RatingParams, RatingPrediction,
};
