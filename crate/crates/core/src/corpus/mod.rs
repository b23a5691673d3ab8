//! Review ingestion: the data model, JSON-lines and TSV formats, and
//! train/test splitting.

mod schema;
pub mod synth;
mod text;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use schema::AspectSchema;
pub use text::{tokenize, tokenize_words, TokenizedSentence, Vocabulary};

/// Default minimum document frequency for the vocabulary.
pub const DEFAULT_MIN_DF: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    /// Vocabulary indices; out-of-vocabulary words are already dropped.
    pub tokens: Vec<usize>,
    pub raw_text: String,
    /// The sentence's own rating, used only by per-sentence-rating schemas.
    pub rating: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub review_id: String,
    pub item_id: String,
    pub user_id: String,
    pub sentences: Vec<Sentence>,
    /// One entry per aspect; `None` when the rating is missing.
    pub ratings: Vec<Option<f64>>,
}

impl Review {
    pub fn is_fully_rated(&self) -> bool {
        self.ratings.iter().all(Option::is_some)
    }

    /// Ratings that index the sentiment weights of sentence `s`: the review's
    /// aspect ratings, or the sentence's own rating repeated for every aspect
    /// under a per-sentence-rating schema.
    pub fn ratings_for_sentence(&self, schema: &AspectSchema, s: usize) -> Vec<Option<f64>> {
        if schema.per_sentence_ratings() {
            vec![self.sentences[s].rating; schema.num_aspects()]
        } else {
            self.ratings.clone()
        }
    }

    /// Level indices of the ratings that index sentence `s`'s sentiment weights.
    pub fn sentence_levels(&self, schema: &AspectSchema, s: usize) -> Result<Vec<usize>> {
        rating_levels(schema, &self.ratings_for_sentence(schema, s), &self.review_id)
    }
}

/// Resolves rating values to level indices, failing on the first missing one.
pub fn rating_levels(
    schema: &AspectSchema,
    ratings: &[Option<f64>],
    review_id: &str,
) -> Result<Vec<usize>> {
    ratings
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let value = r.ok_or_else(|| Error::MissingRating {
                review_id: review_id.to_string(),
                aspect: schema.aspect_name(k).to_string(),
            })?;
            schema
                .level_index(k, value)
                .ok_or_else(|| Error::InvalidRating {
                    aspect: schema.aspect_name(k).to_string(),
                    value,
                })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentenceLabel {
    Aspect(usize),
    /// Ambiguous or irrelevant: stored, never trained on or scored.
    Ambiguous,
}

impl SentenceLabel {
    pub fn aspect(self) -> Option<usize> {
        match self {
            SentenceLabel::Aspect(k) => Some(k),
            SentenceLabel::Ambiguous => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentence {
    pub review_id: String,
    pub sentence_index: usize,
    pub label: SentenceLabel,
}

/// A review before vocabulary lookup.
#[derive(Debug, Clone)]
pub struct RawReview {
    pub review_id: String,
    pub item_id: String,
    pub user_id: String,
    pub sentences: Vec<TokenizedSentence>,
    pub ratings: Vec<Option<f64>>,
    pub sentence_ratings: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub min_df: usize,
    /// Encode against this vocabulary instead of building one.
    pub vocabulary: Option<Vocabulary>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            min_df: DEFAULT_MIN_DF,
            vocabulary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub schema: AspectSchema,
    pub reviews: Vec<Review>,
    pub vocabulary: Vocabulary,
    pub labels: Vec<LabeledSentence>,
}

#[derive(Deserialize)]
struct ReviewLine {
    review_id: String,
    #[serde(default)]
    item_id: String,
    #[serde(default)]
    user_id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    sentences: Option<Vec<String>>,
    #[serde(default)]
    ratings: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    sentence_ratings: Option<Vec<Option<f64>>>,
}

#[derive(Serialize)]
struct ReviewLineOut<'a> {
    review_id: &'a str,
    item_id: &'a str,
    user_id: &'a str,
    sentences: Vec<&'a str>,
    ratings: BTreeMap<&'a str, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sentence_ratings: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<&'a str>,
}

/// Parses one review line against `schema`.
pub fn parse_review_line(schema: &AspectSchema, line: &str, line_no: usize) -> Result<RawReview> {
    let parsed: ReviewLine = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let sentences = match (parsed.sentences, parsed.text) {
        (Some(list), _) => list
            .iter()
            .map(|s| TokenizedSentence {
                raw_text: s.trim().to_string(),
                words: tokenize_words(s),
            })
            .collect(),
        (None, Some(text)) => tokenize(&text),
        (None, None) => {
            return Err(Error::Parse {
                line: line_no,
                message: "review has neither `text` nor `sentences`".into(),
            })
        }
    };
    let mut ratings = vec![None; schema.num_aspects()];
    for (name, value) in parsed.ratings {
        let k = schema.aspect_index(&name).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("unknown aspect `{name}` in ratings"),
        })?;
        if let Some(v) = value {
            if schema.level_index(k, v).is_none() {
                return Err(Error::InvalidRating {
                    aspect: schema.aspect_name(k).to_string(),
                    value: v,
                });
            }
            ratings[k] = Some(v);
        }
    }
    let sentence_ratings = match parsed.sentence_ratings {
        Some(sr) => {
            if sr.len() != sentences.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "{} sentence ratings for {} sentences",
                        sr.len(),
                        sentences.len()
                    ),
                });
            }
            for v in sr.iter().flatten() {
                if schema.level_index(0, *v).is_none() {
                    return Err(Error::InvalidRating {
                        aspect: schema.aspect_name(0).to_string(),
                        value: *v,
                    });
                }
            }
            sr
        }
        None => vec![None; sentences.len()],
    };
    Ok(RawReview {
        review_id: parsed.review_id,
        item_id: parsed.item_id,
        user_id: parsed.user_id,
        sentences,
        ratings,
        sentence_ratings,
    })
}

impl Corpus {
    /// Builds a corpus from tokenized reviews: vocabulary (unless supplied),
    /// then index encoding with out-of-vocabulary words skipped.
    pub fn from_raw(schema: AspectSchema, raw: Vec<RawReview>, options: &LoadOptions) -> Self {
        let vocabulary = match &options.vocabulary {
            Some(v) => v.clone(),
            None => Vocabulary::build(
                raw.iter()
                    .map(|r| r.sentences.iter().flat_map(|s| s.words.iter())),
                options.min_df,
            ),
        };
        let reviews = raw
            .into_iter()
            .map(|r| Review {
                sentences: r
                    .sentences
                    .into_iter()
                    .zip(r.sentence_ratings)
                    .map(|(s, rating)| Sentence {
                        tokens: vocabulary.encode(&s.words),
                        raw_text: s.raw_text,
                        rating,
                    })
                    .collect(),
                review_id: r.review_id,
                item_id: r.item_id,
                user_id: r.user_id,
                ratings: r.ratings,
            })
            .collect();
        Corpus {
            schema,
            reviews,
            vocabulary,
            labels: Vec::new(),
        }
    }

    pub fn num_sentences(&self) -> usize {
        self.reviews.iter().map(|r| r.sentences.len()).sum()
    }

    pub fn review_positions(&self) -> HashMap<&str, usize> {
        self.reviews
            .iter()
            .enumerate()
            .map(|(i, r)| (r.review_id.as_str(), i))
            .collect()
    }

    /// Labels arranged per review and sentence.
    pub fn label_grid(&self) -> Result<Vec<Vec<Option<SentenceLabel>>>> {
        label_grid(self, &self.labels)
    }

    /// Keeps the reviews at `indices` (in that order) and their labels.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        let reviews: Vec<Review> = indices.iter().map(|&i| self.reviews[i].clone()).collect();
        let keep: std::collections::HashSet<&str> =
            reviews.iter().map(|r| r.review_id.as_str()).collect();
        let labels = self
            .labels
            .iter()
            .filter(|l| keep.contains(l.review_id.as_str()))
            .cloned()
            .collect();
        Corpus {
            schema: self.schema.clone(),
            vocabulary: self.vocabulary.clone(),
            reviews,
            labels,
        }
    }

    /// Checks that every review has K ratings drawn from the schema levels
    /// and every token is in range.
    pub fn validate(&self) -> Result<()> {
        let k = self.schema.num_aspects();
        for r in &self.reviews {
            if r.ratings.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "review `{}` has {} ratings, schema has {k} aspects",
                    r.review_id,
                    r.ratings.len()
                )));
            }
            for (a, v) in r.ratings.iter().enumerate() {
                if let Some(v) = v {
                    if self.schema.level_index(a, *v).is_none() {
                        return Err(Error::InvalidRating {
                            aspect: self.schema.aspect_name(a).to_string(),
                            value: *v,
                        });
                    }
                }
            }
            if r
                .sentences
                .iter()
                .flat_map(|s| &s.tokens)
                .any(|&t| t >= self.vocabulary.len())
            {
                return Err(Error::DimensionMismatch(format!(
                    "review `{}` has a token outside the vocabulary",
                    r.review_id
                )));
            }
        }
        label_grid(self, &self.labels).map(|_| ())
    }
}

/// Arranges `labels` per review and sentence of `corpus`.
pub fn label_grid(
    corpus: &Corpus,
    labels: &[LabeledSentence],
) -> Result<Vec<Vec<Option<SentenceLabel>>>> {
    let positions = corpus.review_positions();
    let mut grid: Vec<Vec<Option<SentenceLabel>>> = corpus
        .reviews
        .iter()
        .map(|r| vec![None; r.sentences.len()])
        .collect();
    for l in labels {
        let &r = positions
            .get(l.review_id.as_str())
            .ok_or_else(|| Error::UnknownReview(l.review_id.clone()))?;
        let slot = grid[r].get_mut(l.sentence_index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "review `{}` has no sentence {}",
                l.review_id, l.sentence_index
            ))
        })?;
        if let SentenceLabel::Aspect(k) = l.label {
            if k >= corpus.schema.num_aspects() {
                return Err(Error::UnknownAspect(k.to_string()));
            }
        }
        *slot = Some(l.label);
    }
    Ok(grid)
}

/// Reads a JSON-lines review file, building the vocabulary with the
/// default minimum document frequency.
pub fn load_corpus(path: impl AsRef<Path>, schema: &AspectSchema) -> Result<Corpus> {
    load_corpus_with(path, schema, &LoadOptions::default())
}

pub fn load_corpus_with(
    path: impl AsRef<Path>,
    schema: &AspectSchema,
    options: &LoadOptions,
) -> Result<Corpus> {
    load_corpora_with(&[path.as_ref()], schema, options)
}

/// Reads several review files into one corpus.
pub fn load_corpora_with<P: AsRef<Path>>(
    paths: &[P],
    schema: &AspectSchema,
    options: &LoadOptions,
) -> Result<Corpus> {
    let mut raw = Vec::new();
    for path in paths {
        raw.extend(read_raw_reviews(path.as_ref(), schema)?);
    }
    Ok(Corpus::from_raw(schema.clone(), raw, options))
}

pub fn read_raw_reviews(path: &Path, schema: &AspectSchema) -> Result<Vec<RawReview>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        raw.push(parse_review_line(schema, &line, i + 1)?);
    }
    Ok(raw)
}

/// Writes `corpus` as JSON lines with explicit sentence lists.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in &corpus.reviews {
        write_review_line(&mut out, &corpus.schema, r, None).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// One review as a JSON line; `config_hash`, when given, is recorded as an
/// extra field that readers ignore.
pub fn write_review_line(
    out: &mut impl Write,
    schema: &AspectSchema,
    review: &Review,
    config_hash: Option<&str>,
) -> std::io::Result<()> {
    let line = ReviewLineOut {
        config_hash,
        review_id: &review.review_id,
        item_id: &review.item_id,
        user_id: &review.user_id,
        sentences: review.sentences.iter().map(|s| s.raw_text.as_str()).collect(),
        ratings: review
            .ratings
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (schema.aspect_name(k), v)))
            .collect(),
        sentence_ratings: schema
            .per_sentence_ratings()
            .then(|| review.sentences.iter().map(|s| s.rating).collect()),
    };
    serde_json::to_writer(&mut *out, &line)?;
    writeln!(out)
}

/// Reads a label TSV (`review_id`, `sentence_index`, aspect name or
/// `ambiguous`). Blank lines, `#` comments and a header row are skipped.
pub fn load_labels(path: impl AsRef<Path>, schema: &AspectSchema) -> Result<Vec<LabeledSentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    let mut first = true;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let header = std::mem::replace(&mut first, false);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if header && fields[0] == "review_id" {
            continue;
        }
        let sentence_index = fields[1].trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("bad sentence index `{}`", fields[1]),
        })?;
        let name = fields[2].trim();
        let label = if name.eq_ignore_ascii_case("ambiguous") {
            SentenceLabel::Ambiguous
        } else {
            SentenceLabel::Aspect(
                schema
                    .aspect_index(name)
                    .ok_or_else(|| Error::UnknownAspect(name.to_string()))?,
            )
        };
        labels.push(LabeledSentence {
            review_id: fields[0].to_string(),
            sentence_index,
            label,
        });
    }
    Ok(labels)
}

pub fn write_labels(
    out: &mut impl Write,
    schema: &AspectSchema,
    labels: &[LabeledSentence],
) -> std::io::Result<()> {
    writeln!(out, "review_id\tsentence_index\taspect")?;
    for l in labels {
        let name = match l.label {
            SentenceLabel::Aspect(k) => schema.aspect_name(k),
            SentenceLabel::Ambiguous => "ambiguous",
        };
        writeln!(out, "{}\t{}\t{}", l.review_id, l.sentence_index, name)?;
    }
    Ok(())
}

pub fn save_labels(
    path: impl AsRef<Path>,
    schema: &AspectSchema,
    labels: &[LabeledSentence],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_labels(&mut out, schema, labels)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Random review-level partition into (train, test). Labels follow their
/// reviews and both parts keep the full vocabulary; review order within
/// each part is the original corpus order.
pub fn split(corpus: &Corpus, train_fraction: f64, rng_seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = corpus.reviews.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((corpus.subset(&train), corpus.subset(&test)))
}
