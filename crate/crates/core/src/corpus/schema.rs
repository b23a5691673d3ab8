use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LEVEL_EPS: f64 = 1e-9;

/// Ordered aspect names, their permitted rating levels, and the seed words
/// used to break symmetry at initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct AspectSchema {
    aspects: Vec<String>,
    rating_levels: Vec<Vec<f64>>,
    seed_words: Vec<Vec<String>>,
    per_sentence_ratings: bool,
}

/// On-disk layout: maps keyed by aspect name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    aspects: Vec<String>,
    rating_levels: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    seed_words: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    per_sentence_ratings: bool,
}

impl TryFrom<SchemaFile> for AspectSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        let mut levels = Vec::with_capacity(file.aspects.len());
        for name in &file.aspects {
            let l = file
                .rating_levels
                .get(name)
                .ok_or_else(|| Error::Schema(format!("no rating levels for aspect `{name}`")))?;
            levels.push(l.clone());
        }
        for key in file.rating_levels.keys().chain(file.seed_words.keys()) {
            if !file.aspects.contains(key) {
                return Err(Error::Schema(format!("`{key}` is not a listed aspect")));
            }
        }
        let seeds = file
            .aspects
            .iter()
            .map(|name| file.seed_words.get(name).cloned())
            .collect();
        let mut schema = AspectSchema::new(file.aspects, levels, Some(seeds))?;
        schema.per_sentence_ratings = file.per_sentence_ratings;
        schema.validate()?;
        Ok(schema)
    }
}

impl From<AspectSchema> for SchemaFile {
    fn from(s: AspectSchema) -> Self {
        SchemaFile {
            rating_levels: s
                .aspects
                .iter()
                .cloned()
                .zip(s.rating_levels.iter().cloned())
                .collect(),
            seed_words: s
                .aspects
                .iter()
                .cloned()
                .zip(s.seed_words.iter().cloned())
                .collect(),
            per_sentence_ratings: s.per_sentence_ratings,
            aspects: s.aspects,
        }
    }
}

impl AspectSchema {
    /// Builds a schema. Seed words default to the lowercased aspect name
    /// for every aspect whose entry is `None`.
    pub fn new(
        aspects: Vec<String>,
        rating_levels: Vec<Vec<f64>>,
        seed_words: Option<Vec<Option<Vec<String>>>>,
    ) -> Result<Self> {
        let seeds = match seed_words {
            Some(s) => {
                if s.len() != aspects.len() {
                    return Err(Error::Schema("seed word list length differs from K".into()));
                }
                s.into_iter()
                    .zip(&aspects)
                    .map(|(s, a)| s.unwrap_or_else(|| vec![a.to_lowercase()]))
                    .collect()
            }
            None => aspects.iter().map(|a| vec![a.to_lowercase()]).collect(),
        };
        let schema = AspectSchema {
            aspects,
            rating_levels,
            seed_words: seeds,
            per_sentence_ratings: false,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Every aspect shares the same levels.
    pub fn uniform(aspects: &[&str], levels: &[f64]) -> Result<Self> {
        Self::new(
            aspects.iter().map(|a| a.to_string()).collect(),
            vec![levels.to_vec(); aspects.len()],
            None,
        )
    }

    pub fn with_per_sentence_ratings(mut self, on: bool) -> Result<Self> {
        self.per_sentence_ratings = on;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed_words(mut self, aspect: usize, words: Vec<String>) -> Result<Self> {
        if aspect >= self.num_aspects() {
            return Err(Error::UnknownAspect(aspect.to_string()));
        }
        self.seed_words[aspect] = words;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.aspects.is_empty() {
            return Err(Error::Schema("at least one aspect is required".into()));
        }
        if self.rating_levels.len() != self.aspects.len() {
            return Err(Error::Schema("rating level list length differs from K".into()));
        }
        for (i, a) in self.aspects.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::Schema("empty aspect name".into()));
            }
            if self.aspects[..i].contains(a) {
                return Err(Error::Schema(format!("duplicate aspect `{a}`")));
            }
        }
        for (a, levels) in self.aspects.iter().zip(&self.rating_levels) {
            if levels.is_empty() {
                return Err(Error::Schema(format!("aspect `{a}` has no rating levels")));
            }
            if levels.iter().any(|l| !l.is_finite()) {
                return Err(Error::Schema(format!("aspect `{a}` has a non-finite level")));
            }
            if levels.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Schema(format!(
                    "rating levels of `{a}` must be strictly increasing"
                )));
            }
        }
        for (a, seeds) in self.aspects.iter().zip(&self.seed_words) {
            if seeds.iter().any(|s| s.is_empty()) {
                return Err(Error::Schema(format!("aspect `{a}` has an empty seed word")));
            }
        }
        if self.per_sentence_ratings
            && self.rating_levels.windows(2).any(|w| w[0] != w[1])
        {
            return Err(Error::Schema(
                "per-sentence ratings require every aspect to share its rating levels".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Number of aspects, K.
    pub fn num_aspects(&self) -> usize {
        self.aspects.len()
    }

    pub fn aspects(&self) -> &[String] {
        &self.aspects
    }

    pub fn aspect_name(&self, k: usize) -> &str {
        &self.aspects[k]
    }

    pub fn aspect_index(&self, name: &str) -> Option<usize> {
        self.aspects
            .iter()
            .position(|a| a == name)
            .or_else(|| self.aspects.iter().position(|a| a.eq_ignore_ascii_case(name)))
    }

    pub fn levels(&self, k: usize) -> &[f64] {
        &self.rating_levels[k]
    }

    pub fn num_levels(&self, k: usize) -> usize {
        self.rating_levels[k].len()
    }

    pub fn seed_words(&self, k: usize) -> &[String] {
        &self.seed_words[k]
    }

    pub fn per_sentence_ratings(&self) -> bool {
        self.per_sentence_ratings
    }

    /// Position of `value` among aspect `k`'s levels.
    pub fn level_index(&self, k: usize, value: f64) -> Option<usize> {
        self.rating_levels[k]
            .iter()
            .position(|&l| (l - value).abs() <= LEVEL_EPS)
    }

    /// Rating scaled to [0, 1] by the aspect's level range.
    pub fn scaled(&self, k: usize, value: f64) -> f64 {
        let levels = &self.rating_levels[k];
        let (lo, hi) = (levels[0], levels[levels.len() - 1]);
        if hi > lo {
            (value - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    /// The aspect named `overall`, if any. It is treated as observed when
    /// recovering the other ratings.
    pub fn overall_index(&self) -> Option<usize> {
        self.aspects
            .iter()
            .position(|a| a.eq_ignore_ascii_case("overall"))
    }

    /// Total rating levels over all aspects.
    pub fn total_levels(&self) -> usize {
        self.rating_levels.iter().map(Vec::len).sum()
    }

    /// Offset of each aspect's first level in a flattened (k, level) layout.
    pub fn level_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.aspects.len());
        let mut acc = 0;
        for l in &self.rating_levels {
            offsets.push(acc);
            acc += l.len();
        }
        offsets
    }
}
