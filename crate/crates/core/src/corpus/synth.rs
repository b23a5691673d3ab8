//! Planted-parameter corpora for testing recovery.
//!
//! Tokens of a sentence about aspect `k` in a review rated `v` are drawn
//! i.i.d. with probability proportional to `exp(theta*[k][w] + phi*[k][v_k][w])`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AspectSchema, Corpus, LoadOptions, RawReview, TokenizedSentence, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Weight given to words outside an aspect's support.
pub const ABSENT: f64 = -1e6;

/// Planted parameters over a synthetic vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub params: ModelParams,
    pub vocabulary: Vocabulary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_reviews: usize,
    /// Sentence count range per review; the minimum is raised to K.
    pub sentences: (usize, usize),
    pub tokens_per_sentence: (usize, usize),
    /// Probability that all aspects of a review share one latent rating;
    /// otherwise each aspect is rated independently and uniformly.
    pub rating_correlation: f64,
    /// Probability that an overall sentence is a summary: the overall
    /// aspect's first seed word followed by words drawn as if the sentence
    /// were about another (uniformly chosen) aspect. Needs an overall aspect.
    pub summary_echo: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Generation settings paired with [`LexiconSpec::recovery`].
    pub fn recovery(n_reviews: usize, seed: u64) -> Self {
        SynthConfig {
            n_reviews,
            summary_echo: RECOVERY_SUMMARY_ECHO,
            seed,
            ..SynthConfig::default()
        }
    }
}

/// Summary echo used by [`SynthConfig::recovery`].
pub const RECOVERY_SUMMARY_ECHO: f64 = 0.5;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_reviews: 2000,
            sentences: (5, 8),
            tokens_per_sentence: (6, 12),
            rating_correlation: 0.0,
            summary_echo: 0.0,
            seed: 0,
        }
    }
}

/// A generated corpus with its planted sentence aspects.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub assignments: Vec<Vec<usize>>,
}

/// Token mass of each word group within one aspect's sentences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMass {
    pub nouns: f64,
    pub adjectives: f64,
    pub generic: f64,
    pub common: f64,
}

impl Default for GroupMass {
    fn default() -> Self {
        GroupMass {
            nouns: 0.4,
            adjectives: 0.25,
            generic: 0.0,
            common: 0.35,
        }
    }
}

/// Word groups of a planted lexicon. Aspect nouns carry no sentiment;
/// adjectives (per aspect and generic) are listed from most negative to
/// most positive and prefer ratings near their polarity.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconSpec {
    pub nouns: Vec<Vec<String>>,
    pub adjectives: Vec<Vec<String>>,
    pub generic: Vec<String>,
    pub common: Vec<String>,
    pub masses: Vec<GroupMass>,
    /// Exponent of the rank-frequency law within noun and common groups.
    pub zipf_exponent: f64,
    /// How sharply an adjective's weight falls off away from its polarity.
    pub sharpness: f64,
}

fn slug(name: &str) -> String {
    let s: String = name
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect();
    if s.is_empty() {
        "aspect".into()
    } else {
        s
    }
}

impl LexiconSpec {
    /// Numbered words: `{aspect}noun{i}` (the aspect's first seed word is
    /// noun zero), `{aspect}adj{i}`, `generic{i}`, and `common{i}`.
    pub fn numbered(
        schema: &AspectSchema,
        nouns_per_aspect: usize,
        adjectives_per_aspect: usize,
        generic: usize,
        common: usize,
    ) -> Self {
        let k = schema.num_aspects();
        let nouns = (0..k)
            .map(|a| {
                let base = slug(schema.aspect_name(a));
                let seed = crate::corpus::tokenize_words(&schema.seed_words(a)[0])
                    .into_iter()
                    .next()
                    .unwrap_or_else(|| base.clone());
                std::iter::once(seed)
                    .chain((1..nouns_per_aspect).map(|i| format!("{base}noun{i}")))
                    .take(nouns_per_aspect)
                    .collect()
            })
            .collect();
        let adjectives = (0..k)
            .map(|a| {
                let base = slug(schema.aspect_name(a));
                (0..adjectives_per_aspect)
                    .map(|i| format!("{base}adj{i}"))
                    .collect()
            })
            .collect();
        LexiconSpec {
            nouns,
            adjectives,
            generic: (0..generic).map(|i| format!("generic{i}")).collect(),
            common: (0..common).map(|i| format!("common{i}")).collect(),
            masses: vec![GroupMass::default(); k],
            zipf_exponent: 1.0,
            sharpness: 8.0,
        }
    }

    /// Beer-review words covering the five sensory aspects.
    pub fn beer() -> Self {
        fn words(s: &str) -> Vec<String> {
            s.split_whitespace().map(str::to_string).collect()
        }
        LexiconSpec {
            nouns: vec![
                words("feel body carbonation mouthfeel texture palate"),
                words("look head lace retention brown tan color pour foam amber"),
                words("smell aroma nose raisin grape vanilla oak caramel toffee scent"),
                words("taste flavor sugar molasses bready yeast finish alcohol presence malt sweetness"),
                words("overall quad actually beer drinkability bottle recommend"),
            ],
            adjectives: vec![
                words("watery thin flat medium thick velvety"),
                words("murky dull cloudy clear bright beautiful"),
                words("skunky musty faint pleasant excellent fragrant"),
                words("metallic bland sour rich complex delicious"),
                words("awful disappointing decent good nice superb"),
            ],
            generic: words("bad poor okay fine great amazing"),
            common: words(
                "a the and with of this is has from over low light minimal strong dark fruit plum red start it was very but in to",
            ),
            masses: vec![GroupMass::default(); 5],
            zipf_exponent: 0.7,
            sharpness: 8.0,
        }
    }

    /// The matching schema for [`LexiconSpec::beer`]: half-star ratings
    /// from 1 to 5.
    pub fn beer_schema() -> AspectSchema {
        let levels: Vec<f64> = (2..=10).map(|h| h as f64 / 2.0).collect();
        AspectSchema::uniform(&["feel", "look", "smell", "taste", "overall"], &levels)
            .expect("static schema")
    }

    /// Three aspects (look, taste, overall) rated 1 to 5, seeded with
    /// `head`, `flavor` and `overall`.
    pub fn numbered_schema() -> AspectSchema {
        AspectSchema::uniform(&["look", "taste", "overall"], &[1.0, 2.0, 3.0, 4.0, 5.0])
            .and_then(|s| s.with_seed_words(0, vec!["head".into()]))
            .and_then(|s| s.with_seed_words(1, vec!["flavor".into()]))
            .and_then(|s| s.with_seed_words(2, vec!["overall".into()]))
            .expect("static schema")
    }

    /// A 300-word lexicon for [`LexiconSpec::numbered_schema`]: eight
    /// nouns and ten adjectives per aspect, 46 generic sentiment words and
    /// 200 common words.
    pub fn recovery() -> Self {
        let mut spec = LexiconSpec::numbered(&Self::numbered_schema(), 8, 10, 46, 200);
        spec.masses = vec![
            GroupMass {
                nouns: 0.4,
                adjectives: 0.1,
                generic: 0.2,
                common: 0.3,
            };
            3
        ];
        spec
    }

    /// Builds planted parameters. Every word is a lowercase alphanumeric
    /// token appearing in exactly one group.
    pub fn build(&self, schema: &AspectSchema) -> Result<PlantedModel> {
        let k_count = schema.num_aspects();
        if self.nouns.len() != k_count
            || self.adjectives.len() != k_count
            || self.masses.len() != k_count
        {
            return Err(Error::DimensionMismatch(format!(
                "lexicon groups must list {k_count} aspects"
            )));
        }
        let mut all: Vec<&String> = self
            .nouns
            .iter()
            .chain(&self.adjectives)
            .flatten()
            .chain(&self.generic)
            .chain(&self.common)
            .collect();
        for w in &all {
            if crate::corpus::tokenize_words(w) != [w.as_str()] {
                return Err(Error::InvalidArgument(format!(
                    "lexicon word `{w}` is not a single lowercase token"
                )));
            }
        }
        all.sort();
        if let Some(pair) = all.windows(2).find(|p| p[0] == p[1]) {
            return Err(Error::InvalidArgument(format!(
                "lexicon word `{}` appears twice",
                pair[0]
            )));
        }
        let vocabulary = Vocabulary::from_parts(
            all.iter().map(|w| w.to_string()).collect(),
            vec![0; all.len()],
        );
        let idx = |w: &String| vocabulary.get(w).expect("word in vocabulary");
        let mut params = ModelParams::zeros(schema, vocabulary.len());
        for x in params.weights_mut() {
            *x = ABSENT;
        }
        for k in 0..k_count {
            for l in 0..schema.num_levels(k) {
                for w in 0..vocabulary.len() {
                    params.set_phi(k, l, w, 0.0);
                }
            }
            let m = self.masses[k];
            let groups: [(&[String], f64, bool); 4] = [
                (&self.nouns[k], m.nouns, false),
                (&self.adjectives[k], m.adjectives, true),
                (&self.generic, m.generic, true),
                (&self.common, m.common, false),
            ];
            let total: f64 = groups
                .iter()
                .filter(|g| !g.0.is_empty())
                .map(|g| g.1)
                .sum();
            if !(total > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "aspect `{}` has no token mass",
                    schema.aspect_name(k)
                )));
            }
            for (words, mass, sentiment) in groups {
                if words.is_empty() || mass <= 0.0 {
                    continue;
                }
                let mass = mass / total;
                if sentiment {
                    let levels = schema.num_levels(k);
                    for l in 0..levels {
                        let pos = if levels > 1 {
                            l as f64 / (levels - 1) as f64
                        } else {
                            0.5
                        };
                        let prefs: Vec<f64> = (0..words.len())
                            .map(|i| {
                                let pol = if words.len() > 1 {
                                    i as f64 / (words.len() - 1) as f64
                                } else {
                                    0.5
                                };
                                -self.sharpness * (pos - pol) * (pos - pol)
                            })
                            .collect();
                        let z = crate::model::log_sum_exp(&prefs);
                        for (word, p) in words.iter().zip(&prefs) {
                            params.set_phi(k, l, idx(word), p - z);
                        }
                    }
                    for word in words {
                        params.set_theta(k, idx(word), mass.ln());
                    }
                } else {
                    let ranks: Vec<f64> = (0..words.len())
                        .map(|i| -self.zipf_exponent * ((i + 1) as f64).ln())
                        .collect();
                    let z = crate::model::log_sum_exp(&ranks);
                    for (word, r) in words.iter().zip(&ranks) {
                        params.set_theta(k, idx(word), mass.ln() + r - z);
                    }
                }
            }
        }
        Ok(PlantedModel { params, vocabulary })
    }
}

impl PlantedModel {
    /// Token distribution of a sentence about `aspect` when that aspect's
    /// rating is at `level`.
    pub fn token_distribution(&self, aspect: usize, level: usize) -> Vec<f64> {
        let p = &self.params;
        let scores: Vec<f64> = (0..p.vocab_size())
            .map(|w| p.theta(aspect, w) + p.phi(aspect, level, w))
            .collect();
        crate::model::softmax(&scores)
    }

    /// Words with non-negligible probability under `aspect` at any level.
    pub fn support(&self, aspect: usize) -> Vec<usize> {
        let levels = self.params.schema().num_levels(aspect);
        (0..self.params.vocab_size())
            .filter(|&w| {
                (0..levels).any(|l| self.params.theta(aspect, w) + self.params.phi(aspect, l, w) > ABSENT / 2.0)
            })
            .collect()
    }
}

fn draw_levels(schema: &AspectSchema, correlation: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k_count = schema.num_aspects();
    if rng.random::<f64>() < correlation {
        let q: f64 = rng.random();
        (0..k_count)
            .map(|k| ((q * schema.num_levels(k) as f64) as usize).min(schema.num_levels(k) - 1))
            .collect()
    } else {
        (0..k_count)
            .map(|k| rng.random_range(0..schema.num_levels(k)))
            .collect()
    }
}

/// Samples a corpus from `planted`. Each review's first K sentences cover
/// every aspect once and the rest draw aspects uniformly, then the
/// sentence order is shuffled. The corpus vocabulary is the planted one.
pub fn generate_synthetic(planted: &PlantedModel, config: &SynthConfig) -> Result<SyntheticCorpus> {
    let schema = planted.params.schema();
    let k_count = schema.num_aspects();
    let (s_lo, s_hi) = (config.sentences.0.max(k_count), config.sentences.1);
    let (t_lo, t_hi) = config.tokens_per_sentence;
    if s_hi < s_lo || t_hi < t_lo || t_lo == 0 {
        return Err(Error::InvalidArgument(format!(
            "bad synthetic ranges: sentences {s_lo}..={s_hi}, tokens {t_lo}..={t_hi}"
        )));
    }
    if !(0.0..=1.0).contains(&config.rating_correlation) {
        return Err(Error::InvalidArgument("rating correlation must lie in [0, 1]".into()));
    }
    let overall = schema.overall_index();
    if !(0.0..=1.0).contains(&config.summary_echo) {
        return Err(Error::InvalidArgument("summary echo must lie in [0, 1]".into()));
    }
    if config.summary_echo > 0.0 && (overall.is_none() || k_count < 2) {
        return Err(Error::InvalidArgument(
            "summary echo needs an overall aspect and another aspect".into(),
        ));
    }
    let cue = match overall {
        Some(o) if config.summary_echo > 0.0 => {
            let seed = schema.seed_words(o).first().ok_or_else(|| {
                Error::InvalidArgument("summary echo needs a seed word for the overall aspect".into())
            })?;
            Some(planted.vocabulary.get(&seed.to_lowercase()).ok_or_else(|| {
                Error::InvalidArgument(format!("overall seed word `{seed}` is not in the planted vocabulary"))
            })?)
        }
        _ => None,
    };
    if planted.vocabulary.len() != planted.params.vocab_size() {
        return Err(Error::DimensionMismatch("planted vocabulary size".into()));
    }
    let samplers: Vec<Vec<WeightedIndex<f64>>> = (0..k_count)
        .map(|k| {
            (0..schema.num_levels(k))
                .map(|l| {
                    WeightedIndex::new(planted.token_distribution(k, l)).map_err(|e| {
                        Error::InvalidArgument(format!(
                            "aspect `{}` level {l} has no token mass: {e}",
                            schema.aspect_name(k)
                        ))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut raw = Vec::with_capacity(config.n_reviews);
    let mut assignments = Vec::with_capacity(config.n_reviews);
    let mut df = vec![0usize; planted.vocabulary.len()];
    for r in 0..config.n_reviews {
        let levels = draw_levels(schema, config.rating_correlation, &mut rng);
        let n = rng.random_range(s_lo..=s_hi);
        let mut aspects: Vec<usize> = (0..k_count).collect();
        aspects.extend((k_count..n).map(|_| rng.random_range(0..k_count)));
        aspects.shuffle(&mut rng);
        let mut seen = vec![false; planted.vocabulary.len()];
        let sentences = aspects
            .iter()
            .map(|&k| {
                let len = rng.random_range(t_lo..=t_hi);
                let (k, cue) = match (overall, cue) {
                    (Some(o), Some(c)) if k == o && rng.random::<f64>() < config.summary_echo => {
                        let j = rng.random_range(0..k_count - 1);
                        (if j >= o { j + 1 } else { j }, Some(c))
                    }
                    _ => (k, None),
                };
                let level = levels[k];
                let words: Vec<String> = (0..len)
                    .map(|i| {
                        let w = match cue {
                            Some(c) if i == 0 => c,
                            _ => samplers[k][level].sample(&mut rng),
                        };
                        if !seen[w] {
                            seen[w] = true;
                            df[w] += 1;
                        }
                        planted.vocabulary.word(w).to_string()
                    })
                    .collect();
                TokenizedSentence {
                    raw_text: words.join(" "),
                    words,
                }
            })
            .collect::<Vec<_>>();
        raw.push(RawReview {
            review_id: format!("syn{r:06}"),
            item_id: format!("item{}", r % 97),
            user_id: format!("user{}", r % 89),
            sentence_ratings: vec![None; sentences.len()],
            sentences,
            ratings: levels
                .iter()
                .enumerate()
                .map(|(k, &l)| Some(schema.levels(k)[l]))
                .collect(),
        });
        assignments.push(aspects);
    }
    let vocabulary = Vocabulary::from_parts(planted.vocabulary.words().to_vec(), df);
    let corpus = Corpus::from_raw(
        schema.clone(),
        raw,
        &LoadOptions {
            min_df: 1,
            vocabulary: Some(vocabulary),
        },
    );
    Ok(SyntheticCorpus {
        corpus,
        assignments,
    })
}
