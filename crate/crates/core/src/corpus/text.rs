//! Sentence splitting, word tokenization, and the vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// A sentence before vocabulary lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub raw_text: String,
    pub words: Vec<String>,
}

fn is_sentence_break(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

/// Lowercased alphanumeric runs of `text`.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Splits `text` into sentences on `.`, `!`, `?` and newlines. Pieces with
/// no word tokens are dropped; order is preserved.
pub fn tokenize(text: &str) -> Vec<TokenizedSentence> {
    text.split(is_sentence_break)
        .filter_map(|piece| {
            let words = tokenize_words(piece);
            if words.is_empty() {
                None
            } else {
                Some(TokenizedSentence {
                    raw_text: piece.trim().to_string(),
                    words,
                })
            }
        })
        .collect()
}

/// Bijective word/index map with per-word document frequencies.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    words: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    words: Vec<String>,
    doc_freq: Vec<usize>,
}

impl From<VocabularyFile> for Vocabulary {
    fn from(f: VocabularyFile) -> Self {
        Vocabulary::from_parts(f.words, f.doc_freq)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            words: v.words,
            doc_freq: v.doc_freq,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words && self.doc_freq == other.doc_freq
    }
}

impl Vocabulary {
    /// Builds a vocabulary of every word appearing in at least `min_df`
    /// documents, indexed in lexicographic order. A `min_df` of zero is
    /// treated as one.
    pub fn build<D, W, S>(documents: D, min_df: usize) -> Self
    where
        D: IntoIterator<Item = W>,
        W: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in documents {
            let distinct: BTreeSet<String> =
                doc.into_iter().map(|w| w.as_ref().to_string()).collect();
            for w in distinct {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        let (words, doc_freq) = df.into_iter().filter(|(_, n)| *n >= min_df.max(1)).unzip();
        Self::from_parts(words, doc_freq)
    }

    pub fn from_parts(words: Vec<String>, doc_freq: Vec<usize>) -> Self {
        let doc_freq = if doc_freq.len() == words.len() {
            doc_freq
        } else {
            vec![0; words.len()]
        };
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            words,
            doc_freq,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// Maps words to indices, skipping out-of-vocabulary words.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().filter_map(|w| self.get(w.as_ref())).collect()
    }
}
