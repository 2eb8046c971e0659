use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Lowercase, split on Unicode word boundaries, drop stop-words, stem.
///
/// Stemming runs the Snowball English stemmer to a fixed point and stems
/// that land on a stop-word are dropped too, so running the preprocessor on
/// its own space-joined output returns the same tokens.
pub struct Preprocessor {
    stopwords: HashSet<String>,
    stemmer: Stemmer,
}

impl Preprocessor {
    pub fn english() -> Self {
        Self::with_stopwords(ENGLISH_STOPWORDS.lines())
    }

    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Preprocessor {
            stopwords: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
            stemmer: Stemmer::create(Algorithm::English),
        }
    }

    /// Reads a stop-word list, one token per line.
    pub fn from_stopword_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::with_stopwords(text.lines()))
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    fn stem(&self, token: &str) -> String {
        let mut current = token.to_owned();
        for _ in 0..8 {
            let next = self.stemmer.stem(&current).into_owned();
            if next == current {
                break;
            }
            current = next;
        }
        current
    }

    pub fn tokens(&self, raw: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in raw.to_lowercase().unicode_words() {
            self.push_word(word, &mut out, 4);
        }
        out
    }

    /// Emits only tokens that map to themselves under a second pass.
    fn push_word(&self, word: &str, out: &mut Vec<String>, depth: u8) {
        if self.is_stopword(word) {
            return;
        }
        let stem = self.stem(word);
        if stem.is_empty() || self.is_stopword(&stem) {
            return;
        }
        let lowered = stem.to_lowercase();
        let mut parts = lowered.unicode_words();
        let single = parts.next() == Some(stem.as_str()) && parts.next().is_none();
        if single || depth == 0 {
            out.push(stem);
        } else {
            for part in lowered.unicode_words() {
                self.push_word(part, out, depth - 1);
            }
        }
    }
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::english()
    }
}

/// [`Preprocessor::tokens`] with the shipped English stop-word list.
pub fn preprocess(raw: &str) -> Vec<String> {
    static ENGLISH: OnceLock<Preprocessor> = OnceLock::new();
    ENGLISH.get_or_init(Preprocessor::english).tokens(raw)
}
