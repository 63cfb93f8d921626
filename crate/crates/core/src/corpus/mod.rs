//! Tweet normalization, annotated corpora, and synthetic corpus generation.

mod io;
mod preprocess;
pub mod synth;

use std::collections::HashSet;
use std::path::PathBuf;

pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus};
pub use preprocess::{is_retweet_duplicate, preprocess, preprocess_with_offsets, Token};
pub use synth::{
    builtin_gazetteer, builtin_templates, load_templates, parse_templates, synth_generate, Gazetteer, Template,
};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("raw record text is empty")]
    EmptyRecord,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {tokens} tokens but mask has {mask} labels")]
    LengthMismatch { line: usize, tokens: usize, mask: usize },
    #[error("mask value {value} at position {position} is not 0 or 1")]
    InvalidMask { position: usize, value: u8 },
    #[error("token {token:?} is not a normalized token")]
    InvalidToken { token: String },
    #[error("annotated tweet has no tokens")]
    EmptyTweet,
    #[error("{tokens} tokens but mask has {mask} labels")]
    Misaligned { tokens: usize, mask: usize },
    #[error("gazetteer line {line}: {message}")]
    Gazetteer { line: usize, message: String },
    #[error("template {index}: {message}")]
    Template { index: usize, message: String },
    #[error("templates contain location slots but the gazetteer is empty")]
    EmptyGazetteer,
    #[error("generator produced only {produced} distinct tweets out of {wanted} requested")]
    Exhausted { wanted: usize, produced: usize },
}

/// A tweet as collected: text only, other metadata already dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    text: String,
}

impl RawRecord {
    pub fn new(text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyRecord);
        }
        Ok(RawRecord { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Normalized tokens with an aligned 0/1 location mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnnotatedTweet {
    tokens: Vec<String>,
    mask: Vec<u8>,
}

impl AnnotatedTweet {
    /// Validates alignment, binary labels, and that every token is already in
    /// normalized form (a fixed point of [`preprocess`]).
    pub fn new(tokens: Vec<String>, mask: Vec<u8>) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptyTweet);
        }
        if tokens.len() != mask.len() {
            return Err(CorpusError::Misaligned {
                tokens: tokens.len(),
                mask: mask.len(),
            });
        }
        if let Some((position, &value)) = mask.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(CorpusError::InvalidMask { position, value });
        }
        for token in &tokens {
            if !preprocess::is_normalized_token(token) {
                return Err(CorpusError::InvalidToken { token: token.clone() });
            }
        }
        Ok(AnnotatedTweet { tokens, mask })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn location_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 1).count()
    }
}

/// A deduplicated, ordered collection of annotated tweets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    examples: Vec<AnnotatedTweet>,
    provenance: String,
}

impl Corpus {
    /// Builds a corpus, dropping any example whose token sequence was already
    /// seen (first occurrence wins).
    pub fn new(examples: impl IntoIterator<Item = AnnotatedTweet>, provenance: impl Into<String>) -> Self {
        let mut seen = HashSet::new();
        let examples = examples
            .into_iter()
            .filter(|ex| seen.insert(ex.tokens.clone()))
            .collect();
        Corpus {
            examples,
            provenance: provenance.into(),
        }
    }

    pub fn examples(&self) -> &[AnnotatedTweet] {
        &self.examples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Sub-corpus of the given example indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Histogram of location-word counts per tweet; the last bucket collects
    /// everything at or above `buckets - 1`.
    pub fn location_histogram(&self, buckets: usize) -> Vec<usize> {
        let mut hist = vec![0; buckets.max(1)];
        let last = hist.len() - 1;
        for ex in &self.examples {
            hist[ex.location_count().min(last)] += 1;
        }
        hist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(tokens: &[&str], mask: &[u8]) -> AnnotatedTweet {
        AnnotatedTweet::new(tokens.iter().map(|s| s.to_string()).collect(), mask.to_vec()).unwrap()
    }

    #[test]
    fn raw_record_rejects_blank_text() {
        assert!(matches!(RawRecord::new("   \t"), Err(CorpusError::EmptyRecord)));
        assert!(RawRecord::new("quake").is_ok());
    }

    #[test]
    fn annotated_tweet_validation() {
        let toks = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(matches!(
            AnnotatedTweet::new(toks(&["a", "b", "c"]), vec![0, 1]),
            Err(CorpusError::Misaligned { tokens: 3, mask: 2 })
        ));
        assert!(matches!(
            AnnotatedTweet::new(toks(&["a"]), vec![2]),
            Err(CorpusError::InvalidMask { position: 0, value: 2 })
        ));
        assert!(matches!(
            AnnotatedTweet::new(vec![], vec![]),
            Err(CorpusError::EmptyTweet)
        ));
        for bad in ["#mexico", "@user", "Peru", "http://x.y", "a b", "", "😱"] {
            assert!(
                matches!(
                    AnnotatedTweet::new(toks(&[bad]), vec![0]),
                    Err(CorpusError::InvalidToken { .. })
                ),
                "{bad:?} accepted"
            );
        }
        assert!(AnnotatedTweet::new(toks(&["don't", "peru"]), vec![0, 1]).is_ok());
    }

    #[test]
    fn corpus_dedups_on_tokens_keeping_first() {
        let a = tweet(&["quake", "in", "peru"], &[0, 0, 1]);
        let b = tweet(&["quake", "in", "peru"], &[0, 0, 0]);
        let c = tweet(&["hello"], &[0]);
        let corpus = Corpus::new(vec![a.clone(), b, c.clone()], "test");
        assert_eq!(corpus.examples(), &[a, c]);
    }

    #[test]
    fn histogram_buckets_tail() {
        let corpus = Corpus::new(
            vec![
                tweet(&["a"], &[0]),
                tweet(&["b", "c"], &[1, 1]),
                tweet(&["d", "e", "f"], &[1, 1, 1]),
            ],
            "t",
        );
        assert_eq!(corpus.location_histogram(3), vec![1, 0, 2]);
    }
}
