//! Synthetic annotated corpora from a gazetteer and slot templates.
//!
//! A template is ordinary text with `{LOC}` slots. Each generated tweet picks a
//! template and fills every slot with a gazetteer entry; the mask is 1 exactly
//! on the substituted entry tokens.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{preprocess, AnnotatedTweet, Corpus, CorpusError};

pub const SLOT: &str = "{LOC}";
const MAX_ENTRY_TOKENS: usize = 4;

/// Known place names, each 1 to 4 normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gazetteer {
    entries: Vec<Vec<String>>,
}

impl Gazetteer {
    pub fn new(entries: Vec<Vec<String>>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, entry) in entries.iter().enumerate() {
            let line = i + 1;
            if entry.is_empty() || entry.len() > MAX_ENTRY_TOKENS {
                return Err(CorpusError::Gazetteer {
                    line,
                    message: format!("entry must have 1..={MAX_ENTRY_TOKENS} tokens, got {}", entry.len()),
                });
            }
            if entry.iter().any(|t| t.is_empty()) {
                return Err(CorpusError::Gazetteer {
                    line,
                    message: "empty token".into(),
                });
            }
            if !seen.insert(entry.clone()) {
                return Err(CorpusError::Gazetteer {
                    line,
                    message: format!("duplicate entry {:?}", entry.join(" ")),
                });
            }
        }
        Ok(Gazetteer { entries })
    }

    /// One entry per non-blank line; `#` at line start begins a comment.
    /// Entries are normalized the same way tweet text is.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tokens = preprocess(trimmed);
            if tokens.is_empty() {
                return Err(CorpusError::Gazetteer {
                    line: i + 1,
                    message: format!("{trimmed:?} has no tokens after normalization"),
                });
            }
            entries.push(tokens);
        }
        Gazetteer::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Gazetteer::parse(&text)
    }

    pub fn entries(&self) -> &[Vec<String>] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Word(String),
    Slot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    parts: Vec<Part>,
}

impl Template {
    pub fn parse(text: &str) -> Template {
        let mut parts = Vec::new();
        for (i, segment) in text.split(SLOT).enumerate() {
            if i > 0 {
                parts.push(Part::Slot);
            }
            parts.extend(preprocess(segment).into_iter().map(Part::Word));
        }
        Template { parts }
    }

    pub fn slot_count(&self) -> usize {
        self.parts.iter().filter(|p| **p == Part::Slot).count()
    }

    fn word_count(&self) -> usize {
        self.parts.len() - self.slot_count()
    }
}

/// One template per non-blank, non-comment line.
pub fn parse_templates(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn load_templates(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_templates(&text))
}

/// Generates `n` distinct annotated tweets, deterministically in `seed`.
///
/// Sampling is by rejection: a draw whose token sequence was already produced
/// is discarded. Fails with [`CorpusError::Exhausted`] when the templates and
/// gazetteer cannot yield `n` distinct tweets within a bounded number of draws.
pub fn synth_generate<S: AsRef<str>>(
    gazetteer: &Gazetteer,
    templates: &[S],
    n: usize,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    let parsed: Vec<Template> = templates.iter().map(|t| Template::parse(t.as_ref())).collect();
    if parsed.is_empty() {
        return Err(CorpusError::Template {
            index: 0,
            message: "no templates given".into(),
        });
    }
    for (index, t) in parsed.iter().enumerate() {
        if t.parts.is_empty() {
            return Err(CorpusError::Template {
                index,
                message: "template has no words and no slots".into(),
            });
        }
        if t.slot_count() > 0 && gazetteer.is_empty() {
            return Err(CorpusError::EmptyGazetteer);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut examples = Vec::with_capacity(n);
    let budget = n.saturating_mul(200).saturating_add(1000);
    for _ in 0..budget {
        if examples.len() == n {
            break;
        }
        let template = parsed.choose(&mut rng).expect("non-empty");
        let tweet = instantiate(template, gazetteer, &mut rng);
        if seen.insert(tweet.tokens().to_vec()) {
            examples.push(tweet);
        }
    }
    if examples.len() < n {
        return Err(CorpusError::Exhausted {
            wanted: n,
            produced: examples.len(),
        });
    }
    Ok(Corpus::new(examples, format!("synthetic seed={seed} n={n}")))
}

fn instantiate<R: Rng>(template: &Template, gazetteer: &Gazetteer, rng: &mut R) -> AnnotatedTweet {
    let mut tokens = Vec::with_capacity(template.word_count() + 2 * template.slot_count());
    let mut mask = Vec::with_capacity(tokens.capacity());
    for part in &template.parts {
        match part {
            Part::Word(w) => {
                tokens.push(w.clone());
                mask.push(0);
            }
            Part::Slot => {
                let entry = &gazetteer.entries[rng.gen_range(0..gazetteer.entries.len())];
                tokens.extend(entry.iter().cloned());
                mask.extend(std::iter::repeat_n(1, entry.len()));
            }
        }
    }
    AnnotatedTweet::new(tokens, mask).expect("template and gazetteer tokens are normalized")
}

/// Gazetteer shipped with the crate (30 entries, 1 to 3 tokens each).
pub fn builtin_gazetteer() -> Gazetteer {
    Gazetteer::parse(include_str!("../../data/gazetteer.txt")).expect("bundled gazetteer is valid")
}

/// Templates shipped with the crate (10 templates, 0 to 3 slots each).
pub fn builtin_templates() -> Vec<String> {
    parse_templates(include_str!("../../data/templates.txt"))
}
