use std::sync::OnceLock;

use regex::Regex;

/// A normalized token with the character range (in the raw text) spanned by
/// its surviving characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Char index of the first surviving character.
    pub start: usize,
    /// Char index one past the last surviving character.
    pub end: usize,
}

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?i)(?:[a-z][a-z0-9+.\-]*://|\bwww\.)\S*").expect("static regex"))
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_kept(c: char) -> bool {
    (c as u32) <= 0xFFFF && c.is_alphanumeric()
}

/// Normalizes tweet text into lowercase tokens.
///
/// URLs, @-mentions, emoji, and punctuation are deleted; hashtags keep their
/// word; apostrophes survive only between two alphanumerics. Stopwords stay.
/// An empty result means nothing survived and the record should be dropped.
pub fn preprocess(text: &str) -> Vec<String> {
    preprocess_with_offsets(text).into_iter().map(|t| t.text).collect()
}

/// [`preprocess`], keeping the raw-text character range of each token.
pub fn preprocess_with_offsets(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut in_url = vec![false; chars.len()];
    for m in url_pattern().find_iter(text) {
        let from = chars.partition_point(|&(b, _)| b < m.start());
        let to = chars.partition_point(|&(b, _)| b < m.end());
        in_url[from..to].iter_mut().for_each(|flag| *flag = true);
    }

    let mut tokens = Vec::new();
    let mut piece: Vec<(usize, char)> = Vec::new();
    for (idx, &(_, c)) in chars.iter().enumerate() {
        if in_url[idx] || c.is_whitespace() {
            if let Some(tok) = normalize_piece(&piece) {
                tokens.push(tok);
            }
            piece.clear();
        } else {
            piece.push((idx, c));
        }
    }
    if let Some(tok) = normalize_piece(&piece) {
        tokens.push(tok);
    }
    tokens
}

/// Normalizes one whitespace-delimited piece of raw text.
fn normalize_piece(piece: &[(usize, char)]) -> Option<Token> {
    let first = piece.first()?.1;
    if first == '@' || first == '\u{FF20}' {
        return None;
    }
    let body = piece.iter().skip_while(|&&(_, c)| c == '#' || c == '\u{FF03}');

    let mut kept: Vec<(usize, char)> = Vec::new();
    for &(idx, c) in body {
        if is_apostrophe(c) {
            kept.push((idx, '\''));
            continue;
        }
        for lower in c.to_lowercase() {
            if is_kept(lower) {
                kept.push((idx, lower));
            }
        }
    }

    let survivors: Vec<(usize, char)> = kept
        .iter()
        .enumerate()
        .filter(|&(i, &(_, c))| {
            c != '\'' || (i > 0 && i + 1 < kept.len() && kept[i - 1].1 != '\'' && kept[i + 1].1 != '\'')
        })
        .map(|(_, &pair)| pair)
        .collect();

    let (start, _) = *survivors.first()?;
    let (last, _) = *survivors.last()?;
    Some(Token {
        text: survivors.iter().map(|&(_, c)| c).collect(),
        start,
        end: last + 1,
    })
}

/// True when `token` passes through normalization unchanged as a single token.
pub(crate) fn is_normalized_token(token: &str) -> bool {
    let out = preprocess(token);
    out.len() == 1 && out[0] == token
}

/// True iff the text opens with a retweet marker ("RT", any case, optionally
/// followed by a colon).
pub fn is_retweet_duplicate(text: &str) -> bool {
    text.split_whitespace()
        .next()
        .map(|first| {
            let first = first.strip_suffix(':').unwrap_or(first);
            first.eq_ignore_ascii_case("rt")
        })
        .unwrap_or(false)
}
