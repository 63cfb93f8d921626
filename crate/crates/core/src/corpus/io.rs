//! Corpus JSONL: one record per line, either
//! `{"tokens": [..], "mask": [0|1, ..]}` or
//! `{"text": "..", "spans": [[start_char, end_char], ..]}`.
//!
//! Span offsets are Unicode scalar indices into `text`, end exclusive. A token
//! is labeled 1 iff its surviving characters lie entirely inside some span.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{is_retweet_duplicate, preprocess_with_offsets, AnnotatedTweet, Corpus, CorpusError, RawRecord};

#[derive(Serialize)]
struct LabeledRecord<'a> {
    tokens: &'a [String],
    mask: &'a [u8],
}

/// Reads a corpus file. Raw-text records are normalized; retweets and records
/// that normalize to nothing are dropped. Duplicates keep their first occurrence.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text, path.display().to_string())
}

pub fn parse_corpus(text: &str, provenance: impl Into<String>) -> Result<Corpus, CorpusError> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(ex) = parse_record(line, line_no)? {
            examples.push(ex);
        }
    }
    Ok(Corpus::new(examples, provenance))
}

fn parse_error(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<Option<AnnotatedTweet>, CorpusError> {
    let value: Value = serde_json::from_str(line).map_err(|e| parse_error(line_no, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_error(line_no, "record is not a JSON object"))?;

    if let Some(tokens) = obj.get("tokens") {
        let tokens: Vec<String> =
            serde_json::from_value(tokens.clone()).map_err(|e| parse_error(line_no, format!("tokens: {e}")))?;
        let mask: Vec<u8> = obj
            .get("mask")
            .ok_or_else(|| parse_error(line_no, "record has tokens but no mask"))
            .and_then(|m| serde_json::from_value(m.clone()).map_err(|e| parse_error(line_no, format!("mask: {e}"))))?;
        if tokens.len() != mask.len() {
            return Err(CorpusError::LengthMismatch {
                line: line_no,
                tokens: tokens.len(),
                mask: mask.len(),
            });
        }
        return AnnotatedTweet::new(tokens, mask)
            .map(Some)
            .map_err(|e| parse_error(line_no, e.to_string()));
    }

    if let Some(text) = obj.get("text") {
        let text = text
            .as_str()
            .ok_or_else(|| parse_error(line_no, "text must be a string"))?;
        let spans: Vec<[usize; 2]> = match obj.get("spans") {
            Some(s) => serde_json::from_value(s.clone()).map_err(|e| parse_error(line_no, format!("spans: {e}")))?,
            None => Vec::new(),
        };
        if let Some(bad) = spans.iter().find(|[s, e]| s >= e) {
            return Err(parse_error(line_no, format!("empty or inverted span {bad:?}")));
        }
        let raw = RawRecord::new(text).map_err(|e| parse_error(line_no, e.to_string()))?;
        return Ok(annotate_raw(&raw, &spans));
    }

    Err(parse_error(line_no, "record needs either tokens+mask or text+spans"))
}

/// Normalizes a raw record and projects character spans onto its tokens.
/// `None` for retweets and for text with no surviving tokens.
fn annotate_raw(raw: &RawRecord, spans: &[[usize; 2]]) -> Option<AnnotatedTweet> {
    if is_retweet_duplicate(raw.text()) {
        return None;
    }
    let tokens = preprocess_with_offsets(raw.text());
    if tokens.is_empty() {
        return None;
    }
    let mask = tokens
        .iter()
        .map(|t| spans.iter().any(|&[s, e]| s <= t.start && t.end <= e) as u8)
        .collect();
    let words = tokens.into_iter().map(|t| t.text).collect();
    Some(AnnotatedTweet::new(words, mask).expect("normalized tokens are valid"))
}

pub fn write_corpus<W: Write>(mut out: W, corpus: &Corpus) -> std::io::Result<()> {
    for ex in corpus.examples() {
        let record = LabeledRecord {
            tokens: ex.tokens(),
            mask: ex.mask(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the corpus in token+mask form.
pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    write_corpus(&mut buf, corpus).map_err(io_err)?;
    fs::write(path, buf).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_records_collapse() {
        let line = r#"{"tokens":["quake","in","peru"],"mask":[0,0,1]}"#;
        let corpus = parse_corpus(&format!("{line}\n{line}\n"), "t").unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.examples()[0].mask(), &[0, 0, 1]);
        assert_eq!(corpus.examples()[0].tokens(), &["quake", "in", "peru"]);
    }

    #[test]
    fn mismatched_mask_names_the_line() {
        let text = "{\"tokens\":[\"a\"],\"mask\":[0]}\n{\"tokens\":[\"quake\",\"in\",\"peru\"],\"mask\":[0,1]}\n";
        match parse_corpus(text, "t") {
            Err(CorpusError::LengthMismatch { line, tokens, mask }) => {
                assert_eq!((line, tokens, mask), (2, 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_the_line() {
        let text = "{\"tokens\":[\"a\"],\"mask\":[0]}\n\n{not json\n";
        assert!(matches!(
            parse_corpus(text, "t"),
            Err(CorpusError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_corpus("[1,2]", "t"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_corpus("{\"mask\":[0]}", "t"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_corpus("{\"tokens\":[\"a\"],\"mask\":[3]}", "t"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn raw_text_with_spans_is_projected_to_tokens() {
        // "Quake hits #New York, NY!" ; span covers "New York"
        let text = r#"{"text":"Quake hits #New York, NY!","spans":[[12,20]]}"#;
        let corpus = parse_corpus(text, "t").unwrap();
        let ex = &corpus.examples()[0];
        assert_eq!(ex.tokens(), &["quake", "hits", "new", "york", "ny"]);
        assert_eq!(ex.mask(), &[0, 0, 1, 1, 0]);
    }

    #[test]
    fn partial_overlap_does_not_label() {
        let text = r#"{"text":"felt in kathmandu","spans":[[8,12]]}"#;
        let corpus = parse_corpus(text, "t").unwrap();
        assert_eq!(corpus.examples()[0].mask(), &[0, 0, 0]);
    }

    #[test]
    fn retweets_and_empty_texts_are_dropped() {
        let text =
            "{\"text\":\"RT @a: quake in peru\",\"spans\":[]}\n{\"text\":\"@a http://x\"}\n{\"text\":\"quake\"}\n";
        let corpus = parse_corpus(text, "t").unwrap();
        assert_eq!(corpus.len(), 1);
        assert!(matches!(
            parse_corpus("{\"text\":\"  \"}", "t"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_corpus("{\"text\":\"a b\",\"spans\":[[3,1]]}", "t"),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = parse_corpus(
            "{\"tokens\":[\"quake\",\"in\",\"peru\"],\"mask\":[0,0,1]}\n{\"tokens\":[\"don't\"],\"mask\":[0]}\n",
            path.display().to_string(),
        )
        .unwrap();
        save_corpus(&path, &corpus).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), corpus);
        assert!(matches!(
            load_corpus(&dir.path().join("missing.jsonl")),
            Err(CorpusError::Io { .. })
        ));
    }
}
