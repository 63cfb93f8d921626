//! Vocabulary, pretrained vectors, the lookup table, and fixed-length encoding.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotatedTweet, Corpus};
use crate::nn::Tensor;

/// Index of the padding token. Its embedding row is always zero.
pub const PAD: usize = 0;
/// Index shared by every token not in the vocabulary.
pub const OOV: usize = 1;

pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

/// Half-width of the uniform range for rows not found in the pretrained table.
pub const INIT_RANGE: f32 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} values, found {found}")]
    Arity { line: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("pretrained vectors have dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for a table of {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("vocabulary word list is invalid: {0}")]
    InvalidVocabulary(String),
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
}

/// Token to index map. Index 0 is PAD, 1 is OOV, the rest are corpus words in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Every distinct token of the corpus, however rare.
    pub fn build(corpus: &Corpus) -> Self {
        let distinct: BTreeSet<&String> = corpus.examples().iter().flat_map(|ex| ex.tokens()).collect();
        let words = [PAD_TOKEN.to_string(), OOV_TOKEN.to_string()]
            .into_iter()
            .chain(distinct.into_iter().cloned())
            .collect();
        Self::from_words(words).expect("corpus tokens never collide with reserved names")
    }

    /// Rebuilds a vocabulary from its full index-ordered word list (reserved
    /// entries included), as stored in model files.
    pub fn from_words(words: Vec<String>) -> Result<Self, EmbeddingError> {
        if words.len() < 2 || words[PAD] != PAD_TOKEN || words[OOV] != OOV_TOKEN {
            return Err(EmbeddingError::InvalidVocabulary(
                "first two entries must be the PAD and OOV markers".into(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(EmbeddingError::InvalidVocabulary(format!("duplicate word {w:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Index of `token`, or [`OOV`] when unseen. Reserved markers are never
    /// returned for real text.
    pub fn index_of(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) if i > OOV => i,
            _ => OOV,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index_of(token) != OOV
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        self.words.get(index).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Word vectors read from a plain-text embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl Pretrained {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads `token v1 .. vK` lines. Blank lines are skipped; a later duplicate
/// token overrides an earlier one.
pub fn load_pretrained(path: &Path, dim: usize) -> Result<Pretrained, EmbeddingError> {
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pretrained(&text, dim)
}

pub fn parse_pretrained(text: &str, dim: usize) -> Result<Pretrained, EmbeddingError> {
    let mut vectors = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values = fields
            .map(|f| match f.parse::<f32>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(EmbeddingError::Parse {
                    line: line_no,
                    message: format!("{f:?} is not a finite number"),
                }),
            })
            .collect::<Result<Vec<f32>, _>>()?;
        if values.len() != dim {
            return Err(EmbeddingError::Arity {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        vectors.insert(word.to_string(), values);
    }
    Ok(Pretrained { dim, vectors })
}

/// The |W| x K lookup table, row-major, one row per vocabulary index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub(crate) fn from_raw(dim: usize, data: Vec<f32>) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        EmbeddingMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn row_mut(&mut self, index: usize) -> &mut [f32] {
        &mut self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Assembles the lookup table: pretrained rows are copied verbatim, every
/// other row (OOV included) is drawn uniformly from ±[`INIT_RANGE`], and the
/// PAD row is zero.
pub fn build_lookup(
    vocab: &Vocabulary,
    pretrained: Option<&Pretrained>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    if let Some(p) = pretrained {
        if p.dim() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = EmbeddingMatrix::zeros(vocab.len(), dim);
    for (index, word) in vocab.words().iter().enumerate().skip(OOV) {
        let row = matrix.row_mut(index);
        match pretrained.and_then(|p| p.get(word)).filter(|_| index != OOV) {
            Some(v) => row.copy_from_slice(v),
            None => row
                .iter_mut()
                .for_each(|x| *x = rng.gen_range(-INIT_RANGE..=INIT_RANGE)),
        }
    }
    Ok(matrix)
}

/// Fraction of non-reserved vocabulary words found in the pretrained table.
pub fn lookup_coverage(vocab: &Vocabulary, pretrained: &Pretrained) -> f64 {
    let words = &vocab.words()[OOV + 1..];
    if words.is_empty() {
        return 0.0;
    }
    let hits = words.iter().filter(|w| pretrained.get(w).is_some()).count();
    hits as f64 / words.len() as f64
}

/// Exactly `m` vocabulary indices, post-padded with [`PAD`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedTweet {
    indices: Vec<usize>,
    true_length: usize,
}

impl EncodedTweet {
    /// Raw constructor for callers that already hold valid indices.
    pub fn from_indices(mut indices: Vec<usize>, m: usize) -> Result<Self, EmbeddingError> {
        if indices.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        indices.truncate(m);
        let true_length = indices.len();
        indices.resize(m, PAD);
        Ok(EncodedTweet { indices, true_length })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn true_length(&self) -> usize {
        self.true_length
    }

    pub fn seq_len(&self) -> usize {
        self.indices.len()
    }
}

/// An encoded tweet with its labels truncated and zero-padded to the same `m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedExample {
    pub input: EncodedTweet,
    pub labels: Vec<u8>,
}

pub fn encode_tokens<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    m: usize,
) -> Result<EncodedTweet, EmbeddingError> {
    let indices = tokens.iter().take(m).map(|t| vocab.index_of(t.as_ref())).collect();
    EncodedTweet::from_indices(indices, m)
}

pub fn encode(tweet: &AnnotatedTweet, vocab: &Vocabulary, m: usize) -> EncodedExample {
    let input = encode_tokens(tweet.tokens(), vocab, m).expect("annotated tweets are non-empty");
    let mut labels: Vec<u8> = tweet.mask().iter().take(m).copied().collect();
    labels.resize(m, 0);
    EncodedExample { input, labels }
}

/// The m x K tweet matrix: row i is the lookup row of token i.
pub fn embed(enc: &EncodedTweet, table: &EmbeddingMatrix) -> Result<Tensor, EmbeddingError> {
    let dim = table.dim();
    let mut out = Tensor::zeros(&[enc.seq_len(), dim]);
    for (pos, &index) in enc.indices().iter().enumerate() {
        if index >= table.rows() {
            return Err(EmbeddingError::IndexOutOfRange {
                index,
                rows: table.rows(),
            });
        }
        let dst = &mut out.values_mut()[pos * dim..(pos + 1) * dim];
        for (d, &s) in dst.iter_mut().zip(table.row(index)) {
            *d = f64::from(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotatedTweet;

    fn corpus(rows: &[&[&str]]) -> Corpus {
        Corpus::new(
            rows.iter()
                .map(|r| AnnotatedTweet::new(r.iter().map(|s| s.to_string()).collect(), vec![0; r.len()]).unwrap()),
            "t",
        )
    }

    #[test]
    fn vocab_is_union_plus_reserved() {
        let c = corpus(&[&["a", "b"], &["b", "c"]]);
        let v = Vocabulary::build(&c);
        assert_eq!(v.len(), 5);
        assert_eq!(v.words(), &["<pad>", "<oov>", "a", "b", "c"]);
        assert_eq!(v, Vocabulary::build(&c));
        assert_eq!(v.index_of("zzz"), OOV);
        assert_eq!(v.index_of("<pad>"), OOV);
    }

    #[test]
    fn singleton_tokens_are_kept() {
        let c = corpus(&[&["quake", "in", "peru"], &["quake", "in", "iran"]]);
        assert!(Vocabulary::build(&c).contains("iran"));
    }

    #[test]
    fn from_words_rejects_bad_lists() {
        assert!(Vocabulary::from_words(vec!["a".into(), "b".into()]).is_err());
        assert!(Vocabulary::from_words(vec![PAD_TOKEN.into(), OOV_TOKEN.into(), "a".into(), "a".into()]).is_err());
    }

    #[test]
    fn pretrained_parsing() {
        let p = parse_pretrained("peru 0.1 0.2\n\nnepal -1 2.5e-1\n", 2).unwrap();
        assert_eq!(p.get("peru"), Some(&[0.1f32, 0.2][..]));
        assert_eq!(p.len(), 2);
        assert!(matches!(
            parse_pretrained("ok 1 2\nperu 0.1", 2),
            Err(EmbeddingError::Arity {
                line: 2,
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            parse_pretrained("peru 0.1 x", 2),
            Err(EmbeddingError::Parse { line: 1, .. })
        ));
        assert!(parse_pretrained("", 2).unwrap().is_empty());
        assert!(matches!(
            load_pretrained(Path::new("/nonexistent/vectors.txt"), 2),
            Err(EmbeddingError::Io { .. })
        ));
    }

    #[test]
    fn lookup_copies_pretrained_and_zeroes_pad() {
        let c = corpus(&[&["peru", "quake"]]);
        let v = Vocabulary::build(&c);
        let p = parse_pretrained("peru 0.5 -0.25 3 4\n", 4).unwrap();
        let m = build_lookup(&v, Some(&p), 4, 9).unwrap();
        assert_eq!(m.row(v.index_of("peru")), &[0.5, -0.25, 3.0, 4.0]);
        assert!(m.row(PAD).iter().all(|&x| x == 0.0));
        for idx in [OOV, v.index_of("quake")] {
            assert!(m.row(idx).iter().all(|x| x.abs() <= INIT_RANGE));
            assert!(m.row(idx).iter().any(|&x| x != 0.0));
        }
        assert_eq!(m, build_lookup(&v, Some(&p), 4, 9).unwrap());
        assert_ne!(m, build_lookup(&v, Some(&p), 4, 10).unwrap());
        assert!((lookup_coverage(&v, &p) - 0.5).abs() < 1e-12);
        assert!(matches!(
            build_lookup(&v, Some(&p), 3, 9),
            Err(EmbeddingError::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn encode_pads_and_truncates() {
        let c = corpus(&[&["quake", "in", "peru"]]);
        let v = Vocabulary::build(&c);
        let t = AnnotatedTweet::new(vec!["quake".into(), "in".into(), "peru".into()], vec![0, 0, 1]).unwrap();
        let e = encode(&t, &v, 5);
        assert_eq!(
            e.input.indices(),
            &[v.index_of("quake"), v.index_of("in"), v.index_of("peru"), PAD, PAD]
        );
        assert_eq!(e.labels, vec![0, 0, 1, 0, 0]);
        assert_eq!(e.input.true_length(), 3);

        let unseen = AnnotatedTweet::new(vec!["quake".into(), "lima".into()], vec![0, 1]).unwrap();
        assert_eq!(encode(&unseen, &v, 3).input.indices()[1], OOV);

        let long: Vec<String> = (0..70).map(|i| format!("w{i}")).collect();
        let mut mask = vec![0u8; 70];
        mask[59] = 1;
        mask[65] = 1;
        let long = AnnotatedTweet::new(long, mask).unwrap();
        let vocab = Vocabulary::build(&Corpus::new(vec![long.clone()], "t"));
        let e = encode(&long, &vocab, 60);
        assert_eq!(e.input.seq_len(), 60);
        assert_eq!(e.input.true_length(), 60);
        assert_eq!(e.labels.len(), 60);
        assert_eq!(e.labels[59], 1);
        for i in 0..60 {
            assert_eq!(e.input.indices()[i], vocab.index_of(&format!("w{i}")));
        }
    }

    #[test]
    fn embed_matches_per_word_lookup() {
        let c = corpus(&[&["quake", "in", "peru"]]);
        let v = Vocabulary::build(&c);
        let table = build_lookup(&v, None, 4, 1).unwrap();
        let t = AnnotatedTweet::new(vec!["quake".into(), "in".into(), "peru".into()], vec![0, 0, 1]).unwrap();
        let e = encode(&t, &v, 6);
        let mat = embed(&e.input, &table).unwrap();
        assert_eq!(mat.shape(), &[6, 4]);
        for (pos, word) in ["quake", "in", "peru"].iter().enumerate() {
            let row = table.row(v.index_of(word));
            for (k, &x) in row.iter().enumerate() {
                assert_eq!(mat.get2(pos, k), f64::from(x));
            }
        }
        for pos in 3..6 {
            assert!((0..4).all(|k| mat.get2(pos, k) == 0.0));
        }
    }

    #[test]
    fn embed_edge_cases() {
        let table = EmbeddingMatrix::from_raw(2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 3.0]);
        let all_pad = EncodedTweet {
            indices: vec![PAD; 4],
            true_length: 1,
        };
        assert!(embed(&all_pad, &table).unwrap().values().iter().all(|&x| x == 0.0));
        let single = EncodedTweet::from_indices(vec![2], 3).unwrap();
        let mat = embed(&single, &table).unwrap();
        assert_eq!(mat.values(), &[2.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        let bad = EncodedTweet::from_indices(vec![7], 2).unwrap();
        assert!(matches!(
            embed(&bad, &table),
            Err(EmbeddingError::IndexOutOfRange { index: 7, rows: 3 })
        ));
        assert!(matches!(
            EncodedTweet::from_indices(vec![], 3),
            Err(EmbeddingError::EmptyInput)
        ));
    }
}
