use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::embedding::{build_lookup, encode, EmbeddingError, Pretrained, Vocabulary, OOV};
use crate::exec::{derive_seed, Execution};
use crate::metrics::{aggregate, score_instance, LabelSpace, MetricsError, MetricsReport, CSV_HEADER};
use crate::nn::{predict, Model, ModelConfig, NnError};
use crate::training::{train, TrainError};

use super::kfold::{kfold_split, KFoldError};

const LOOKUP_STREAM: u64 = 0x100c;

#[derive(Debug, thiserror::Error)]
pub enum CvError {
    #[error(transparent)]
    Split(#[from] KFoldError),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<CvError>,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Builds a vocabulary from `corpus`, a lookup table (pretrained rows where
/// available, seeded random rows otherwise), and a freshly initialized model.
pub fn fresh_model(corpus: &Corpus, config: &ModelConfig, pretrained: Option<&Pretrained>) -> Result<Model, CvError> {
    let vocab = Vocabulary::build(corpus);
    let lookup = build_lookup(
        &vocab,
        pretrained,
        config.embedding_dim,
        derive_seed(config.seed, &[LOOKUP_STREAM]),
    )?;
    Ok(Model::new(config.clone(), vocab, lookup)?)
}

/// Scores the model on every example of `corpus`. Labels and predictions are
/// compared over the full padded length, so the Hamming denominator is
/// `seq_len` and padding counts as true negatives.
pub fn evaluate(model: &Model, corpus: &Corpus, exec: Execution) -> Result<MetricsReport, CvError> {
    let m = model.config().seq_len;
    let threshold = model.config().threshold;
    let scores = exec.map(corpus.len(), |i| {
        let ex = encode(&corpus.examples()[i], model.vocab(), m);
        let y_hat = predict(&model.infer(&ex.input)?, threshold);
        Ok::<_, CvError>(score_instance(&ex.labels, &y_hat)?)
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&scores)?.with_label_space(LabelSpace::Padded(m)))
}

/// Where each fold's vocabulary comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VocabProtocol {
    /// Training split only; unseen held-out words map to OOV.
    #[default]
    PerFold,
    /// The whole corpus. Held-out words get embedding rows, though those rows
    /// are only trained if the word also occurs in the training split.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvOptions {
    pub folds: usize,
    pub vocab: VocabProtocol,
    pub execution: Execution,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            vocab: VocabProtocol::PerFold,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub train_indices: Vec<usize>,
    pub held_out: Vec<usize>,
    pub vocab_size: usize,
    /// Held-out tokens (within `seq_len`) that map to OOV.
    pub held_out_oov_tokens: usize,
    pub final_loss: Option<f64>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub mean: MetricsReport,
}

impl CvReport {
    /// Per-fold rows followed by the mean row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("fold,{CSV_HEADER}\n");
        for f in &self.folds {
            let _ = writeln!(out, "{},{}", f.fold, f.metrics.csv_row());
        }
        let _ = writeln!(out, "mean,{}", self.mean.csv_row());
        out
    }
}

/// k-fold cross-validation. Every fold trains a fresh model from the same
/// config; the mean report is the unweighted mean of the fold reports.
///
/// Folds are independent and run through `options.execution`; results are
/// assembled in fold order.
pub fn cross_validate(
    corpus: &Corpus,
    config: &ModelConfig,
    pretrained: Option<&Pretrained>,
    options: &CvOptions,
) -> Result<CvReport, CvError> {
    let plan = kfold_split(corpus.len(), options.folds, config.seed)?;
    let global_vocab = (options.vocab == VocabProtocol::Global).then(|| Vocabulary::build(corpus));
    // Folds fan out; the per-example work inside each fold stays sequential
    // so the two levels do not compete for the same threads.
    let results = options.execution.map(plan.k, |fold| {
        run_fold(
            corpus,
            config,
            pretrained,
            &plan.training(fold),
            &plan.held_out(fold),
            global_vocab.as_ref(),
            fold,
        )
        .map_err(|e| CvError::Fold {
            fold,
            source: Box::new(e),
        })
    });
    let folds = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<MetricsReport> = folds.iter().map(|f| f.metrics).collect();
    let mean = MetricsReport::mean_of(&reports)?;
    Ok(CvReport { folds, mean })
}

fn run_fold(
    corpus: &Corpus,
    config: &ModelConfig,
    pretrained: Option<&Pretrained>,
    train_indices: &[usize],
    held_out: &[usize],
    global_vocab: Option<&Vocabulary>,
    fold: usize,
) -> Result<FoldReport, CvError> {
    let train_set = corpus.subset(train_indices);
    let test_set = corpus.subset(held_out);
    let mut model = match global_vocab {
        None => fresh_model(&train_set, config, pretrained)?,
        Some(vocab) => {
            let lookup = build_lookup(
                vocab,
                pretrained,
                config.embedding_dim,
                derive_seed(config.seed, &[LOOKUP_STREAM]),
            )?;
            Model::new(config.clone(), vocab.clone(), lookup)?
        }
    };
    let log = train(&mut model, &train_set, Execution::Sequential)?;
    let held_out_oov_tokens = test_set
        .examples()
        .iter()
        .flat_map(|t| t.tokens().iter().take(config.seq_len))
        .filter(|w| model.vocab().index_of(w) == OOV)
        .count();
    Ok(FoldReport {
        fold,
        train_indices: train_indices.to_vec(),
        held_out: held_out.to_vec(),
        vocab_size: model.vocab().len(),
        held_out_oov_tokens,
        final_loss: log.final_loss(),
        metrics: evaluate(&model, &test_set, Execution::Sequential)?,
    })
}
