//! Binary cross-entropy, Adam, the mini-batch loop, and the finite-difference
//! gradient checker.

mod adam;
mod gradcheck;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamState, ModelOptimizer, BETA1, BETA2, EPSILON};
pub use gradcheck::{
    grad_check, grad_check_against, randomize_biases, relative_error, GradCheckReport, GroupCheck, WorstParameter,
};

use crate::corpus::Corpus;
use crate::embedding::{encode, EncodedExample};
use crate::exec::{derive_seed, Execution};
use crate::nn::{Gradients, Model, ModelConfig, NnError};

/// Probabilities are clamped to `[LOSS_CLAMP, 1 - LOSS_CLAMP]` before the log.
pub const LOSS_CLAMP: f64 = 1e-7;

const SHUFFLE_STREAM: u64 = 0x5348;
const DROPOUT_STREAM: u64 = 0x4452;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss or gradient at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Model(#[from] NnError),
}

/// Summed binary cross-entropy over all positions.
pub fn bce_loss(y: &[u8], probs: &[f64]) -> f64 {
    assert_eq!(y.len(), probs.len(), "label and probability lengths differ");
    y.iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
            if y != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// The same loss evaluated directly on logits, without clamping:
/// `softplus(z) - y z` per position.
pub fn bce_from_logits(y: &[u8], logits: &[f64]) -> f64 {
    assert_eq!(y.len(), logits.len(), "label and logit lengths differ");
    y.iter()
        .zip(logits)
        .map(|(&y, &z)| z.max(0.0) + (-z.abs()).exp().ln_1p() - f64::from(y) * z)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub seed: u64,
    pub config: ModelConfig,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.8},{:.3}", e.epoch, e.mean_loss, e.seconds);
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

/// Encodes the corpus in canonical order (sorted by tokens, then mask), so
/// training does not depend on how the corpus happened to be stored.
pub fn canonical_examples(corpus: &Corpus, model: &Model) -> Vec<EncodedExample> {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let ex = corpus.examples();
    order.sort_by(|&a, &b| (ex[a].tokens(), ex[a].mask()).cmp(&(ex[b].tokens(), ex[b].mask())));
    let m = model.config().seq_len;
    order.iter().map(|&i| encode(&ex[i], model.vocab(), m)).collect()
}

/// Trains `model` in place for `config.epochs` epochs.
///
/// Each epoch draws a fresh permutation from `(seed, epoch)`, walks it in
/// batches of `batch_size` (the last batch may be short), and takes one Adam
/// step per batch on the batch-mean gradient. Per-example gradients may be
/// computed in parallel; they are summed in batch order, so the result is the
/// same under every [`Execution`].
pub fn train(model: &mut Model, corpus: &Corpus, exec: Execution) -> Result<TrainLog, TrainError> {
    let examples = canonical_examples(corpus, model);
    train_encoded(model, &examples, exec)
}

pub fn train_encoded(model: &mut Model, examples: &[EncodedExample], exec: Execution) -> Result<TrainLog, TrainError> {
    let config = model.config().clone();
    let mut log = TrainLog {
        seed: config.seed,
        config: config.clone(),
        epochs: Vec::with_capacity(config.epochs),
    };
    if config.epochs == 0 {
        return Ok(log);
    }
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut optimizer = ModelOptimizer::new(model);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            &[SHUFFLE_STREAM, epoch as u64],
        )));
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let (loss, grads) = match batch_gradients(model, examples, chunk, epoch, batch, exec) {
                Err(TrainError::Model(NnError::NonFinite)) => return Err(TrainError::NonFinite { epoch, batch }),
                other => other?,
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch });
            }
            loss_sum += loss * chunk.len() as f64;
            optimizer.step(model, &grads, config.learning_rate);
        }
        log.epochs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / examples.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

/// Mean loss and mean gradient of one batch, in train mode (with dropout).
pub fn batch_gradients(
    model: &Model,
    examples: &[EncodedExample],
    batch_indices: &[usize],
    epoch: usize,
    batch: usize,
    exec: Execution,
) -> Result<(f64, Gradients), TrainError> {
    let seed = model.config().seed;
    let per_example = exec.map(batch_indices.len(), |j| {
        let ex = &examples[batch_indices[j]];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &[DROPOUT_STREAM, epoch as u64, batch as u64, j as u64],
        ));
        let cache = model.forward_train(&ex.input, &mut rng)?;
        let loss = bce_loss(&ex.labels, cache.probs());
        Ok::<_, NnError>((loss, model.backward(&cache, &ex.labels)))
    });
    let mut total = Gradients::zeros(model);
    let mut loss = 0.0;
    for result in per_example {
        let (l, g) = result?;
        loss += l;
        total.accumulate(&g);
    }
    let n = batch_indices.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{builtin_gazetteer, builtin_templates, synth_generate};
    use crate::embedding::{build_lookup, Vocabulary};

    #[test]
    fn bce_examples() {
        assert!(bce_loss(&[1, 0], &[1.0 - 1e-7, 1e-7]) < 3e-7);
        assert!((bce_loss(&[1], &[0.5]) - std::f64::consts::LN_2).abs() < 1e-15);
        let expected = -(0.9f64.ln() + 0.8f64.ln() + 0.8f64.ln());
        assert!((bce_loss(&[1, 0, 1], &[0.9, 0.2, 0.8]) - expected).abs() < 1e-12);
        assert!((expected - 0.551_64).abs() < 1e-5);
    }

    #[test]
    fn bce_is_finite_at_the_extremes() {
        let l = bce_loss(&[1, 0], &[0.0, 1.0]);
        assert!(l.is_finite() && l > 30.0);
        assert!(bce_loss(&[0, 1], &[0.0, 1.0]) >= 0.0);
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let z = [-3.0, 0.2, 1.7, 5.0];
        let y = [0, 1, 1, 0];
        let p: Vec<f64> = z.iter().map(|&z| crate::nn::sigmoid(z)).collect();
        assert!((bce_from_logits(&y, &z) - bce_loss(&y, &p)).abs() < 1e-12);
    }

    fn small_setup(n: usize, seed: u64) -> (Model, Corpus) {
        let corpus = synth_generate(&builtin_gazetteer(), &builtin_templates(), n, seed).unwrap();
        let config = ModelConfig {
            seq_len: 16,
            embedding_dim: 8,
            filter_widths: vec![2, 3],
            feature_maps: 4,
            pool_window: 2,
            dense_hidden: 16,
            batch_size: 8,
            epochs: 3,
            learning_rate: 0.01,
            seed,
            ..ModelConfig::default()
        };
        let vocab = Vocabulary::build(&corpus);
        let lookup = build_lookup(&vocab, None, config.embedding_dim, seed).unwrap();
        (Model::new(config, vocab, lookup).unwrap(), corpus)
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (mut model, corpus) = small_setup(20, 1);
        let mut config = model.config().clone();
        config.epochs = 0;
        let mut model0 = Model::new(config, model.vocab().clone(), model.embedding().clone()).unwrap();
        let before = model0.clone();
        let log = train(&mut model0, &corpus, Execution::Sequential).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(model0, before);
        // and a real run changes something
        train(&mut model, &corpus, Execution::Sequential).unwrap();
        assert_ne!(model.param_groups(), before.param_groups());
    }

    #[test]
    fn training_is_deterministic_and_order_invariant() {
        let (model, corpus) = small_setup(40, 3);
        let mut a = model.clone();
        let mut b = model.clone();
        let mut c = model.clone();
        let log_a = train(&mut a, &corpus, Execution::Sequential).unwrap();
        let log_b = train(&mut b, &corpus, Execution::Parallel).unwrap();
        let reversed = Corpus::new(corpus.examples().iter().rev().cloned(), "reversed");
        train(&mut c, &reversed, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let losses = |l: &TrainLog| l.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>();
        assert_eq!(losses(&log_a), losses(&log_b));
    }

    #[test]
    fn loss_decreases() {
        let (mut model, corpus) = small_setup(60, 5);
        let mut config = model.config().clone();
        config.epochs = 15;
        model = Model::new(config, model.vocab().clone(), model.embedding().clone()).unwrap();
        let log = train(&mut model, &corpus, Execution::Parallel).unwrap();
        assert_eq!(log.epochs.len(), 15);
        assert!(log.final_loss().unwrap() < log.epochs[0].mean_loss);
        assert!(log.to_csv().starts_with("epoch,mean_loss,seconds\n0,"));
    }

    #[test]
    fn pad_row_stays_zero_through_training() {
        let (mut model, corpus) = small_setup(30, 9);
        train(&mut model, &corpus, Execution::Sequential).unwrap();
        assert!(model.embedding().row(crate::embedding::PAD).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_loss_names_the_batch() {
        let (mut model, corpus) = small_setup(20, 2);
        for g in model.param_groups_mut() {
            g.iter_mut().for_each(|v| *v = f32::NAN);
        }
        match train(&mut model, &corpus, Execution::Sequential) {
            Err(TrainError::NonFinite { epoch: 0, batch: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
