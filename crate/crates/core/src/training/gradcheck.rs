use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EncodedExample, PAD};
use crate::exec::derive_seed;
use crate::nn::{Gradients, Model, NnError};

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub parameters: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstParameter {
    pub group: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub max_relative_error: f64,
    pub worst: Option<WorstParameter>,
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn parameters(&self) -> usize {
        self.groups.iter().map(|g| g.parameters).sum()
    }

    fn record(&mut self, group: usize, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        let g = &mut self.groups[group];
        g.parameters += 1;
        g.max_relative_error = g.max_relative_error.max(err);
        if err > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = self.max_relative_error.max(err);
            self.worst = Some(WorstParameter {
                group: g.name.clone(),
                index,
                analytic,
                numeric,
            });
        }
    }
}

/// Draws every bias uniformly from `[-scale, scale]`.
///
/// A freshly initialized model has zero biases and a zero PAD row, so padded
/// positions sit exactly on the ReLU kink, where the loss is not
/// differentiable and a central difference sees half the one-sided slope.
/// Moving the biases off zero gives the checker a generic point.
pub fn randomize_biases(model: &mut Model, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xb1a5]));
    let names = model.group_names();
    for (name, group) in names.iter().zip(model.param_groups_mut()) {
        if name.ends_with(".bias") {
            for b in group {
                *b = rng.gen_range(-scale..=scale) as f32;
            }
        }
    }
}

/// Compares the model's backpropagated gradients on one example against
/// central finite differences of the loss. Dropout is not applied.
pub fn grad_check(model: &mut Model, example: &EncodedExample, epsilon: f64) -> Result<GradCheckReport, NnError> {
    let cache = model.forward_infer(&example.input)?;
    let analytic = model.backward(&cache, &example.labels);
    grad_check_against(model, example, epsilon, &analytic)
}

/// Like [`grad_check`] but against caller-supplied gradients, which lets
/// tests confirm that the checker notices wrong ones.
///
/// Parameters are stored as `f32`, so `θ ± ε` is rounded. The actual offsets
/// `h+` and `h-` are used in the non-uniform central difference
/// `(h-²(f+ - f0) - h+²(f- - f0)) / (h+ h- (h+ + h-))`, which reduces to
/// `(f+ - f-) / 2ε` when the offsets are equal. The loss differences are
/// formed per output logit as `ln(1 + σ(z0)(e^Δz - 1)) - yΔz`, which keeps
/// the cancellation error near the precision of the logits rather than of
/// the summed loss. Every parameter is restored exactly afterwards.
pub fn grad_check_against(
    model: &mut Model,
    example: &EncodedExample,
    epsilon: f64,
    analytic: &Gradients,
) -> Result<GradCheckReport, NnError> {
    let logits = |m: &Model| -> Result<Vec<f64>, NnError> { Ok(m.forward_infer(&example.input)?.logits().to_vec()) };
    let z0 = logits(model)?;
    let probs0: Vec<f64> = z0.iter().map(|&z| crate::nn::sigmoid(z)).collect();
    // Loss change relative to the base point, accumulated per logit so that no
    // two O(1) loss values are ever subtracted.
    let loss_delta = |z: &[f64]| -> f64 {
        z.iter()
            .zip(&z0)
            .zip(&probs0)
            .zip(&example.labels)
            .map(|(((&z, &z0), &p0), &y)| {
                let d = z - z0;
                (p0 * d.exp_m1()).ln_1p() - f64::from(y) * d
            })
            .sum()
    };
    let numeric = |m: &mut Model, get: &dyn Fn(&Model) -> f32, set: &dyn Fn(&mut Model, f32)| -> Result<f64, NnError> {
        let orig = get(m);
        let plus = (f64::from(orig) + epsilon) as f32;
        let minus = (f64::from(orig) - epsilon) as f32;
        let hp = f64::from(plus) - f64::from(orig);
        let hm = f64::from(orig) - f64::from(minus);
        set(m, plus);
        let zp = logits(m);
        set(m, minus);
        let zm = logits(m);
        set(m, orig);
        let (dp, dm) = (loss_delta(&zp?), loss_delta(&zm?));
        Ok((hm * hm * dp - hp * hp * dm) / (hp * hm * (hp + hm)))
    };

    let mut names = Vec::new();
    if model.config().embeddings_trainable {
        names.push("embedding".to_string());
    }
    names.extend(model.group_names());
    let mut report = GradCheckReport {
        epsilon,
        max_relative_error: 0.0,
        worst: None,
        groups: names
            .into_iter()
            .map(|name| GroupCheck {
                name,
                parameters: 0,
                max_relative_error: 0.0,
            })
            .collect(),
    };

    let mut group = 0;
    if model.config().embeddings_trainable {
        let dim = model.embedding().dim();
        for row in 0..model.embedding().rows() {
            if row == PAD {
                continue;
            }
            for k in 0..dim {
                let a = analytic.embedding.get(&row).map_or(0.0, |g| g[k]);
                let n = numeric(model, &|m| m.embedding().row(row)[k], &|m, v| {
                    m.embedding_mut().row_mut(row)[k] = v
                })?;
                report.record(group, row * dim + k, a, n);
            }
        }
        group += 1;
    }
    let lens: Vec<usize> = model.param_groups().iter().map(|g| g.len()).collect();
    for (g, len) in lens.into_iter().enumerate() {
        for i in 0..len {
            let n = numeric(model, &|m| m.param_groups()[g][i], &|m, v| {
                m.param_groups_mut()[g][i] = v
            })?;
            report.record(group, i, analytic.groups[g][i], n);
        }
        group += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_lookup, encode, Vocabulary};
    use crate::nn::ModelConfig;
    use crate::{AnnotatedTweet, Corpus};

    fn tiny() -> (Model, EncodedExample) {
        let tweet = AnnotatedTweet::new(
            ["quake", "hits", "kathmandu", "nepal", "today"]
                .map(String::from)
                .to_vec(),
            vec![0, 0, 1, 1, 0],
        )
        .unwrap();
        let corpus = Corpus::new([tweet.clone()], "test");
        let config = ModelConfig {
            seq_len: 8,
            embedding_dim: 4,
            filter_widths: vec![2, 3],
            feature_maps: 4,
            pool_window: 5,
            conv_depth: 2,
            dense_depth: 2,
            dense_hidden: 12,
            dropout: 0.0,
            seed: 11,
            ..ModelConfig::default()
        };
        let vocab = Vocabulary::build(&corpus);
        let lookup = build_lookup(&vocab, None, 4, 11).unwrap();
        let example = encode(&tweet, &vocab, 8);
        let mut model = Model::new(config, vocab, lookup).unwrap();
        randomize_biases(&mut model, 11, 0.1);
        (model, example)
    }

    #[test]
    fn zero_biases_put_padding_on_the_relu_kink() {
        let (model, example) = tiny();
        let mut fresh = Model::new(model.config().clone(), model.vocab().clone(), model.embedding().clone()).unwrap();
        let report = grad_check(&mut fresh, &example, 1e-5).unwrap();
        let worst = report.worst.unwrap();
        assert!(worst.group.ends_with(".bias"), "{worst:?}");
    }

    #[test]
    fn relative_error_guards_the_denominator() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let (mut model, example) = tiny();
        let before = model.clone();
        let report = grad_check(&mut model, &example, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
        assert_eq!(model, before, "parameters must be restored");
        assert_eq!(report.groups[0].name, "embedding");
        assert!(report.parameters() > 100);
    }

    #[test]
    fn doubled_gradients_are_caught() {
        let (mut model, example) = tiny();
        let cache = model.forward_infer(&example.input).unwrap();
        let mut wrong = model.backward(&cache, &example.labels);
        wrong.scale(2.0);
        let report = grad_check_against(&mut model, &example, 1e-5, &wrong).unwrap();
        assert!(
            (report.max_relative_error - 0.5).abs() < 1e-3,
            "{}",
            report.max_relative_error
        );
    }

    #[test]
    fn frozen_embeddings_are_not_checked() {
        let (model, example) = tiny();
        let mut config = model.config().clone();
        config.embeddings_trainable = false;
        let mut frozen = Model::new(config, model.vocab().clone(), model.embedding().clone()).unwrap();
        randomize_biases(&mut frozen, 5, 0.1);
        let report = grad_check(&mut frozen, &example, 1e-5).unwrap();
        assert!(report.groups.iter().all(|g| g.name != "embedding"));
        assert!(report.max_relative_error < 1e-4);
    }
}
