/// Every hyperparameter of the tagger. Defaults:
/// 60 tokens, 100-dim embeddings, widths {2,3,4} with 128 maps each, pooling
/// window 5, two 60-unit dense layers, dropout 0.2, Adam at 1e-3, batches of
/// 50 for 100 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Padded sequence length m; also the number of output units.
    pub seq_len: usize,
    /// Embedding dimension K.
    pub embedding_dim: usize,
    /// Convolution widths h, strictly ascending. One branch per width.
    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub pool_window: usize,
    /// Stacked convolution layers per branch.
    pub conv_depth: usize,
    /// Hidden dense layers, not counting the m-way output layer.
    pub dense_depth: usize,
    pub dense_hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub threshold: f64,
    pub embeddings_trainable: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            seq_len: 60,
            embedding_dim: 100,
            filter_widths: vec![2, 3, 4],
            feature_maps: 128,
            pool_window: 5,
            conv_depth: 1,
            dense_depth: 2,
            dense_hidden: 60,
            dropout: 0.2,
            learning_rate: 0.001,
            batch_size: 50,
            epochs: 100,
            threshold: 0.5,
            embeddings_trainable: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("filter_widths must be non-empty and strictly ascending, got {0:?}")]
    Widths(Vec<usize>),
    #[error("width {width} with conv_depth {depth} leaves no output positions for seq_len {seq_len}")]
    WidthTooLarge { width: usize, depth: usize, seq_len: usize },
    #[error("dropout must lie in [0, 1), got {0}")]
    Dropout(f64),
    #[error("threshold must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("learning_rate must be positive and finite, got {0}")]
    LearningRate(f64),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let counts = [
            ("seq_len", self.seq_len),
            ("embedding_dim", self.embedding_dim),
            ("feature_maps", self.feature_maps),
            ("pool_window", self.pool_window),
            ("conv_depth", self.conv_depth),
            ("dense_depth", self.dense_depth),
            ("dense_hidden", self.dense_hidden),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::NonPositive(name));
        }
        if self.filter_widths.is_empty()
            || self.filter_widths[0] == 0
            || self.filter_widths.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ConfigError::Widths(self.filter_widths.clone()));
        }
        for &width in &self.filter_widths {
            if self.conv_len(width).is_none() {
                return Err(ConfigError::WidthTooLarge {
                    width,
                    depth: self.conv_depth,
                    seq_len: self.seq_len,
                });
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Dropout(self.dropout));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ConfigError::Threshold(self.threshold));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::LearningRate(self.learning_rate));
        }
        Ok(())
    }

    /// Time steps left after `conv_depth` valid convolutions of `width`.
    pub fn conv_len(&self, width: usize) -> Option<usize> {
        let shrink = self.conv_depth.checked_mul(width.checked_sub(1)?)?;
        self.seq_len.checked_sub(shrink).filter(|&l| l >= 1)
    }

    /// Pooled length of one branch: ceil(conv_len / pool_window).
    pub fn pooled_len(&self, width: usize) -> Option<usize> {
        self.conv_len(width).map(|l| l.div_ceil(self.pool_window))
    }

    /// Length of the concatenated, flattened feature vector.
    pub fn flatten_len(&self) -> usize {
        self.filter_widths
            .iter()
            .map(|&w| self.feature_maps * self.pooled_len(w).unwrap_or(0))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_flatten_to_4608() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.flatten_len(), 128 * 36);
        assert_eq!(c.flatten_len(), 4608);
    }

    #[test]
    fn validation_errors() {
        let base = ModelConfig::default();
        type Case = (ModelConfig, fn(&ConfigError) -> bool);
        let cases: Vec<Case> = vec![
            (
                ModelConfig {
                    feature_maps: 0,
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::NonPositive("feature_maps")),
            ),
            (
                ModelConfig {
                    filter_widths: vec![],
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::Widths(_)),
            ),
            (
                ModelConfig {
                    filter_widths: vec![3, 2],
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::Widths(_)),
            ),
            (
                ModelConfig {
                    filter_widths: vec![0, 2],
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::Widths(_)),
            ),
            (
                ModelConfig {
                    filter_widths: vec![61],
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::WidthTooLarge { .. }),
            ),
            (
                ModelConfig {
                    seq_len: 8,
                    filter_widths: vec![4],
                    conv_depth: 3,
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::WidthTooLarge { .. }),
            ),
            (
                ModelConfig {
                    dropout: 1.0,
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::Dropout(_)),
            ),
            (
                ModelConfig {
                    threshold: 0.0,
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::Threshold(_)),
            ),
            (
                ModelConfig {
                    learning_rate: f64::NAN,
                    ..base.clone()
                },
                |e| matches!(e, ConfigError::LearningRate(_)),
            ),
        ];
        for (cfg, check) in cases {
            let err = cfg.validate().unwrap_err();
            assert!(check(&err), "{err:?}");
        }
        ModelConfig {
            seq_len: 8,
            filter_widths: vec![4],
            conv_depth: 2,
            ..base
        }
        .validate()
        .unwrap();
    }

    #[test]
    fn conv_len_accounts_for_depth() {
        let c = ModelConfig {
            seq_len: 8,
            conv_depth: 2,
            ..ModelConfig::default()
        };
        assert_eq!(c.conv_len(2), Some(6));
        assert_eq!(c.conv_len(3), Some(4));
        assert_eq!(c.pooled_len(2), Some(2));
        assert_eq!(c.conv_len(5), None);
    }
}
