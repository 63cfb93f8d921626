use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{maxpool, maxpool_backward, Activation, ConvBranch, DenseLayer, Pooled};
use super::tensor::{sigmoid, Tensor};
use super::{ModelConfig, NnError};
use crate::embedding::{embed, encode_tokens, EmbeddingMatrix, EncodedTweet, Vocabulary, PAD};
use crate::exec::derive_seed;

const INIT_STREAM: u64 = 0x1417;

/// Probabilities are kept strictly inside (0, 1) even for saturated logits.
const PROB_FLOOR: f64 = f64::MIN_POSITIVE;
const PROB_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// The full tagger: embedding table, one convolution branch per width (in
/// ascending width order), hidden dense stack, and the m-way sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocabulary,
    embedding: EmbeddingMatrix,
    branches: Vec<ConvBranch>,
    dense: Vec<DenseLayer>,
    output: DenseLayer,
}

#[derive(Debug, Clone)]
struct BranchCache {
    /// Post-ReLU output of every layer in the stack.
    outputs: Vec<Tensor>,
    pooled: Pooled,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    /// Per-unit multiplier: 0 for dropped units, 1/(1-p) for kept ones.
    dropout: Option<Vec<f64>>,
}

/// Activations recorded by a forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    indices: Vec<usize>,
    embedded: Tensor,
    branches: Vec<BranchCache>,
    flat: Vec<f64>,
    dense: Vec<DenseCache>,
    output_input: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl ForwardCache {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    /// Dropout multipliers of each hidden dense layer (train mode only).
    pub fn dropout_masks(&self) -> Vec<Option<&[f64]>> {
        self.dense.iter().map(|d| d.dropout.as_deref()).collect()
    }
}

/// Gradients with the same structure as the parameters. Embedding gradients
/// are sparse: only rows touched by the example appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<usize, Vec<f64>>,
    /// Aligned with [`Model::param_groups`].
    pub groups: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(model: &Model) -> Self {
        Gradients {
            embedding: BTreeMap::new(),
            groups: model.param_groups().iter().map(|g| vec![0.0; g.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (row, g) in &other.embedding {
            let dst = self.embedding.entry(*row).or_insert_with(|| vec![0.0; g.len()]);
            dst.iter_mut().zip(g).for_each(|(d, s)| *d += s);
        }
        for (dst, src) in self.groups.iter_mut().zip(&other.groups) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.embedding
            .values_mut()
            .chain(self.groups.iter_mut())
            .flat_map(|g| g.iter_mut())
            .for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.embedding
            .values()
            .chain(self.groups.iter())
            .flatten()
            .all(|v| v.is_finite())
    }
}

impl Model {
    /// Builds a model around an existing vocabulary and lookup table and
    /// initializes all other weights from `config.seed` (Glorot uniform
    /// weights, zero biases).
    pub fn new(config: ModelConfig, vocab: Vocabulary, mut embedding: EmbeddingMatrix) -> Result<Self, NnError> {
        config.validate()?;
        if embedding.dim() != config.embedding_dim || embedding.rows() != vocab.len() {
            return Err(NnError::Shape(format!(
                "embedding table is {}x{}, expected {}x{}",
                embedding.rows(),
                embedding.dim(),
                vocab.len(),
                config.embedding_dim
            )));
        }
        embedding.row_mut(PAD).fill(0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[INIT_STREAM]));
        let branches = config
            .filter_widths
            .iter()
            .map(|&w| {
                ConvBranch::init(
                    w,
                    config.embedding_dim,
                    config.feature_maps,
                    config.conv_depth,
                    &mut rng,
                )
            })
            .collect();
        let mut dense = Vec::with_capacity(config.dense_depth);
        let mut width = config.flatten_len();
        for _ in 0..config.dense_depth {
            dense.push(DenseLayer::init(width, config.dense_hidden, Activation::Relu, &mut rng));
            width = config.dense_hidden;
        }
        let output = DenseLayer::init(width, config.seq_len, Activation::Sigmoid, &mut rng);
        Ok(Model {
            config,
            vocab,
            embedding,
            branches,
            dense,
            output,
        })
    }

    /// Reassembles a model from stored parts, checking that every shape
    /// matches the config.
    pub(crate) fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        embedding: EmbeddingMatrix,
        groups: Vec<Vec<f32>>,
    ) -> Result<Self, NnError> {
        if embedding.rows() > PAD && embedding.row(PAD).iter().any(|&v| v != 0.0) {
            return Err(NnError::Shape("PAD row must be zero".into()));
        }
        let mut model = Model::new(config, vocab, embedding)?;
        let mut slots = model.param_groups_mut();
        if slots.len() != groups.len() {
            return Err(NnError::Shape("parameter group count mismatch".into()));
        }
        for (dst, src) in slots.iter_mut().zip(&groups) {
            if dst.len() != src.len() {
                return Err(NnError::Shape("parameter group size mismatch".into()));
            }
            dst.copy_from_slice(src);
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.embedding
    }

    pub(crate) fn embedding_mut(&mut self) -> &mut EmbeddingMatrix {
        &mut self.embedding
    }

    pub fn branches(&self) -> &[ConvBranch] {
        &self.branches
    }

    pub fn dense_stack(&self) -> &[DenseLayer] {
        &self.dense
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.output
    }

    /// Size of the concatenated pooled feature vector.
    pub fn flatten_len(&self) -> usize {
        self.dense.first().unwrap_or(&self.output).in_dim
    }

    /// Every non-embedding parameter array in storage order: branches by
    /// ascending width, layer by layer, weights then bias; then the dense
    /// stack; then the output layer.
    pub fn param_groups(&self) -> Vec<&[f32]> {
        let mut out = Vec::new();
        for layer in self.branches.iter().flat_map(|b| &b.layers) {
            out.push(layer.weights.as_slice());
            out.push(layer.bias.as_slice());
        }
        for layer in self.dense.iter().chain(std::iter::once(&self.output)) {
            out.push(layer.weights.as_slice());
            out.push(layer.bias.as_slice());
        }
        out
    }

    pub fn param_groups_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = Vec::new();
        for layer in self.branches.iter_mut().flat_map(|b| &mut b.layers) {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        for layer in self.dense.iter_mut().chain(std::iter::once(&mut self.output)) {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    /// Human-readable names for [`Model::param_groups`], in the same order.
    pub fn group_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for b in &self.branches {
            for l in 0..b.layers.len() {
                names.push(format!("conv{}.{l}.weights", b.width));
                names.push(format!("conv{}.{l}.bias", b.width));
            }
        }
        for l in 0..self.dense.len() {
            names.push(format!("dense.{l}.weights"));
            names.push(format!("dense.{l}.bias"));
        }
        names.push("output.weights".into());
        names.push("output.bias".into());
        names
    }

    pub fn forward_infer(&self, enc: &EncodedTweet) -> Result<ForwardCache, NnError> {
        self.forward_impl(enc, None)
    }

    /// Forward pass with inverted dropout on every hidden dense layer.
    pub fn forward_train<R: RngCore>(&self, enc: &EncodedTweet, rng: &mut R) -> Result<ForwardCache, NnError> {
        self.forward_impl(enc, Some(rng))
    }

    /// Per-position location probabilities.
    pub fn infer(&self, enc: &EncodedTweet) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_infer(enc)?.probs)
    }

    /// Normalized tokens in, 0/1 label per token out (at most `seq_len` labels).
    pub fn tag_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<u8>, NnError> {
        let enc = encode_tokens(tokens, &self.vocab, self.config.seq_len)?;
        let mut labels = predict(&self.infer(&enc)?, self.config.threshold);
        labels.truncate(enc.true_length());
        Ok(labels)
    }

    fn forward_impl(&self, enc: &EncodedTweet, mut rng: Option<&mut dyn RngCore>) -> Result<ForwardCache, NnError> {
        if enc.seq_len() != self.config.seq_len {
            return Err(NnError::Shape(format!(
                "encoded length {} does not match seq_len {}",
                enc.seq_len(),
                self.config.seq_len
            )));
        }
        let embedded = embed(enc, &self.embedding)?;

        let mut flat = Vec::with_capacity(self.flatten_len());
        let mut branches = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let mut outputs: Vec<Tensor> = Vec::with_capacity(branch.layers.len());
            for layer in &branch.layers {
                let out = layer.forward(outputs.last().unwrap_or(&embedded))?;
                outputs.push(out);
            }
            let pooled = maxpool(outputs.last().expect("depth >= 1"), self.config.pool_window);
            flat.extend_from_slice(pooled.values.values());
            branches.push(BranchCache { outputs, pooled });
        }
        if flat.len() != self.flatten_len() {
            return Err(NnError::Shape(format!(
                "flattened {} features, dense stack expects {}",
                flat.len(),
                self.flatten_len()
            )));
        }

        let p = self.config.dropout;
        let keep_scale = 1.0 / (1.0 - p);
        let mut x = flat.clone();
        let mut dense = Vec::with_capacity(self.dense.len());
        for layer in &self.dense {
            let pre = layer.forward_pre(&x);
            let mut act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            let dropout = match rng.as_deref_mut() {
                Some(r) if p > 0.0 => {
                    let mask: Vec<f64> = (0..act.len())
                        .map(|_| if r.gen::<f64>() < p { 0.0 } else { keep_scale })
                        .collect();
                    act.iter_mut().zip(&mask).for_each(|(a, m)| *a *= m);
                    Some(mask)
                }
                _ => None,
            };
            dense.push(DenseCache { input: x, pre, dropout });
            x = act;
        }

        let logits = self.output.forward_pre(&x);
        let probs = logits
            .iter()
            .map(|&z| sigmoid(z).clamp(PROB_FLOOR, PROB_CEIL))
            .collect();
        Ok(ForwardCache {
            indices: enc.indices().to_vec(),
            embedded,
            branches,
            flat,
            dense,
            output_input: x,
            logits,
            probs,
        })
    }

    /// Exact gradients of the summed binary cross-entropy for one example.
    /// Uses dL/dlogit = p - y at the output. The cache must come from a forward
    /// pass with the current parameters.
    pub fn backward(&self, cache: &ForwardCache, labels: &[u8]) -> Gradients {
        let d_logits: Vec<f64> = cache
            .probs
            .iter()
            .zip(labels)
            .map(|(&p, &y)| p - f64::from(y))
            .collect();
        self.backward_from_logits(cache, &d_logits)
    }

    /// Backpropagates an arbitrary upstream gradient on the output logits.
    pub fn backward_from_logits(&self, cache: &ForwardCache, d_logits: &[f64]) -> Gradients {
        let mut grads = Gradients::zeros(self);
        let conv_groups = 2 * self.branches.iter().map(|b| b.layers.len()).sum::<usize>();
        let out_base = conv_groups + 2 * self.dense.len();

        let (gw, gb) = split_pair(&mut grads.groups, out_base);
        let mut d_x = self.output.backward(&cache.output_input, d_logits, gw, gb);

        for (l, (layer, lc)) in self.dense.iter().zip(&cache.dense).enumerate().rev() {
            if let Some(mask) = &lc.dropout {
                d_x.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            for (d, &z) in d_x.iter_mut().zip(&lc.pre) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            let (gw, gb) = split_pair(&mut grads.groups, conv_groups + 2 * l);
            d_x = layer.backward(&lc.input, &d_x, gw, gb);
        }

        let trainable = self.config.embeddings_trainable;
        let mut d_embedded = trainable.then(|| Tensor::zeros(cache.embedded.shape()));
        let mut offset = 0;
        let mut group = 0;
        for (branch, bc) in self.branches.iter().zip(&cache.branches) {
            let n = bc.pooled.values.values().len();
            let d_pooled = &d_x[offset..offset + n];
            offset += n;
            let last = bc.outputs.last().expect("depth >= 1");
            let mut d_out = maxpool_backward(&bc.pooled, d_pooled, last.rows());
            let base = group;
            group += 2 * branch.layers.len();
            for (l, layer) in branch.layers.iter().enumerate().rev() {
                for (d, &a) in d_out.values_mut().iter_mut().zip(bc.outputs[l].values()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                let input = if l == 0 { &cache.embedded } else { &bc.outputs[l - 1] };
                let want_input = l > 0 || trainable;
                let (gw, gb) = split_pair(&mut grads.groups, base + 2 * l);
                match layer.backward(input, &d_out, gw, gb, want_input) {
                    Some(d_in) if l > 0 => d_out = d_in,
                    Some(d_in) => {
                        if let Some(acc) = d_embedded.as_mut() {
                            acc.values_mut()
                                .iter_mut()
                                .zip(d_in.values())
                                .for_each(|(a, v)| *a += v);
                        }
                    }
                    None => {}
                }
            }
        }

        if let Some(d_emb) = d_embedded {
            let dim = self.embedding.dim();
            for (pos, &index) in cache.indices.iter().enumerate() {
                if index == PAD {
                    continue;
                }
                let row = grads.embedding.entry(index).or_insert_with(|| vec![0.0; dim]);
                row.iter_mut().zip(d_emb.row(pos)).for_each(|(r, v)| *r += v);
            }
        }
        grads
    }
}

fn split_pair(groups: &mut [Vec<f64>], at: usize) -> (&mut [f64], &mut [f64]) {
    let (left, right) = groups[at..at + 2].split_at_mut(1);
    (left[0].as_mut_slice(), right[0].as_mut_slice())
}

/// `1` where the probability reaches the threshold (inclusive).
pub fn predict(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}
