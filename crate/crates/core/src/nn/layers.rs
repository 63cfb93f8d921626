//! Layer primitives with their forward and backward passes.
//!
//! Feature maps are `time x channels` tensors, row-major, so a width-h window
//! starting at time i is one contiguous slice of `h * channels` values.

use rand::Rng;

use super::tensor::{relu, Tensor};
use super::NnError;

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

/// One valid (unpadded) convolution layer of `maps` filters spanning `width`
/// time steps of `in_dim` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub width: usize,
    pub in_dim: usize,
    pub maps: usize,
    /// `[maps][width][in_dim]`
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    pub fn init<R: Rng>(width: usize, in_dim: usize, maps: usize, rng: &mut R) -> Self {
        ConvLayer {
            width,
            in_dim,
            maps,
            weights: glorot(rng, width * in_dim, width * maps, maps * width * in_dim),
            bias: vec![0.0; maps],
        }
    }

    pub fn out_len(&self, in_len: usize) -> Option<usize> {
        (in_len >= self.width).then(|| in_len - self.width + 1)
    }

    /// Pre-activation output, `(in_len - width + 1) x maps`.
    pub fn forward_pre(&self, input: &Tensor) -> Result<Tensor, NnError> {
        if input.cols() != self.in_dim {
            return Err(NnError::Shape(format!(
                "conv layer expects {} channels, got {}",
                self.in_dim,
                input.cols()
            )));
        }
        let out_len = self.out_len(input.rows()).ok_or(NnError::InputTooShort {
            len: input.rows(),
            width: self.width,
        })?;
        let span = self.width * self.in_dim;
        let x = input.values();
        let mut out = Tensor::zeros(&[out_len, self.maps]);
        let o = out.values_mut();
        for i in 0..out_len {
            let window = &x[i * self.in_dim..i * self.in_dim + span];
            for f in 0..self.maps {
                let filter = &self.weights[f * span..(f + 1) * span];
                let mut acc = f64::from(self.bias[f]);
                for (w, v) in filter.iter().zip(window) {
                    acc += f64::from(*w) * v;
                }
                o[i * self.maps + f] = acc;
            }
        }
        Ok(out)
    }

    /// Convolution followed by ReLU.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(relu(&self.forward_pre(input)?))
    }

    /// Given dL/d(pre-activation), accumulates weight and bias gradients and
    /// returns dL/d(input) when `want_input` is set.
    pub fn backward(
        &self,
        input: &Tensor,
        d_pre: &Tensor,
        d_weights: &mut [f64],
        d_bias: &mut [f64],
        want_input: bool,
    ) -> Option<Tensor> {
        let span = self.width * self.in_dim;
        let x = input.values();
        let g = d_pre.values();
        let mut d_input = want_input.then(|| Tensor::zeros(input.shape()));
        for i in 0..d_pre.rows() {
            let window = &x[i * self.in_dim..i * self.in_dim + span];
            for f in 0..self.maps {
                let gf = g[i * self.maps + f];
                if gf == 0.0 {
                    continue;
                }
                d_bias[f] += gf;
                let dw = &mut d_weights[f * span..(f + 1) * span];
                for (d, v) in dw.iter_mut().zip(window) {
                    *d += gf * v;
                }
                if let Some(di) = d_input.as_mut() {
                    let filter = &self.weights[f * span..(f + 1) * span];
                    let dst = &mut di.values_mut()[i * self.in_dim..i * self.in_dim + span];
                    for (d, w) in dst.iter_mut().zip(filter) {
                        *d += gf * f64::from(*w);
                    }
                }
            }
        }
        d_input
    }
}

/// A stack of same-width convolution layers; the first consumes the tweet
/// matrix, later ones consume the previous layer's feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBranch {
    pub width: usize,
    pub layers: Vec<ConvLayer>,
}

impl ConvBranch {
    pub fn init<R: Rng>(width: usize, embedding_dim: usize, maps: usize, depth: usize, rng: &mut R) -> Self {
        let layers = (0..depth)
            .map(|l| ConvLayer::init(width, if l == 0 { embedding_dim } else { maps }, maps, rng))
            .collect();
        ConvBranch { width, layers }
    }

    /// Runs one layer of the stack with ReLU.
    pub fn forward_layer(&self, layer: usize, input: &Tensor) -> Result<Tensor, NnError> {
        self.layers
            .get(layer)
            .ok_or_else(|| NnError::Shape(format!("branch has no layer {layer}")))?
            .forward(input)
    }
}

/// Max pooling over non-overlapping time windows; the last window may be short.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub values: Tensor,
    /// Time index of each selected maximum, same layout as `values`.
    pub argmax: Vec<usize>,
}

pub fn maxpool(c: &Tensor, window: usize) -> Pooled {
    let (len, maps) = (c.rows(), c.cols());
    let out_len = len.div_ceil(window);
    let mut values = Tensor::zeros(&[out_len, maps]);
    let mut argmax = vec![0; out_len * maps];
    for j in 0..out_len {
        let lo = j * window;
        let hi = (lo + window).min(len);
        for f in 0..maps {
            let mut best_t = lo;
            let mut best = c.get2(lo, f);
            for t in lo + 1..hi {
                let v = c.get2(t, f);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            values.values_mut()[j * maps + f] = best;
            argmax[j * maps + f] = best_t;
        }
    }
    Pooled { values, argmax }
}

/// Routes pooled gradients back to the recorded argmax positions.
pub fn maxpool_backward(pooled: &Pooled, d_pooled: &[f64], in_len: usize) -> Tensor {
    let maps = pooled.values.cols();
    let mut d = Tensor::zeros(&[in_len, maps]);
    for (slot, (&t, &g)) in pooled.argmax.iter().zip(d_pooled).enumerate() {
        d.values_mut()[t * maps + slot % maps] += g;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Fully connected layer, weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: glorot(rng, in_dim, out_dim, in_dim * out_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Affine part only.
    pub fn forward_pre(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| {
                row.iter()
                    .zip(x)
                    .fold(f64::from(b), |acc, (w, v)| acc + f64::from(*w) * v)
            })
            .collect()
    }

    pub fn backward(&self, x: &[f64], d_pre: &[f64], d_weights: &mut [f64], d_bias: &mut [f64]) -> Vec<f64> {
        let mut d_x = vec![0.0; self.in_dim];
        for (o, &g) in d_pre.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            d_bias[o] += g;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let d_row = &mut d_weights[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                d_row[i] += g * x[i];
                d_x[i] += g * f64::from(row[i]);
            }
        }
        d_x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layer(width: usize, in_dim: usize, weights: Vec<f32>, bias: Vec<f32>) -> ConvLayer {
        ConvLayer {
            width,
            in_dim,
            maps: bias.len(),
            weights,
            bias,
        }
    }

    #[test]
    fn degenerate_filters() {
        let input = Tensor::new(&[5, 3], (0..15).map(|v| v as f64 - 7.0).collect()).unwrap();
        let up = layer(2, 3, vec![0.0; 6], vec![3.0]);
        assert!(up.forward(&input).unwrap().values().iter().all(|&v| v == 3.0));
        let down = layer(2, 3, vec![0.0; 6], vec![-3.0]);
        assert!(down.forward(&input).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ones_filter_sums_windows() {
        // rows: [1,2], [3,4], [5,6], [7,8]
        let input = Tensor::new(&[4, 2], (1..=8).map(f64::from).collect()).unwrap();
        let ones = layer(2, 2, vec![1.0; 4], vec![0.0]);
        let out = ones.forward(&input).unwrap();
        assert_eq!(out.shape(), &[3, 1]);
        // window sums by hand: 1+2+3+4, 3+4+5+6, 5+6+7+8
        assert_eq!(out.values(), &[10.0, 18.0, 26.0]);
    }

    #[test]
    fn short_input_is_an_error() {
        let input = Tensor::zeros(&[2, 1]);
        let wide = layer(3, 1, vec![0.0; 3], vec![0.0]);
        assert!(matches!(
            wide.forward(&input),
            Err(NnError::InputTooShort { len: 2, width: 3 })
        ));
    }

    #[test]
    fn pooling_examples() {
        let col = |v: &[f64]| Tensor::new(&[v.len(), 1], v.to_vec()).unwrap();
        let p = maxpool(&col(&[1.0, 5.0, 2.0, 9.0, 3.0]), 5);
        assert_eq!(p.values.values(), &[9.0]);
        assert_eq!(p.argmax, vec![3]);
        // windows {1,5,2,9,3} and the partial {7}
        let p = maxpool(&col(&[1.0, 5.0, 2.0, 9.0, 3.0, 7.0]), 5);
        assert_eq!(p.values.values(), &[9.0, 7.0]);
        assert_eq!(p.argmax, vec![3, 5]);
        let p = maxpool(&col(&[4.0; 7]), 3);
        assert_eq!(p.values.values(), &[4.0, 4.0, 4.0]);
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let c = Tensor::new(&[3, 2], vec![1.0, 9.0, 4.0, 2.0, 0.0, 3.0]).unwrap();
        let p = maxpool(&c, 2);
        let d = maxpool_backward(&p, &[1.0, 10.0, 100.0, 1000.0], 3);
        assert_eq!(d.values(), &[0.0, 10.0, 1.0, 0.0, 100.0, 1000.0]);
    }

    proptest! {
        #[test]
        fn pooling_selects_window_maxima(
            v in proptest::collection::vec(-50f64..50.0, 1..40),
            window in 1usize..7,
        ) {
            let c = Tensor::new(&[v.len(), 1], v.clone()).unwrap();
            let p = maxpool(&c, window);
            prop_assert_eq!(p.values.rows(), v.len().div_ceil(window));
            for (j, chunk) in v.chunks(window).enumerate() {
                let m = chunk.iter().cloned().fold(f64::MIN, f64::max);
                prop_assert_eq!(p.values.values()[j], m);
                prop_assert_eq!(v[p.argmax[j]], m);
                prop_assert!(p.argmax[j] / window == j);
            }
        }
    }
}
