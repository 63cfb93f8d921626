use crate::embedding::PAD;
use crate::nn::{Gradients, Model};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }

    /// Advances the step counter. Call once per optimizer step, before
    /// [`AdamState::apply`].
    pub fn tick(&mut self) {
        self.step_count += 1;
    }

    /// Bias-corrected update of `params[offset..]` from `grads`. `get` reads a
    /// gradient by local index so sparse sources need not be densified.
    fn apply_with<P, G>(&mut self, params: &mut [P], offset: usize, lr: f64, grad: G)
    where
        P: Copy + Into<f64> + FromF64,
        G: Fn(usize) -> f64,
    {
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grad(i);
            let m = &mut self.first_moment[offset + i];
            let v = &mut self.second_moment[offset + i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let step = lr * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
            *p = P::from_f64((*p).into() - step);
        }
    }
}

trait FromF64 {
    fn from_f64(v: f64) -> Self;
}

impl FromF64 for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl FromF64 for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

/// One Adam step on a plain parameter vector.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(params.len(), state.first_moment.len(), "optimizer state length differs");
    state.tick();
    state.apply_with(params, 0, lr, |i| grads[i]);
}

/// Adam over every trainable parameter of a model. The embedding table is
/// treated densely (rows absent from the sparse gradient get zero), except
/// the PAD row, which never moves.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptimizer {
    embedding: Option<AdamState>,
    groups: Vec<AdamState>,
}

impl ModelOptimizer {
    pub fn new(model: &Model) -> Self {
        ModelOptimizer {
            embedding: model
                .config()
                .embeddings_trainable
                .then(|| AdamState::new(model.embedding().as_slice().len())),
            groups: model.param_groups().iter().map(|g| AdamState::new(g.len())).collect(),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients, lr: f64) {
        if let Some(state) = self.embedding.as_mut() {
            state.tick();
            let table = model.embedding_mut();
            let dim = table.dim();
            for row in 0..table.rows() {
                if row == PAD {
                    continue;
                }
                let g = grads.embedding.get(&row);
                state.apply_with(table.row_mut(row), row * dim, lr, |i| g.map_or(0.0, |g| g[i]));
            }
        }
        for ((params, state), g) in model
            .param_groups_mut()
            .into_iter()
            .zip(&mut self.groups)
            .zip(&grads.groups)
        {
            state.tick();
            state.apply_with(params, 0, lr, |i| g[i]);
        }
    }
}
