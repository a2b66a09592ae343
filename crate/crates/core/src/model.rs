//! Toy encoder family: a shared residual-tanh trunk, a mean-pooling
//! bi-encoder head, and a bilinear cross-encoder head with sigmoid output.
//!
//! The trunk stands in for a pretrained Transformer: each token passes
//! through an input projection and a stack of residual tanh blocks, and the
//! token outputs are mean-pooled. Both heads read the identical trunk
//! parameters, which is the weight-sharing contract the joint trainer
//! relies on. The half-size configuration bypasses every odd-indexed layer.

// Matrix math reads clearest with explicit row/column indices.
#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{Item, Modality};
use crate::rng::Rng;
use crate::vecmath;
use crate::{Error, Result};

/// Which trunk layers run in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSkip {
    Full,
    SkipOdd,
}

impl LayerSkip {
    pub fn code(self) -> u8 {
        match self {
            LayerSkip::Full => 0,
            LayerSkip::SkipOdd => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayerSkip::Full),
            1 => Some(LayerSkip::SkipOdd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub trunk_layers: usize,
    pub layer_skip: LayerSkip,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidSpec(
                "feature_dim and embed_dim must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Indices of the layers that actually run.
    pub fn active_layers(&self) -> Vec<usize> {
        match self.layer_skip {
            LayerSkip::Full => (0..self.trunk_layers).collect(),
            LayerSkip::SkipOdd => (0..self.trunk_layers).step_by(2).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrunkLayer {
    /// E x E, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossHead {
    /// E x E bilinear interaction matrix, row-major (image side indexes rows).
    pub bilinear: Vec<f64>,
    pub w_image: Vec<f64>,
    pub w_caption: Vec<f64>,
    pub bias: f64,
}

/// All model parameters. There is exactly one storage location per
/// parameter; the BE and CE paths read the same trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// E x D input projection, row-major.
    pub input_w: Vec<f64>,
    pub input_b: Vec<f64>,
    pub layers: Vec<TrunkLayer>,
    pub head: CrossHead,
}

/// Gradient (or moment) buffer shaped exactly like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub input_w: Vec<f64>,
    pub input_b: Vec<f64>,
    pub layers: Vec<TrunkLayer>,
    pub head: CrossHead,
}

/// Deterministic initialization: projection and layer weights drawn from a
/// symmetric uniform range scaled by 1/sqrt(fan_in), biases zero, and the
/// cross head all zeros so an untrained model scores exactly 0.5.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let d = config.feature_dim;
    let e = config.embed_dim;
    let mut rng = Rng::new(config.seed);
    let input_bound = 1.0 / libm::sqrt(d as f64);
    let input_w = (0..e * d)
        .map(|_| rng.uniform(-input_bound, input_bound))
        .collect();
    let layer_bound = 1.0 / libm::sqrt(e as f64);
    let layers = (0..config.trunk_layers)
        .map(|_| TrunkLayer {
            weight: (0..e * e)
                .map(|_| rng.uniform(-layer_bound, layer_bound))
                .collect(),
            bias: vec![0.0; e],
        })
        .collect();
    Ok(ModelParams {
        config: *config,
        input_w,
        input_b: vec![0.0; e],
        layers,
        head: CrossHead {
            bilinear: vec![0.0; e * e],
            w_image: vec![0.0; e],
            w_caption: vec![0.0; e],
            bias: 0.0,
        },
    })
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let e = params.config.embed_dim;
        let d = params.config.feature_dim;
        ModelGrads {
            input_w: vec![0.0; e * d],
            input_b: vec![0.0; e],
            layers: params
                .layers
                .iter()
                .map(|_| TrunkLayer {
                    weight: vec![0.0; e * e],
                    bias: vec![0.0; e],
                })
                .collect(),
            head: CrossHead {
                bilinear: vec![0.0; e * e],
                w_image: vec![0.0; e],
                w_caption: vec![0.0; e],
                bias: 0.0,
            },
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t {
                *v *= factor;
            }
        }
    }
}

macro_rules! impl_tensor_views {
    ($ty:ty) => {
        impl $ty {
            /// Parameter tensors in the fixed serialization order: input
            /// projection, input bias, per-layer weight and bias, bilinear
            /// matrix, image weights, caption weights, head bias.
            pub fn tensors(&self) -> Vec<&[f64]> {
                let mut out: Vec<&[f64]> = Vec::with_capacity(6 + 2 * self.layers.len());
                out.push(&self.input_w);
                out.push(&self.input_b);
                for layer in &self.layers {
                    out.push(&layer.weight);
                    out.push(&layer.bias);
                }
                out.push(&self.head.bilinear);
                out.push(&self.head.w_image);
                out.push(&self.head.w_caption);
                out.push(core::slice::from_ref(&self.head.bias));
                out
            }

            pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
                let mut out: Vec<&mut [f64]> = Vec::with_capacity(6 + 2 * self.layers.len());
                out.push(&mut self.input_w);
                out.push(&mut self.input_b);
                for layer in &mut self.layers {
                    out.push(&mut layer.weight);
                    out.push(&mut layer.bias);
                }
                out.push(&mut self.head.bilinear);
                out.push(&mut self.head.w_image);
                out.push(&mut self.head.w_caption);
                out.push(core::slice::from_mut(&mut self.head.bias));
                out
            }

            pub fn param_count(&self) -> usize {
                self.tensors().iter().map(|t| t.len()).sum()
            }

            /// Flat view in tensor order; used by checkpointing and the
            /// finite-difference gradient check.
            pub fn flatten(&self) -> Vec<f64> {
                let mut out = Vec::with_capacity(self.param_count());
                for t in self.tensors() {
                    out.extend_from_slice(t);
                }
                out
            }

            /// Adds `delta` to the parameter at flat index `idx`.
            pub fn nudge_flat(&mut self, idx: usize, delta: f64) {
                let mut offset = 0;
                for t in self.tensors_mut() {
                    if idx < offset + t.len() {
                        t[idx - offset] += delta;
                        return;
                    }
                    offset += t.len();
                }
                panic!("flat index {idx} out of range");
            }
        }
    };
}

impl_tensor_views!(ModelParams);
impl_tensor_views!(ModelGrads);

/// y = W x + b for a row-major (rows x cols) matrix.
fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize, out: &mut Vec<f64>) {
    out.clear();
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out.push(vecmath::dot(row, x) + b[r]);
    }
}

/// Per-token forward state kept for backpropagation.
#[derive(Debug, Clone)]
struct LayerState {
    /// Input to the layer (pre-affine).
    h_in: Vec<f64>,
    /// tanh activation output of the layer.
    act: Vec<f64>,
}

#[derive(Debug, Clone)]
struct TokenState {
    input: Vec<f64>,
    layers: Vec<LayerState>,
}

/// Forward cache for one item; consumed by [`backward_embedding`].
#[derive(Debug, Clone)]
pub struct EncodeCache {
    tokens: Vec<TokenState>,
    active: Vec<usize>,
}

fn trunk_token(
    params: &ModelParams,
    token: &[f32],
    active: &[usize],
    keep_state: bool,
) -> (Vec<f64>, Option<TokenState>) {
    let e = params.config.embed_dim;
    let d = params.config.feature_dim;
    let x: Vec<f64> = token.iter().map(|&v| v as f64).collect();
    let mut h = Vec::with_capacity(e);
    affine(&params.input_w, &params.input_b, &x, e, d, &mut h);
    let mut states = Vec::new();
    let mut z = Vec::with_capacity(e);
    for &idx in active {
        let layer = &params.layers[idx];
        affine(&layer.weight, &layer.bias, &h, e, e, &mut z);
        let act: Vec<f64> = z.iter().map(|&v| libm::tanh(v)).collect();
        if keep_state {
            states.push(LayerState {
                h_in: h.clone(),
                act: act.clone(),
            });
        }
        for (hv, av) in h.iter_mut().zip(&act) {
            *hv += *av;
        }
    }
    let state = keep_state.then_some(TokenState {
        input: x,
        layers: states,
    });
    (h, state)
}

fn check_item_dim(params: &ModelParams, item: &Item) -> Result<()> {
    if item.dim() != params.config.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: params.config.feature_dim,
            actual: item.dim(),
        });
    }
    Ok(())
}

/// Encodes an item: trunk per token, then mean pooling.
///
/// Pooling sums each output dimension in a canonical order, so the result is
/// exactly invariant under any permutation of the item's tokens.
pub fn encode(params: &ModelParams, item: &Item) -> Result<Vec<f64>> {
    check_item_dim(params, item)?;
    let active = params.config.active_layers();
    let outputs: Vec<Vec<f64>> = (0..item.token_count())
        .map(|t| trunk_token(params, item.token(t), &active, false).0)
        .collect();
    Ok(vecmath::canonical_row_mean(
        &outputs,
        params.config.embed_dim,
    ))
}

/// Like [`encode`], also returning the cache needed for backpropagation.
pub fn encode_cached(params: &ModelParams, item: &Item) -> Result<(Vec<f64>, EncodeCache)> {
    check_item_dim(params, item)?;
    let active = params.config.active_layers();
    let mut outputs = Vec::with_capacity(item.token_count());
    let mut tokens = Vec::with_capacity(item.token_count());
    for t in 0..item.token_count() {
        let (h, state) = trunk_token(params, item.token(t), &active, true);
        outputs.push(h);
        tokens.push(state.expect("state kept"));
    }
    let pooled = vecmath::canonical_row_mean(&outputs, params.config.embed_dim);
    Ok((pooled, EncodeCache { tokens, active }))
}

/// Accumulates trunk gradients for one encoded item.
///
/// `grad_embedding` is dL/d(pooled output); gradients flow through the mean
/// pooling, the active residual tanh blocks, and the input projection.
pub fn backward_embedding(
    params: &ModelParams,
    cache: &EncodeCache,
    grad_embedding: &[f64],
    grads: &mut ModelGrads,
) {
    let e = params.config.embed_dim;
    let d = params.config.feature_dim;
    let token_count = cache.tokens.len() as f64;
    let mut dz = vec![0.0; e];
    for token in &cache.tokens {
        let mut delta: Vec<f64> = grad_embedding.iter().map(|g| g / token_count).collect();
        for (pos, &layer_idx) in cache.active.iter().enumerate().rev() {
            let state = &token.layers[pos];
            for i in 0..e {
                dz[i] = delta[i] * (1.0 - state.act[i] * state.act[i]);
            }
            let g_layer = &mut grads.layers[layer_idx];
            for r in 0..e {
                let row = &mut g_layer.weight[r * e..(r + 1) * e];
                vecmath::axpy(row, dz[r], &state.h_in);
                g_layer.bias[r] += dz[r];
            }
            let w = &params.layers[layer_idx].weight;
            for r in 0..e {
                vecmath::axpy(&mut delta, dz[r], &w[r * e..(r + 1) * e]);
            }
        }
        for r in 0..e {
            let row = &mut grads.input_w[r * d..(r + 1) * d];
            vecmath::axpy(row, delta[r], &token.input);
            grads.input_b[r] += delta[r];
        }
    }
}

fn check_pair(params: &ModelParams, image: &Item, caption: &Item) -> Result<()> {
    if image.modality != Modality::Image || caption.modality != Modality::Caption {
        return Err(Error::ModalityMismatch);
    }
    check_item_dim(params, image)?;
    check_item_dim(params, caption)
}

/// Bilinear head on two pooled embeddings: ei' B ec + wi.ei + wc.ec + b.
pub fn head_logit(params: &ModelParams, e_image: &[f64], e_caption: &[f64]) -> f64 {
    let e = params.config.embed_dim;
    let head = &params.head;
    let mut acc = head.bias;
    for r in 0..e {
        let row = &head.bilinear[r * e..(r + 1) * e];
        acc += e_image[r] * vecmath::dot(row, e_caption);
    }
    acc + vecmath::dot(&head.w_image, e_image) + vecmath::dot(&head.w_caption, e_caption)
}

/// Head gradients for upstream `g` = dL/dlogit; returns gradients with
/// respect to the two pooled embeddings.
pub fn head_backward(
    params: &ModelParams,
    e_image: &[f64],
    e_caption: &[f64],
    g: f64,
    grads: &mut ModelGrads,
) -> (Vec<f64>, Vec<f64>) {
    let e = params.config.embed_dim;
    let head = &params.head;
    let mut d_image = vec![0.0; e];
    let mut d_caption = vec![0.0; e];
    for r in 0..e {
        let grow = &mut grads.head.bilinear[r * e..(r + 1) * e];
        vecmath::axpy(grow, g * e_image[r], e_caption);
        let row = &head.bilinear[r * e..(r + 1) * e];
        d_image[r] = g * (vecmath::dot(row, e_caption) + head.w_image[r]);
        for c in 0..e {
            d_caption[c] += g * row[c] * e_image[r];
        }
    }
    for c in 0..e {
        d_caption[c] += g * head.w_caption[c];
    }
    vecmath::axpy(&mut grads.head.w_image, g, e_image);
    vecmath::axpy(&mut grads.head.w_caption, g, e_caption);
    grads.head.bias += g;
    (d_image, d_caption)
}

/// Pre-sigmoid pair score. Encodes both items through the shared trunk on
/// every call; ordering by logit equals ordering by probability.
pub fn logit(params: &ModelParams, image: &Item, caption: &Item) -> Result<f64> {
    check_pair(params, image, caption)?;
    let e_image = encode(params, image)?;
    let e_caption = encode(params, caption)?;
    Ok(head_logit(params, &e_image, &e_caption))
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let ex = libm::exp(x);
        ex / (1.0 + ex)
    }
}

/// Sigmoid clamped strictly inside (0, 1), even at saturating logits.
pub fn probability_from_logit(logit: f64) -> f64 {
    sigmoid(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Probability that (image, caption) is an aligned pair, in the open (0, 1).
pub fn cross_score(params: &ModelParams, image: &Item, caption: &Item) -> Result<f64> {
    Ok(probability_from_logit(logit(params, image, caption)?))
}
