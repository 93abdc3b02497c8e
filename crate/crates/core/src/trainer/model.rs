//! Learnable state of the whole pipeline: the feature encoder standing in for
//! a pretrained backbone, one ASA module per aggregation round, and the
//! classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asa::AsaParams;
use crate::error::{MneError, Result};
use crate::losses::Classifier;
use crate::numeric::{axpy, l2_normalize, l2_normalize_backward, AffineMap, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Identity,
    Mlp,
}

/// Maps raw input features to embedding space.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Identity {
        dim: usize,
    },
    /// `W2 · relu(W1 x + b1) + b2`
    Mlp {
        hidden: AffineMap,
        output: AffineMap,
    },
}

/// Intermediates kept for the encoder backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
    activation: Vec<f64>,
    output: Vec<f64>,
}

impl Encoder {
    pub fn identity(dim: usize) -> Self {
        Encoder::Identity { dim }
    }

    pub fn mlp<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Encoder::Mlp {
            hidden: AffineMap {
                weight: Matrix::fan_in_uniform(hidden, in_dim, rng),
                bias: vec![0.0; hidden],
            },
            output: AffineMap {
                weight: Matrix::fan_in_uniform(out_dim, hidden, rng),
                bias: vec![0.0; out_dim],
            },
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Identity { .. } => EncoderKind::Identity,
            Encoder::Mlp { .. } => EncoderKind::Mlp,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::Mlp { hidden, .. } => hidden.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::Mlp { output, .. } => output.out_dim(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Encoder::Identity { .. } => 0,
            Encoder::Mlp { hidden, .. } => hidden.out_dim(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, EncoderCache)> {
        if x.len() != self.in_dim() {
            return Err(MneError::shape(format!(
                "encoder expects input of length {}, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        let (pre, act, out) = match self {
            Encoder::Identity { .. } => (Vec::new(), Vec::new(), x.to_vec()),
            Encoder::Mlp { hidden, output } => {
                let pre = hidden.apply_unchecked(x);
                let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let out = output.apply_unchecked(&act);
                (pre, act, out)
            }
        };
        Ok((
            out.clone(),
            EncoderCache {
                input: x.to_vec(),
                pre_activation: pre,
                activation: act,
                output: out,
            },
        ))
    }

    /// Adds parameter gradients into `grads` (which must share this shape).
    pub fn backward(&self, cache: &EncoderCache, grad_out: &[f64], grads: &mut Encoder) {
        if let (
            Encoder::Mlp { output, .. },
            Encoder::Mlp {
                hidden: gh,
                output: go,
            },
        ) = (self, grads)
        {
            go.weight.add_outer(1.0, grad_out, &cache.activation);
            axpy(1.0, grad_out, &mut go.bias);
            let mut g_act = output.weight.matvec_t(grad_out);
            for (g, pre) in g_act.iter_mut().zip(&cache.pre_activation) {
                if *pre <= 0.0 {
                    *g = 0.0;
                }
            }
            gh.weight.add_outer(1.0, &g_act, &cache.input);
            axpy(1.0, &g_act, &mut gh.bias);
        }
    }

    pub fn zeros_like(&self) -> Encoder {
        match self {
            Encoder::Identity { dim } => Encoder::Identity { dim: *dim },
            Encoder::Mlp { hidden, output } => Encoder::Mlp {
                hidden: AffineMap::zeros(hidden.out_dim(), hidden.in_dim()),
                output: AffineMap::zeros(output.out_dim(), output.in_dim()),
            },
        }
    }

    /// W1, b1, W2, b2 for an MLP; nothing for the identity.
    pub fn blocks(&self) -> Vec<&[f64]> {
        match self {
            Encoder::Identity { .. } => Vec::new(),
            Encoder::Mlp { hidden, output } => vec![
                hidden.weight.as_slice(),
                &hidden.bias,
                output.weight.as_slice(),
                &output.bias,
            ],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Encoder::Identity { .. } => Vec::new(),
            Encoder::Mlp { hidden, output } => vec![
                hidden.weight.as_mut_slice(),
                &mut hidden.bias,
                output.weight.as_mut_slice(),
                &mut output.bias,
            ],
        }
    }
}

/// A normalized encoder output plus what is needed to backpropagate into the encoder.
#[derive(Debug, Clone)]
pub struct EncodedFeature {
    pub feature: Vec<f64>,
    cache: EncoderCache,
}

impl EncodedFeature {
    /// Gradient w.r.t. the encoder given `dL/dfeature`, added into `grads`.
    pub fn backward(&self, encoder: &Encoder, grad_feature: &[f64], grads: &mut Encoder) {
        if encoder.kind() == EncoderKind::Identity {
            return;
        }
        let g = l2_normalize_backward(&self.cache.output, grad_feature);
        encoder.backward(&self.cache, &g, grads);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: Encoder,
    pub asa: Vec<AsaParams>,
    pub classifier: Classifier,
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn depth(&self) -> usize {
        self.asa.len()
    }

    /// Unit-norm feature of a raw input.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        l2_normalize(&self.encoder.forward(x)?)
    }

    pub fn encode_cached(&self, x: &[f64]) -> Result<EncodedFeature> {
        let (out, cache) = self.encoder.forward_cached(x)?;
        Ok(EncodedFeature {
            feature: l2_normalize(&out)?,
            cache,
        })
    }

    pub fn encode_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.encode(x)).collect()
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            encoder: self.encoder.zeros_like(),
            asa: self.asa.iter().map(AsaParams::zeros_like).collect(),
            classifier: Classifier {
                weights: Matrix::zeros(self.classifier.num_classes(), self.classifier.dim()),
            },
        }
    }

    /// Number of leading blocks in [`blocks`](Self::blocks) owned by the encoder.
    pub fn encoder_block_count(&self) -> usize {
        self.encoder.blocks().len()
    }

    /// All parameter blocks: encoder, then each round's six ASA blocks, then
    /// the classifier matrix.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.blocks();
        for a in &self.asa {
            v.extend(a.blocks());
        }
        v.push(self.classifier.weights.as_slice());
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.blocks_mut();
        for a in &mut self.asa {
            v.extend(a.blocks_mut());
        }
        v.push(self.classifier.weights.as_mut_slice());
        v
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks().iter().map(|b| b.len()).collect()
    }

    pub fn accumulate(&mut self, other: &ModelParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            axpy(1.0, src, dst);
        }
    }

    pub fn to_flat_blocks(&self) -> Vec<Vec<f64>> {
        self.blocks().iter().map(|b| b.to_vec()).collect()
    }

    pub fn load_flat_blocks(&mut self, blocks: &[Vec<f64>]) -> Result<()> {
        let mut dst = self.blocks_mut();
        if dst.len() != blocks.len() {
            return Err(MneError::shape(format!(
                "expected {} parameter blocks, got {}",
                dst.len(),
                blocks.len()
            )));
        }
        for (i, (d, s)) in dst.iter_mut().zip(blocks).enumerate() {
            if d.len() != s.len() {
                return Err(MneError::shape(format!(
                    "block {i}: expected {} values, got {}",
                    d.len(),
                    s.len()
                )));
            }
            d.copy_from_slice(s);
        }
        Ok(())
    }
}
