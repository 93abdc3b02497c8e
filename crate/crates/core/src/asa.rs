//! Aggregation with supervised attention.
//!
//! For a parent state `f_u` and child states `f_v`:
//!
//! ```text
//! d_v = W_D (f_u - f_v) + b_D
//! p_v = sigmoid(W_S (d_v ∘ d_v) + b_S)
//! a_v = p_v / Σ_k p_k
//! f_u' = W_A (f_u + Σ_v a_v f_v) + b_A
//! ```
//!
//! The probabilities `p_v` are what the pairwise binary cross-entropy
//! supervises; gradients flow through the attention weights into both the
//! parent and the children.

use rand::Rng;

use crate::error::{MneError, Result};
use crate::numeric::{axpy, dot, sigmoid, AffineMap, Matrix};

/// Parameters of one aggregation round.
#[derive(Debug, Clone, PartialEq)]
pub struct AsaParams {
    /// `W_A`, `b_A`: D×D feature transform.
    pub agg: AffineMap,
    /// `W_D`, `b_D`: D_d×D difference projection.
    pub diff: AffineMap,
    /// `W_S`, `b_S`: 1×D_d score projection.
    pub score: AffineMap,
}

impl AsaParams {
    /// Default initialization: `W_A = I + N(0, 0.01²)`, fan-in uniform `W_D`
    /// and `W_S`, zero biases.
    pub fn init<R: Rng + ?Sized>(dim: usize, diff_dim: usize, rng: &mut R) -> Self {
        AsaParams {
            agg: AffineMap {
                weight: Matrix::noisy_identity(dim, 0.01, rng),
                bias: vec![0.0; dim],
            },
            diff: AffineMap {
                weight: Matrix::fan_in_uniform(diff_dim, dim, rng),
                bias: vec![0.0; diff_dim],
            },
            score: AffineMap {
                weight: Matrix::fan_in_uniform(1, diff_dim, rng),
                bias: vec![0.0],
            },
        }
    }

    pub fn zeros(dim: usize, diff_dim: usize) -> Self {
        AsaParams {
            agg: AffineMap::zeros(dim, dim),
            diff: AffineMap::zeros(diff_dim, dim),
            score: AffineMap::zeros(1, diff_dim),
        }
    }

    /// `W_A = I`, everything else zero: every probability is exactly 0.5.
    pub fn identity(dim: usize, diff_dim: usize) -> Self {
        let mut p = AsaParams::zeros(dim, diff_dim);
        p.agg.weight = Matrix::identity(dim);
        p
    }

    pub fn dim(&self) -> usize {
        self.agg.in_dim()
    }

    pub fn diff_dim(&self) -> usize {
        self.diff.out_dim()
    }

    pub fn zeros_like(&self) -> Self {
        AsaParams::zeros(self.dim(), self.diff_dim())
    }

    /// Parameter blocks in checkpoint order: W_A, b_A, W_D, b_D, W_S, b_S.
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            self.agg.weight.as_slice(),
            &self.agg.bias,
            self.diff.weight.as_slice(),
            &self.diff.bias,
            self.score.weight.as_slice(),
            &self.score.bias,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.agg.weight.as_mut_slice(),
            &mut self.agg.bias,
            self.diff.weight.as_mut_slice(),
            &mut self.diff.bias,
            self.score.weight.as_mut_slice(),
            &mut self.score.bias,
        ]
    }

    /// `self += other`, block by block.
    pub fn accumulate(&mut self, other: &AsaParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            axpy(1.0, src, dst);
        }
    }

    fn check_dims(&self, parent: &[f64], children: &[Vec<f64>]) -> Result<()> {
        let d = self.dim();
        if self.agg.out_dim() != d
            || self.diff.in_dim() != d
            || self.score.in_dim() != self.diff_dim()
            || self.score.out_dim() != 1
        {
            return Err(MneError::shape("inconsistent ASA parameter shapes"));
        }
        if parent.len() != d {
            return Err(MneError::shape(format!(
                "parent state has length {}, expected {d}",
                parent.len()
            )));
        }
        if let Some(c) = children.iter().find(|c| c.len() != d) {
            return Err(MneError::shape(format!(
                "child state has length {}, expected {d}",
                c.len()
            )));
        }
        Ok(())
    }
}

/// Intermediates of the pairwise probability for one (parent, child) pair.
#[derive(Debug, Clone)]
struct PairCache {
    diff_in: Vec<f64>,
    d: Vec<f64>,
    p: f64,
}

fn pair_forward(f_u: &[f64], f_v: &[f64], params: &AsaParams) -> PairCache {
    let diff_in: Vec<f64> = f_u.iter().zip(f_v).map(|(a, b)| a - b).collect();
    let d = params.diff.apply_unchecked(&diff_in);
    let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
    let z = dot(params.score.weight.row(0), &sq) + params.score.bias[0];
    PairCache {
        diff_in,
        d,
        p: sigmoid(z),
    }
}

/// Same-class probability of a (parent, child) pair.
pub fn pairwise_prob(f_u: &[f64], f_v: &[f64], params: &AsaParams) -> Result<f64> {
    params.check_dims(f_u, std::slice::from_ref(&f_v.to_vec()))?;
    Ok(pair_forward(f_u, f_v, params).p)
}

/// `a_v = p_v / Σ p_k`.
pub fn normalize_probabilities(probs: &[f64]) -> Result<Vec<f64>> {
    if probs.is_empty() {
        return Err(MneError::Degenerate(
            "attention over an empty child set".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    Ok(probs.iter().map(|p| p / total).collect())
}

pub fn attention_weights(
    parent: &[f64],
    children: &[Vec<f64>],
    params: &AsaParams,
) -> Result<Vec<f64>> {
    if children.is_empty() {
        return Err(MneError::Degenerate(
            "attention over an empty child set".into(),
        ));
    }
    params.check_dims(parent, children)?;
    let probs: Vec<f64> = children
        .iter()
        .map(|c| pair_forward(parent, c, params).p)
        .collect();
    normalize_probabilities(&probs)
}

/// Cached forward pass of one aggregation, consumed by [`asa_backward`].
#[derive(Debug, Clone)]
pub struct AsaTape {
    parent: Vec<f64>,
    children: Vec<Vec<f64>>,
    pairs: Vec<PairCache>,
    weights: Vec<f64>,
    mixed: Vec<f64>,
}

impl AsaTape {
    pub fn probs(&self) -> Vec<f64> {
        self.pairs.iter().map(|c| c.p).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn child_count(&self) -> usize {
        self.children.len()
    }
}

#[derive(Debug, Clone)]
pub struct AsaOutput {
    pub state: Vec<f64>,
    pub probs: Vec<f64>,
    pub tape: AsaTape,
}

pub fn asa_forward(parent: &[f64], children: &[Vec<f64>], params: &AsaParams) -> Result<AsaOutput> {
    params.check_dims(parent, children)?;
    let pairs: Vec<PairCache> = children
        .iter()
        .map(|c| pair_forward(parent, c, params))
        .collect();
    let total: f64 = pairs.iter().map(|c| c.p).sum();
    let weights: Vec<f64> = pairs.iter().map(|c| c.p / total).collect();
    let mut mixed = parent.to_vec();
    for (a, c) in weights.iter().zip(children) {
        axpy(*a, c, &mut mixed);
    }
    let state = params.agg.apply_unchecked(&mixed);
    let probs = pairs.iter().map(|c| c.p).collect();
    Ok(AsaOutput {
        state,
        probs,
        tape: AsaTape {
            parent: parent.to_vec(),
            children: children.to_vec(),
            pairs,
            weights,
            mixed,
        },
    })
}

/// Gradients with respect to the inputs of one aggregation.
#[derive(Debug, Clone)]
pub struct AsaInputGrads {
    pub parent: Vec<f64>,
    pub children: Vec<Vec<f64>>,
}

/// Reverse pass. Parameter gradients are added into `param_grads`.
pub fn asa_backward(
    tape: &AsaTape,
    params: &AsaParams,
    grad_state: &[f64],
    grad_probs: &[f64],
    param_grads: &mut AsaParams,
) -> Result<AsaInputGrads> {
    let dim = params.dim();
    let kids = tape.children.len();
    if grad_state.len() != dim || grad_probs.len() != kids || tape.parent.len() != dim {
        return Err(MneError::shape(format!(
            "asa backward: grad_state {} (expected {dim}), grad_probs {} (expected {kids})",
            grad_state.len(),
            grad_probs.len()
        )));
    }
    if param_grads.dim() != dim || param_grads.diff_dim() != params.diff_dim() {
        return Err(MneError::shape(
            "gradient accumulator shape differs from parameters",
        ));
    }

    // f' = W_A m + b_A
    param_grads
        .agg
        .weight
        .add_outer(1.0, grad_state, &tape.mixed);
    axpy(1.0, grad_state, &mut param_grads.agg.bias);
    let grad_mixed = params.agg.weight.matvec_t(grad_state);

    // m = f_u + Σ a_v f_v
    let mut grad_parent = grad_mixed.clone();
    let mut grad_children: Vec<Vec<f64>> = tape
        .weights
        .iter()
        .map(|&a| grad_mixed.iter().map(|g| a * g).collect())
        .collect();
    if kids == 0 {
        return Ok(AsaInputGrads {
            parent: grad_parent,
            children: grad_children,
        });
    }

    // a_v = p_v / S  =>  dL/dp_k = (g_a_k - Σ_v g_a_v a_v) / S
    let grad_weights: Vec<f64> = tape.children.iter().map(|c| dot(&grad_mixed, c)).collect();
    let total: f64 = tape.pairs.iter().map(|c| c.p).sum();
    let mean_term = dot(&grad_weights, &tape.weights);

    let w_s = params.score.weight.row(0);
    for (k, pair) in tape.pairs.iter().enumerate() {
        let grad_p = (grad_weights[k] - mean_term) / total + grad_probs[k];
        let grad_z = grad_p * pair.p * (1.0 - pair.p);
        if grad_z == 0.0 {
            continue;
        }
        let sq: Vec<f64> = pair.d.iter().map(|x| x * x).collect();
        param_grads.score.weight.add_outer(1.0, &[grad_z], &sq);
        param_grads.score.bias[0] += grad_z;
        // z = W_S (d∘d) + b_S  =>  dL/dd = 2 d ∘ (grad_z W_S)
        let grad_d: Vec<f64> = pair
            .d
            .iter()
            .zip(w_s)
            .map(|(d, w)| 2.0 * d * w * grad_z)
            .collect();
        param_grads
            .diff
            .weight
            .add_outer(1.0, &grad_d, &pair.diff_in);
        axpy(1.0, &grad_d, &mut param_grads.diff.bias);
        let grad_e = params.diff.weight.matvec_t(&grad_d);
        axpy(1.0, &grad_e, &mut grad_parent);
        axpy(-1.0, &grad_e, &mut grad_children[k]);
    }

    Ok(AsaInputGrads {
        parent: grad_parent,
        children: grad_children,
    })
}
