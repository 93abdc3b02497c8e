//! Training objectives: softmax cross-entropy over neighbourhood embeddings
//! and binary cross-entropy over the pairwise same-class probabilities.

use rand::Rng;

use crate::asa::AsaParams;
use crate::embed::{embed_backward, AggregationMode, EmbedOutput, PairProbRecord};
use crate::error::{MneError, Result};
use crate::memory::{ClassId, LabelSource};
use crate::numeric::Matrix;
use crate::treegraph::NeighbourhoodTree;

/// Bias-free linear classifier, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub weights: Matrix,
}

impl Classifier {
    pub fn new(weights: Matrix) -> Result<Self> {
        if weights.rows() < 2 {
            return Err(MneError::shape(format!(
                "classifier needs at least 2 classes, got {}",
                weights.rows()
            )));
        }
        Ok(Classifier { weights })
    }

    pub fn init<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        Classifier::new(Matrix::fan_in_uniform(classes, dim, rng))
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights.matvec(x)
    }
}

#[derive(Debug, Clone)]
pub struct CeOutput {
    pub loss: f64,
    pub grad_embedding: Vec<f64>,
    pub grad_weights: Matrix,
}

/// Softmax cross-entropy of `label` given logits `W f`.
pub fn ce_loss(embedding: &[f64], label: ClassId, clf: &Classifier) -> Result<CeOutput> {
    let classes = clf.num_classes();
    if label as usize >= classes {
        return Err(MneError::Lookup(format!(
            "label {label} outside {classes} classes"
        )));
    }
    if embedding.len() != clf.dim() {
        return Err(MneError::shape(format!(
            "embedding has length {}, classifier expects {}",
            embedding.len(),
            clf.dim()
        )));
    }
    let logits = clf.logits(embedding);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label as usize];

    let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    delta[label as usize] -= 1.0;
    let grad_embedding = clf.weights.matvec_t(&delta);
    let mut grad_weights = Matrix::zeros(classes, clf.dim());
    grad_weights.add_outer(1.0, &delta, embedding);
    Ok(CeOutput {
        loss,
        grad_embedding,
        grad_weights,
    })
}

#[derive(Debug, Clone)]
pub struct BceOutput {
    pub loss: f64,
    /// `dL/dp` per record.
    pub grads: Vec<f64>,
}

// keeps ln() finite once a sigmoid saturates to exactly 0 or 1 in f64
const PROB_FLOOR: f64 = 1e-15;

/// Summed binary cross-entropy over supervised pair records.
pub fn bce_loss(records: &[PairProbRecord]) -> Result<BceOutput> {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let y = r
            .same_class
            .ok_or_else(|| MneError::State(format!("pair record {i} has no ground truth")))?;
        let p = r.prob.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        if y {
            loss -= p.ln();
            grads.push(-1.0 / p);
        } else {
            loss -= (1.0 - p).ln();
            grads.push(1.0 / (1.0 - p));
        }
    }
    Ok(BceOutput { loss, grads })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub bce: f64,
    pub total: f64,
    pub pair_count: usize,
}

/// Gradients of [`total_loss`] with respect to everything it depends on.
#[derive(Debug, Clone)]
pub struct LossGrads {
    pub asa: Vec<AsaParams>,
    pub classifier: Matrix,
    /// Gradient with respect to the root's initial state (the target feature).
    pub root: Vec<f64>,
}

/// Labels every record with `same_class` from the tree's node classes. The
/// root takes `target_label`; every other node is looked up by memory id.
pub fn label_records(
    output: &mut EmbedOutput,
    tree: &NeighbourhoodTree,
    target_label: ClassId,
    labels: &dyn LabelSource,
) -> Result<()> {
    let node_label = |i: usize| -> Result<ClassId> {
        if i == NeighbourhoodTree::ROOT {
            return Ok(target_label);
        }
        let node = tree.node(i);
        node.memory_id
            .and_then(|id| labels.label_of(id))
            .ok_or_else(|| {
                MneError::State(format!("tree node {i} ({:?}) has no label", node.memory_id))
            })
    };
    for r in &mut output.records {
        r.same_class = Some(node_label(r.parent)? == node_label(r.child)?);
    }
    Ok(())
}

/// `CE + λ·BCE` for one target, with gradients through the whole embedding.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    output: &mut EmbedOutput,
    tree: &NeighbourhoodTree,
    params: &[AsaParams],
    mode: AggregationMode,
    target_label: ClassId,
    clf: &Classifier,
    labels: &dyn LabelSource,
    lambda: f64,
) -> Result<(LossBreakdown, LossGrads)> {
    if !(lambda >= 0.0) {
        return Err(MneError::Numeric(format!(
            "BCE weight {lambda} must be >= 0"
        )));
    }
    label_records(output, tree, target_label, labels)?;
    let ce = ce_loss(&output.embedding, target_label, clf)?;
    let bce = bce_loss(&output.records)?;
    let grad_probs: Vec<f64> = bce.grads.iter().map(|g| lambda * g).collect();
    let eg = embed_backward(output, tree, params, &ce.grad_embedding, &grad_probs)?;
    let asa = match mode {
        AggregationMode::Attention => eg.asa,
        // mean/max never touch the ASA parameters
        _ => params.iter().map(AsaParams::zeros_like).collect(),
    };
    Ok((
        LossBreakdown {
            ce: ce.loss,
            bce: bce.loss,
            total: ce.loss + lambda * bce.loss,
            pair_count: output.records.len(),
        },
        LossGrads {
            asa,
            classifier: ce.grad_weights,
            root: eg.root,
        },
    ))
}
