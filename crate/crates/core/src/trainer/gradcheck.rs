//! Finite-difference verification of the full training gradient: MLP
//! encoder, every ASA round and the classifier under `CE + λ·BCE`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Encoder, ModelParams};
use super::{tree_loss, TrainConfig};
use crate::asa::AsaParams;
use crate::embed::{neighbourhood_embed, AggregationMode};
use crate::error::Result;
use crate::losses::{total_loss, Classifier};
use crate::memory::{ClassId, EpisodicMemory};
use crate::numeric::{FiniteDiff, FiniteDiffReport};
use crate::treegraph::NeighbourhoodTree;

const MEMORY_SIZE: usize = 40;
const CLASSES: u32 = 3;
const HIDDEN: usize = 6;
/// Below this, rounding in the loss swamps gradient entries of order 1e-7.
pub const GRADCHECK_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckCase {
    pub seed: u64,
    pub dim: usize,
    pub k: usize,
    pub depth: usize,
    pub lambda: f64,
    /// Central-difference step.
    pub step: f64,
}

impl GradcheckCase {
    pub fn new(seed: u64, dim: usize, k: usize, depth: usize) -> Self {
        GradcheckCase {
            seed,
            dim,
            k,
            depth,
            lambda: 1.0,
            step: GRADCHECK_STEP,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Builds a random instance and compares analytic and numerical gradients
/// of the total loss over every parameter block. The tree structure is held
/// fixed while the root feature follows the encoder.
pub fn gradcheck_instance(case: &GradcheckCase) -> Result<FiniteDiffReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let dim = case.dim;
    let in_dim = dim + 2;

    let features: Vec<Vec<f64>> = (0..MEMORY_SIZE)
        .map(|_| uniform(&mut rng, dim, 1.0))
        .collect();
    let labels: Vec<ClassId> = (0..MEMORY_SIZE)
        .map(|_| rng.random_range(0..CLASSES))
        .collect();
    let memory = EpisodicMemory::from_labeled(&features, &labels)?;

    let mut encoder = Encoder::mlp(in_dim, HIDDEN, dim, &mut rng);
    for b in encoder.blocks_mut() {
        for v in b.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let asa: Vec<AsaParams> = (0..case.depth)
        .map(|_| {
            let mut p = AsaParams::init(dim, dim.max(2), &mut rng);
            for v in p
                .agg
                .bias
                .iter_mut()
                .chain(&mut p.diff.bias)
                .chain(&mut p.score.bias)
            {
                *v = rng.random_range(-0.3..0.3);
            }
            p
        })
        .collect();
    let mut params = ModelParams {
        encoder,
        asa,
        classifier: Classifier::init(CLASSES as usize, dim, &mut rng)?,
    };
    for v in params.classifier.weights.as_mut_slice() {
        *v *= 3.0;
    }

    let x = uniform(&mut rng, in_dim, 1.0);
    let label: ClassId = rng.random_range(0..CLASSES);
    let config = TrainConfig {
        k: case.k,
        depth: case.depth,
        lambda_bce: case.lambda,
        aggregation: AggregationMode::Attention,
        ..TrainConfig::retrieval()
    };

    let encoded = params.encode_cached(&x)?;
    let tree = NeighbourhoodTree::build(&encoded.feature, None, &memory, case.k, case.depth)?;
    let mut grads = params.zeros_like();
    tree_loss(
        &params, &encoded, &tree, label, &memory, &config, &mut grads,
    )?;
    let analytic = grads.to_flat_blocks();
    let theta = params.to_flat_blocks();

    let mut probe = params.clone();
    let mut probe_tree = tree.clone();
    let loss = |blocks: &[Vec<f64>]| -> Result<f64> {
        probe.load_flat_blocks(blocks)?;
        probe_tree.set_root_feature(probe.encode(&x)?)?;
        let mut out = neighbourhood_embed(&probe_tree, &probe.asa, AggregationMode::Attention)?;
        let (lb, _) = total_loss(
            &mut out,
            &probe_tree,
            &probe.asa,
            AggregationMode::Attention,
            label,
            &probe.classifier,
            &memory,
            case.lambda,
        )?;
        Ok(lb.total)
    };
    FiniteDiff {
        step: case.step,
        ..Default::default()
    }
    .check(loss, &theta, &analytic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases_pass() {
        for (seed, dim, k, depth) in [(1, 2, 1, 1), (2, 8, 3, 2), (3, 4, 2, 2)] {
            let r = gradcheck_instance(&GradcheckCase::new(seed, dim, k, depth)).unwrap();
            assert!(r.passed(), "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn depth_zero_still_checks_encoder_and_classifier() {
        let r = gradcheck_instance(&GradcheckCase::new(4, 5, 3, 0)).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.blocks.len(), 5);
    }
}
