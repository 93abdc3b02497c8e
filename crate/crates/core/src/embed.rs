//! Aggregative neighbourhood embedding.
//!
//! Round `r` (1-based) updates every branch node of the current tree from its
//! own state and its children's states of round `r - 1`, then the leaves are
//! dropped. After `H` rounds only the root is left and its state, L2
//! normalized, is the embedding.
//!
//! Because trees are stored breadth-first, the nodes alive after round `r`
//! are exactly the prefix `0..full_tree_size(K, H - r)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asa::{asa_backward, asa_forward, AsaParams, AsaTape};
use crate::error::{MneError, Result};
use crate::memory::{EpisodicMemory, MemoryId};
use crate::numeric::{axpy, l2_normalize, l2_normalize_backward};
use crate::treegraph::{full_tree_size, NeighbourhoodTree};

/// How a branch node folds its children in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Learned supervised attention (ASA).
    Attention,
    /// `f_u + mean(children)`, no learned map.
    Mean,
    /// Elementwise max over the parent and its children.
    Max,
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::Attention => "attention",
            AggregationMode::Mean => "mean",
            AggregationMode::Max => "max",
        })
    }
}

impl FromStr for AggregationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "attention" => Ok(AggregationMode::Attention),
            "mean" => Ok(AggregationMode::Mean),
            "max" => Ok(AggregationMode::Max),
            other => Err(format!(
                "unknown aggregation mode '{other}' (expected attention, mean or max)"
            )),
        }
    }
}

/// Same-class probability between a parent and one of its children in one
/// aggregation round.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProbRecord {
    pub parent: usize,
    pub child: usize,
    pub round: usize,
    pub prob: f64,
    pub same_class: Option<bool>,
}

#[derive(Debug, Clone)]
enum NodeTape {
    Attention(AsaTape),
    Mean {
        children: usize,
    },
    /// For each coordinate, which input won: 0 is the parent, `k + 1` child `k`.
    Max {
        winners: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct RoundCache {
    /// One tape per branch node, indexed by node.
    tapes: Vec<NodeTape>,
    /// Offset of each node's first record in `EmbedOutput::records`.
    record_offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
struct EmbedCache {
    mode: AggregationMode,
    states: Vec<Vec<Vec<f64>>>,
    rounds: Vec<RoundCache>,
}

#[derive(Debug, Clone)]
pub struct EmbedOutput {
    /// Unit-norm neighbourhood embedding.
    pub embedding: Vec<f64>,
    /// Every (parent, child) probability, ordered by round, then parent, then child.
    pub records: Vec<PairProbRecord>,
    cache: Option<EmbedCache>,
}

impl EmbedOutput {
    /// States of the surviving nodes after `round` aggregation rounds.
    pub fn round_states(&self, round: usize) -> Option<&[Vec<f64>]> {
        self.cache.as_ref()?.states.get(round).map(Vec::as_slice)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Drops backward intermediates.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }
}

fn mean_aggregate(parent: &[f64], children: &[&[f64]]) -> Vec<f64> {
    let mut out = parent.to_vec();
    if !children.is_empty() {
        let w = 1.0 / children.len() as f64;
        for c in children {
            axpy(w, c, &mut out);
        }
    }
    out
}

fn max_aggregate(parent: &[f64], children: &[&[f64]]) -> (Vec<f64>, Vec<usize>) {
    let mut out = parent.to_vec();
    let mut winners = vec![0; parent.len()];
    for (k, c) in children.iter().enumerate() {
        for i in 0..out.len() {
            if c[i] > out[i] {
                out[i] = c[i];
                winners[i] = k + 1;
            }
        }
    }
    (out, winners)
}

/// Runs all aggregation rounds over `tree`. `params` must hold one entry per
/// round in attention mode and is ignored otherwise.
pub fn neighbourhood_embed(
    tree: &NeighbourhoodTree,
    params: &[AsaParams],
    mode: AggregationMode,
) -> Result<EmbedOutput> {
    let depth = tree.depth();
    let k = tree.k();
    if mode == AggregationMode::Attention && params.len() != depth {
        return Err(MneError::shape(format!(
            "tree depth is {depth} but {} ASA rounds were given",
            params.len()
        )));
    }

    let mut states: Vec<Vec<Vec<f64>>> =
        vec![tree.nodes().iter().map(|n| n.feature.clone()).collect()];
    let mut rounds = Vec::with_capacity(depth);
    let mut records = Vec::new();

    for round in 1..=depth {
        let alive = full_tree_size(k, depth - round);
        let prev = &states[round - 1];
        let mut next = Vec::with_capacity(alive);
        let mut tapes = Vec::with_capacity(alive);
        let mut record_offsets = Vec::with_capacity(alive);
        for u in 0..alive {
            let node = tree.node(u);
            record_offsets.push(records.len());
            match mode {
                AggregationMode::Attention => {
                    let kids: Vec<Vec<f64>> =
                        node.children.iter().map(|&c| prev[c].clone()).collect();
                    let out = asa_forward(&prev[u], &kids, &params[round - 1])?;
                    for (&c, &p) in node.children.iter().zip(&out.probs) {
                        records.push(PairProbRecord {
                            parent: u,
                            child: c,
                            round,
                            prob: p,
                            same_class: None,
                        });
                    }
                    next.push(out.state);
                    tapes.push(NodeTape::Attention(out.tape));
                }
                AggregationMode::Mean => {
                    let kids: Vec<&[f64]> =
                        node.children.iter().map(|&c| prev[c].as_slice()).collect();
                    next.push(mean_aggregate(&prev[u], &kids));
                    tapes.push(NodeTape::Mean {
                        children: kids.len(),
                    });
                }
                AggregationMode::Max => {
                    let kids: Vec<&[f64]> =
                        node.children.iter().map(|&c| prev[c].as_slice()).collect();
                    let (out, winners) = max_aggregate(&prev[u], &kids);
                    next.push(out);
                    tapes.push(NodeTape::Max { winners });
                }
            }
        }
        states.push(next);
        rounds.push(RoundCache {
            tapes,
            record_offsets,
        });
    }

    let embedding = l2_normalize(&states[depth][NeighbourhoodTree::ROOT])?;
    Ok(EmbedOutput {
        embedding,
        records,
        cache: Some(EmbedCache {
            mode,
            states,
            rounds,
        }),
    })
}

/// Gradients of one embedding pass.
#[derive(Debug, Clone)]
pub struct EmbedGrads {
    /// One accumulator per round; empty for mean/max.
    pub asa: Vec<AsaParams>,
    /// Gradient with respect to the root's initial state.
    pub root: Vec<f64>,
}

/// Reverse pass of [`neighbourhood_embed`]. Child initial states are memory
/// snapshots and get no gradient; only the root's `f^0` does.
pub fn embed_backward(
    output: &EmbedOutput,
    tree: &NeighbourhoodTree,
    params: &[AsaParams],
    grad_embedding: &[f64],
    grad_probs: &[f64],
) -> Result<EmbedGrads> {
    let cache = output
        .cache
        .as_ref()
        .ok_or_else(|| MneError::State("embedding output has no backward cache".into()))?;
    let depth = tree.depth();
    if cache.states.len() != depth + 1 {
        return Err(MneError::State(
            "embedding cache does not match tree depth".into(),
        ));
    }
    if grad_probs.len() != output.records.len() {
        return Err(MneError::shape(format!(
            "{} probability gradients for {} records",
            grad_probs.len(),
            output.records.len()
        )));
    }
    let dim = output.embedding.len();
    if grad_embedding.len() != dim {
        return Err(MneError::shape(format!(
            "embedding gradient has length {}, expected {dim}",
            grad_embedding.len()
        )));
    }
    let mut asa_grads: Vec<AsaParams> = match cache.mode {
        AggregationMode::Attention => params.iter().map(AsaParams::zeros_like).collect(),
        _ => Vec::new(),
    };

    let mut grad_states = vec![l2_normalize_backward(
        &cache.states[depth][NeighbourhoodTree::ROOT],
        grad_embedding,
    )];
    for round in (1..=depth).rev() {
        let alive_prev = cache.states[round - 1].len();
        let mut grad_prev = vec![vec![0.0; dim]; alive_prev];
        let rc = &cache.rounds[round - 1];
        for (u, g_out) in grad_states.iter().enumerate() {
            let node = tree.node(u);
            match &rc.tapes[u] {
                NodeTape::Attention(tape) => {
                    let off = rc.record_offsets[u];
                    let gp = &grad_probs[off..off + tape.child_count()];
                    let ig = asa_backward(
                        tape,
                        &params[round - 1],
                        g_out,
                        gp,
                        &mut asa_grads[round - 1],
                    )?;
                    axpy(1.0, &ig.parent, &mut grad_prev[u]);
                    for (&c, gc) in node.children.iter().zip(&ig.children) {
                        axpy(1.0, gc, &mut grad_prev[c]);
                    }
                }
                NodeTape::Mean { children } => {
                    axpy(1.0, g_out, &mut grad_prev[u]);
                    if *children > 0 {
                        let w = 1.0 / *children as f64;
                        for &c in &node.children {
                            axpy(w, g_out, &mut grad_prev[c]);
                        }
                    }
                }
                NodeTape::Max { winners } => {
                    for (i, &w) in winners.iter().enumerate() {
                        let target = if w == 0 { u } else { node.children[w - 1] };
                        grad_prev[target][i] += g_out[i];
                    }
                }
            }
        }
        grad_states = grad_prev;
    }

    Ok(EmbedGrads {
        asa: asa_grads,
        root: grad_states.swap_remove(NeighbourhoodTree::ROOT),
    })
}

/// Builds a tree and embeds it for every target, in parallel, preserving
/// order. Returned outputs carry no backward cache.
pub fn batch_embed(
    targets: &[(Vec<f64>, Option<MemoryId>)],
    mem: &EpisodicMemory,
    params: &[AsaParams],
    k: usize,
    depth: usize,
    mode: AggregationMode,
) -> Result<Vec<EmbedOutput>> {
    targets
        .par_iter()
        .map(|(f, id)| {
            let tree = NeighbourhoodTree::build(f, *id, mem, k, depth)?;
            Ok(neighbourhood_embed(&tree, params, mode)?.without_cache())
        })
        .collect()
}
