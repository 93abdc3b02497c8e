//! Neighbourhood tree graphs.
//!
//! A tree of depth `H` is grown by `H` expansion rounds: every current leaf
//! gets its `K` nearest memory entries as children. A node never receives its
//! own memory id as a child, but the same instance may appear at many
//! positions in the tree. Nodes are stored breadth-first, so all nodes of one
//! depth are contiguous.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{MneError, Result};
use crate::memory::{EpisodicMemory, MemoryId};

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub memory_id: Option<MemoryId>,
    pub depth: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Initial state `f^0`: the target feature for the root, a snapshot of
    /// the memory feature otherwise.
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourhoodTree {
    nodes: Vec<TreeNode>,
    k: usize,
    depth: usize,
}

/// `Σ_{h=0..depth} k^h`.
pub fn full_tree_size(k: usize, depth: usize) -> usize {
    (0..=depth).map(|h| k.pow(h as u32)).sum()
}

impl NeighbourhoodTree {
    pub const ROOT: usize = 0;

    pub fn build(
        target: &[f64],
        target_id: Option<MemoryId>,
        mem: &EpisodicMemory,
        k: usize,
        depth: usize,
    ) -> Result<Self> {
        if k == 0 {
            return Err(MneError::Capacity {
                needed: 1,
                available: 0,
            });
        }
        if target.len() != mem.dim() && depth > 0 {
            return Err(MneError::shape(format!(
                "target has length {}, memory dimension is {}",
                target.len(),
                mem.dim()
            )));
        }
        let mut nodes = Vec::with_capacity(full_tree_size(k, depth));
        nodes.push(TreeNode {
            memory_id: target_id,
            depth: 0,
            parent: None,
            children: Vec::new(),
            feature: target.to_vec(),
        });

        // neighbour lists of memory instances are reused wherever they recur
        let mut cache: HashMap<MemoryId, Vec<MemoryId>> = HashMap::new();
        let mut frontier = vec![Self::ROOT];
        for level in 0..depth {
            let mut next = Vec::with_capacity(frontier.len() * k);
            for &v in &frontier {
                let neighbours = match nodes[v].memory_id {
                    Some(mid) if v != Self::ROOT => {
                        if !cache.contains_key(&mid) {
                            let res = mem.knn(&nodes[v].feature, k, &[mid])?;
                            cache.insert(mid, res);
                        }
                        cache[&mid].clone()
                    }
                    Some(mid) => mem.knn(&nodes[v].feature, k, &[mid])?,
                    None => mem.knn(&nodes[v].feature, k, &[])?,
                };
                for id in neighbours {
                    let idx = nodes.len();
                    let feature = mem.feature(id).expect("knn returns stored ids").to_vec();
                    nodes.push(TreeNode {
                        memory_id: Some(id),
                        depth: level + 1,
                        parent: Some(v),
                        children: Vec::new(),
                        feature,
                    });
                    nodes[v].children.push(idx);
                    next.push(idx);
                }
            }
            frontier = next;
        }
        Ok(NeighbourhoodTree { nodes, k, depth })
    }

    /// Swaps the root's initial state, keeping the tree structure. Used when
    /// the target is re-encoded while its neighbourhood stays fixed.
    pub fn set_root_feature(&mut self, feature: Vec<f64>) -> Result<()> {
        let root = &mut self.nodes[Self::ROOT];
        if feature.len() != root.feature.len() {
            return Err(MneError::shape(format!(
                "root feature has length {}, got {}",
                root.feature.len(),
                feature.len()
            )));
        }
        root.feature = feature;
        Ok(())
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[Self::ROOT]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Occurrence count of every memory id among the non-root nodes.
    pub fn node_frequency(&self) -> BTreeMap<MemoryId, usize> {
        let mut counts = BTreeMap::new();
        for n in &self.nodes[1..] {
            if let Some(id) = n.memory_id {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        counts
    }

    /// One line per node: `index depth parent memory_id`, `-` for absent values.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
            let mid = n.memory_id.map_or("-".to_string(), |m| m.to_string());
            let _ = writeln!(out, "{i} {} {parent} {mid}", n.depth);
        }
        out
    }
}
