//! Labeled feature sets and episode sampling.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MneError, Result};
use crate::memory::ClassId;

/// Raw feature vectors with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<ClassId>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<ClassId>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(MneError::shape(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(d) = features.first().map(Vec::len) {
            if d == 0 {
                return Err(MneError::shape("features must have dimension >= 1"));
            }
            if let Some(i) = features.iter().position(|f| f.len() != d) {
                return Err(MneError::shape(format!(
                    "feature {i} has length {}, expected {d}",
                    features[i].len()
                )));
            }
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// `max(label) + 1`.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// Item indices grouped by class, classes in ascending order.
    pub fn class_index(&self) -> BTreeMap<ClassId, Vec<usize>> {
        let mut idx: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &y) in self.labels.iter().enumerate() {
            idx.entry(y).or_default().push(i);
        }
        idx
    }

    pub fn subset(&self, items: &[usize]) -> Dataset {
        Dataset {
            features: items.iter().map(|&i| self.features[i].clone()).collect(),
            labels: items.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Splits off the first `per_class` items of every class as queries; the
    /// remainder is the gallery. Returns `(query, gallery, query_items, gallery_items)`.
    pub fn split_queries(&self, per_class: usize) -> (Dataset, Dataset, Vec<usize>, Vec<usize>) {
        let mut q = Vec::new();
        let mut g = Vec::new();
        for items in self.class_index().values() {
            let cut = per_class.min(items.len());
            q.extend_from_slice(&items[..cut]);
            g.extend_from_slice(&items[cut..]);
        }
        q.sort_unstable();
        g.sort_unstable();
        (self.subset(&q), self.subset(&g), q, g)
    }
}

/// N-way M-shot with Q queries per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeShape {
    pub way: usize,
    pub shot: usize,
    pub queries: usize,
}

impl Default for EpisodeShape {
    fn default() -> Self {
        EpisodeShape {
            way: 5,
            shot: 1,
            queries: 15,
        }
    }
}

impl EpisodeShape {
    /// Items held in the per-episode memory: `N·(M + Q)`.
    pub fn memory_size(&self) -> usize {
        self.way * (self.shot + self.queries)
    }
}

/// One sampled task. `support[w * shot + s]` and `query[w * queries + q]`
/// are dataset item indices of way `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub classes: Vec<ClassId>,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
}

impl Episode {
    /// Support items followed by query items.
    pub fn items(&self) -> Vec<usize> {
        self.support.iter().chain(&self.query).copied().collect()
    }
}

pub fn sample_episode<R: Rng + ?Sized>(
    index: &BTreeMap<ClassId, Vec<usize>>,
    shape: EpisodeShape,
    rng: &mut R,
) -> Result<Episode> {
    if shape.way == 0 || shape.shot == 0 {
        return Err(MneError::Capacity {
            needed: 1,
            available: 0,
        });
    }
    let per_class = shape.shot + shape.queries;
    let eligible: Vec<ClassId> = index
        .iter()
        .filter(|(_, items)| items.len() >= per_class)
        .map(|(&c, _)| c)
        .collect();
    if eligible.len() < shape.way {
        return Err(MneError::Capacity {
            needed: shape.way,
            available: eligible.len(),
        });
    }
    let classes: Vec<ClassId> = eligible.choose_multiple(rng, shape.way).copied().collect();
    let mut support = Vec::with_capacity(shape.way * shape.shot);
    let mut query = Vec::with_capacity(shape.way * shape.queries);
    for c in &classes {
        let picked: Vec<usize> = index[c].choose_multiple(rng, per_class).copied().collect();
        support.extend_from_slice(&picked[..shape.shot]);
        query.extend_from_slice(&picked[shape.shot..]);
    }
    Ok(Episode {
        classes,
        support,
        query,
    })
}
