//! Episodic feature memory.
//!
//! Entries are stored L2-normalized, so Euclidean ordering of neighbours is
//! the same as descending cosine ordering. Nearest-neighbour search is exact
//! brute force with ties broken by ascending id.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MneError, Result};
use crate::numeric::{l2_normalize, squared_distance};

pub type MemoryId = u64;
pub type ClassId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub id: MemoryId,
    pub feature: Vec<f64>,
    pub label: Option<ClassId>,
}

/// Anything that can tell the class of a stored instance.
pub trait LabelSource {
    fn label_of(&self, id: MemoryId) -> Option<ClassId>;
}

impl LabelSource for HashMap<MemoryId, ClassId> {
    fn label_of(&self, id: MemoryId) -> Option<ClassId> {
        self.get(&id).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory {
    dim: usize,
    entries: Vec<MemoryEntry>,
    index: HashMap<MemoryId, usize>,
    next_id: MemoryId,
}

impl EpisodicMemory {
    /// An empty memory of fixed dimension.
    pub fn new(dim: usize) -> Self {
        EpisodicMemory {
            dim,
            entries: Vec::new(),
            index: HashMap::new(),
            next_id: 0,
        }
    }

    /// Builds a labeled memory; ids are `0..N` in input order.
    pub fn from_labeled(features: &[Vec<f64>], labels: &[ClassId]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(MneError::shape(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        let mut mem = EpisodicMemory::new(dim);
        for (f, &y) in features.iter().zip(labels) {
            mem.push(f, Some(y))?;
        }
        Ok(mem)
    }

    /// Builds a memory whose entries carry no label.
    pub fn from_unlabeled(features: &[Vec<f64>]) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        let mut mem = EpisodicMemory::new(dim);
        mem.augment(features)?;
        Ok(mem)
    }

    fn push(&mut self, feature: &[f64], label: Option<ClassId>) -> Result<MemoryId> {
        if self.entries.is_empty() && self.dim == 0 {
            self.dim = feature.len();
        }
        if feature.len() != self.dim || self.dim == 0 {
            return Err(MneError::shape(format!(
                "memory dimension is {}, feature has length {}",
                self.dim,
                feature.len()
            )));
        }
        let feature = l2_normalize(feature)?;
        let id = self.next_id;
        self.next_id += 1;
        self.index.insert(id, self.entries.len());
        self.entries.push(MemoryEntry { id, feature, label });
        Ok(id)
    }

    /// Appends unlabeled entries with fresh ids and returns those ids.
    pub fn augment(&mut self, features: &[Vec<f64>]) -> Result<Vec<MemoryId>> {
        if let Some(f) = features
            .iter()
            .find(|f| self.dim != 0 && f.len() != self.dim)
        {
            return Err(MneError::shape(format!(
                "memory dimension is {}, feature has length {}",
                self.dim,
                f.len()
            )));
        }
        features.iter().map(|f| self.push(f, None)).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = MemoryId> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn contains(&self, id: MemoryId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn get(&self, id: MemoryId) -> Option<&MemoryEntry> {
        self.index.get(&id).map(|&i| &self.entries[i])
    }

    pub fn feature(&self, id: MemoryId) -> Option<&[f64]> {
        self.get(id).map(|e| e.feature.as_slice())
    }

    pub fn labeled_count(&self) -> usize {
        self.entries.iter().filter(|e| e.label.is_some()).count()
    }

    /// The `k` entries nearest to `query`, skipping ids in `exclude`.
    pub fn knn(&self, query: &[f64], k: usize, exclude: &[MemoryId]) -> Result<Vec<MemoryId>> {
        Ok(self
            .knn_with_distances(query, k, exclude)?
            .into_iter()
            .map(|(id, _)| id)
            .collect())
    }

    /// Like [`knn`](Self::knn) but also returns squared Euclidean distances
    /// between the normalized query and each stored feature.
    pub fn knn_with_distances(
        &self,
        query: &[f64],
        k: usize,
        exclude: &[MemoryId],
    ) -> Result<Vec<(MemoryId, f64)>> {
        if k == 0 {
            return Err(MneError::Capacity {
                needed: 1,
                available: 0,
            });
        }
        if query.len() != self.dim {
            return Err(MneError::shape(format!(
                "query has length {}, memory dimension is {}",
                query.len(),
                self.dim
            )));
        }
        let q = l2_normalize(query)?;
        let mut cand: Vec<(MemoryId, f64)> = self
            .entries
            .iter()
            .filter(|e| !exclude.contains(&e.id))
            .map(|e| (e.id, squared_distance(&q, &e.feature)))
            .collect();
        if cand.len() < k {
            return Err(MneError::Capacity {
                needed: k,
                available: cand.len(),
            });
        }
        let cmp = |a: &(MemoryId, f64), b: &(MemoryId, f64)| -> Ordering {
            a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
        };
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        cand.sort_unstable_by(cmp);
        Ok(cand)
    }

    /// Replaces stored features (normalized) for existing ids; labels untouched.
    pub fn update(&mut self, ids: &[MemoryId], new_features: &[Vec<f64>]) -> Result<()> {
        if ids.len() != new_features.len() {
            return Err(MneError::shape(format!(
                "{} ids but {} features",
                ids.len(),
                new_features.len()
            )));
        }
        // validate everything first so a failed call leaves memory intact
        let mut staged = Vec::with_capacity(ids.len());
        for (&id, f) in ids.iter().zip(new_features) {
            let slot = *self
                .index
                .get(&id)
                .ok_or_else(|| MneError::Lookup(format!("no memory entry with id {id}")))?;
            if f.len() != self.dim {
                return Err(MneError::shape(format!(
                    "memory dimension is {}, feature has length {}",
                    self.dim,
                    f.len()
                )));
            }
            staged.push((slot, l2_normalize(f)?));
        }
        for (slot, f) in staged {
            self.entries[slot].feature = f;
        }
        Ok(())
    }

    /// Uniform subsample without replacement of `round(ratio * N)` entries.
    /// Ids, labels and relative order are preserved.
    pub fn sample(&self, ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(MneError::Numeric(format!(
                "sampling ratio {ratio} not in (0, 1]"
            )));
        }
        let n = self.entries.len();
        let take = (ratio * n as f64).round() as usize;
        if take == 0 {
            return Err(MneError::Capacity {
                needed: 1,
                available: 0,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, take).into_vec();
        picked.sort_unstable();
        let entries: Vec<MemoryEntry> = picked
            .into_iter()
            .map(|i| self.entries[i].clone())
            .collect();
        let index = entries.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        Ok(EpisodicMemory {
            dim: self.dim,
            entries,
            index,
            next_id: self.next_id,
        })
    }
}

impl LabelSource for EpisodicMemory {
    fn label_of(&self, id: MemoryId) -> Option<ClassId> {
        self.get(id).and_then(|e| e.label)
    }
}
