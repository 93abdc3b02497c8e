//! Synthetic class-blob data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{MneError, Result};
use crate::numeric::{axpy, dot, l2_normalize, norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Within-class Gaussian noise per coordinate.
    pub sigma: f64,
    /// Distance between the two sub-modes of every class, if any. The
    /// sub-modes sit on either side of the class center along one direction
    /// shared by all classes, like a global appearance change between two cameras.
    pub bimodal: Option<f64>,
    /// Confines class centers to a random subspace of this rank shared by
    /// every class; noise still spans all dimensions.
    #[serde(default)]
    pub signal_rank: Option<usize>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.per_class < 2 {
            return Err(MneError::Capacity {
                needed: 2,
                available: self.classes.min(self.per_class),
            });
        }
        if self.dim == 0 {
            return Err(MneError::shape("dimension must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(MneError::Numeric(format!(
                "sigma {} must be finite and >= 0",
                self.sigma
            )));
        }
        if self.bimodal.is_some_and(|b| !(b >= 0.0 && b.is_finite())) {
            return Err(MneError::Numeric(
                "bimodal offset must be finite and >= 0".into(),
            ));
        }
        if let Some(r) = self.signal_rank {
            if r == 0 || r > self.dim {
                return Err(MneError::shape(format!(
                    "signal rank {r} not in 1..={}",
                    self.dim
                )));
            }
        }
        Ok(())
    }

    /// Sub-mode of every generated item: `0`/`1` alternating within a class
    /// when bimodal, all `0` otherwise.
    pub fn modes(&self) -> Vec<u32> {
        (0..self.classes * self.per_class)
            .map(|i| {
                if self.bimodal.is_some() {
                    (i % self.per_class % 2) as u32
                } else {
                    0
                }
            })
            .collect()
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = l2_normalize(&v) {
            return u;
        }
    }
}

fn orthonormal_basis(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v = unit_gaussian(rng, dim);
        for b in &basis {
            axpy(-dot(&v, b), b, &mut v);
        }
        if norm(&v) > 1e-6 {
            basis.push(l2_normalize(&v).expect("nonzero"));
        }
    }
    basis
}

/// `classes · per_class` items, class-major: unit-sphere centers plus
/// Gaussian noise, with the two sub-modes of a bimodal class placed at
/// `±offset/2` along the shared direction. With a signal rank, centers are
/// uniform on the unit sphere of the shared subspace.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| MneError::Numeric(e.to_string()))?;
    let mut features = Vec::with_capacity(spec.classes * spec.per_class);
    let mut labels = Vec::with_capacity(features.capacity());
    let direction = unit_gaussian(&mut rng, spec.dim);
    let basis = spec
        .signal_rank
        .map(|r| orthonormal_basis(&mut rng, spec.dim, r));
    for c in 0..spec.classes {
        let center = match &basis {
            Some(b) => {
                let coef = unit_gaussian(&mut rng, b.len());
                let mut c = vec![0.0; spec.dim];
                for (a, u) in coef.iter().zip(b) {
                    axpy(*a, u, &mut c);
                }
                c
            }
            None => unit_gaussian(&mut rng, spec.dim),
        };
        for i in 0..spec.per_class {
            let shift = match spec.bimodal {
                Some(off) if i % 2 == 0 => off / 2.0,
                Some(off) => -off / 2.0,
                None => 0.0,
            };
            let x: Vec<f64> = center
                .iter()
                .zip(&direction)
                .map(|(m, u)| m + shift * u + noise.sample(&mut rng))
                .collect();
            features.push(x);
            labels.push(c as u32);
        }
    }
    Dataset::new(features, labels)
}

/// Splits a class-major dataset into its first `first_classes` classes and the rest.
pub fn split_by_class(data: &Dataset, first_classes: u32) -> (Dataset, Dataset) {
    let (a, b): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.labels[i] < first_classes);
    let mut rest = data.subset(&b);
    for y in &mut rest.labels {
        *y -= first_classes;
    }
    (data.subset(&a), rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::AggregationMode;
    use crate::evalmetrics::{evaluate_fewshot, EmbedConfig};
    use crate::trainer::TrainConfig;
    use crate::EpisodeShape;

    fn spec(sigma: f64) -> SyntheticSpec {
        SyntheticSpec {
            classes: 10,
            per_class: 20,
            dim: 16,
            sigma,
            bimodal: None,
            signal_rank: None,
            seed: 3,
        }
    }

    #[test]
    fn zero_noise_classes_collapse() {
        let d = generate_synthetic(&spec(0.0)).unwrap();
        assert_eq!(d.len(), 200);
        for items in d.class_index().values() {
            for &i in items {
                assert_eq!(d.features[i], d.features[items[0]]);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&spec(0.3)).unwrap();
        let b = generate_synthetic(&spec(0.3)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(0.3);
        other.seed = 4;
        assert_ne!(a, generate_synthetic(&other).unwrap());
    }

    #[test]
    fn bimodal_sub_modes_are_separated() {
        let mut s = spec(0.0);
        s.bimodal = Some(1.0);
        let d = generate_synthetic(&s).unwrap();
        let gap: f64 = crate::numeric::squared_distance(&d.features[0], &d.features[1]).sqrt();
        assert!((gap - 1.0).abs() < 1e-12);
        assert_eq!(d.features[0], d.features[2]);
        assert_eq!(&s.modes()[..4], &[0, 1, 0, 1]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(0.1);
        s.classes = 1;
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec(-0.1);
        s.per_class = 5;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn small_noise_is_nearly_perfectly_separable() {
        let d = generate_synthetic(&spec(0.02)).unwrap();
        let params = TrainConfig {
            depth: 0,
            ..TrainConfig::retrieval()
        }
        .init_params(16, 10)
        .unwrap();
        let cfg = EmbedConfig {
            k: 1,
            depth: 0,
            mode: AggregationMode::Attention,
        };
        let r = evaluate_fewshot(&d, &params, EpisodeShape::default(), 100, 0, &cfg).unwrap();
        assert!(r.mean > 0.99, "{}", r.mean);
    }

    #[test]
    fn signal_rank_confines_centers() {
        let mut s = spec(0.0);
        s.signal_rank = Some(3);
        let d = generate_synthetic(&s).unwrap();
        let idx = d.class_index();
        let centers: Vec<&Vec<f64>> = (0..10).map(|c| &d.features[idx[&c][0]]).collect();
        for c in &centers {
            assert!((norm(c) - 1.0).abs() < 1e-12);
        }
        // any four centers in a rank-3 subspace are linearly dependent: the
        // Gram determinant vanishes
        let g: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| dot(centers[i], centers[j])).collect())
            .collect();
        assert!(det4(&g).abs() < 1e-10, "{}", det4(&g));
        s.signal_rank = Some(0);
        assert!(generate_synthetic(&s).is_err());
        s.signal_rank = Some(17);
        assert!(generate_synthetic(&s).is_err());
    }

    fn det4(m: &[Vec<f64>]) -> f64 {
        fn det(m: &[Vec<f64>]) -> f64 {
            if m.len() == 1 {
                return m[0][0];
            }
            (0..m.len())
                .map(|j| {
                    let minor: Vec<Vec<f64>> = m[1..]
                        .iter()
                        .map(|r| {
                            r.iter()
                                .enumerate()
                                .filter(|&(k, _)| k != j)
                                .map(|(_, v)| *v)
                                .collect()
                        })
                        .collect();
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sign * m[0][j] * det(&minor)
                })
                .sum()
        }
        det(m)
    }

    #[test]
    fn split_relabels_from_zero() {
        let d = generate_synthetic(&spec(0.1)).unwrap();
        let (a, b) = split_by_class(&d, 6);
        assert_eq!(a.len(), 120);
        assert_eq!(b.len(), 80);
        assert_eq!(b.num_classes(), 4);
    }
}
