//! Retrieval metrics (mAP, rank-1) and transductive few-shot evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asa::AsaParams;
use crate::dataset::{sample_episode, Dataset, EpisodeShape};
use crate::embed::{batch_embed, AggregationMode};
use crate::error::{MneError, Result};
use crate::memory::{ClassId, EpisodicMemory, MemoryId};
use crate::numeric::{dot, norm};
use crate::trainer::ModelParams;

/// A ranked gallery for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub query: usize,
    /// Gallery indices, most similar first.
    pub order: Vec<usize>,
    /// `relevant[r]` tells whether the item at rank `r` matches the query.
    pub relevant: Vec<bool>,
}

impl RankingResult {
    pub fn average_precision(&self) -> Result<f64> {
        average_precision(&self.relevant)
    }

    pub fn top1_relevant(&self) -> bool {
        self.relevant.first().copied().unwrap_or(false)
    }
}

/// `(1/R) Σ_{k: rel(k)} precision@k` over a relevance mask in rank order.
pub fn average_precision(relevant: &[bool]) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(MneError::Degenerate(
            "no relevant item in the ranking".into(),
        ));
    }
    Ok(sum / hits as f64)
}

/// Gallery indices by descending dot product with `query`; equal scores keep
/// the lower index first.
pub fn rank_by_similarity(query: &[f64], gallery: &[Vec<f64>]) -> Vec<usize> {
    let scores: Vec<f64> = gallery.iter().map(|g| dot(query, g)).collect();
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// How neighbourhood embeddings are computed at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub k: usize,
    pub depth: usize,
    pub mode: AggregationMode,
}

impl EmbedConfig {
    fn asa<'a>(&self, params: &'a ModelParams) -> Result<&'a [AsaParams]> {
        match self.mode {
            AggregationMode::Attention if params.asa.len() < self.depth => {
                Err(MneError::shape(format!(
                    "depth {} needs {} ASA rounds, model has {}",
                    self.depth,
                    self.depth,
                    params.asa.len()
                )))
            }
            AggregationMode::Attention => Ok(&params.asa[..self.depth]),
            _ => Ok(&[]),
        }
    }
}

/// Optional filtering applied when ranking the gallery of each query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalProtocol {
    /// Camera per query / gallery item. Gallery items of the query's identity
    /// seen by the query's camera are dropped from its ranking.
    pub cameras: Option<(Vec<u32>, Vec<u32>)>,
    /// Source instance per query / gallery item. A gallery item with the
    /// query's own source id is dropped from its ranking.
    pub sources: Option<(Vec<u64>, Vec<u64>)>,
    /// Keep this fraction of the evaluation memory (seeded), as in memory-size sweeps.
    pub memory_sample_ratio: Option<f64>,
    pub sample_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub map: f64,
    pub rank1: f64,
    pub scored: usize,
    /// Queries without any relevant gallery item.
    pub skipped: usize,
}

impl RetrievalReport {
    pub fn to_kv(&self) -> String {
        format!(
            "map={:.6}\nrank1={:.6}\nscored={}\nskipped={}\n",
            self.map, self.rank1, self.scored, self.skipped
        )
    }
}

/// Ranks every query against the gallery and aggregates mAP and rank-1.
pub fn score_rankings(
    query_emb: &[Vec<f64>],
    query_labels: &[ClassId],
    gallery_emb: &[Vec<f64>],
    gallery_labels: &[ClassId],
    protocol: &RetrievalProtocol,
) -> Result<(RetrievalReport, Vec<RankingResult>)> {
    if gallery_emb.is_empty() {
        return Err(MneError::Degenerate("empty gallery".into()));
    }
    if let Some((q, g)) = &protocol.cameras {
        if q.len() != query_emb.len() || g.len() != gallery_emb.len() {
            return Err(MneError::shape(
                "camera lists must match query and gallery sizes",
            ));
        }
    }
    if let Some((q, g)) = &protocol.sources {
        if q.len() != query_emb.len() || g.len() != gallery_emb.len() {
            return Err(MneError::shape(
                "source lists must match query and gallery sizes",
            ));
        }
    }
    let rankings: Vec<RankingResult> = query_emb
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let keep = |g: usize| {
                let same_cam = protocol.cameras.as_ref().is_some_and(|(qc, gc)| {
                    qc[qi] == gc[g] && query_labels[qi] == gallery_labels[g]
                });
                let same_src = protocol
                    .sources
                    .as_ref()
                    .is_some_and(|(qs, gs)| qs[qi] == gs[g]);
                !same_cam && !same_src
            };
            let order: Vec<usize> = rank_by_similarity(q, gallery_emb)
                .into_iter()
                .filter(|&g| keep(g))
                .collect();
            let relevant = order
                .iter()
                .map(|&g| gallery_labels[g] == query_labels[qi])
                .collect();
            RankingResult {
                query: qi,
                order,
                relevant,
            }
        })
        .collect();

    let mut ap_sum = 0.0;
    let mut top1 = 0usize;
    let mut scored = 0usize;
    for r in &rankings {
        if let Ok(ap) = r.average_precision() {
            ap_sum += ap;
            scored += 1;
            top1 += r.top1_relevant() as usize;
        }
    }
    let skipped = rankings.len() - scored;
    let (map, rank1) = if scored == 0 {
        (0.0, 0.0)
    } else {
        (ap_sum / scored as f64, top1 as f64 / scored as f64)
    };
    Ok((
        RetrievalReport {
            map,
            rank1,
            scored,
            skipped,
        },
        rankings,
    ))
}

/// Neighbourhood embeddings of queries and gallery plus their scores.
#[derive(Debug, Clone)]
pub struct RetrievalEvaluation {
    pub report: RetrievalReport,
    pub query_embeddings: Vec<Vec<f64>>,
    pub gallery_embeddings: Vec<Vec<f64>>,
    pub rankings: Vec<RankingResult>,
}

/// Builds the evaluation memory from the encoded training set (labeled) and
/// gallery (unlabeled), embeds every query and gallery item against it and
/// ranks by cosine similarity.
pub fn evaluate_retrieval(
    train: Option<&Dataset>,
    queries: &Dataset,
    gallery: &Dataset,
    params: &ModelParams,
    config: &EmbedConfig,
    protocol: &RetrievalProtocol,
) -> Result<RetrievalEvaluation> {
    if gallery.is_empty() {
        return Err(MneError::Degenerate("empty gallery".into()));
    }
    let asa = config.asa(params)?;
    let encode_raw = |d: &Dataset| -> Result<Vec<Vec<f64>>> {
        d.features
            .par_iter()
            .map(|x| params.encoder.forward(x))
            .collect()
    };

    let mut memory = match train {
        Some(t) if !t.is_empty() => EpisodicMemory::from_labeled(&encode_raw(t)?, &t.labels)?,
        _ => EpisodicMemory::new(params.dim()),
    };
    let gallery_ids = memory.augment(&encode_raw(gallery)?)?;
    if let Some(ratio) = protocol.memory_sample_ratio {
        memory = memory.sample(ratio, protocol.sample_seed)?;
    }

    let q_targets: Vec<(Vec<f64>, Option<MemoryId>)> = params
        .encode_all(&queries.features)?
        .into_iter()
        .map(|f| (f, None))
        .collect();
    let g_targets: Vec<(Vec<f64>, Option<MemoryId>)> = params
        .encode_all(&gallery.features)?
        .into_iter()
        .zip(gallery_ids)
        .map(|(f, id)| (f, Some(id)))
        .collect();
    let embed = |t: &[(Vec<f64>, Option<MemoryId>)]| -> Result<Vec<Vec<f64>>> {
        Ok(
            batch_embed(t, &memory, asa, config.k, config.depth, config.mode)?
                .into_iter()
                .map(|o| o.embedding)
                .collect(),
        )
    };
    let query_embeddings = embed(&q_targets)?;
    let gallery_embeddings = embed(&g_targets)?;
    let (report, rankings) = score_rankings(
        &query_embeddings,
        &queries.labels,
        &gallery_embeddings,
        &gallery.labels,
        protocol,
    )?;
    Ok(RetrievalEvaluation {
        report,
        query_embeddings,
        gallery_embeddings,
        rankings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotReport {
    pub episodes: usize,
    pub mean: f64,
    /// `1.96 · s / √E` with the sample standard deviation `s`.
    pub ci95: f64,
    pub accuracies: Vec<f64>,
}

impl FewShotReport {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Result<Self> {
        let e = accuracies.len();
        if e == 0 {
            return Err(MneError::Degenerate("no episodes".into()));
        }
        let constant = accuracies.iter().all(|&a| a == accuracies[0]);
        let mean = if constant {
            accuracies[0]
        } else {
            accuracies.iter().sum::<f64>() / e as f64
        };
        let ci95 = if e < 2 || constant {
            0.0
        } else {
            let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (e - 1) as f64;
            1.96 * var.sqrt() / (e as f64).sqrt()
        };
        Ok(FewShotReport {
            episodes: e,
            mean,
            ci95,
            accuracies,
        })
    }

    pub fn to_kv(&self) -> String {
        format!(
            "episodes={}\nmean={:.6}\nci95={:.6}\n",
            self.episodes, self.mean, self.ci95
        )
    }
}

/// Index of the prototype with the highest cosine similarity to `query`.
/// Ties go to the prototype whose class id is lowest.
pub fn nearest_prototype(query: &[f64], prototypes: &[Vec<f64>], classes: &[ClassId]) -> usize {
    let mut ways: Vec<usize> = (0..prototypes.len()).collect();
    ways.sort_by_key(|&w| classes[w]);
    let cosine = |p: &[f64]| {
        let n = norm(p) * norm(query);
        if n == 0.0 {
            f64::NEG_INFINITY
        } else {
            dot(query, p) / n
        }
    };
    let mut best = ways[0];
    let mut best_score = cosine(&prototypes[best]);
    for &w in &ways[1..] {
        let s = cosine(&prototypes[w]);
        if s > best_score {
            best = w;
            best_score = s;
        }
    }
    best
}

/// Class-mean prototypes of `support_emb` laid out as `[way * shot + s]`.
pub fn prototypes(support_emb: &[Vec<f64>], way: usize, shot: usize) -> Vec<Vec<f64>> {
    (0..way)
        .map(|w| {
            let mut p = vec![0.0; support_emb[w * shot].len()];
            for s in &support_emb[w * shot..(w + 1) * shot] {
                crate::numeric::axpy(1.0 / shot as f64, s, &mut p);
            }
            p
        })
        .collect()
}

/// Accuracy on one sampled episode.
pub fn fewshot_episode(
    data: &Dataset,
    params: &ModelParams,
    shape: EpisodeShape,
    index: &BTreeMap<ClassId, Vec<usize>>,
    config: &EmbedConfig,
    episode_seed: u64,
) -> Result<f64> {
    let asa = config.asa(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
    let ep = sample_episode(index, shape, &mut rng)?;
    let items = ep.items();
    let raw: Vec<Vec<f64>> = items
        .iter()
        .map(|&i| params.encoder.forward(&data.features[i]))
        .collect::<Result<_>>()?;
    // query labels stay hidden: the memory is unlabeled
    let memory = EpisodicMemory::from_unlabeled(&raw)?;
    let targets: Vec<(Vec<f64>, Option<MemoryId>)> = items
        .iter()
        .enumerate()
        .map(|(slot, _)| {
            let id = slot as MemoryId;
            (
                memory.feature(id).expect("slot ids are dense").to_vec(),
                Some(id),
            )
        })
        .collect();
    let emb: Vec<Vec<f64>> =
        batch_embed(&targets, &memory, asa, config.k, config.depth, config.mode)?
            .into_iter()
            .map(|o| o.embedding)
            .collect();
    let n_support = ep.support.len();
    let protos = prototypes(&emb[..n_support], shape.way, shape.shot);
    let correct = (0..ep.query.len())
        .filter(|&q| {
            nearest_prototype(&emb[n_support + q], &protos, &ep.classes) == q / shape.queries
        })
        .count();
    Ok(if ep.query.is_empty() {
        0.0
    } else {
        correct as f64 / ep.query.len() as f64
    })
}

/// Mean accuracy and 95% interval over `episodes` sampled tasks; episode `e`
/// is drawn with seed `seed + e`.
pub fn evaluate_fewshot(
    data: &Dataset,
    params: &ModelParams,
    shape: EpisodeShape,
    episodes: usize,
    seed: u64,
    config: &EmbedConfig,
) -> Result<FewShotReport> {
    if shape.queries == 0 {
        return Err(MneError::Degenerate(
            "few-shot evaluation needs queries".into(),
        ));
    }
    let index = data.class_index();
    let accuracies: Vec<f64> = (0..episodes as u64)
        .into_par_iter()
        .map(|e| fewshot_episode(data, params, shape, &index, config, seed.wrapping_add(e)))
        .collect::<Result<_>>()?;
    FewShotReport::from_accuracies(accuracies)
}

/// CSV with a header row followed by one row per entry of `rows`.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::l2_normalize;
    use crate::trainer::TrainConfig;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn oracle_ap(scores: &[f64], relevant: &[bool]) -> f64 {
        // precision at every relevant item's position, positions found by counting
        let mut hits: Vec<(usize, f64)> = Vec::new();
        for i in 0..scores.len() {
            if !relevant[i] {
                continue;
            }
            let rank_i = (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            let rel_above = (0..scores.len())
                .filter(|&j| {
                    relevant[j] && (scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                })
                .count();
            hits.push((rank_i, (rel_above + 1) as f64 / (rank_i + 1) as f64));
        }
        hits.sort_by_key(|h| h.0);
        hits.iter().map(|h| h.1).fold(0.0, |a, b| a + b) / hits.len() as f64
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true, false, false]).unwrap(), 1.0);
        let ap = average_precision(&[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - 0.833_333_333_3).abs() < 1e-9);
        assert!(matches!(
            average_precision(&[false, false]),
            Err(MneError::Degenerate(_))
        ));
    }

    #[test]
    fn ap_matches_oracle_on_random_rankings() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.random_range(1..30);
            let mut relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            relevant[rng.random_range(0..n)] = true;
            let mut scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
            scores.shuffle(&mut rng);
            let order =
                rank_by_similarity(&[1.0], &scores.iter().map(|&s| vec![s]).collect::<Vec<_>>());
            let mask: Vec<bool> = order.iter().map(|&g| relevant[g]).collect();
            assert_eq!(
                average_precision(&mask).unwrap(),
                oracle_ap(&scores, &relevant)
            );
        }
    }

    proptest! {
        #[test]
        fn ap_invariant_under_monotone_transform(
            raw in prop::collection::vec((-10.0f64..10.0, any::<bool>()), 1..40)
        ) {
            prop_assume!(raw.iter().any(|r| r.1));
            let gallery: Vec<Vec<f64>> = raw.iter().map(|r| vec![r.0]).collect();
            let warped: Vec<Vec<f64>> = raw.iter().map(|r| vec![r.0.exp() * 3.0 + 1.0]).collect();
            let mask = |g: &[Vec<f64>]| -> Vec<bool> {
                rank_by_similarity(&[1.0], g).iter().map(|&i| raw[i].1).collect()
            };
            let a = average_precision(&mask(&gallery)).unwrap();
            let b = average_precision(&mask(&warped)).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn ranking_ties_prefer_lower_index() {
        let g = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(rank_by_similarity(&[1.0, 0.0], &g), vec![0, 2, 1]);
    }

    fn blobs(classes: u32, per: usize, dim: usize, sigma: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Vec::new();
        let mut l = Vec::new();
        for c in 0..classes {
            let center = l2_normalize(
                &(0..dim)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            for _ in 0..per {
                f.push(
                    center
                        .iter()
                        .map(|v| v + sigma * rng.random_range(-1.0..1.0))
                        .collect(),
                );
                l.push(c);
            }
        }
        Dataset::new(f, l).unwrap()
    }

    fn identity_params(dim: usize, depth: usize, classes: usize) -> ModelParams {
        let cfg = TrainConfig {
            depth,
            ..TrainConfig::retrieval()
        };
        cfg.init_params(dim, classes).unwrap()
    }

    #[test]
    fn duplicate_gallery_is_perfect() {
        let data = blobs(5, 4, 6, 0.0, 1);
        let (q, g, _, _) = data.split_queries(1);
        let params = identity_params(6, 2, 5);
        for depth in [0, 2] {
            let cfg = EmbedConfig {
                k: 2,
                depth,
                mode: AggregationMode::Attention,
            };
            let ev = evaluate_retrieval(None, &q, &g, &params, &cfg, &RetrievalProtocol::default())
                .unwrap();
            assert_eq!(ev.report.map, 1.0);
            assert_eq!(ev.report.rank1, 1.0);
            assert_eq!(ev.report.scored, 5);
        }
    }

    #[test]
    fn depth_zero_equals_plain_cosine() {
        let data = blobs(20, 6, 8, 0.8, 2);
        let (q, g, _, _) = data.split_queries(2);
        let params = identity_params(8, 0, 20);
        let cfg = EmbedConfig {
            k: 3,
            depth: 0,
            mode: AggregationMode::Attention,
        };
        let ev = evaluate_retrieval(
            Some(&data),
            &q,
            &g,
            &params,
            &cfg,
            &RetrievalProtocol::default(),
        )
        .unwrap();
        let cos = |a: &[f64], b: &[f64]| dot(a, b) / (norm(a) * norm(b));
        let mut ap = 0.0;
        for (qi, x) in q.features.iter().enumerate() {
            let mut idx: Vec<usize> = (0..g.len()).collect();
            idx.sort_by(|&a, &b| {
                cos(x, &g.features[b])
                    .total_cmp(&cos(x, &g.features[a]))
                    .then(a.cmp(&b))
            });
            assert_eq!(ev.rankings[qi].order, idx);
            let scores: Vec<f64> = g.features.iter().map(|y| cos(x, y)).collect();
            let rel: Vec<bool> = g.labels.iter().map(|&y| y == q.labels[qi]).collect();
            ap += oracle_ap(&scores, &rel);
        }
        assert!((ev.report.map - ap / q.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn protocol_filters_apply() {
        let gallery = vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]];
        let queries = vec![vec![1.0, 0.0]];
        let p = RetrievalProtocol {
            sources: Some((vec![7], vec![7, 8, 9])),
            ..Default::default()
        };
        let (_, r) = score_rankings(&queries, &[0], &gallery, &[0, 0, 1], &p).unwrap();
        assert_eq!(r[0].order, vec![1, 2]);
        let p = RetrievalProtocol {
            cameras: Some((vec![1], vec![1, 2, 1])),
            ..Default::default()
        };
        let (_, r) = score_rankings(&queries, &[0], &gallery, &[0, 0, 1], &p).unwrap();
        // same camera but different identity survives
        assert_eq!(r[0].order, vec![1, 2]);
    }

    #[test]
    fn query_without_match_is_skipped() {
        let (rep, _) = score_rankings(
            &[vec![1.0], vec![1.0]],
            &[0, 5],
            &[vec![1.0], vec![-1.0]],
            &[0, 1],
            &RetrievalProtocol::default(),
        )
        .unwrap();
        assert_eq!(rep.scored, 1);
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.map, 1.0);
    }

    #[test]
    fn fewshot_zero_noise_is_perfect() {
        let data = blobs(6, 20, 8, 0.0, 3);
        let params = identity_params(8, 2, 6);
        let cfg = EmbedConfig {
            k: 4,
            depth: 2,
            mode: AggregationMode::Attention,
        };
        let r = evaluate_fewshot(&data, &params, EpisodeShape::default(), 20, 0, &cfg).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.ci95, 0.0);
    }

    #[test]
    fn fewshot_depth_zero_matches_raw_prototype_oracle() {
        let data = blobs(10, 20, 8, 1.0, 4);
        let params = identity_params(8, 0, 10);
        let cfg = EmbedConfig {
            k: 3,
            depth: 0,
            mode: AggregationMode::Attention,
        };
        let shape = EpisodeShape::default();
        let report = evaluate_fewshot(&data, &params, shape, 50, 9, &cfg).unwrap();
        let index = data.class_index();
        for (e, &acc) in report.accuracies.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(9 + e as u64);
            let ep = sample_episode(&index, shape, &mut rng).unwrap();
            let unit = |i: usize| l2_normalize(&data.features[i]).unwrap();
            let correct = ep
                .query
                .iter()
                .enumerate()
                .filter(|(qi, &q)| {
                    let x = unit(q);
                    let mut best = (f64::NEG_INFINITY, 0);
                    for w in 0..shape.way {
                        let s = unit(ep.support[w]);
                        let c = dot(&x, &s) / norm(&s);
                        if c > best.0 {
                            best = (c, w);
                        }
                    }
                    best.1 == qi / shape.queries
                })
                .count();
            assert_eq!(acc, correct as f64 / ep.query.len() as f64, "episode {e}");
        }
    }

    #[test]
    fn fewshot_is_deterministic_and_sized() {
        let data = blobs(8, 20, 6, 0.7, 5);
        let params = identity_params(6, 2, 8);
        let cfg = EmbedConfig {
            k: 10,
            depth: 2,
            mode: AggregationMode::Attention,
        };
        let a = evaluate_fewshot(&data, &params, EpisodeShape::default(), 8, 1, &cfg).unwrap();
        let b = evaluate_fewshot(&data, &params, EpisodeShape::default(), 8, 1, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.mean) && a.ci95 >= 0.0);
        // 75 queries per episode: every accuracy is a multiple of 1/75
        for acc in &a.accuracies {
            let scaled = acc * 75.0;
            assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_episodes_have_zero_interval() {
        let r = FewShotReport::from_accuracies(vec![0.6; 10]).unwrap();
        assert_eq!(r.ci95, 0.0);
        let r = FewShotReport::from_accuracies(vec![0.0, 1.0]).unwrap();
        assert!((r.ci95 - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_shot_prototype_is_nearest_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let support: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let protos = prototypes(&support, 5, 1);
            assert_eq!(protos, support);
            let classes = [4, 3, 2, 1, 0];
            let nn = (0..5)
                .max_by(|&a, &b| {
                    let ca = dot(&q, &support[a]) / norm(&support[a]);
                    let cb = dot(&q, &support[b]) / norm(&support[b]);
                    ca.total_cmp(&cb)
                })
                .unwrap();
            assert_eq!(nearest_prototype(&q, &protos, &classes), nn);
        }
    }

    #[test]
    fn prototype_ties_go_to_lowest_class() {
        let protos = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(nearest_prototype(&[1.0, 0.0], &protos, &[9, 2]), 1);
        assert_eq!(nearest_prototype(&[1.0, 0.0], &protos, &[2, 9]), 0);
    }

    #[test]
    fn csv_layout() {
        let s = csv_table(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(s, "a,b\n1,2\n");
    }
}
