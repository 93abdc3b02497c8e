use super::*;
use crate::numeric::l2_normalize;
use rand_distr::{Distribution, Normal};

fn blobs(classes: u32, per_class: usize, dim: usize, sigma: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        let raw: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let center = l2_normalize(&raw).unwrap();
        for _ in 0..per_class {
            features.push(
                center
                    .iter()
                    .map(|v| v + sigma * normal.sample(&mut rng))
                    .collect(),
            );
            labels.push(c);
        }
    }
    Dataset::new(features, labels).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        k: 4,
        depth: 2,
        epochs: 2,
        batch_size: 16,
        lr_encoder: 1e-3,
        lr_model: 1e-3,
        encoder: EncoderKind::Mlp,
        hidden_dim: 12,
        embed_dim: Some(6),
        ..TrainConfig::retrieval()
    }
}

fn bits(m: &EpisodicMemory) -> Vec<Vec<u64>> {
    m.entries()
        .iter()
        .map(|e| e.feature.iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn zero_epochs_is_a_no_op() {
    let data = blobs(4, 6, 8, 0.2, 1);
    let mut cfg = small_config();
    cfg.epochs = 0;
    let init = cfg.init_params(8, 4).unwrap();
    let out = train_retrieval(&data, &cfg, Some(init.clone())).unwrap();
    assert_eq!(out.params, init);
    assert!(out.log.is_empty());
    for (i, e) in out.memory.entries().iter().enumerate() {
        assert_eq!(e.id, i as MemoryId);
        assert_eq!(e.feature, init.encode(&data.features[i]).unwrap());
    }
}

#[test]
fn step_refreshes_batch_rows_exactly() {
    let data = blobs(4, 6, 8, 0.2, 2);
    let cfg = small_config();
    let init = cfg.init_params(8, 4).unwrap();
    let mut t = RetrievalTrainer::new(&data, cfg, init.clone()).unwrap();
    let batch = [3usize, 7, 11, 20];
    t.step(&batch).unwrap();
    assert_ne!(t.params(), &init);
    for &i in &batch {
        let fresh = t.params().encode(&data.features[i]).unwrap();
        assert_eq!(t.memory().feature(i as MemoryId).unwrap(), fresh.as_slice());
    }
    // rows outside the batch keep their initial features
    assert_eq!(
        t.memory().feature(0).unwrap(),
        init.encode(&data.features[0]).unwrap().as_slice()
    );
}

#[test]
fn disabled_update_keeps_memory_bitwise() {
    let data = blobs(4, 6, 8, 0.2, 3);
    let mut cfg = small_config();
    cfg.memory_update = false;
    let init = cfg.init_params(8, 4).unwrap();
    let before = RetrievalTrainer::new(&data, cfg.clone(), init.clone()).unwrap();
    let before = bits(before.memory());
    let out = train_retrieval(&data, &cfg, Some(init)).unwrap();
    assert_eq!(bits(&out.memory), before);
    let labels: Vec<Option<ClassId>> = out.memory.entries().iter().map(|e| e.label).collect();
    assert_eq!(
        labels,
        data.labels.iter().map(|&y| Some(y)).collect::<Vec<_>>()
    );
}

#[test]
fn retrieval_training_is_deterministic() {
    let data = blobs(4, 6, 8, 0.2, 4);
    let cfg = small_config();
    let a = train_retrieval(&data, &cfg, None).unwrap();
    let b = train_retrieval(&data, &cfg, None).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
    assert_eq!(bits(&a.memory), bits(&b.memory));
}

#[test]
fn retrieval_loss_decreases() {
    let data = blobs(64, 4, 16, 0.3, 5);
    let cfg = TrainConfig {
        k: 3,
        depth: 2,
        epochs: 5,
        batch_size: 32,
        lr_encoder: 1e-3,
        lr_model: 1e-2,
        ..TrainConfig::retrieval()
    };
    let out = train_retrieval(&data, &cfg, None).unwrap();
    let first = out.log.first().unwrap().total;
    let last = out.log.last().unwrap().total;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn lambda_zero_still_trains() {
    let data = blobs(4, 6, 8, 0.2, 6);
    let mut cfg = small_config();
    cfg.lambda_bce = 0.0;
    let out = train_retrieval(&data, &cfg, None).unwrap();
    assert_eq!(out.log.len(), 2);
    assert!(out.log.iter().all(|r| r.total == r.ce));
}

#[test]
fn memory_smaller_than_k_plus_one_is_capacity_error() {
    let data = blobs(2, 2, 4, 0.1, 7);
    let cfg = TrainConfig {
        k: 4,
        ..TrainConfig::retrieval()
    };
    assert!(matches!(
        train_retrieval(&data, &cfg, None),
        Err(MneError::Capacity {
            needed: 5,
            available: 4
        })
    ));
}

#[test]
fn learning_rate_decays_at_boundary() {
    let cfg = TrainConfig {
        decay_every: 2,
        lr_decay: 0.1,
        ..TrainConfig::retrieval()
    };
    assert_eq!(cfg.lr_scale(0), 1.0);
    assert_eq!(cfg.lr_scale(1), 1.0);
    assert!((cfg.lr_scale(2) - 0.1).abs() < 1e-15);
    assert!((cfg.lr_scale(5) - 0.01).abs() < 1e-15);
}

#[test]
fn invalid_config_rejected() {
    let mut cfg = TrainConfig::retrieval();
    cfg.lr_decay = 0.0;
    assert!(cfg.validate().is_err());
    cfg.lr_decay = 1.0;
    cfg.lr_model = 0.0;
    assert!(cfg.validate().is_err());
    cfg.lr_model = 1e-3;
    cfg.k = 0;
    assert!(cfg.validate().is_err());
}

#[test]
fn pretrain_identity_is_immediate_and_mlp_separates() {
    let data = blobs(2, 30, 4, 0.1, 8);
    let cfg = TrainConfig::retrieval();
    let r = pretrain_encoder(&data, &cfg).unwrap();
    assert_eq!(r.encoder, Encoder::identity(4));
    assert!(r.epoch_losses.is_empty());

    let mut bad = cfg.clone();
    bad.embed_dim = Some(3);
    assert!(matches!(
        pretrain_encoder(&data, &bad),
        Err(MneError::Shape(_))
    ));

    let mlp = TrainConfig {
        encoder: EncoderKind::Mlp,
        hidden_dim: 8,
        embed_dim: Some(4),
        pretrain_epochs: 30,
        batch_size: 8,
        ..cfg
    };
    let a = pretrain_encoder(&data, &mlp).unwrap();
    assert!(a.train_accuracy > 0.95, "{}", a.train_accuracy);
    let b = pretrain_encoder(&data, &mlp).unwrap();
    assert_eq!(a.encoder, b.encoder);
}

#[test]
fn episodic_memory_size_and_support_only_trees() {
    let data = blobs(8, 20, 6, 0.2, 9);
    let cfg = TrainConfig::episodic();
    let params = cfg.init_params(6, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ep = sample_episode(&data.class_index(), EpisodeShape::default(), &mut rng).unwrap();
    assert_eq!(episode_memory(&params, &data, &ep).unwrap().len(), 80);

    let shape = EpisodeShape {
        way: 5,
        shot: 1,
        queries: 0,
    };
    let ep = sample_episode(&data.class_index(), shape, &mut rng).unwrap();
    let mem = episode_memory(&params, &data, &ep).unwrap();
    assert_eq!(mem.len(), 5);
    for slot in 0..5u64 {
        let f = mem.feature(slot).unwrap().to_vec();
        let tree = NeighbourhoodTree::build(&f, Some(slot), &mem, 4, 1).unwrap();
        let children: Vec<MemoryId> = tree.nodes()[1..]
            .iter()
            .filter_map(|n| n.memory_id)
            .collect();
        assert_eq!(children.len(), 4);
        assert!(!children.contains(&slot));
    }
}

#[test]
fn episodic_needs_enough_classes() {
    let data = blobs(3, 20, 6, 0.2, 10);
    let cfg = TrainConfig::episodic();
    assert!(matches!(
        train_episodic(&data, &cfg, None),
        Err(MneError::Capacity {
            needed: 5,
            available: 3
        })
    ));
}

#[test]
fn episodic_loss_decreases() {
    let data = blobs(30, 12, 16, 0.35, 11);
    let cfg = TrainConfig {
        k: 5,
        episodes: 500,
        decay_every: 0,
        lr_encoder: 1e-3,
        lr_model: 1e-3,
        episode: EpisodeShape {
            way: 5,
            shot: 1,
            queries: 5,
        },
        ..TrainConfig::episodic()
    };
    let (_, log) = train_episodic(&data, &cfg, None).unwrap();
    assert_eq!(log.len(), 500);
    let mean = |w: &[LogRecord]| w.iter().map(|r| r.total).sum::<f64>() / w.len() as f64;
    let first = mean(&log[..50]);
    let last = mean(&log[450..]);
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn log_is_json_lines() {
    let rec = LogRecord {
        phase: "epoch".into(),
        index: 0,
        ce: 1.0,
        bce: 0.5,
        bce_per_pair: 0.1,
        total: 1.5,
        lr_encoder: 1e-5,
        lr_model: 1e-4,
    };
    let mut buf = Vec::new();
    write_log(&[rec.clone(), rec.clone()], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let back: LogRecord = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn imprinted_rows_are_scaled_class_means() {
    let data = blobs(3, 5, 4, 0.2, 12);
    let cfg = TrainConfig {
        imprint_scale: Some(2.5),
        ..TrainConfig::retrieval()
    };
    let params = cfg.init_params_for(&data).unwrap();
    for c in 0..3u32 {
        let mut mean = vec![0.0; 4];
        for (x, _) in data
            .features
            .iter()
            .zip(&data.labels)
            .filter(|(_, &y)| y == c)
        {
            let f = l2_normalize(x).unwrap();
            mean.iter_mut().zip(&f).for_each(|(m, v)| *m += v);
        }
        let n = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (w, m) in params.classifier.weights.row(c as usize).iter().zip(&mean) {
            assert!((w - 2.5 * m / n).abs() < 1e-12);
        }
    }

    let random = TrainConfig {
        imprint_scale: None,
        ..cfg.clone()
    };
    assert_eq!(
        random.init_params_for(&data).unwrap(),
        random.init_params(4, 3).unwrap()
    );
    let bad = TrainConfig {
        imprint_scale: Some(0.0),
        ..cfg
    };
    assert!(bad.validate().is_err());
}
