use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mne::trainer::EncoderKind;
use mne::{batch_embed, AggregationMode, Checkpoint, EpisodicMemory, TrainConfig};
use mne_ffi::*;

fn last_error() -> Option<String> {
    let p = mne_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn features(n: usize, dim: usize, salt: f64) -> Vec<f64> {
    (0..n * dim)
        .map(|i| ((i as f64 + salt) * 0.731).sin())
        .collect()
}

fn new_memory(dim: usize) -> *mut MneMemory {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { mne_memory_new(dim, &mut m) }, MneStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn augment_and_knn_match_core() {
    let dim = 5;
    let flat = features(30, dim, 0.0);
    let m = new_memory(dim);
    let mut ids = vec![u64::MAX; 30];
    let st = unsafe { mne_memory_augment(m, flat.as_ptr(), 30, ids.as_mut_ptr()) };
    assert_eq!(st, MneStatus::Ok);
    assert_eq!(ids, (0..30).collect::<Vec<u64>>());
    assert_eq!(unsafe { mne_memory_len(m) }, 30);
    assert_eq!(unsafe { mne_memory_dim(m) }, dim);

    let rows: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
    let core = EpisodicMemory::from_unlabeled(&rows).unwrap();
    let q = features(1, dim, 7.5);
    let exclude = [3u64, 11];
    let mut out = [0u64; 6];
    let st =
        unsafe { mne_memory_knn(m, q.as_ptr(), dim, 6, exclude.as_ptr(), 2, out.as_mut_ptr()) };
    assert_eq!(st, MneStatus::Ok);
    assert_eq!(out.to_vec(), core.knn(&q, 6, &exclude).unwrap());
    unsafe { mne_memory_free(m) };
}

#[test]
fn labeled_memory_assigns_sequential_ids() {
    let dim = 3;
    let flat = features(4, dim, 1.0);
    let labels = [0u32, 1, 0, 2];
    let mut m = ptr::null_mut();
    let st = unsafe { mne_memory_from_labeled(flat.as_ptr(), labels.as_ptr(), 4, dim, &mut m) };
    assert_eq!(st, MneStatus::Ok);
    let mut out = [0u64; 1];
    let st = unsafe { mne_memory_knn(m, flat.as_ptr(), dim, 1, ptr::null(), 0, out.as_mut_ptr()) };
    assert_eq!(st, MneStatus::Ok);
    assert_eq!(out[0], 0);
    unsafe { mne_memory_free(m) };
}

#[test]
fn errors_map_to_status_codes_with_messages() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { mne_memory_new(0, &mut m) },
        MneStatus::InvalidArgument
    );
    assert!(m.is_null());
    assert!(last_error().unwrap().contains("dimension"));
    assert_eq!(
        unsafe { mne_memory_new(4, ptr::null_mut()) },
        MneStatus::NullPointer
    );
    assert!(last_error().unwrap().contains("out"));

    let m = new_memory(4);
    assert!(last_error().is_none());
    let flat = features(2, 4, 0.0);
    let mut ids = [0u64; 2];
    unsafe { mne_memory_augment(m, flat.as_ptr(), 2, ids.as_mut_ptr()) };

    let q = [1.0, 0.0, 0.0];
    let mut out = [0u64; 1];
    let st = unsafe { mne_memory_knn(m, q.as_ptr(), 3, 1, ptr::null(), 0, out.as_mut_ptr()) };
    assert_eq!(st, MneStatus::Shape);
    assert!(last_error().unwrap().contains("shape mismatch"));

    let q = [1.0, 0.0, 0.0, 0.0];
    let mut out = [0u64; 3];
    let st = unsafe { mne_memory_knn(m, q.as_ptr(), 4, 3, ptr::null(), 0, out.as_mut_ptr()) };
    assert_eq!(st, MneStatus::Capacity);

    let zero = [0.0; 4];
    let st = unsafe { mne_memory_knn(m, zero.as_ptr(), 4, 1, ptr::null(), 0, out.as_mut_ptr()) };
    assert_eq!(st, MneStatus::Degenerate);

    let st = unsafe { mne_memory_knn(m, ptr::null(), 4, 1, ptr::null(), 0, out.as_mut_ptr()) };
    assert_eq!(st, MneStatus::NullPointer);
    assert_eq!(unsafe { mne_memory_len(ptr::null()) }, 0);
    unsafe { mne_memory_free(m) };
    unsafe { mne_memory_free(ptr::null_mut()) };
}

fn load(path: &Path) -> (MneStatus, *mut MneModel) {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    let st = unsafe { mne_model_load(c.as_ptr(), &mut h) };
    (st, h)
}

#[test]
fn model_load_reports_io_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (st, h) = load(&dir.path().join("missing.ckpt"));
    assert_eq!(st, MneStatus::Io);
    assert!(h.is_null());
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"NOPE").unwrap();
    assert_eq!(load(&bad).0, MneStatus::Format);
    assert_eq!(
        unsafe { mne_model_load(ptr::null(), &mut ptr::null_mut()) },
        MneStatus::NullPointer
    );
}

#[test]
fn model_encode_and_embed_match_core() {
    let in_dim = 6;
    let cfg = TrainConfig {
        encoder: EncoderKind::Mlp,
        hidden_dim: 8,
        embed_dim: Some(4),
        k: 2,
        depth: 2,
        ..TrainConfig::retrieval()
    };
    let params = cfg.init_params(in_dim, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::new(cfg.clone(), params.clone())
        .save(&path)
        .unwrap();

    let (st, model) = load(&path);
    assert_eq!(st, MneStatus::Ok);
    assert_eq!(unsafe { mne_model_input_dim(model) }, in_dim);
    assert_eq!(unsafe { mne_model_dim(model) }, 4);
    assert_eq!(unsafe { mne_model_depth(model) }, 2);
    assert_eq!(unsafe { mne_model_k(model) }, 2);

    let gallery = features(12, in_dim, 0.0);
    let mut encoded = vec![0.0; 12 * 4];
    let st = unsafe { mne_model_encode(model, gallery.as_ptr(), 12, encoded.as_mut_ptr()) };
    assert_eq!(st, MneStatus::Ok);
    let rows: Vec<Vec<f64>> = gallery.chunks(in_dim).map(<[f64]>::to_vec).collect();
    let expect: Vec<f64> = params.encode_all(&rows).unwrap().concat();
    assert_eq!(encoded, expect);

    let mem = new_memory(4);
    let mut ids = vec![0u64; 12];
    unsafe { mne_memory_augment(mem, encoded.as_ptr(), 12, ids.as_mut_ptr()) };
    let core_mem = EpisodicMemory::from_unlabeled(&params.encode_all(&rows).unwrap()).unwrap();

    let queries = features(3, in_dim, 40.0);
    let qrows: Vec<Vec<f64>> = queries.chunks(in_dim).map(<[f64]>::to_vec).collect();
    let targets: Vec<(Vec<f64>, Option<u64>)> = qrows
        .iter()
        .map(|q| (params.encode(q).unwrap(), None))
        .collect();
    for (mode, asa, depth) in [
        (MneAggregation::Attention, &params.asa[..], 2),
        (MneAggregation::Attention, &params.asa[..1], 1),
        (MneAggregation::Mean, &[][..], 2),
        (MneAggregation::Max, &[][..], 2),
    ] {
        let mut out = vec![0.0; 3 * 4];
        let st = unsafe {
            mne_model_embed(
                model,
                mem,
                queries.as_ptr(),
                3,
                0,
                depth,
                mode,
                out.as_mut_ptr(),
            )
        };
        assert_eq!(st, MneStatus::Ok, "{:?}", last_error());
        let expect: Vec<f64> = batch_embed(
            &targets,
            &core_mem,
            asa,
            2,
            depth,
            AggregationMode::from(mode),
        )
        .unwrap()
        .into_iter()
        .flat_map(|e| e.embedding)
        .collect();
        assert_eq!(out, expect);
    }

    let mut out = vec![0.0; 3 * 4];
    let st = unsafe {
        mne_model_embed(
            model,
            mem,
            queries.as_ptr(),
            3,
            2,
            3,
            MneAggregation::Attention,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(st, MneStatus::Shape);

    unsafe {
        mne_memory_free(mem);
        mne_model_free(model);
    }
}

#[test]
fn average_precision_over_flags() {
    let flags = [1u8, 0, 1];
    let mut ap = 0.0;
    assert_eq!(
        unsafe { mne_average_precision(flags.as_ptr(), 3, &mut ap) },
        MneStatus::Ok
    );
    assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    let none = [0u8, 0];
    assert_ne!(
        unsafe { mne_average_precision(none.as_ptr(), 2, &mut ap) },
        MneStatus::Ok
    );
}

#[test]
fn every_status_has_a_name() {
    for st in [
        MneStatus::Ok,
        MneStatus::NullPointer,
        MneStatus::Shape,
        MneStatus::Degenerate,
        MneStatus::Numeric,
        MneStatus::Capacity,
        MneStatus::Lookup,
        MneStatus::State,
        MneStatus::Format,
        MneStatus::Io,
        MneStatus::InvalidArgument,
        MneStatus::Panic,
    ] {
        let p = mne_status_name(st);
        assert!(!unsafe { CStr::from_ptr(p) }.to_bytes().is_empty());
    }
}

#[test]
fn header_declares_every_export() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mne.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "mne_last_error_message",
        "mne_status_name",
        "mne_memory_new",
        "mne_memory_from_labeled",
        "mne_memory_free",
        "mne_memory_len",
        "mne_memory_dim",
        "mne_memory_augment",
        "mne_memory_knn",
        "mne_model_load",
        "mne_model_free",
        "mne_model_input_dim",
        "mne_model_dim",
        "mne_model_depth",
        "mne_model_k",
        "mne_model_encode",
        "mne_model_embed",
        "mne_average_precision",
        "MNE_STATUS_OK",
        "MNE_AGGREGATION_MAX",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    if let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
