//! C ABI over the `mne` core library.
//!
//! Every entry point returns an [`MneStatus`]. On anything other than
//! `MNE_STATUS_OK` a message describing the failure is kept per thread and can
//! be read with [`mne_last_error_message`]. Handles are opaque and must be
//! released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mne::{
    average_precision, batch_embed, AggregationMode, Checkpoint, EpisodicMemory, MemoryId, MneError,
};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MneStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    Degenerate = 3,
    Numeric = 4,
    Capacity = 5,
    Lookup = 6,
    State = 7,
    Format = 8,
    Io = 9,
    InvalidArgument = 10,
    Panic = 11,
}

/// Neighbourhood aggregation used by [`mne_model_embed`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MneAggregation {
    Attention = 0,
    Mean = 1,
    Max = 2,
}

impl From<MneAggregation> for AggregationMode {
    fn from(a: MneAggregation) -> Self {
        match a {
            MneAggregation::Attention => AggregationMode::Attention,
            MneAggregation::Mean => AggregationMode::Mean,
            MneAggregation::Max => AggregationMode::Max,
        }
    }
}

/// Episodic feature memory.
pub struct MneMemory {
    inner: EpisodicMemory,
}

/// A trained model loaded from a checkpoint.
pub struct MneModel {
    inner: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    let c = CString::new(s).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(MneStatus, String);

impl From<MneError> for Failure {
    fn from(e: MneError) -> Self {
        let status = match &e {
            MneError::Shape(_) => MneStatus::Shape,
            MneError::Degenerate(_) => MneStatus::Degenerate,
            MneError::Numeric(_) => MneStatus::Numeric,
            MneError::Capacity { .. } => MneStatus::Capacity,
            MneError::Lookup(_) => MneStatus::Lookup,
            MneError::State(_) => MneStatus::State,
            MneError::Format { .. } => MneStatus::Format,
            MneError::Io(_) => MneStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MneStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MneStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MneStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            MneStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MneStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and the caller vouches for `len` elements.
    Ok(unsafe { slice::from_raw_parts(p, len) })
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and the caller vouches for `len` elements.
    Ok(unsafe { slice::from_raw_parts_mut(p, len) })
}

fn rows(flat: &[f64], n: usize, dim: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if dim == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    debug_assert_eq!(flat.len(), n * dim);
    Ok(flat.chunks_exact(dim).map(<[f64]>::to_vec).collect())
}

fn checked_len(n: usize, dim: usize) -> Result<usize, Failure> {
    n.checked_mul(dim)
        .ok_or_else(|| invalid(format!("{n} rows of dimension {dim} overflow")))
}

/// Message for the most recent failed call on this thread, or null if the
/// last call succeeded. The string stays valid until the next call into this
/// library from the same thread.
#[no_mangle]
pub extern "C" fn mne_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, human-readable name of a status code.
#[no_mangle]
pub extern "C" fn mne_status_name(status: MneStatus) -> *const c_char {
    let s: &'static CStr = match status {
        MneStatus::Ok => c"ok",
        MneStatus::NullPointer => c"null pointer",
        MneStatus::Shape => c"shape mismatch",
        MneStatus::Degenerate => c"degenerate input",
        MneStatus::Numeric => c"numeric error",
        MneStatus::Capacity => c"capacity error",
        MneStatus::Lookup => c"lookup error",
        MneStatus::State => c"state error",
        MneStatus::Format => c"format error",
        MneStatus::Io => c"i/o error",
        MneStatus::InvalidArgument => c"invalid argument",
        MneStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Creates an empty memory of dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mne_memory_new(dim: usize, out: *mut *mut MneMemory) -> MneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        let h = Box::new(MneMemory {
            inner: EpisodicMemory::new(dim),
        });
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(h) };
        Ok(())
    })
}

/// Builds a labeled memory from `n` row-major features of dimension `dim`.
/// Entries get ids `0..n` in input order.
///
/// # Safety
/// `features` must point to `n * dim` doubles, `labels` to `n` values, and
/// `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mne_memory_from_labeled(
    features: *const f64,
    labels: *const u32,
    n: usize,
    dim: usize,
    out: *mut *mut MneMemory,
) -> MneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = checked_len(n, dim)?;
        // SAFETY: caller guarantees the extents.
        let flat = unsafe { input(features, len, "features")? };
        // SAFETY: caller guarantees the extents.
        let labels = unsafe { input(labels, n, "labels")? };
        let mem = EpisodicMemory::from_labeled(&rows(flat, n, dim)?, labels)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(MneMemory { inner: mem })) };
        Ok(())
    })
}

/// Releases a memory. Null is ignored.
///
/// # Safety
/// `mem` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mne_memory_free(mem: *mut MneMemory) {
    if mem.is_null() {
        return;
    }
    // SAFETY: caller guarantees `mem` came from `Box::into_raw` here.
    drop(unsafe { Box::from_raw(mem) });
}

/// Number of entries, or 0 for a null handle.
///
/// # Safety
/// `mem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mne_memory_len(mem: *const MneMemory) -> usize {
    // SAFETY: caller guarantees validity.
    unsafe { mem.as_ref() }.map_or(0, |m| m.inner.len())
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `mem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mne_memory_dim(mem: *const MneMemory) -> usize {
    // SAFETY: caller guarantees validity.
    unsafe { mem.as_ref() }.map_or(0, |m| m.inner.dim())
}

/// Appends `n` unlabeled features and writes their new ids to `out_ids`
/// (which may be null when `n` is 0).
///
/// # Safety
/// `mem` must be a live handle, `features` must point to `n * dim` doubles
/// where `dim` is the memory dimension, and `out_ids` to `n` writable ids.
#[no_mangle]
pub unsafe extern "C" fn mne_memory_augment(
    mem: *mut MneMemory,
    features: *const f64,
    n: usize,
    out_ids: *mut u64,
) -> MneStatus {
    guard(|| {
        // SAFETY: caller guarantees validity.
        let m = unsafe { mem.as_mut() }.ok_or_else(|| null("mem"))?;
        let dim = m.inner.dim();
        let len = checked_len(n, dim)?;
        // SAFETY: caller guarantees the extents.
        let flat = unsafe { input(features, len, "features")? };
        // SAFETY: caller guarantees the extents.
        let out = unsafe { output(out_ids, n, "out_ids")? };
        let ids = m.inner.augment(&rows(flat, n, dim)?)?;
        out.copy_from_slice(&ids);
        Ok(())
    })
}

/// Writes the ids of the `k` entries nearest to `query` (closest first, ties
/// to the lower id) into `out_ids`, skipping the `n_exclude` ids in
/// `exclude`. Fails with `MNE_STATUS_CAPACITY` when fewer than `k` entries
/// remain.
///
/// # Safety
/// `mem` must be a live handle, `query` must point to `dim` doubles,
/// `exclude` to `n_exclude` ids and `out_ids` to `k` writable ids.
#[no_mangle]
pub unsafe extern "C" fn mne_memory_knn(
    mem: *const MneMemory,
    query: *const f64,
    dim: usize,
    k: usize,
    exclude: *const u64,
    n_exclude: usize,
    out_ids: *mut u64,
) -> MneStatus {
    guard(|| {
        // SAFETY: caller guarantees validity.
        let m = unsafe { mem.as_ref() }.ok_or_else(|| null("mem"))?;
        // SAFETY: caller guarantees the extents.
        let q = unsafe { input(query, dim, "query")? };
        // SAFETY: caller guarantees the extents.
        let ex: &[MemoryId] = unsafe { input(exclude, n_exclude, "exclude")? };
        // SAFETY: caller guarantees the extents.
        let out = unsafe { output(out_ids, k, "out_ids")? };
        let ids = m.inner.knn(q, k, ex)?;
        out.copy_from_slice(&ids);
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must point to writable
/// storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mne_model_load(path: *const c_char, out: *mut *mut MneModel) -> MneStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees a NUL-terminated string.
        let p = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let ckpt = Checkpoint::load(p)?;
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(MneModel { inner: ckpt })) };
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mne_model_free(model: *mut MneModel) {
    if model.is_null() {
        return;
    }
    // SAFETY: caller guarantees `model` came from `Box::into_raw` here.
    drop(unsafe { Box::from_raw(model) });
}

/// Raw input dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mne_model_input_dim(model: *const MneModel) -> usize {
    // SAFETY: caller guarantees validity.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.params.encoder.in_dim())
}

/// Embedding dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mne_model_dim(model: *const MneModel) -> usize {
    // SAFETY: caller guarantees validity.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.params.dim())
}

/// Number of aggregation rounds the model was trained with, or 0 for a null
/// handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mne_model_depth(model: *const MneModel) -> usize {
    // SAFETY: caller guarantees validity.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.params.depth())
}

/// Neighbour count the model was trained with, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mne_model_k(model: *const MneModel) -> usize {
    // SAFETY: caller guarantees validity.
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.config.k)
}

/// Runs the encoder on `n` row-major raw features of the model's input
/// dimension, writing `n * mne_model_dim` doubles to `out`.
///
/// # Safety
/// `model` must be a live handle, `features` must point to
/// `n * mne_model_input_dim(model)` doubles and `out` to
/// `n * mne_model_dim(model)` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mne_model_encode(
    model: *const MneModel,
    features: *const f64,
    n: usize,
    out: *mut f64,
) -> MneStatus {
    guard(|| {
        // SAFETY: caller guarantees validity.
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        let p = &m.inner.params;
        let in_len = checked_len(n, p.encoder.in_dim())?;
        let out_len = checked_len(n, p.dim())?;
        // SAFETY: caller guarantees the extents.
        let flat = unsafe { input(features, in_len, "features")? };
        // SAFETY: caller guarantees the extents.
        let dst = unsafe { output(out, out_len, "out")? };
        for (x, o) in flat
            .chunks_exact(p.encoder.in_dim())
            .zip(dst.chunks_exact_mut(p.dim()))
        {
            o.copy_from_slice(&p.encode(x)?);
        }
        Ok(())
    })
}

/// Neighbourhood embedding of `n` row-major raw features against `mem`,
/// which must hold features already in the model's embedding space. `k` and
/// `depth` of 0 fall back to the values the model was trained with. Writes
/// `n * mne_model_dim` doubles to `out`.
///
/// # Safety
/// `model` and `mem` must be live handles, `features` must point to
/// `n * mne_model_input_dim(model)` doubles and `out` to
/// `n * mne_model_dim(model)` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mne_model_embed(
    model: *const MneModel,
    mem: *const MneMemory,
    features: *const f64,
    n: usize,
    k: usize,
    depth: usize,
    mode: MneAggregation,
    out: *mut f64,
) -> MneStatus {
    guard(|| {
        // SAFETY: caller guarantees validity.
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        // SAFETY: caller guarantees validity.
        let memory = unsafe { mem.as_ref() }.ok_or_else(|| null("mem"))?;
        let p = &m.inner.params;
        let k = if k == 0 { m.inner.config.k } else { k };
        let depth = if depth == 0 { p.depth() } else { depth };
        let mode = AggregationMode::from(mode);
        if mode == AggregationMode::Attention && depth > p.depth() {
            return Err(Failure(
                MneStatus::Shape,
                format!("depth {depth} exceeds the model's {} rounds", p.depth()),
            ));
        }
        let in_len = checked_len(n, p.encoder.in_dim())?;
        let out_len = checked_len(n, p.dim())?;
        // SAFETY: caller guarantees the extents.
        let flat = unsafe { input(features, in_len, "features")? };
        // SAFETY: caller guarantees the extents.
        let dst = unsafe { output(out, out_len, "out")? };
        let targets = flat
            .chunks_exact(p.encoder.in_dim())
            .map(|x| Ok((p.encode(x)?, None)))
            .collect::<Result<Vec<_>, MneError>>()?;
        let asa = match mode {
            AggregationMode::Attention => &p.asa[..depth],
            _ => &[],
        };
        let embedded = batch_embed(&targets, &memory.inner, asa, k, depth, mode)?;
        for (e, o) in embedded.iter().zip(dst.chunks_exact_mut(p.dim())) {
            o.copy_from_slice(&e.embedding);
        }
        Ok(())
    })
}

/// Average precision of a ranked list given per-position relevance flags
/// (non-zero means relevant).
///
/// # Safety
/// `relevant` must point to `n` bytes and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn mne_average_precision(
    relevant: *const u8,
    n: usize,
    out: *mut f64,
) -> MneStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees the extents.
        let flags = unsafe { input(relevant, n, "relevant")? };
        let rel: Vec<bool> = flags.iter().map(|&b| b != 0).collect();
        let ap = average_precision(&rel)?;
        // SAFETY: checked non-null above.
        unsafe { *out = ap };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message() -> String {
        let p = mne_last_error_message();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn panics_become_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let st = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(st, MneStatus::Panic);
        assert_eq!(message(), "panic: boom");
    }

    #[test]
    fn success_clears_message() {
        guard(|| Err(invalid("x")));
        assert_eq!(message(), "x");
        assert_eq!(guard(|| Ok(())), MneStatus::Ok);
        assert!(mne_last_error_message().is_null());
    }

    #[test]
    fn interior_nul_is_scrubbed() {
        guard(|| Err(invalid("a\0b")));
        assert_eq!(message(), "a b");
    }

    #[test]
    fn core_errors_keep_their_kind() {
        let Failure(st, msg) = Failure::from(MneError::Capacity {
            needed: 3,
            available: 1,
        });
        assert_eq!(st, MneStatus::Capacity);
        assert!(msg.contains("need 3"));
        let Failure(st, _) = Failure::from(MneError::Format {
            offset: 4,
            message: "m".into(),
        });
        assert_eq!(st, MneStatus::Format);
    }
}
