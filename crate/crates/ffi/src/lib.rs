//! C ABI for the gradrec engine.
//!
//! Every entry point returns a [`GrecStatus`]. On failure the message is
//! available from [`grec_last_error`] on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.
//! Strings handed out by the library must be released with
//! [`grec_string_free`].

use std::cell::RefCell;
use std::collections::HashSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gradrec::direction::{build_direction, invert_direction, DirectionVector, SnrOptions};
use gradrec::traversal::{advance, traverse, TraversalConfig, TraversalPath};
use gradrec::{load_catalog, load_prompt_bank, EmbeddingVector, Error, KnnIndex, PromptBank};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrecStatus {
    Ok = 0,
    NullPointer,
    InvalidUtf8,
    BufferTooSmall,
    Panic,
    MalformedHeader,
    MalformedMetadata,
    DimMismatch,
    NonFiniteVector,
    NotUnitNorm,
    DuplicateId,
    IoFailure,
    InvalidSpec,
    EmptyCatalog,
    DegenerateMean,
    UnknownPrompt,
    InsufficientCatalog,
    InvalidArgument,
    ZeroSignal,
    DegenerateStep,
    UnknownSeed,
    UnknownProduct,
    InvalidConfig,
}

impl From<&Error> for GrecStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::MalformedHeader(_) => Self::MalformedHeader,
            Error::MalformedMetadata(_) => Self::MalformedMetadata,
            Error::DimMismatch { .. } => Self::DimMismatch,
            Error::NonFiniteVector(_) => Self::NonFiniteVector,
            Error::NotUnitNorm { .. } => Self::NotUnitNorm,
            Error::DuplicateId(_) => Self::DuplicateId,
            Error::IoFailure { .. } => Self::IoFailure,
            Error::InvalidSpec(_) => Self::InvalidSpec,
            Error::EmptyCatalog => Self::EmptyCatalog,
            Error::DegenerateMean(_) => Self::DegenerateMean,
            Error::UnknownPrompt(_) => Self::UnknownPrompt,
            Error::InsufficientCatalog { .. } => Self::InsufficientCatalog,
            Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::ZeroSignal(_) => Self::ZeroSignal,
            Error::DegenerateStep(_) => Self::DegenerateStep,
            Error::UnknownSeed(_) => Self::UnknownSeed,
            Error::UnknownProduct(_) => Self::UnknownProduct,
            Error::InvalidConfig(_) => Self::InvalidConfig,
        }
    }
}

/// A loaded catalog, its index and (optionally) a prompt bank.
pub struct GrecEngine {
    index: KnnIndex,
    bank: PromptBank,
}

pub struct GrecDirection(DirectionVector);

pub struct GrecPath(TraversalPath);

/// Traversal knobs. Obtain defaults from [`grec_traversal_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GrecTraversalConfig {
    pub lambda: f64,
    pub rho: f64,
    pub k_reg: usize,
    pub k_rec: usize,
    pub max_steps: usize,
    pub renormalize: bool,
    pub stop_stale_steps: usize,
}

impl From<&GrecTraversalConfig> for TraversalConfig {
    fn from(c: &GrecTraversalConfig) -> Self {
        TraversalConfig {
            lambda: c.lambda,
            rho: c.rho,
            k_reg: c.k_reg,
            k_rec: c.k_rec,
            max_steps: c.max_steps,
            renormalize: c.renormalize,
            stop_stale_steps: c.stop_stale_steps,
            ..TraversalConfig::default()
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(GrecStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(GrecStatus::from(&e), format!("{}: {e}", e.code()))
    }
}

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> GrecStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GrecStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("Panic: internal error".into());
            GrecStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(
        GrecStatus::NullPointer,
        format!("NullPointer: {what} is null"),
    )
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GrecStatus::InvalidUtf8, format!("InvalidUtf8: {what}")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> FfiResult {
    let c = CString::new(s)
        .map_err(|_| Fail(GrecStatus::InvalidUtf8, "InvalidUtf8: nul in output".into()))?;
    put(out, c.into_raw(), "out")
}

fn copy_out(src: &[f32], out: *mut f32, out_len: usize) -> FfiResult {
    if out.is_null() {
        return Err(null("out"));
    }
    if out_len < src.len() {
        return Err(Fail(
            GrecStatus::BufferTooSmall,
            format!("BufferTooSmall: need {} floats, got {out_len}", src.len()),
        ));
    }
    // SAFETY: caller provides `out_len` writable floats
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), out, src.len()) };
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Owned by the
/// library; valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn grec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn grec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a catalog bundle. `prompts_path` may be NULL.
///
/// # Safety
/// Paths must be valid nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_engine_open(
    catalog_path: *const c_char,
    prompts_path: *const c_char,
    out: *mut *mut GrecEngine,
) -> GrecStatus {
    guard(|| {
        let catalog = load_catalog(str_arg(catalog_path, "catalog_path")?)?;
        let bank = if prompts_path.is_null() {
            PromptBank::new()
        } else {
            let b = load_prompt_bank(str_arg(prompts_path, "prompts_path")?)?;
            b.check_dim(catalog.dim())?;
            b
        };
        let engine = GrecEngine {
            index: KnnIndex::new(catalog),
            bank,
        };
        put(out, boxed(engine), "out")
    })
}

/// # Safety
/// `engine` must come from [`grec_engine_open`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn grec_engine_free(engine: *mut GrecEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// # Safety
/// `engine` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_engine_info(
    engine: *const GrecEngine,
    out_dim: *mut usize,
    out_len: *mut usize,
) -> GrecStatus {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        put(out_dim, e.index.dim(), "out_dim")?;
        put(out_len, e.index.len(), "out_len")
    })
}

/// Writes the catalog id at `row` as a new string.
///
/// # Safety
/// `engine` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_product_id(
    engine: *const GrecEngine,
    row: usize,
    out: *mut *mut c_char,
) -> GrecStatus {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        if row >= e.index.len() {
            return Err(Fail(
                GrecStatus::InvalidArgument,
                format!("InvalidArgument: row {row} out of range"),
            ));
        }
        put_string(out, e.index.id_of(row).to_string())
    })
}

/// Exact cosine search. Fills `out_rows`/`out_sims` (capacity `k`) and sets
/// `out_count` to min(k, catalog size).
///
/// # Safety
/// `query` must hold `dim` floats; `out_rows` and `out_sims` must hold `k`
/// entries.
#[no_mangle]
pub unsafe extern "C" fn grec_knn(
    engine: *const GrecEngine,
    query: *const f32,
    dim: usize,
    k: usize,
    out_rows: *mut usize,
    out_sims: *mut f64,
    out_count: *mut usize,
) -> GrecStatus {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        let q = slice_arg(query, dim, "query")?;
        if out_rows.is_null() || out_sims.is_null() {
            return Err(null("output buffer"));
        }
        let hits = e.index.top_rows(q, k, |_| false)?;
        for (i, (row, sim)) in hits.iter().enumerate() {
            out_rows.add(i).write(*row);
            out_sims.add(i).write(*sim);
        }
        put(out_count, hits.len(), "out_count")
    })
}

/// Zero-shot retrieval as JSON: `[{"product_id", "similarity"}, ...]`.
///
/// # Safety
/// `prompt` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_retrieve_json(
    engine: *const GrecEngine,
    prompt: *const c_char,
    n: usize,
    out: *mut *mut c_char,
) -> GrecStatus {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        let hits = e
            .index
            .retrieve_by_prompt(&e.bank, str_arg(prompt, "prompt")?, n)?;
        put_string(
            out,
            serde_json::to_string(&hits).expect("neighbors serialize"),
        )
    })
}

/// # Safety
/// Prompts must be valid strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_direction_build(
    engine: *const GrecEngine,
    neutral_prompt: *const c_char,
    exemplar_prompt: *const c_char,
    m: usize,
    n: usize,
    epsilon: f64,
    out: *mut *mut GrecDirection,
) -> GrecStatus {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        let d = build_direction(
            &e.index,
            &e.bank,
            str_arg(neutral_prompt, "neutral_prompt")?,
            str_arg(exemplar_prompt, "exemplar_prompt")?,
            m,
            n,
            &SnrOptions::with_epsilon(epsilon),
        )?;
        put(out, boxed(GrecDirection(d)), "out")
    })
}

/// # Safety
/// `json` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_direction_from_json(
    json: *const c_char,
    out: *mut *mut GrecDirection,
) -> GrecStatus {
    guard(|| {
        let d = DirectionVector::from_json(str_arg(json, "json")?)?;
        put(out, boxed(GrecDirection(d)), "out")
    })
}

/// # Safety
/// `direction` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_direction_to_json(
    direction: *const GrecDirection,
    out: *mut *mut c_char,
) -> GrecStatus {
    guard(|| {
        let d = ref_arg(direction, "direction")?;
        put_string(out, d.0.to_json())
    })
}

/// # Safety
/// `direction` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_direction_invert(
    direction: *const GrecDirection,
    out: *mut *mut GrecDirection,
) -> GrecStatus {
    guard(|| {
        let d = ref_arg(direction, "direction")?;
        put(out, boxed(GrecDirection(invert_direction(&d.0))), "out")
    })
}

/// Copies the unit direction into `out` (capacity `out_len`).
///
/// # Safety
/// `out` must hold `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn grec_direction_values(
    direction: *const GrecDirection,
    out: *mut f32,
    out_len: usize,
) -> GrecStatus {
    guard(|| {
        let d = ref_arg(direction, "direction")?;
        copy_out(d.0.v_c.as_slice(), out, out_len)
    })
}

/// # Safety
/// `direction` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn grec_direction_free(direction: *mut GrecDirection) {
    if !direction.is_null() {
        drop(Box::from_raw(direction));
    }
}

#[no_mangle]
pub extern "C" fn grec_traversal_config_default() -> GrecTraversalConfig {
    let d = TraversalConfig::default();
    GrecTraversalConfig {
        lambda: d.lambda,
        rho: d.rho,
        k_reg: d.k_reg,
        k_rec: d.k_rec,
        max_steps: d.max_steps,
        renormalize: d.renormalize,
        stop_stale_steps: d.stop_stale_steps,
    }
}

/// One update from `position` (length `dim`), written to `out_position`.
/// Recommendations are not computed; use [`grec_knn`] on the result.
///
/// # Safety
/// `position` and `out_position` must hold `dim` floats.
#[no_mangle]
pub unsafe extern "C" fn grec_step(
    engine: *const GrecEngine,
    position: *const f32,
    dim: usize,
    direction: *const GrecDirection,
    config: *const GrecTraversalConfig,
    out_position: *mut f32,
) -> GrecStatus {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        let d = ref_arg(direction, "direction")?;
        let cfg = TraversalConfig::from(ref_arg(config, "config")?);
        cfg.validate()?;
        let p = EmbeddingVector::new(slice_arg(position, dim, "position")?.to_vec())?;
        let out = advance(&p, &d.0.v_c, &e.index, &cfg, &HashSet::new())?;
        copy_out(out.step.position.as_slice(), out_position, dim)
    })
}

/// # Safety
/// `seed_id` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_traverse(
    engine: *const GrecEngine,
    seed_id: *const c_char,
    direction: *const GrecDirection,
    config: *const GrecTraversalConfig,
    out: *mut *mut GrecPath,
) -> GrecStatus {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        let d = ref_arg(direction, "direction")?;
        let cfg = TraversalConfig::from(ref_arg(config, "config")?);
        let path = traverse(str_arg(seed_id, "seed_id")?, &d.0, &e.index, &cfg)?;
        put(out, boxed(GrecPath(path)), "out")
    })
}

/// Number of steps taken.
///
/// # Safety
/// `path` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_path_len(path: *const GrecPath, out: *mut usize) -> GrecStatus {
    guard(|| {
        let p = ref_arg(path, "path")?;
        put(out, p.0.steps.len(), "out")
    })
}

/// # Safety
/// `path` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn grec_path_to_json(
    path: *const GrecPath,
    include_positions: bool,
    out: *mut *mut c_char,
) -> GrecStatus {
    guard(|| {
        let p = ref_arg(path, "path")?;
        put_string(out, p.0.to_json(include_positions))
    })
}

/// # Safety
/// `path` must come from [`grec_traverse`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn grec_path_free(path: *mut GrecPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}
