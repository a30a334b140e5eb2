//! C ABI for loading a checkpoint, answering prompts about a raster and
//! ranking salient patches, plus the caption metrics.
//!
//! Every fallible function returns an [`ScStatus`]; on failure the message
//! is available from [`sc_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use slidechat::interpret::{saliency, RowNorm};
use slidechat::language_model::{AttentionTrace, GenerateConfig};
use slidechat::model::SlideChat;
use slidechat::slide_io::{Raster, TissueFilter};
use slidechat::training::encode_slide;
use slidechat::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Usage = 3,
    Config = 4,
    Format = 5,
    MissingInput = 6,
    NonFinite = 7,
    Client = 8,
    Io = 9,
    Panic = 10,
}

impl From<&Error> for ScStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Usage(_) => ScStatus::Usage,
            Error::Config { .. } => ScStatus::Config,
            Error::Format { .. } => ScStatus::Format,
            Error::MissingInput(_) => ScStatus::MissingInput,
            Error::NonFinite(_) => ScStatus::NonFinite,
            Error::Client(_) => ScStatus::Client,
            Error::Io { .. } => ScStatus::Io,
        }
    }
}

/// A loaded model.
pub struct ScModel {
    inner: SlideChat,
}

/// A generated answer and its attention trace.
pub struct ScResponse {
    text: CString,
    trace: Option<AttentionTrace>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

struct Failure(ScStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(ScStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ScStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            ScStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(ScStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(ScStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `slidechat train`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn sc_model_load(path: *const c_char, out_model: *mut *mut ScModel) -> ScStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        let path = text(path, "path")?;
        let (inner, _) = SlideChat::load(Path::new(path))?;
        *slot = Box::into_raw(Box::new(ScModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`sc_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_model_free(model: *mut ScModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Tiles an interleaved 8-bit raster (`channels` 1 or 3), encodes its
/// tissue patches and greedily answers `prompt`, generating at most
/// `max_len` tokens.
///
/// # Safety
/// `pixels` must hold `width * height * channels` bytes; `prompt` must be a
/// NUL-terminated string; `out_response` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_model_respond(
    model: *const ScModel,
    pixels: *const u8,
    width: usize,
    height: usize,
    channels: usize,
    prompt: *const c_char,
    max_len: usize,
    out_response: *mut *mut ScResponse,
) -> ScStatus {
    guard(|| {
        let slot = out(out_response, "out_response")?;
        *slot = ptr::null_mut();
        let model = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let prompt = text(prompt, "prompt")?;
        let len = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Failure(ScStatus::Usage, "raster size overflows".into()))?;
        let raster = Raster::new(width, height, channels, std::slice::from_raw_parts(pixels, len).to_vec())?;
        let (_, slide) = encode_slide(model, &raster, &TissueFilter::default())?;
        let gen = GenerateConfig { max_len, capture_attention: true };
        let reply = model.respond(&slide, prompt, &gen)?;
        let text = CString::new(reply.text.replace('\0', " ")).expect("nul bytes removed");
        *slot = Box::into_raw(Box::new(ScResponse { text, trace: reply.trace }));
        Ok(())
    })
}

/// # Safety
/// `response` must come from [`sc_model_respond`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_response_free(response: *mut ScResponse) {
    if !response.is_null() {
        drop(Box::from_raw(response));
    }
}

/// Answer text, owned by the response.
///
/// # Safety
/// `response` must be null or a live response.
#[no_mangle]
pub unsafe extern "C" fn sc_response_text(response: *const ScResponse) -> *const c_char {
    response.as_ref().map_or(ptr::null(), |r| r.text.as_ptr())
}

/// Writes the trace shape `[tokens, layers, heads, patches]` to `out_dims`.
///
/// # Safety
/// `out_dims` must point to four writable `size_t` values.
#[no_mangle]
pub unsafe extern "C" fn sc_response_trace_dims(response: *const ScResponse, out_dims: *mut usize) -> ScStatus {
    guard(|| {
        let r = response.as_ref().ok_or_else(|| null("response"))?;
        if out_dims.is_null() {
            return Err(null("out_dims"));
        }
        let dims = r.trace.as_ref().map_or([0; 4], |t| t.dims());
        std::slice::from_raw_parts_mut(out_dims, 4).copy_from_slice(&dims);
        Ok(())
    })
}

/// Ranks the `k` most attended tissue patches. Writes up to `k` patch
/// indices and scores, most salient first, and their count to `out_len`.
/// Rows are renormalized over the visual span unless `raw_rows` is set.
///
/// # Safety
/// `out_indices` and `out_scores` must each have room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn sc_response_top_patches(
    response: *const ScResponse,
    k: usize,
    raw_rows: bool,
    out_indices: *mut usize,
    out_scores: *mut f64,
    out_len: *mut usize,
) -> ScStatus {
    guard(|| {
        let r = response.as_ref().ok_or_else(|| null("response"))?;
        let len = out(out_len, "out_len")?;
        *len = 0;
        if k > 0 && (out_indices.is_null() || out_scores.is_null()) {
            return Err(null("out_indices/out_scores"));
        }
        let trace = r.trace.as_ref().ok_or_else(|| Failure(ScStatus::Usage, "response has no attention trace".into()))?;
        let norm = if raw_rows { RowNorm::Raw } else { RowNorm::Renormalized };
        let sal = saliency(trace, k, norm)?;
        for (i, &(idx, score)) in sal.ranked.iter().enumerate() {
            *out_indices.add(i) = idx;
            *out_scores.add(i) = score;
        }
        *len = sal.ranked.len();
        Ok(())
    })
}

/// BLEU-`n` (1 to 4) of `candidate` against one reference.
///
/// # Safety
/// Both strings must be NUL-terminated; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_bleu(
    candidate: *const c_char,
    reference: *const c_char,
    n: usize,
    out_score: *mut f64,
) -> ScStatus {
    guard(|| {
        let score = out(out_score, "out_score")?;
        let (c, r) = (text(candidate, "candidate")?, text(reference, "reference")?);
        if !(1..=4).contains(&n) {
            return Err(Failure(ScStatus::Usage, format!("BLEU order {n} outside 1..=4")));
        }
        *score = slidechat::evaluation::bleu_n(c, &[r], n);
        Ok(())
    })
}

/// ROUGE-L F-measure of `candidate` against `reference`.
///
/// # Safety
/// Both strings must be NUL-terminated; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_rouge_l(candidate: *const c_char, reference: *const c_char, out_score: *mut f64) -> ScStatus {
    guard(|| {
        let score = out(out_score, "out_score")?;
        *score = slidechat::evaluation::rouge_l(text(candidate, "candidate")?, text(reference, "reference")?);
        Ok(())
    })
}
