//! C ABI over the timerbed library.
//!
//! Every fallible function returns a [`TbStatus`]; on failure the message is
//! available from [`tb_last_error`] on the same thread. Strings and buffers
//! handed out by the library must be released with [`tb_string_free`] and
//! [`tb_buffer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use timerbed::anchors::builtin_anchor_table;
use timerbed::eval::{self, AnswerError, EvalError};
use timerbed::ingest::{self, Dataset, IngestError};
use timerbed::llm::Price;
use timerbed::prompt::{self, Part, PromptError};
use timerbed::task::{builtin_task_registry, ClassLetter, ReasoningStrategy, Split, TaskSpec, TimeSeriesSample};
use timerbed::viz::{self, Domain, ImageDetail, ImageTokenRule, RenderConfig, VizError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Io = 5,
    InvalidData = 6,
    NoAnswer = 7,
    AmbiguousAnswer = 8,
    RenderFailed = 9,
    PromptFailed = 10,
    Panic = 99,
}

/// Loaded dataset. Opaque to C.
pub struct TbDataset {
    inner: Dataset,
}

/// Byte buffer owned by the library.
#[repr(C)]
pub struct TbBuffer {
    pub data: *mut u8,
    pub len: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TbDatasetInfo {
    pub num_classes: usize,
    pub num_channels: usize,
    pub series_length: usize,
    pub train_count: usize,
    pub test_count: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TbStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: TbStatus, msg: impl Into<String>) -> Res<T> {
    Err(Failure(status, msg.into()))
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let status = match e {
            IngestError::MissingFile(_) | IngestError::UnknownSample(_) => TbStatus::NotFound,
            IngestError::Io { .. } => TbStatus::Io,
            _ => TbStatus::InvalidData,
        };
        Failure(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::UnknownTask(_) => TbStatus::NotFound,
            _ => TbStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<VizError> for Failure {
    fn from(e: VizError) -> Self {
        Failure(TbStatus::RenderFailed, e.to_string())
    }
}

impl From<PromptError> for Failure {
    fn from(e: PromptError) -> Self {
        Failure(TbStatus::PromptFailed, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Res<()>) -> TbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TbStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(TbStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(TbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut()
        .map_or_else(|| fail(TbStatus::NullArgument, format!("{what} is null")), Ok)
}

unsafe fn dataset<'a>(p: *const TbDataset) -> Res<&'a Dataset> {
    p.as_ref()
        .map(|d| &d.inner)
        .map_or_else(|| fail(TbStatus::NullArgument, "dataset handle is null"), Ok)
}

fn owned_string(s: String) -> Res<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .or_else(|_| fail(TbStatus::InvalidData, "string contains NUL"))
}

fn task_spec(name: &str) -> Res<TaskSpec> {
    builtin_task_registry()
        .remove(name)
        .map_or_else(|| fail(TbStatus::NotFound, format!("unknown task {name:?}")), Ok)
}

fn sample<'a>(ds: &'a Dataset, id: &str) -> Res<&'a TimeSeriesSample> {
    ds.sample(id)
        .map_or_else(|| fail(TbStatus::NotFound, format!("no sample with id {id}")), Ok)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `buf` must be a buffer returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_buffer_free(buf: TbBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}

/// Built-in task specifications as a JSON object keyed by task name.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_task_registry_json(out: *mut *mut c_char) -> TbStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        let json = serde_json::to_string_pretty(&builtin_task_registry())
            .or_else(|e| fail(TbStatus::InvalidData, e.to_string()))?;
        *out = owned_string(json)?;
        Ok(())
    })
}

/// Loads and validates a dataset directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer. The handle
/// is released with [`tb_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_load(dir: *const c_char, out: *mut *mut TbDataset) -> TbStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        *out = ptr::null_mut();
        let inner = ingest::load_dataset(Path::new(text(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(TbDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`tb_dataset_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_free(ds: *mut TbDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live handle and `info` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_info(ds: *const TbDataset, info: *mut TbDatasetInfo) -> TbStatus {
    guard(|| {
        let ds = dataset(ds)?;
        *out(info, "info")? = TbDatasetInfo {
            num_classes: ds.spec.num_classes(),
            num_channels: ds.spec.num_variables,
            series_length: ds.spec.series_length,
            train_count: ds.train.len(),
            test_count: ds.test.len(),
        };
        Ok(())
    })
}

/// The line `timerbed validate` prints for this dataset.
///
/// # Safety
/// `ds` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_summary(ds: *const TbDataset, out: *mut *mut c_char) -> TbStatus {
    guard(|| {
        let ds = dataset(ds)?;
        *self::out(out, "out")? = owned_string(ds.summary())?;
        Ok(())
    })
}

/// Hex SHA-256 over a dataset directory's manifest and split files.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_digest(dir: *const c_char, out: *mut *mut c_char) -> TbStatus {
    guard(|| {
        let digest = ingest::dataset_digest(Path::new(text(dir, "dir")?))?;
        *self::out(out, "out")? = owned_string(digest)?;
        Ok(())
    })
}

/// Assigns ids to train (1) or test (0) with the split used for datasets that
/// ship without a test file.
///
/// # Safety
/// `ids` must point to `n` NUL-terminated strings and `is_train` to `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn tb_split_ids(
    ids: *const *const c_char,
    n: usize,
    train_fraction: f64,
    is_train: *mut u8,
) -> TbStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&train_fraction) {
            return fail(TbStatus::InvalidArgument, format!("train fraction {train_fraction} outside [0, 1]"));
        }
        if n == 0 {
            return Ok(());
        }
        if ids.is_null() || is_train.is_null() {
            return fail(TbStatus::NullArgument, "ids or is_train is null");
        }
        let samples = (0..n)
            .map(|i| {
                Ok(TimeSeriesSample {
                    id: text(*ids.add(i), "id")?.to_string(),
                    label: ClassLetter::from_index(0).expect("letter A"),
                    values: Vec::new(),
                    split: Split::Train,
                })
            })
            .collect::<Res<Vec<_>>>()?;
        let (train, _) = ingest::split_by_id_hash(samples, train_fraction);
        let flags = std::slice::from_raw_parts_mut(is_train, n);
        flags.fill(0);
        for s in &train {
            let i = (0..n).find(|&i| CStr::from_ptr(*ids.add(i)).to_bytes() == s.id.as_bytes());
            if let Some(i) = i {
                flags[i] = 1;
            }
        }
        Ok(())
    })
}

/// Serializes one sample the way numeric prompts embed it.
///
/// # Safety
/// `ds` must be a live handle, `id` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_serialize_numeric(
    ds: *const TbDataset,
    id: *const c_char,
    precision: u8,
    out: *mut *mut c_char,
) -> TbStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let s = sample(ds, text(id, "id")?)?;
        *self::out(out, "out")? = owned_string(prompt::serialize_numeric(s, &ds.spec, precision)?)?;
        Ok(())
    })
}

/// Renders one sample to PNG with the task's default settings, optionally
/// overriding the domain (`"time"` or `"frequency"`). `tokens` receives the
/// estimated image token count when non-null.
///
/// # Safety
/// `ds` must be a live handle, `id` a NUL-terminated string, `mode` null or a
/// NUL-terminated string, `out` valid and `tokens` null or valid.
#[no_mangle]
pub unsafe extern "C" fn tb_dataset_render_png(
    ds: *const TbDataset,
    id: *const c_char,
    mode: *const c_char,
    out: *mut TbBuffer,
    tokens: *mut u32,
) -> TbStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let s = sample(ds, text(id, "id")?)?;
        let out = self::out(out, "out")?;
        let mut config = RenderConfig::for_task(&ds.spec);
        if !mode.is_null() {
            config.mode = text(mode, "mode")?
                .parse::<Domain>()
                .or_else(|e| fail(TbStatus::InvalidArgument, e))?;
        }
        let image = viz::render(s, &ds.spec, &config)?;
        if let Some(t) = tokens.as_mut() {
            *t = viz::estimate_image_tokens(&image, &ImageTokenRule::gpt4o_reported());
        }
        let bytes = image.png_bytes.into_boxed_slice();
        out.len = bytes.len();
        out.data = Box::into_raw(bytes).cast();
        Ok(())
    })
}

/// Forward, unnormalized DFT of `n` real values into `re` and `im`.
///
/// # Safety
/// `signal`, `re` and `im` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn tb_dft(signal: *const f64, n: usize, re: *mut f64, im: *mut f64) -> TbStatus {
    guard(|| {
        if n == 0 {
            return fail(TbStatus::InvalidArgument, "signal is empty");
        }
        if signal.is_null() || re.is_null() || im.is_null() {
            return fail(TbStatus::NullArgument, "signal, re or im is null");
        }
        let spectrum = viz::dft(std::slice::from_raw_parts(signal, n));
        let re = std::slice::from_raw_parts_mut(re, n);
        let im = std::slice::from_raw_parts_mut(im, n);
        for (k, c) in spectrum.iter().enumerate() {
            re[k] = c.re;
            im[k] = c.im;
        }
        Ok(())
    })
}

/// Estimated tokens for an image of the given size; `auto_detail` selects
/// the tiled rule over the flat low-detail cost.
#[no_mangle]
pub extern "C" fn tb_image_tokens(width: u32, height: u32, auto_detail: bool) -> u32 {
    let detail = if auto_detail { ImageDetail::Auto } else { ImageDetail::Low };
    ImageTokenRule::gpt4o_reported().estimate(width, height, detail)
}

/// US dollars for a request at per-million-token prices.
#[no_mangle]
pub extern "C" fn tb_cost(tokens_in: u64, tokens_out: u64, input_per_million: f64, output_per_million: f64) -> f64 {
    eval::cost(
        tokens_in,
        tokens_out,
        &Price {
            input_per_million,
            output_per_million,
        },
    )
}

/// Relative gain of `new_pct` over `baseline_pct`, in percent.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_improvement(new_pct: f64, baseline_pct: f64, out: *mut f64) -> TbStatus {
    guard(|| {
        *self::out(out, "out")? = eval::improvement(new_pct, baseline_pct)?;
        Ok(())
    })
}

/// Accuracy divided by the task's random-guess accuracy.
///
/// # Safety
/// `task` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_normalize(accuracy_pct: f64, task: *const c_char, out: *mut f64) -> TbStatus {
    guard(|| {
        *self::out(out, "out")? = eval::normalize(accuracy_pct, text(task, "task")?, &builtin_anchor_table())?;
        Ok(())
    })
}

/// Number of supervised baselines the accuracy strictly beats, out of `total`.
///
/// # Safety
/// `task` must be a NUL-terminated string; `wins` and `total` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tb_win_count(
    accuracy_pct: f64,
    task: *const c_char,
    wins: *mut usize,
    total: *mut usize,
) -> TbStatus {
    guard(|| {
        let (w, t) = eval::win_count(accuracy_pct, text(task, "task")?, &builtin_anchor_table())?;
        *out(wins, "wins")? = w;
        *out(total, "total")? = t;
        Ok(())
    })
}

/// Extracts the class letter from a model reply.
///
/// # Safety
/// `task` and `response` must be NUL-terminated strings; `letter` valid.
#[no_mangle]
pub unsafe extern "C" fn tb_parse_answer(
    task: *const c_char,
    response: *const c_char,
    letter: *mut c_char,
) -> TbStatus {
    guard(|| {
        let spec = task_spec(text(task, "task")?)?;
        let letter = out(letter, "letter")?;
        match eval::parse_answer(text(response, "response")?, &spec) {
            Ok(l) => {
                *letter = l.as_char() as c_char;
                Ok(())
            }
            Err(e @ AnswerError::NoAnswer) => fail(TbStatus::NoAnswer, e.to_string()),
            Err(e) => fail(TbStatus::AmbiguousAnswer, e.to_string()),
        }
    })
}

/// Builds a text-only prompt. `strategy` is `"zst"` or `"cot"`; `"plan"`
/// builds the planning prompt and ignores `data`.
///
/// # Safety
/// `task` and `strategy` must be NUL-terminated strings, `data` too unless the
/// strategy is `"plan"`; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tb_build_prompt(
    task: *const c_char,
    strategy: *const c_char,
    data: *const c_char,
    out: *mut *mut c_char,
) -> TbStatus {
    guard(|| {
        let spec = task_spec(text(task, "task")?)?;
        let out = self::out(out, "out")?;
        let strategy = text(strategy, "strategy")?;
        let bundle = if strategy.eq_ignore_ascii_case("plan") {
            prompt::build_planning_prompt(&spec)?
        } else {
            let target = Part::Text(text(data, "data")?.to_string());
            match strategy.parse::<ReasoningStrategy>() {
                Ok(ReasoningStrategy::Zst) => prompt::build_zst(&target, &spec)?,
                Ok(ReasoningStrategy::Cot) => prompt::build_cot(&target, &spec)?,
                _ => return fail(TbStatus::InvalidArgument, format!("unsupported strategy {strategy:?}")),
            }
        };
        *out = owned_string(bundle.text())?;
        Ok(())
    })
}
