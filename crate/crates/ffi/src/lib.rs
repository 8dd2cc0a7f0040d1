//! C interface. Objects cross the boundary as opaque handles created by
//! `*_new`/`*_read`/... functions and released with the matching
//! `*_free`. Every fallible call returns a [`CatsStatus`]; the message of
//! the last failure on the calling thread is available through
//! [`cats_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use cats::baselines::{apply_noise, Mechanism, NoiseConfig};
use cats::catgen::lsa_solve;
use cats::kama::{kama_pipeline, AnonymizedMatrixSet};
use cats::metrics::{haversine_km, jsd, wasserstein2};
use cats::mobility::io::{read_csv, write_csv};
use cats::mobility::{aggregate_user, Dataset, GridSystem};
use cats::pipeline::world::{generate_world, SyntheticWorldSpec};
use cats::pipeline::{Pipeline, PipelineConfig};
use cats::Error;

/// Stable result codes. Values never change between releases.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Panic = 3,
    OutOfBounds = 10,
    EmptyInput = 11,
    AllMissing = 12,
    Infeasible = 13,
    ShapeMismatch = 14,
    ZeroSlice = 15,
    NonFinite = 16,
    ConfigInvalid = 17,
    NonFiniteLoss = 18,
    ZeroMass = 19,
    TooShort = 20,
    LabelMismatch = 21,
    DimensionMismatch = 22,
    InsufficientCoverage = 23,
    Parse = 24,
    Format = 25,
    Io = 26,
}

fn status_of(e: &Error) -> CatsStatus {
    match e {
        Error::OutOfBounds { .. } => CatsStatus::OutOfBounds,
        Error::EmptyInput(_) => CatsStatus::EmptyInput,
        Error::AllMissing => CatsStatus::AllMissing,
        Error::Infeasible { .. } => CatsStatus::Infeasible,
        Error::ShapeMismatch(_) => CatsStatus::ShapeMismatch,
        Error::ZeroSlice { .. } => CatsStatus::ZeroSlice,
        Error::NonFinite(_) => CatsStatus::NonFinite,
        Error::ConfigInvalid(_) => CatsStatus::ConfigInvalid,
        Error::NonFiniteLoss { .. } => CatsStatus::NonFiniteLoss,
        Error::ZeroMass => CatsStatus::ZeroMass,
        Error::TooShort { .. } => CatsStatus::TooShort,
        Error::LabelMismatch(_) => CatsStatus::LabelMismatch,
        Error::DimensionMismatch(_) => CatsStatus::DimensionMismatch,
        Error::InsufficientCoverage(_) => CatsStatus::InsufficientCoverage,
        Error::Parse { .. } => CatsStatus::Parse,
        Error::Format { .. } | Error::Json(_) | Error::Csv(_) => CatsStatus::Format,
        Error::Io(_) => CatsStatus::Io,
        Error::Stage { source, .. } => status_of(source),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, recording failures and converting panics.
fn guard(f: impl FnOnce() -> Result<(), CatsStatus>) -> CatsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CatsStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            CatsStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, CatsStatus>;
}

impl<T> OrStatus<T> for cats::Result<T> {
    fn or_status(self) -> Result<T, CatsStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null(what: &str) -> CatsStatus {
    set_error(format!("{what} is null"));
    CatsStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, CatsStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        CatsStatus::InvalidUtf8
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, CatsStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], CatsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), CatsStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Spatial grid plus hours per day.
pub struct CatsGrid(GridSystem);

/// A trajectory dataset.
pub struct CatsDataset(Dataset);

/// Output of K-anonymity mobility averaging.
pub struct CatsMatrixSet(AnonymizedMatrixSet);

/// NUL-terminated library version; static storage.
#[no_mangle]
pub extern "C" fn cats_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cats_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cats_grid_new(
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
    cells_per_side: usize,
    hours_per_day: usize,
    out: *mut *mut CatsGrid,
) -> CatsStatus {
    guard(|| {
        let g = GridSystem::new(lat_min, lat_max, lon_min, lon_max, cells_per_side, hours_per_day).or_status()?;
        put(out, Box::into_raw(Box::new(CatsGrid(g))), "out")
    })
}

/// # Safety
/// `grid` must come from `cats_grid_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn cats_grid_free(grid: *mut CatsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Cell containing a point; fails with `OutOfBounds` outside the grid.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cats_grid_encode(
    grid: *const CatsGrid,
    lat: f64,
    lon: f64,
    row: *mut u32,
    col: *mut u32,
) -> CatsStatus {
    guard(|| {
        let g = ref_arg(grid, "grid")?;
        let c = g.0.encode_point(lat, lon).or_status()?;
        put(row, c.row, "row")?;
        put(col, c.col, "col")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cats_dataset_read_csv(
    path: *const c_char,
    hours_per_day: usize,
    out: *mut *mut CatsDataset,
) -> CatsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let records = read_csv(path.as_ref(), hours_per_day).or_status()?;
        put(out, Box::into_raw(Box::new(CatsDataset(Dataset::from_records(&records)))), "out")
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cats_dataset_write_csv(ds: *const CatsDataset, path: *const c_char) -> CatsStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        let path = str_arg(path, "path")?;
        write_csv(path.as_ref(), &ds.0, &[], false).or_status()
    })
}

/// # Safety
/// `ds` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn cats_dataset_free(ds: *mut CatsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of (user, day) trajectories; 0 for a null handle.
///
/// # Safety
/// `ds` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn cats_dataset_len(ds: *const CatsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn cats_dataset_point_count(ds: *const CatsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.point_count())
}

/// Synthetic home/work world with default haunts.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cats_world_generate(
    grid: *const CatsGrid,
    users: usize,
    days: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut CatsDataset,
) -> CatsStatus {
    guard(|| {
        let g = ref_arg(grid, "grid")?;
        let spec = SyntheticWorldSpec {
            users,
            days,
            noise,
            ..SyntheticWorldSpec::default()
        };
        spec.validate(&g.0).or_status()?;
        let (ds, _) = generate_world(&spec, &g.0, seed).or_status()?;
        put(out, Box::into_raw(Box::new(CatsDataset(ds))), "out")
    })
}

/// Applies one geomasking mechanism (`rp`, `gg`, `ldp` or `tdp`) with
/// default noise parameters.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cats_mask(
    ds: *const CatsDataset,
    mechanism: *const c_char,
    seed: u64,
    out: *mut *mut CatsDataset,
) -> CatsStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        let mech: Mechanism = str_arg(mechanism, "mechanism")?.parse().or_status()?;
        let masked = apply_noise(&ds.0, &NoiseConfig::new(mech, seed)).or_status()?;
        put(out, Box::into_raw(Box::new(CatsDataset(masked))), "out")
    })
}

/// Aggregates every user, clusters users into groups of at least `k`
/// and averages their matrices. `clusters` of 0 picks the default count.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cats_kama(
    ds: *const CatsDataset,
    grid: *const CatsGrid,
    k: usize,
    clusters: usize,
    seed: u64,
    out: *mut *mut CatsMatrixSet,
) -> CatsStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        let g = ref_arg(grid, "grid")?;
        let matrices = ds
            .0
            .user_ids()
            .iter()
            .map(|u| aggregate_user(&ds.0.user_records(u), &g.0))
            .collect::<cats::Result<Vec<_>>>()
            .or_status()?;
        let h = (clusters > 0).then_some(clusters);
        let set = kama_pipeline(&ds.0, &matrices, k, h, seed).or_status()?;
        put(out, Box::into_raw(Box::new(CatsMatrixSet(set))), "out")
    })
}

/// # Safety
/// `set` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn cats_matrix_set_cluster_count(set: *const CatsMatrixSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.clusters.len())
}

/// # Safety
/// `set` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn cats_matrix_set_min_cluster_size(set: *const CatsMatrixSet) -> usize {
    set.as_ref().map_or(0, |s| s.0.min_cluster_size())
}

/// # Safety
/// `set` must come from `cats_kama` or be null.
#[no_mangle]
pub unsafe extern "C" fn cats_matrix_set_free(set: *mut CatsMatrixSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Minimum-cost perfect matching on a row-major `n × n` cost matrix.
/// Writes the column of each row into `perm` (length `n`).
///
/// # Safety
/// `cost` must hold `n * n` values, `perm` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn cats_lsa_solve(cost: *const f64, n: usize, perm: *mut usize, total: *mut f64) -> CatsStatus {
    guard(|| {
        let c = slice_arg(cost, n * n, "cost")?;
        let a = lsa_solve(c, n).or_status()?;
        if n > 0 && perm.is_null() {
            return Err(null("perm"));
        }
        for (i, &j) in a.perm.iter().enumerate() {
            perm.add(i).write(j);
        }
        put(total, a.total_cost, "total")
    })
}

/// Jensen-Shannon divergence (base 2) between two histograms of length `len`.
///
/// # Safety
/// `a` and `b` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn cats_jsd(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> CatsStatus {
    guard(|| {
        let v = jsd(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?).or_status()?;
        put(out, v, "out")
    })
}

/// W₂ between two `n × n` grid histograms, in cell units.
///
/// # Safety
/// `a` and `b` must hold `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn cats_wasserstein2(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> CatsStatus {
    guard(|| {
        let v = wasserstein2(slice_arg(a, n * n, "a")?, slice_arg(b, n * n, "b")?, n).or_status()?;
        put(out, v, "out")
    })
}

/// Great-circle distance in km.
#[no_mangle]
pub extern "C" fn cats_haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine_km((lat1, lon1), (lat2, lon2))
}

/// Runs every pipeline stage into `out_dir`. `config_path` may be null
/// for the defaults.
///
/// # Safety
/// Strings must be NUL-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn cats_pipeline_run(config_path: *const c_char, out_dir: *const c_char, seed: u64) -> CatsStatus {
    guard(|| {
        let mut cfg = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::load(str_arg(config_path, "config_path")?.as_ref()).or_status()?
        };
        cfg.seed = seed;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let p = Pipeline::open(cfg, &dir).or_status()?;
        p.run_all().or_status().map(|_| ())
    })
}
