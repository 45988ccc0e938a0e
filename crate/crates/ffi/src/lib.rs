//! C ABI over `spd-forge`.
//!
//! Objects cross the boundary as opaque handles created by `spdf_*_new`,
//! `spdf_*_read` or a computing function, and released with the matching
//! `spdf_*_free`. Every fallible call returns an [`SpdfStatus`]; on failure
//! [`spdf_last_error`] describes the most recent error on the calling
//! thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use spd_forge::imager::{apply_annulus_mask, radial_features, FeatureVector};
use spd_forge::metrics;
use spd_forge::optics::{self, Diffracted};
use spd_forge::{
    Checkpoint, ColorResponse, Error, GratingParams, MlpModel, RenderPlan, RgbImage, SceneConfig, SpdGenConfig,
    SpectralGrid,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    GridMismatch = 4,
    /// Degenerate spectrum, prediction or correlation.
    Numeric = 5,
    Io = 6,
    Parse = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Grating parameters passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdfGrating {
    pub period_a_nm: f64,
    pub depth_h0_nm: f64,
    pub reflectivity: f64,
    pub max_order: u32,
}

impl From<SpdfGrating> for GratingParams {
    fn from(g: SpdfGrating) -> Self {
        GratingParams {
            period_a_nm: g.period_a_nm,
            depth_h0_nm: g.depth_h0_nm,
            reflectivity: g.reflectivity,
            max_order: g.max_order,
        }
    }
}

impl From<GratingParams> for SpdfGrating {
    fn from(g: GratingParams) -> Self {
        SpdfGrating {
            period_a_nm: g.period_a_nm,
            depth_h0_nm: g.depth_h0_nm,
            reflectivity: g.reflectivity,
            max_order: g.max_order,
        }
    }
}

/// Set-level or pairwise spectral error metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdfMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// NaN when the correlation is undefined for the pair.
    pub pearson: f64,
}

/// A spectrum on a uniform grid.
pub struct SpdfSpd {
    inner: spd_forge::Spd,
}

/// A scene with its precomputed render plan.
pub struct SpdfScene {
    scene: SceneConfig,
    plan: Option<(SpectralGrid, RenderPlan)>,
}

/// A linear RGB image.
pub struct SpdfImage {
    inner: RgbImage,
}

/// A trained regressor and the grid its outputs live on.
pub struct SpdfModel {
    model: MlpModel,
    grid: SpectralGrid,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SpdfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DegenerateSpd | Error::DegeneratePrediction | Error::UndefinedCorrelation | Error::EmptyGenerator => {
                SpdfStatus::Numeric
            }
            Error::DimensionMismatch(_) => SpdfStatus::DimensionMismatch,
            Error::GridMismatch(_) | Error::DisjointGrids => SpdfStatus::GridMismatch,
            Error::Io { .. } | Error::Png(_) => SpdfStatus::Io,
            Error::Json { .. } | Error::Csv { .. } | Error::MalformedPfm(_) => SpdfStatus::Parse,
            _ => SpdfStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SpdfStatus::NullPointer, format!("{what} is null"))
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpdfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpdfStatus::Ok,
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
            SpdfStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slot<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SpdfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn fill(src: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if len < src.len() {
        return Err(Failure(SpdfStatus::BufferTooSmall, format!("buffer holds {len} values, need {}", src.len())));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spdf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spdf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---- spectra -------------------------------------------------------------

/// Copies `n_bins` power samples into a new spectrum.
///
/// # Safety
/// `power` must point to `n_bins` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_new(
    lambda_min: f64,
    lambda_max: f64,
    n_bins: usize,
    power: *const f64,
    out: *mut *mut SpdfSpd,
) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let grid = SpectralGrid::new(lambda_min, lambda_max, n_bins)?;
        let power = slice_arg(power, n_bins, "power")?.to_vec();
        *out = boxed(SpdfSpd { inner: spd_forge::Spd::new(grid, power)? });
        Ok(())
    })
}

/// Draws one synthetic spectrum on the default grid. `config_json` may be
/// NULL for the default generator settings.
///
/// # Safety
/// `config_json` is NULL or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_generate(config_json: *const c_char, seed: u64, out: *mut *mut SpdfSpd) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let config: SpdGenConfig = if config_json.is_null() {
            SpdGenConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Failure(SpdfStatus::Parse, format!("generator config: {e}")))?
        };
        let spd = spd_forge::generate_spd(&config, seed, &SpectralGrid::default())?;
        *out = boxed(SpdfSpd { inner: spd });
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_read_csv(path: *const c_char, out: *mut *mut SpdfSpd) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let spd = spd_forge::Spd::read_csv(&PathBuf::from(str_arg(path, "path")?))?;
        *out = boxed(SpdfSpd { inner: spd });
        Ok(())
    })
}

/// # Safety
/// `spd` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_write_csv(spd: *const SpdfSpd, path: *const c_char) -> SpdfStatus {
    guard(|| {
        let spd = deref(spd, "spd")?;
        spd.inner.write_csv(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of samples, or 0 for a NULL handle.
///
/// # Safety
/// `spd` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_len(spd: *const SpdfSpd) -> usize {
    spd.as_ref().map_or(0, |s| s.inner.power().len())
}

/// # Safety
/// `spd` is a live handle; `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_copy_power(spd: *const SpdfSpd, out: *mut f64, len: usize) -> SpdfStatus {
    guard(|| fill(deref(spd, "spd")?.inner.power(), out, len))
}

/// Writes the grid's first and last wavelength.
///
/// # Safety
/// `spd` is a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_range(spd: *const SpdfSpd, lambda_min: *mut f64, lambda_max: *mut f64) -> SpdfStatus {
    guard(|| {
        let grid = *deref(spd, "spd")?.inner.grid();
        *out_slot(lambda_min, "lambda_min")? = grid.lambda_min;
        *out_slot(lambda_max, "lambda_max")? = grid.lambda_max;
        Ok(())
    })
}

/// # Safety
/// `spd` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spdf_spd_free(spd: *mut SpdfSpd) {
    free(spd)
}

// ---- scenes and rendering --------------------------------------------------

fn scene_handle(scene: SceneConfig) -> Result<*mut SpdfScene, Failure> {
    scene.validate()?;
    Ok(boxed(SpdfScene { scene, plan: None }))
}

/// The default scene.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_scene_default(out: *mut *mut SpdfScene) -> SpdfStatus {
    guard(|| {
        *out_slot(out, "out")? = scene_handle(SceneConfig::default())?;
        Ok(())
    })
}

/// Parses a scene from its JSON text.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_scene_from_json(json: *const c_char, out: *mut *mut SpdfScene) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let scene: SceneConfig = serde_json::from_str(str_arg(json, "json")?)
            .map_err(|e| Failure(SpdfStatus::Parse, format!("scene: {e}")))?;
        *out = scene_handle(scene)?;
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_scene_read(path: *const c_char, out: *mut *mut SpdfScene) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        *out = scene_handle(SceneConfig::read(&PathBuf::from(str_arg(path, "path")?))?)?;
        Ok(())
    })
}

/// Length of the feature vector the scene produces, or 0 for NULL.
///
/// # Safety
/// `scene` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spdf_scene_feature_len(scene: *const SpdfScene) -> usize {
    scene.as_ref().map_or(0, |s| s.scene.feature_len())
}

/// # Safety
/// `scene` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spdf_scene_free(scene: *mut SpdfScene) {
    free(scene)
}

/// Renders the masked disc image of `spd`. The render plan is cached on
/// the scene per spectral grid, so a scene handle must not be used from two
/// threads at once.
///
/// # Safety
/// `scene` and `spd` are live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_render(scene: *mut SpdfScene, spd: *const SpdfSpd, out: *mut *mut SpdfImage) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let scene = out_slot(scene, "scene")?;
        let spd = &deref(spd, "spd")?.inner;
        let grid = *spd.grid();
        if scene.plan.as_ref().is_none_or(|(g, _)| *g != grid) {
            scene.plan = Some((grid, RenderPlan::new(&scene.scene, &ColorResponse::default(), &grid)?));
        }
        let (_, plan) = scene.plan.as_ref().expect("plan just built");
        let img = apply_annulus_mask(&plan.render(spd)?, &scene.scene);
        *out = boxed(SpdfImage { inner: img });
        Ok(())
    })
}

/// Radial colour features of `image` under `scene`'s binning.
///
/// # Safety
/// `scene` and `image` are live handles; `out` points to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn spdf_features(
    scene: *const SpdfScene,
    image: *const SpdfImage,
    out: *mut f64,
    len: usize,
) -> SpdfStatus {
    guard(|| {
        let scene = deref(scene, "scene")?;
        let f = radial_features(&deref(image, "image")?.inner, &scene.scene);
        fill(f.values(), out, len)
    })
}

// ---- images --------------------------------------------------------------

/// # Safety
/// `image` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spdf_image_width(image: *const SpdfImage) -> usize {
    image.as_ref().map_or(0, |i| i.inner.width())
}

/// # Safety
/// `image` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spdf_image_height(image: *const SpdfImage) -> usize {
    image.as_ref().map_or(0, |i| i.inner.height())
}

/// Copies interleaved RGB, row 0 at the top; needs `3 * width * height`.
///
/// # Safety
/// `image` is a live handle; `out` points to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn spdf_image_copy_pixels(image: *const SpdfImage, out: *mut f64, len: usize) -> SpdfStatus {
    guard(|| {
        let flat: Vec<f64> = deref(image, "image")?.inner.pixels().iter().flatten().copied().collect();
        fill(&flat, out, len)
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_image_read_pfm(path: *const c_char, out: *mut *mut SpdfImage) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        *out = boxed(SpdfImage { inner: RgbImage::read_pfm(&PathBuf::from(str_arg(path, "path")?))? });
        Ok(())
    })
}

/// # Safety
/// `image` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn spdf_image_write_pfm(image: *const SpdfImage, path: *const c_char) -> SpdfStatus {
    guard(|| {
        deref(image, "image")?.inner.write_pfm(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `image` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spdf_image_free(image: *mut SpdfImage) {
    free(image)
}

// ---- models --------------------------------------------------------------

fn model_handle(checkpoint: Checkpoint) -> Result<*mut SpdfModel, Failure> {
    let grid = checkpoint.grid.unwrap_or_default();
    let model = checkpoint.to_model()?;
    if model.output_dim() != grid.n_bins {
        return Err(Error::DimensionMismatch(format!(
            "model outputs {} values for a {}-bin grid",
            model.output_dim(),
            grid.n_bins
        ))
        .into());
    }
    Ok(boxed(SpdfModel { model, grid }))
}

/// Loads a JSON checkpoint file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_model_read(path: *const c_char, out: *mut *mut SpdfModel) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        *out = model_handle(Checkpoint::read(&PathBuf::from(str_arg(path, "path")?))?)?;
        Ok(())
    })
}

/// Parses a checkpoint from its JSON text.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_model_from_json(json: *const c_char, out: *mut *mut SpdfModel) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let checkpoint: Checkpoint = serde_json::from_str(str_arg(json, "json")?)
            .map_err(|e| Failure(SpdfStatus::Parse, format!("checkpoint: {e}")))?;
        *out = model_handle(checkpoint)?;
        Ok(())
    })
}

/// # Safety
/// `model` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spdf_model_input_dim(model: *const SpdfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_dim())
}

/// # Safety
/// `model` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spdf_model_output_dim(model: *const SpdfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.output_dim())
}

/// Predicts a clamped, peak-normalized spectrum from `n` features.
///
/// # Safety
/// `model` is a live handle; `features` points to `n` doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_model_predict(
    model: *const SpdfModel,
    features: *const f64,
    n: usize,
    out: *mut *mut SpdfSpd,
) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let m = deref(model, "model")?;
        let x = FeatureVector(slice_arg(features, n, "features")?.to_vec());
        *out = boxed(SpdfSpd { inner: spd_forge::predict_spd(&m.model, &x, &m.grid)? });
        Ok(())
    })
}

/// # Safety
/// `model` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spdf_model_free(model: *mut SpdfModel) {
    free(model)
}

// ---- metrics -------------------------------------------------------------

/// MAE, RMSE and Pearson between two spectra on the same grid. A constant
/// spectrum yields a NaN `pearson` with status OK.
///
/// # Safety
/// `pred` and `truth` are live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_metrics(pred: *const SpdfSpd, truth: *const SpdfSpd, out: *mut SpdfMetrics) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        let p = &deref(pred, "pred")?.inner;
        let t = &deref(truth, "truth")?.inner;
        let pearson = match metrics::pearson(p, t) {
            Ok(r) => r,
            Err(Error::UndefinedCorrelation) => f64::NAN,
            Err(e) => return Err(e.into()),
        };
        *out = SpdfMetrics { mae: metrics::mae(p, t)?, rmse: metrics::rmse(p, t)?, pearson };
        Ok(())
    })
}

/// PSNR in dB; `+inf` for identical images.
///
/// # Safety
/// `a` and `b` are live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_psnr(a: *const SpdfImage, b: *const SpdfImage, peak: f64, out: *mut f64) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        *out = metrics::psnr(&deref(a, "a")?.inner, &deref(b, "b")?.inner, peak)?;
        Ok(())
    })
}

// ---- optics --------------------------------------------------------------

#[no_mangle]
pub extern "C" fn spdf_grating_default() -> SpdfGrating {
    GratingParams::default().into()
}

/// Efficiency of order `m` at `lambda_nm`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_order_efficiency(m: i32, lambda_nm: f64, grating: SpdfGrating, out: *mut f64) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        *out = optics::order_efficiency(m, lambda_nm, &grating.into())?;
        Ok(())
    })
}

/// Outgoing sine of order `m`. `*propagating` is set to 0 for an evanescent
/// order, in which case `*sin_out` is left untouched.
///
/// # Safety
/// Both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_diffracted_sine(
    sin_spec: f64,
    m: i32,
    lambda_nm: f64,
    grating: SpdfGrating,
    sin_out: *mut f64,
    propagating: *mut i32,
) -> SpdfStatus {
    guard(|| {
        let sin_out = out_slot(sin_out, "sin_out")?;
        let propagating = out_slot(propagating, "propagating")?;
        match optics::diffracted_sine(sin_spec, m, lambda_nm, &grating.into()) {
            Diffracted::Propagating(s) => {
                *sin_out = s;
                *propagating = 1;
            }
            Diffracted::Evanescent => *propagating = 0,
        }
        Ok(())
    })
}

/// Wavelength that order `m` sends from `sin_spec` to `sin_out`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spdf_wavelength_for_geometry(
    sin_spec: f64,
    sin_out: f64,
    m: i32,
    grating: SpdfGrating,
    out: *mut f64,
) -> SpdfStatus {
    guard(|| {
        let out = out_slot(out, "out")?;
        *out = optics::wavelength_for_geometry(sin_spec, sin_out, m, &grating.into())?;
        Ok(())
    })
}
