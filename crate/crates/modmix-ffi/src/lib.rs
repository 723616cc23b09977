//! C ABI over the modmix library.
//!
//! Handles are opaque pointers created and destroyed by this library; every
//! fallible function returns an [`MmStatus`] and leaves a human-readable
//! description of the last failure in a thread-local buffer readable via
//! [`mm_last_error_message`]. The generated header lives at
//! `include/modmix.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double, c_int};
use std::path::Path;

use modmix::coco;
use modmix::dataset::{load_category_config, resolve_subgroup, CategorySet};
use modmix::dhs::{self, DepthMode, EncodeOptions, PseudoImage};
use modmix::eval::{self, EvalOptions, COCO_THRESHOLDS};
use modmix::geometry::{box_iou, load_cloud, BoundingBox, OrganizedPointCloud, RgbImage};
use modmix::mixing::{self, Label, MixtureMask, Neighborhood};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    Utf8Error = 4,
    EvalError = 5,
    BufferTooSmall = 6,
}

/// Organized point cloud handle.
pub struct MmCloud {
    inner: OrganizedPointCloud,
}

/// Encoded DHS pseudo-image handle.
pub struct MmPseudoImage {
    inner: PseudoImage,
}

/// Mixture mask handle.
pub struct MmMask {
    inner: MixtureMask,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl AsRef<str>) {
    let sanitized = message.as_ref().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: MmStatus, message: impl AsRef<str>) -> MmStatus {
    set_error(message);
    status
}

/// Description of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, MmStatus> {
    if ptr.is_null() {
        return Err(fail(MmStatus::NullPointer, "null path"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(e) => Err(fail(MmStatus::Utf8Error, format!("path is not UTF-8: {e}"))),
    }
}

fn neighborhood_arg(value: c_int) -> Result<Neighborhood, MmStatus> {
    match value {
        4 => Ok(Neighborhood::Four),
        8 => Ok(Neighborhood::Eight),
        other => Err(fail(
            MmStatus::InvalidArgument,
            format!("neighborhood must be 4 or 8, got {other}"),
        )),
    }
}

// ---------------------------------------------------------------------------
// Clouds
// ---------------------------------------------------------------------------

/// Reads a cloud file: `.opc`/`.opc1` containers or `.png` depth maps with
/// a `<name>.intr.txt` intrinsics sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
/// The returned handle must be released with [`mm_cloud_free`].
#[no_mangle]
pub unsafe extern "C" fn mm_cloud_read(path: *const c_char, out: *mut *mut MmCloud) -> MmStatus {
    if out.is_null() {
        return fail(MmStatus::NullPointer, "null output pointer");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_cloud(path) {
        Ok(cloud) => {
            *out = Box::into_raw(Box::new(MmCloud { inner: cloud }));
            MmStatus::Ok
        }
        Err(e) => fail(MmStatus::IoError, format!("{}: {e}", path.display())),
    }
}

/// # Safety
/// `cloud` must be a live handle from this library or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn mm_cloud_free(cloud: *mut MmCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// # Safety
/// `cloud` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_cloud_width(cloud: *const MmCloud) -> u32 {
    cloud.as_ref().map_or(0, |c| c.inner.width() as u32)
}

/// # Safety
/// `cloud` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_cloud_height(cloud: *const MmCloud) -> u32 {
    cloud.as_ref().map_or(0, |c| c.inner.height() as u32)
}

// ---------------------------------------------------------------------------
// DHS encoding
// ---------------------------------------------------------------------------

/// Encodes a cloud into a DHS pseudo-image. `depth_mode` 0 measures
/// Euclidean range, 1 the coordinate along the sensor viewing axis.
///
/// # Safety
/// `cloud` must be a live handle and `out` a valid pointer; release the
/// result with [`mm_pseudo_image_free`].
#[no_mangle]
pub unsafe extern "C" fn mm_encode_dhs(
    cloud: *const MmCloud,
    depth_mode: c_int,
    out: *mut *mut MmPseudoImage,
) -> MmStatus {
    if cloud.is_null() || out.is_null() {
        return fail(MmStatus::NullPointer, "null cloud or output pointer");
    }
    let mode = match depth_mode {
        0 => DepthMode::Range,
        1 => DepthMode::Axial,
        other => {
            return fail(
                MmStatus::InvalidArgument,
                format!("depth_mode must be 0 (range) or 1 (axial), got {other}"),
            )
        }
    };
    let image = dhs::encode_dhs_with(&(*cloud).inner, &EncodeOptions { depth_mode: mode });
    *out = Box::into_raw(Box::new(MmPseudoImage { inner: image }));
    MmStatus::Ok
}

/// # Safety
/// `image` must be a live handle from this library or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn mm_pseudo_image_free(image: *mut MmPseudoImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// # Safety
/// `image` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_pseudo_image_width(image: *const MmPseudoImage) -> u32 {
    image.as_ref().map_or(0, |i| i.inner.width as u32)
}

/// # Safety
/// `image` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_pseudo_image_height(image: *const MmPseudoImage) -> u32 {
    image.as_ref().map_or(0, |i| i.inner.height as u32)
}

/// Copies the normalized channels out row-major. Each of `d`, `h`, `s`
/// needs room for `width * height` doubles and `valid` for as many bytes;
/// any of them may be null to skip that channel.
///
/// # Safety
/// `image` must be a live handle and the non-null output buffers must hold
/// at least `len` elements, with `len >= width * height`.
#[no_mangle]
pub unsafe extern "C" fn mm_pseudo_image_channels(
    image: *const MmPseudoImage,
    d: *mut c_double,
    h: *mut c_double,
    s: *mut c_double,
    valid: *mut u8,
    len: usize,
) -> MmStatus {
    let Some(img) = image.as_ref() else {
        return fail(MmStatus::NullPointer, "null image");
    };
    let n = img.inner.width * img.inner.height;
    if len < n {
        return fail(
            MmStatus::BufferTooSmall,
            format!("need {n} elements, buffer holds {len}"),
        );
    }
    if !d.is_null() {
        std::ptr::copy_nonoverlapping(img.inner.d.as_ptr(), d, n);
    }
    if !h.is_null() {
        std::ptr::copy_nonoverlapping(img.inner.h.as_ptr(), h, n);
    }
    if !s.is_null() {
        std::ptr::copy_nonoverlapping(img.inner.s.as_ptr(), s, n);
    }
    if !valid.is_null() {
        for (i, v) in img.inner.valid.iter().enumerate() {
            *valid.add(i) = u8::from(*v);
        }
    }
    MmStatus::Ok
}

/// Writes the pseudo-image as an 8-bit RGB PNG (channel order D, H, S).
///
/// # Safety
/// `image` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mm_pseudo_image_write_png(
    image: *const MmPseudoImage,
    path: *const c_char,
) -> MmStatus {
    let Some(img) = image.as_ref() else {
        return fail(MmStatus::NullPointer, "null image");
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match img.inner.to_rgb_image().save(path) {
        Ok(()) => MmStatus::Ok,
        Err(e) => fail(MmStatus::IoError, format!("{}: {e}", path.display())),
    }
}

// ---------------------------------------------------------------------------
// Mixture masks
// ---------------------------------------------------------------------------

/// Chessboard per-patch mask. `origin_label` 0 puts label A at the origin
/// patch, 1 puts label B there.
///
/// # Safety
/// `out` must be a valid pointer; release the result with [`mm_mask_free`].
#[no_mangle]
pub unsafe extern "C" fn mm_cppm_mask(
    width: u32,
    height: u32,
    patch_size: u32,
    origin_label: c_int,
    out: *mut *mut MmMask,
) -> MmStatus {
    if out.is_null() {
        return fail(MmStatus::NullPointer, "null output pointer");
    }
    if patch_size == 0 {
        return fail(MmStatus::InvalidArgument, "patch_size must be >= 1");
    }
    let origin = match origin_label {
        0 => Label::A,
        1 => Label::B,
        other => {
            return fail(
                MmStatus::InvalidArgument,
                format!("origin_label must be 0 (A) or 1 (B), got {other}"),
            )
        }
    };
    let mask = mixing::cppm_mask(width as usize, height as usize, patch_size as usize, origin);
    *out = Box::into_raw(Box::new(MmMask { inner: mask }));
    MmStatus::Ok
}

/// Stochastic flood-fill mask; deterministic for equal parameter tuples.
/// Probabilities must lie in (0, 1]; `neighborhood` is 4 or 8.
///
/// # Safety
/// `out` must be a valid pointer; release the result with [`mm_mask_free`].
#[no_mangle]
pub unsafe extern "C" fn mm_sffm_mask(
    width: u32,
    height: u32,
    p_a: c_double,
    p_b: c_double,
    neighborhood: c_int,
    seed: u64,
    out: *mut *mut MmMask,
) -> MmStatus {
    if out.is_null() {
        return fail(MmStatus::NullPointer, "null output pointer");
    }
    if !(p_a > 0.0 && p_a <= 1.0 && p_b > 0.0 && p_b <= 1.0) {
        return fail(
            MmStatus::InvalidArgument,
            format!("probabilities must lie in (0, 1], got ({p_a}, {p_b})"),
        );
    }
    let neighborhood = match neighborhood_arg(neighborhood) {
        Ok(n) => n,
        Err(s) => return s,
    };
    let mask = mixing::sffm_mask(
        width as usize,
        height as usize,
        p_a,
        p_b,
        neighborhood,
        seed,
    );
    *out = Box::into_raw(Box::new(MmMask { inner: mask }));
    MmStatus::Ok
}

/// # Safety
/// `mask` must be a live handle from this library or null (a no-op).
#[no_mangle]
pub unsafe extern "C" fn mm_mask_free(mask: *mut MmMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_mask_width(mask: *const MmMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.inner.width() as u32)
}

/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_mask_height(mask: *const MmMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.inner.height() as u32)
}

/// Fraction of pixels carrying label A; negative on a null handle.
///
/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mm_mask_a_fraction(mask: *const MmMask) -> c_double {
    mask.as_ref().map_or(-1.0, |m| m.inner.a_fraction())
}

/// Copies the per-pixel labels out row-major: 0 for A, 1 for B.
///
/// # Safety
/// `mask` must be a live handle and `out` must hold at least `len` bytes,
/// with `len >= width * height`.
#[no_mangle]
pub unsafe extern "C" fn mm_mask_labels(
    mask: *const MmMask,
    out: *mut u8,
    len: usize,
) -> MmStatus {
    let Some(m) = mask.as_ref() else {
        return fail(MmStatus::NullPointer, "null mask");
    };
    if out.is_null() {
        return fail(MmStatus::NullPointer, "null output buffer");
    }
    let n = m.inner.width() * m.inner.height();
    if len < n {
        return fail(
            MmStatus::BufferTooSmall,
            format!("need {n} bytes, buffer holds {len}"),
        );
    }
    for (i, label) in m.inner.cells().iter().enumerate() {
        *out.add(i) = *label as u8;
    }
    MmStatus::Ok
}

/// Writes the mask as a 1-bit PNG (A = 0, B = 1).
///
/// # Safety
/// `mask` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mm_mask_write_png(mask: *const MmMask, path: *const c_char) -> MmStatus {
    let Some(m) = mask.as_ref() else {
        return fail(MmStatus::NullPointer, "null mask");
    };
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match mixing::save_mask_png(&m.inner, path) {
        Ok(()) => MmStatus::Ok,
        Err(e) => fail(MmStatus::IoError, format!("{}: {e}", path.display())),
    }
}

/// Composes two interleaved RGB8 buffers (`width * height * 3` bytes each)
/// through the mask: each output pixel is copied, never blended.
///
/// # Safety
/// `img_a`, `img_b` and `out` must each point to `width * height * 3`
/// readable (respectively writable) bytes, and `mask` must be a live
/// handle of the same dimensions.
#[no_mangle]
pub unsafe extern "C" fn mm_apply_mask_rgb8(
    img_a: *const u8,
    img_b: *const u8,
    width: u32,
    height: u32,
    mask: *const MmMask,
    out: *mut u8,
) -> MmStatus {
    if img_a.is_null() || img_b.is_null() || out.is_null() {
        return fail(MmStatus::NullPointer, "null image buffer");
    }
    let Some(m) = mask.as_ref() else {
        return fail(MmStatus::NullPointer, "null mask");
    };
    if m.inner.width() != width as usize || m.inner.height() != height as usize {
        return fail(
            MmStatus::InvalidArgument,
            format!(
                "mask is {}x{}, images are {width}x{height}",
                m.inner.width(),
                m.inner.height()
            ),
        );
    }
    let n = width as usize * height as usize * 3;
    let a = std::slice::from_raw_parts(img_a, n);
    let b = std::slice::from_raw_parts(img_b, n);
    let buf_a = match RgbImage::from_raw(width, height, a.to_vec()) {
        Some(img) => img,
        None => return fail(MmStatus::InvalidArgument, "image buffer size mismatch"),
    };
    let buf_b = match RgbImage::from_raw(width, height, b.to_vec()) {
        Some(img) => img,
        None => return fail(MmStatus::InvalidArgument, "image buffer size mismatch"),
    };
    match mixing::apply_mask(&buf_a, &buf_b, &m.inner) {
        Ok(mixed) => {
            std::ptr::copy_nonoverlapping(mixed.as_raw().as_ptr(), out, n);
            MmStatus::Ok
        }
        Err(e) => fail(MmStatus::InvalidArgument, e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Geometry and evaluation
// ---------------------------------------------------------------------------

/// Intersection-over-union of two (x, y, w, h) boxes; negative when either
/// box is invalid.
#[no_mangle]
pub extern "C" fn mm_box_iou(
    ax: c_double,
    ay: c_double,
    aw: c_double,
    ah: c_double,
    bx: c_double,
    by: c_double,
    bw: c_double,
    bh: c_double,
) -> c_double {
    match (
        BoundingBox::new(ax, ay, aw, ah),
        BoundingBox::new(bx, by, bw, bh),
    ) {
        (Ok(a), Ok(b)) => box_iou(&a, &b),
        _ => {
            set_error("invalid bounding box");
            -1.0
        }
    }
}

/// Evaluates a COCO results file against a COCO annotation document and
/// returns the report as a JSON string (free it with [`mm_string_free`]).
///
/// `subgroup` is `all`, `sunrgbd10`, `sunrgbd16`, or a name defined in the
/// optional JSON `categories_config` (may be null). `thresholds` is `0.5`,
/// `0.75` or `coco`. `max_dets` caps detections per image; 0 means no cap.
///
/// # Safety
/// String arguments must be NUL-terminated (or null where documented) and
/// `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mm_evaluate_files(
    gt_path: *const c_char,
    det_path: *const c_char,
    subgroup: *const c_char,
    thresholds: *const c_char,
    categories_config: *const c_char,
    zero_fill_missing: bool,
    max_dets: u32,
    out_json: *mut *mut c_char,
) -> MmStatus {
    if out_json.is_null() {
        return fail(MmStatus::NullPointer, "null output pointer");
    }
    let gt_path = match path_arg(gt_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let det_path = match path_arg(det_path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let subgroup = if subgroup.is_null() {
        "all".to_string()
    } else {
        match CStr::from_ptr(subgroup).to_str() {
            Ok(s) => s.to_string(),
            Err(e) => return fail(MmStatus::Utf8Error, format!("subgroup: {e}")),
        }
    };
    let thresholds = if thresholds.is_null() {
        "coco".to_string()
    } else {
        match CStr::from_ptr(thresholds).to_str() {
            Ok(s) => s.to_string(),
            Err(e) => return fail(MmStatus::Utf8Error, format!("thresholds: {e}")),
        }
    };
    let threshold_values: Vec<f64> = match thresholds.as_str() {
        "0.5" => vec![0.5],
        "0.75" => vec![0.75],
        "coco" => COCO_THRESHOLDS.to_vec(),
        other => {
            return fail(
                MmStatus::InvalidArgument,
                format!("thresholds must be 0.5, 0.75 or coco, got {other:?}"),
            )
        }
    };

    let gt_doc = match coco::CocoDocument::from_file(gt_path) {
        Ok(doc) => doc,
        Err(e) => return fail(MmStatus::IoError, format!("{}: {e}", gt_path.display())),
    };
    let records = match coco::read_results(det_path) {
        Ok(r) => r,
        Err(e) => return fail(MmStatus::IoError, format!("{}: {e}", det_path.display())),
    };
    let config_sets: Vec<CategorySet> = if categories_config.is_null() {
        Vec::new()
    } else {
        let config_path = match path_arg(categories_config) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_category_config(config_path) {
            Ok(sets) => sets,
            Err(e) => return fail(MmStatus::IoError, format!("{}: {e}", config_path.display())),
        }
    };
    let subgroups = if subgroup == "all" {
        vec![eval::all_categories_subgroup(&gt_doc.categories)]
    } else {
        match resolve_subgroup(&subgroup, &config_sets) {
            Ok(sg) => vec![sg],
            Err(e) => return fail(MmStatus::InvalidArgument, e.to_string()),
        }
    };
    let opts = EvalOptions {
        zero_fill_missing,
        max_dets_per_image: if max_dets == 0 {
            None
        } else {
            Some(max_dets as usize)
        },
    };
    let report = match eval::evaluate_coco(&gt_doc, &records, &subgroups, &threshold_values, &opts)
    {
        Ok(r) => r,
        Err(e) => return fail(MmStatus::EvalError, e.to_string()),
    };
    let json = match serde_json::to_string(&report) {
        Ok(j) => j,
        Err(e) => return fail(MmStatus::EvalError, e.to_string()),
    };
    match CString::new(json) {
        Ok(cstr) => {
            *out_json = cstr.into_raw();
            MmStatus::Ok
        }
        Err(e) => fail(MmStatus::EvalError, e.to_string()),
    }
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a function of this library and not freed
/// before; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn mm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
