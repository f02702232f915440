//! C ABI for mufen.
//!
//! Meshes, cameras and rendered images cross the boundary as opaque handles
//! created by a `*_new`/`*_load`-style call and released with the matching
//! `*_free`. Every fallible call returns a [`MufenStatus`]; on failure the
//! message is available from [`mufen_last_error_message`] on the same
//! thread. Panics never unwind into C: they are reported as
//! [`MufenStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mufen::geometry::{load_obj, parse_obj, synth_hand, CameraPose, HandMesh, Handedness, Vec3, ViewId};
use mufen::metrics::{frechet_distance, kid, paired_ttest, FeatureSet, GestureScores, KidOptions};
use mufen::render::{render_view, Framebuffer};
use mufen::viewselect::{score_pairs, select_pair, BBox, PairId};
use mufen::Error;

/// Result of every fallible call. `MUFEN_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MufenStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Shape = 4,
    Numeric = 5,
    Parse = 6,
    Validation = 7,
    UnsupportedProjection = 8,
    EmptySilhouette = 9,
    MissingModality = 10,
    DegenerateVariance = 11,
    NotPsd = 12,
    TooSmall = 13,
    Diverged = 14,
    Format = 15,
    Json = 16,
    Io = 17,
    Panic = 99,
}

impl From<&Error> for MufenStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::Shape { .. } => Self::Shape,
            Error::Numeric(_) => Self::Numeric,
            Error::Parse { .. } => Self::Parse,
            Error::Validation(_) => Self::Validation,
            Error::UnsupportedProjection(_) => Self::UnsupportedProjection,
            Error::EmptySilhouette(_) => Self::EmptySilhouette,
            Error::MissingModality(_) => Self::MissingModality,
            Error::DegenerateVariance => Self::DegenerateVariance,
            Error::NotPsd(_) => Self::NotPsd,
            Error::TooSmall { .. } => Self::TooSmall,
            Error::Diverged { .. } => Self::Diverged,
            Error::Format { .. } => Self::Format,
            Error::Json(_) => Self::Json,
            Error::Io { .. } => Self::Io,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MufenHandedness {
    Right = 0,
    Left = 1,
}

fn handedness(raw: u32) -> Result<Handedness, Failure> {
    match raw {
        0 => Ok(Handedness::Right),
        1 => Ok(Handedness::Left),
        _ => Err(Error::InvalidArgument(format!("unknown handedness {raw}")).into()),
    }
}

/// Canonical views, in the order used by `MufenSelection.areas`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MufenView {
    Front = 0,
    Rear = 1,
    Left = 2,
    Right = 3,
    Top = 4,
    Bottom = 5,
}

fn view(raw: u32) -> Result<ViewId, Failure> {
    let id = usize::try_from(raw).ok().and_then(|i| ViewId::ALL.get(i));
    id.copied()
        .ok_or_else(|| Error::InvalidArgument(format!("unknown view {raw}")).into())
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MufenPair {
    FrontRear = 0,
    LeftRight = 1,
    TopBottom = 2,
}

impl From<PairId> for MufenPair {
    fn from(p: PairId) -> Self {
        match p {
            PairId::FrontRear => Self::FrontRear,
            PairId::LeftRight => Self::LeftRight,
            PairId::TopBottom => Self::TopBottom,
        }
    }
}

/// Outcome of complementary view selection.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MufenSelection {
    pub pair: MufenPair,
    /// Pair scores in `MufenPair` order.
    pub scores: [f64; 3],
    /// Covered fraction of each view in `MufenView` order.
    pub areas: [f64; 6],
    /// Front-view box `x0, y0, x1, y1`, normalized to `[0, 1]`.
    pub bbox: [f64; 4],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MufenTTest {
    pub t: f64,
    pub p: f64,
    pub dof: usize,
    pub better_count: usize,
}

/// Triangle mesh handle.
pub struct MufenMesh(HandMesh);

/// Camera pose handle.
pub struct MufenCamera(CameraPose);

/// Rendered RGB image handle.
pub struct MufenImage(Framebuffer);

enum Failure {
    Null(&'static str),
    Utf8,
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MufenStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return MufenStatus::Ok,
        Ok(Err(Failure::Null(arg))) => (MufenStatus::NullPointer, format!("null pointer: {arg}")),
        Ok(Err(Failure::Utf8)) => (MufenStatus::InvalidUtf8, "string is not valid UTF-8".into()),
        Ok(Err(Failure::Core(e))) => (MufenStatus::from(&e), e.to_string()),
        Err(_) => (MufenStatus::Panic, "internal panic".into()),
    };
    set_last_error(msg);
    status
}

unsafe fn as_ref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn as_str<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8)
}

unsafe fn as_slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn features(p: *const f64, n: usize, d: usize, name: &'static str) -> Result<FeatureSet, Failure> {
    let len = n
        .checked_mul(d)
        .ok_or_else(|| Error::InvalidArgument("feature size overflows".into()))?;
    Ok(FeatureSet::new(n, d, as_slice(p, len, name)?.to_vec())?)
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mufen_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mufen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses Wavefront OBJ text. `hand` is a `MufenHandedness` value.
///
/// # Safety
/// `src` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mufen_mesh_parse_obj(src: *const c_char, hand: u32, out: *mut *mut MufenMesh) -> MufenStatus {
    guard(|| {
        let mesh = parse_obj(as_str(src, "src")?, handedness(hand)?)?;
        write_out(out, Box::into_raw(Box::new(MufenMesh(mesh))), "out")
    })
}

/// Loads an OBJ file. `hand` is a `MufenHandedness` value.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mufen_mesh_load_obj(path: *const c_char, hand: u32, out: *mut *mut MufenMesh) -> MufenStatus {
    guard(|| {
        let mesh = load_obj(Path::new(as_str(path, "path")?), handedness(hand)?)?;
        write_out(out, Box::into_raw(Box::new(MufenMesh(mesh))), "out")
    })
}

/// Builds a synthetic right hand; `curls` points at five finger curls in
/// `[0, 1]`, thumb first.
///
/// # Safety
/// `curls` must point at five doubles and `out` be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mufen_mesh_synth(seed: u64, curls: *const f64, out: *mut *mut MufenMesh) -> MufenStatus {
    guard(|| {
        let mesh = synth_hand(seed, as_slice(curls, 5, "curls")?)?;
        write_out(out, Box::into_raw(Box::new(MufenMesh(mesh))), "out")
    })
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mufen_mesh_vertex_count(mesh: *const MufenMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertices.len())
}

/// Face count, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mufen_mesh_face_count(mesh: *const MufenMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.faces.len())
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mufen_mesh_free(mesh: *mut MufenMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Weak-perspective camera at `(tx, ty, tz)` looking down -Z.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mufen_camera_weak_perspective(
    tx: f64,
    ty: f64,
    tz: f64,
    scale: f64,
    out: *mut *mut MufenCamera,
) -> MufenStatus {
    guard(|| {
        let cam = CameraPose::weak_perspective(Vec3::new(tx, ty, tz), scale)?;
        write_out(out, Box::into_raw(Box::new(MufenCamera(cam))), "out")
    })
}

/// # Safety
/// `camera` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mufen_camera_free(camera: *mut MufenCamera) {
    if !camera.is_null() {
        drop(Box::from_raw(camera));
    }
}

/// Shaded render of one canonical view; `view_id` is a `MufenView` value.
///
/// # Safety
/// `mesh` and `camera` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mufen_render_view(
    mesh: *const MufenMesh,
    camera: *const MufenCamera,
    view_id: u32,
    width: usize,
    height: usize,
    out: *mut *mut MufenImage,
) -> MufenStatus {
    guard(|| {
        let fb = render_view(
            &as_ref(mesh, "mesh")?.0,
            &as_ref(camera, "camera")?.0,
            view(view_id)?,
            (width, height),
        )?;
        write_out(out, Box::into_raw(Box::new(MufenImage(fb))), "out")
    })
}

/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mufen_image_width(image: *const MufenImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.width)
}

/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mufen_image_height(image: *const MufenImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.height)
}

/// Interleaved 8-bit RGB rows, top row first; `width * height * 3` bytes
/// owned by the image. Null for a null handle.
///
/// # Safety
/// `image` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mufen_image_rgb(image: *const MufenImage) -> *const u8 {
    image.as_ref().map_or(ptr::null(), |i| i.0.rgb.as_ptr())
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mufen_image_free(image: *mut MufenImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Scores the three complementary pairs at a square resolution and picks
/// the one with the largest combined silhouette area.
///
/// # Safety
/// `mesh` and `camera` must be live handles and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mufen_select_views(
    mesh: *const MufenMesh,
    camera: *const MufenCamera,
    resolution: usize,
    out: *mut MufenSelection,
) -> MufenStatus {
    guard(|| {
        let (mesh, cam) = (&as_ref(mesh, "mesh")?.0, &as_ref(camera, "camera")?.0);
        let res = (resolution, resolution);
        let pairs = score_pairs(mesh, cam, res)?;
        let best = select_pair(&pairs)?;
        let front = render_view(mesh, cam, ViewId::Front, res)?;
        let bbox = BBox::from_coverage(&front).ok_or_else(|| Error::EmptySilhouette("front".into()))?;
        let mut areas = [0.0; 6];
        for p in &pairs {
            for (view, area) in [(p.views.0, p.areas.0), (p.views.1, p.areas.1)] {
                areas[ViewId::ALL.iter().position(|&v| v == view).expect("known view")] = area;
            }
        }
        let selection = MufenSelection {
            pair: best.pair_id.into(),
            scores: std::array::from_fn(|i| pairs[i].score),
            areas,
            bbox: bbox.to_array(),
        };
        write_out(out, selection, "out")
    })
}

/// Fréchet distance between Gaussians fitted to two row-major feature
/// matrices of width `d`.
///
/// # Safety
/// `a` and `b` must point at `na * d` and `nb * d` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mufen_frechet_distance(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    d: usize,
    out: *mut f64,
) -> MufenStatus {
    guard(|| {
        let fd = frechet_distance(&features(a, na, d, "a")?, &features(b, nb, d, "b")?)?;
        write_out(out, fd, "out")
    })
}

/// Kernel inception distance: mean and standard deviation of the unbiased
/// MMD² over `subsets` seeded subsets of `subset_size` rows.
///
/// # Safety
/// `a` and `b` must point at `na * d` and `nb * d` doubles; `mean` and `std`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn mufen_kid(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    d: usize,
    subsets: usize,
    subset_size: usize,
    seed: u64,
    mean: *mut f64,
    std: *mut f64,
) -> MufenStatus {
    guard(|| {
        let opts = KidOptions {
            subsets,
            subset_size,
            seed,
        };
        let (m, s) = kid(&features(a, na, d, "a")?, &features(b, nb, d, "b")?, opts)?;
        write_out(mean, m, "mean")?;
        write_out(std, s, "std")
    })
}

/// Two-sided paired t-test on `a - b`; lower scores count as better.
///
/// # Safety
/// `a` and `b` must point at `n` doubles each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mufen_paired_ttest(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut MufenTTest,
) -> MufenStatus {
    guard(|| {
        let scores = GestureScores {
            a: as_slice(a, n, "a")?.to_vec(),
            b: as_slice(b, n, "b")?.to_vec(),
        };
        let r = paired_ttest(&scores)?;
        let result = MufenTTest {
            t: r.t,
            p: r.p,
            dof: r.dof,
            better_count: r.better_count,
        };
        write_out(out, result, "out")
    })
}
