//! C interface to the streamsplat engine.
//!
//! Scenes and streams are opaque handles created and destroyed through this
//! API. Every fallible call returns an [`SsStatus`]; on failure the message
//! is available from [`ss_last_error`] on the same thread until the next
//! failing call. Poses are world-from-camera, passed as seven doubles
//! `tx ty tz qx qy qz qw`. Images are row-major interleaved RGB doubles in
//! `[0, 1]`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use streamsplat::gaussian::DEFAULT_VOXEL_SIZE;
use streamsplat::geometry::{CameraPose, Intrinsics, Quat};
use streamsplat::image::RgbImage;
use streamsplat::io::{read_ogs, write_ogs};
use streamsplat::net::{NetConfig, Network, WeightContainer};
use streamsplat::pipeline::Stream;
use streamsplat::render::rasterize;
use streamsplat::{Error, GaussianScene};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    InvalidArgument = 1,
    Degenerate = 2,
    DegeneratePose = 3,
    UndefinedLoss = 4,
    Diverged = 5,
    Format = 6,
    Parse = 7,
    Io = 8,
    NullPointer = 9,
    Panic = 10,
}

impl From<&Error> for SsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) => SsStatus::InvalidArgument,
            Error::Degenerate(_) => SsStatus::Degenerate,
            Error::DegeneratePose(_) => SsStatus::DegeneratePose,
            Error::UndefinedLoss(_) => SsStatus::UndefinedLoss,
            Error::Diverged(_) => SsStatus::Diverged,
            Error::Format { .. } => SsStatus::Format,
            Error::Parse { .. } => SsStatus::Parse,
            Error::Io { .. } => SsStatus::Io,
        }
    }
}

/// Pinhole intrinsics; pixels are sampled at integer coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Opaque Gaussian scene.
pub struct SsScene {
    inner: GaussianScene,
}

/// Opaque streaming reconstruction.
pub struct SsStream {
    inner: Stream,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Engine(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            SsStatus::from(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            SsStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SsStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn pose_arg(p: *const f64) -> Result<CameraPose, Failure> {
    if p.is_null() {
        return Ok(CameraPose::identity());
    }
    let v = std::slice::from_raw_parts(p, 7);
    let q = Quat::new(v[6], v[3], v[4], v[5]).normalized()?;
    Ok(CameraPose::from_quat(q, [v[0], v[1], v[2]].into())?)
}

fn write_pose(pose: &CameraPose, out: &mut [f64]) {
    let q = pose.quat();
    let t = pose.translation;
    out.copy_from_slice(&[t.x, t.y, t.z, q.x, q.y, q.z, q.w]);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Reads an OGS scene file.
#[no_mangle]
pub unsafe extern "C" fn ss_scene_read(path: *const c_char, out: *mut *mut SsScene) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let path = path_arg(path, "path")?;
        let scene = read_ogs(&path, DEFAULT_VOXEL_SIZE)?;
        *out = Box::into_raw(Box::new(SsScene { inner: scene }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ss_scene_write(scene: *const SsScene, path: *const c_char) -> SsStatus {
    guard(|| {
        let scene = non_null(scene, "scene")?;
        let path = path_arg(path, "path")?;
        write_ogs(&path, &scene.inner)?;
        Ok(())
    })
}

/// Number of primitives; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_scene_len(scene: *const SsScene) -> usize {
    scene.as_ref().map_or(0, |s| s.inner.len())
}

/// Language feature width; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_scene_k(scene: *const SsScene) -> usize {
    scene.as_ref().map_or(0, |s| s.inner.k())
}

#[no_mangle]
pub unsafe extern "C" fn ss_scene_free(scene: *mut SsScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Renders `scene` from `pose` (NULL for identity). `rgb` receives
/// `width·height·3` values; `features`, if not NULL, receives
/// `width·height·k` values.
#[no_mangle]
pub unsafe extern "C" fn ss_render(
    scene: *const SsScene,
    pose: *const f64,
    intrinsics: *const SsIntrinsics,
    rgb: *mut f64,
    features: *mut f64,
) -> SsStatus {
    guard(|| {
        let scene = non_null(scene, "scene")?;
        let k = non_null(intrinsics, "intrinsics")?;
        if rgb.is_null() {
            return Err(Failure::Null("rgb"));
        }
        let intr = Intrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height)?;
        let pose = pose_arg(pose)?;
        let target = rasterize(&scene.inner, &pose, &intr);
        std::slice::from_raw_parts_mut(rgb, target.color.len()).copy_from_slice(&target.color);
        if !features.is_null() {
            std::slice::from_raw_parts_mut(features, target.feature.len()).copy_from_slice(&target.feature);
        }
        Ok(())
    })
}

/// Starts a stream. With a NULL `weights_path` the default network is built
/// from seeded random weights.
#[no_mangle]
pub unsafe extern "C" fn ss_stream_new(
    weights_path: *const c_char,
    seed: u64,
    voxel_size: f64,
    out: *mut *mut SsStream,
) -> SsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let net = if weights_path.is_null() {
            Network::random(NetConfig::default(), seed)?
        } else {
            let path = path_arg(weights_path, "weights_path")?;
            Network::from_container(&WeightContainer::read(&path)?)?
        };
        let stream = Stream::new(net, voxel_size)?;
        *out = Box::into_raw(Box::new(SsStream { inner: stream }));
        Ok(())
    })
}

/// Feeds one frame. `pose_out`, if not NULL, receives the frame's global
/// pose (seven doubles).
#[no_mangle]
pub unsafe extern "C" fn ss_stream_push_frame(
    stream: *mut SsStream,
    rgb: *const f64,
    width: usize,
    height: usize,
    pose_out: *mut f64,
) -> SsStatus {
    guard(|| {
        let stream = stream.as_mut().ok_or(Failure::Null("stream"))?;
        if rgb.is_null() {
            return Err(Failure::Null("rgb"));
        }
        let n = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(3))
            .ok_or_else(|| Error::InvalidArgument("image size overflows".into()))?;
        let data = std::slice::from_raw_parts(rgb, n).to_vec();
        let image = RgbImage::from_raw(width, height, data)?;
        let out = stream.inner.push_frame(&image)?;
        if !pose_out.is_null() {
            write_pose(&out.global.pose, std::slice::from_raw_parts_mut(pose_out, 7));
        }
        Ok(())
    })
}

/// Frames consumed so far; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn ss_stream_frames(stream: *const SsStream) -> usize {
    stream.as_ref().map_or(0, |s| s.inner.trajectory().len())
}

/// Copies the accumulated scene into a new handle owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn ss_stream_scene(stream: *const SsStream, out: *mut *mut SsScene) -> SsStatus {
    guard(|| {
        let stream = non_null(stream, "stream")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = Box::into_raw(Box::new(SsScene {
            inner: stream.inner.scene().clone(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ss_stream_free(stream: *mut SsStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}
