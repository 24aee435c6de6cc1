//! C ABI for the eventmix library.
//!
//! Objects are opaque handles created by `em_*` constructors and released
//! with the matching `em_*_free`. Every fallible call returns an
//! [`EmStatus`]; on failure the message is available from
//! [`em_last_error`] on the same thread until the next failing call.
//! Byte buffers handed out by the library are released with
//! [`em_buffer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use eventmix::augment::{event_mix, MixConfig, SampleRef, Strategy};
use eventmix::io::{parse_nmnist_bin, read_native, write_native, write_tensor, Dtype, Tensor};
use eventmix::label::{alpha_count, alpha_distance, AlphaRule};
use eventmix::mask::{make_mask, GmmRanges, Mask3D, MaskKind};
use eventmix::rng::seeded;
use eventmix::voxelize::{voxelize, VoxelizeConfig};
use eventmix::{Error, EventStream, FrameTensor, SoftLabel};

pub const EM_MASK_SPATIOTEMPORAL: u32 = 0;
pub const EM_MASK_SPATIAL: u32 = 1;
pub const EM_MASK_TEMPORAL: u32 = 2;
pub const EM_MASK_SQUARE: u32 = 3;

pub const EM_ALPHA_AREA: u32 = 0;
pub const EM_ALPHA_COUNT: u32 = 1;
pub const EM_ALPHA_DISTANCE: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    ShapeMismatch = 4,
    Panic = 5,
}

/// Opaque event stream.
pub struct EmStream(EventStream);

/// Opaque `[bins x 2 x height x width]` count tensor.
pub struct EmTensor(FrameTensor);

/// Opaque `[bins x height x width]` binary mask.
pub struct EmMask(Mask3D);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg).unwrap_or_else(|e| {
        let end = e.nul_position();
        CString::new(&e.into_vec()[..end]).unwrap()
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> EmStatus {
    match err {
        Error::ExtentMismatch { .. } | Error::ClassCountMismatch { .. } => EmStatus::ShapeMismatch,
        Error::InvalidConfig(_) | Error::InvalidLabel(_) | Error::InvalidTensor(_) | Error::InvalidStream(_) => {
            EmStatus::InvalidArgument
        }
        Error::DegenerateDuration => EmStatus::InvalidArgument,
        _ => EmStatus::Format,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), (EmStatus, String)>>(f: F) -> EmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EmStatus::Panic
        }
    }
}

fn lib<T>(r: eventmix::Result<T>) -> Result<T, (EmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (EmStatus, String) {
    (EmStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (EmStatus, String) {
    (EmStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (EmStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], (EmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn out<T>(dst: *mut T, value: T) -> Result<(), (EmStatus, String)> {
    if dst.is_null() {
        return Err(null("output pointer"));
    }
    dst.write(value);
    Ok(())
}

unsafe fn out_buffer(data: *mut *mut u8, len: *mut usize, buf: Vec<u8>) -> Result<(), (EmStatus, String)> {
    if data.is_null() || len.is_null() {
        return Err(null("output pointer"));
    }
    let boxed = buf.into_boxed_slice();
    len.write(boxed.len());
    data.write(Box::into_raw(boxed) as *mut u8);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn em_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `data`/`len` must come from a single buffer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn em_buffer_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

/// Parse headerless N-MNIST style 5-byte records.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_stream_parse_nmnist(
    data: *const u8,
    len: usize,
    width: u16,
    height: u16,
    out: *mut *mut EmStream,
) -> EmStatus {
    guard(|| {
        let stream = lib(parse_nmnist_bin(bytes(data, len)?, width, height))?;
        self::out(out, Box::into_raw(Box::new(EmStream(stream))))
    })
}

/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_stream_read_native(data: *const u8, len: usize, out: *mut *mut EmStream) -> EmStatus {
    guard(|| {
        let stream = lib(read_native(bytes(data, len)?))?;
        self::out(out, Box::into_raw(Box::new(EmStream(stream))))
    })
}

/// Serialize to the native format. Free the result with [`em_buffer_free`].
///
/// # Safety
/// `stream` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_stream_write_native(
    stream: *const EmStream,
    data: *mut *mut u8,
    len: *mut usize,
) -> EmStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        out_buffer(data, len, write_native(&s.0))
    })
}

/// Number of events, 0 for NULL.
///
/// # Safety
/// `stream` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn em_stream_len(stream: *const EmStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `stream` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_stream_free(stream: *mut EmStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// # Safety
/// `stream` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_voxelize(
    stream: *const EmStream,
    bins: usize,
    height: usize,
    width: usize,
    out: *mut *mut EmTensor,
) -> EmStatus {
    guard(|| {
        let s = deref(stream, "stream")?;
        let cfg = lib(VoxelizeConfig::new(bins, height, width))?;
        let t = lib(voxelize(&s.0, &cfg))?;
        self::out(out, Box::into_raw(Box::new(EmTensor(t))))
    })
}

/// Copy `bins * 2 * height * width` row-major counts into a new tensor.
///
/// # Safety
/// `counts` must point to `len` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_tensor_new(
    bins: usize,
    height: usize,
    width: usize,
    counts: *const f32,
    len: usize,
    out: *mut *mut EmTensor,
) -> EmStatus {
    guard(|| {
        if len != bins * 2 * height * width {
            return Err(invalid(format!("{len} values for a {bins}x2x{height}x{width} tensor")));
        }
        if len > 0 && counts.is_null() {
            return Err(null("counts"));
        }
        let values = if len == 0 { Vec::new() } else { slice::from_raw_parts(counts, len).to_vec() };
        let t = lib(FrameTensor::from_counts(bins, height, width, values))?;
        self::out(out, Box::into_raw(Box::new(EmTensor(t))))
    })
}

/// Writes `[bins, 2, height, width]` into `shape`.
///
/// # Safety
/// `tensor` must be a live handle; `shape` must have room for 4 values.
#[no_mangle]
pub unsafe extern "C" fn em_tensor_shape(tensor: *const EmTensor, shape: *mut usize) -> EmStatus {
    guard(|| {
        let t = deref(tensor, "tensor")?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        ptr::copy_nonoverlapping(t.0.shape().as_ptr(), shape, 4);
        Ok(())
    })
}

/// Copy the counts into `dst`, which must hold exactly the element count.
///
/// # Safety
/// `tensor` must be a live handle; `dst` must have room for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn em_tensor_copy(tensor: *const EmTensor, dst: *mut f32, len: usize) -> EmStatus {
    guard(|| {
        let t = deref(tensor, "tensor")?;
        let src = t.0.counts();
        if len != src.len() {
            return Err(invalid(format!("buffer holds {len} values, tensor has {}", src.len())));
        }
        if len > 0 {
            if dst.is_null() {
                return Err(null("dst"));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
        }
        Ok(())
    })
}

/// Serialize as a tensor container; u16 when every count fits, else f32.
/// Free the result with [`em_buffer_free`].
///
/// # Safety
/// `tensor` must be a live handle; `data` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_tensor_write(tensor: *const EmTensor, data: *mut *mut u8, len: *mut usize) -> EmStatus {
    guard(|| {
        let t = deref(tensor, "tensor")?;
        let dtype = if t.0.is_integral() && t.0.max() <= u16::MAX as f32 { Dtype::U16 } else { Dtype::F32 };
        let container = lib(Tensor::from_frame(&t.0, dtype))?;
        out_buffer(data, len, write_tensor(&container))
    })
}

/// # Safety
/// `tensor` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_tensor_free(tensor: *mut EmTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}

fn mask_kind(kind: u32) -> Result<MaskKind, (EmStatus, String)> {
    match kind {
        EM_MASK_SPATIOTEMPORAL => Ok(MaskKind::SpatioTemporal),
        EM_MASK_SPATIAL => Ok(MaskKind::Spatial),
        EM_MASK_TEMPORAL => Ok(MaskKind::Temporal),
        EM_MASK_SQUARE => Ok(MaskKind::Square),
        k => Err(invalid(format!("unknown mask kind {k}"))),
    }
}

fn alpha_rule(rule: u32, pool_kernel: usize) -> Result<AlphaRule, (EmStatus, String)> {
    let r = match rule {
        EM_ALPHA_AREA => AlphaRule::Area,
        EM_ALPHA_COUNT => AlphaRule::Count,
        EM_ALPHA_DISTANCE => AlphaRule::Distance { pool_kernel },
        r => return Err(invalid(format!("unknown alpha rule {r}"))),
    };
    lib(r.validate())?;
    Ok(r)
}

/// Mask of the given kind with zero fraction targeting `lambda`, using the
/// default mixture ranges and a generator seeded with `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_mask_make(
    kind: u32,
    bins: usize,
    height: usize,
    width: usize,
    lambda: f64,
    seed: u64,
    out: *mut *mut EmMask,
) -> EmStatus {
    guard(|| {
        let kind = mask_kind(kind)?;
        if bins == 0 || height == 0 || width == 0 {
            return Err(invalid("mask extents must be positive"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid(format!("lambda {lambda} outside [0, 1]")));
        }
        let m = make_mask(kind, [bins, height, width], lambda, &GmmRanges::default(), &mut seeded(seed));
        self::out(out, Box::into_raw(Box::new(EmMask(m))))
    })
}

/// Wrap `len` bytes (0 or 1) as a mask.
///
/// # Safety
/// `bits` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_mask_new(
    bins: usize,
    height: usize,
    width: usize,
    bits: *const u8,
    len: usize,
    out: *mut *mut EmMask,
) -> EmStatus {
    guard(|| {
        let raw = bytes(bits, len)?;
        if let Some(i) = raw.iter().position(|&b| b > 1) {
            return Err(invalid(format!("mask byte {i} is {}", raw[i])));
        }
        let m = lib(Mask3D::new([bins, height, width], raw.iter().map(|&b| b == 1).collect()))?;
        self::out(out, Box::into_raw(Box::new(EmMask(m))))
    })
}

/// Number of zero bits, 0 for NULL.
///
/// # Safety
/// `mask` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn em_mask_zeros(mask: *const EmMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.zeros())
}

/// Copy bits as bytes (1 selects sample A) into `dst`.
///
/// # Safety
/// `mask` must be a live handle; `dst` must have room for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn em_mask_copy(mask: *const EmMask, dst: *mut u8, len: usize) -> EmStatus {
    guard(|| {
        let m = deref(mask, "mask")?;
        if len != m.0.len() {
            return Err(invalid(format!("buffer holds {len} bytes, mask has {}", m.0.len())));
        }
        if len > 0 {
            if dst.is_null() {
                return Err(null("dst"));
            }
            let dst = slice::from_raw_parts_mut(dst, len);
            for (d, &b) in dst.iter_mut().zip(m.0.bits()) {
                *d = b as u8;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `mask` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn em_mask_free(mask: *mut EmMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// All handles must be live; `alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_alpha_count(
    a: *const EmTensor,
    b: *const EmTensor,
    mask: *const EmMask,
    alpha: *mut f64,
) -> EmStatus {
    guard(|| {
        let v = lib(alpha_count(&deref(a, "a")?.0, &deref(b, "b")?.0, &deref(mask, "mask")?.0))?;
        out(alpha, v)
    })
}

/// # Safety
/// All handles must be live; `alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_alpha_distance(
    a: *const EmTensor,
    b: *const EmTensor,
    mixed: *const EmTensor,
    pool_kernel: usize,
    alpha: *mut f64,
) -> EmStatus {
    guard(|| {
        if pool_kernel == 0 {
            return Err(invalid("pool kernel must be positive"));
        }
        let v = lib(alpha_distance(&deref(a, "a")?.0, &deref(b, "b")?.0, &deref(mixed, "mixed")?.0, pool_kernel))?;
        out(alpha, v)
    })
}

/// Mix two tensors with a fresh λ and mask drawn from `seed`. Writes the
/// mixed tensor and the label weight α of sample A.
///
/// # Safety
/// `a` and `b` must be live handles; `out` and `alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn em_event_mix(
    a: *const EmTensor,
    b: *const EmTensor,
    mask_kind: u32,
    alpha_rule: u32,
    pool_kernel: usize,
    seed: u64,
    out: *mut *mut EmTensor,
    alpha: *mut f64,
) -> EmStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        if out.is_null() || alpha.is_null() {
            return Err(null("output pointer"));
        }
        let cfg = MixConfig {
            strategy: Strategy::EventMix,
            mask_kind: self::mask_kind(mask_kind)?,
            alpha_rule: self::alpha_rule(alpha_rule, pool_kernel)?,
            ..Default::default()
        };
        let label = lib(SoftLabel::one_hot(0, 1))?;
        let mixed = lib(event_mix(SampleRef::new(0, &a.0, &label), SampleRef::new(1, &b.0, &label), &cfg, seed))?;
        alpha.write(mixed.alpha());
        let (tensor, _) = mixed.into_parts();
        out.write(Box::into_raw(Box::new(EmTensor(tensor))));
        Ok(())
    })
}
