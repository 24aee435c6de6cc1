//! Event file parsers/writers and the `EVTN` tensor container.
//!
//! Layouts:
//!
//! * N-MNIST / N-Caltech101 `.bin`: headerless 5-byte records. Byte 0 is x,
//!   byte 1 is y, bit 7 of byte 2 is polarity and the remaining 23 bits
//!   (byte 2 bits 6..0, byte 3, byte 4) are a big-endian timestamp in µs.
//! * Native `EVST`: `magic[4] version:u16 width:u16 height:u16 count:u64
//!   duration:u32` followed by `count` records `t:u32 x:u16 y:u16 p:u8`.
//! * `EVTN`: `magic[4] dtype:u8 ndim:u8 dims:[u32; ndim]` followed by the
//!   row-major payload (dtype 0 = u16, dtype 1 = f32).
//!
//! Every multi-byte field is little-endian except the `.bin` timestamp.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, FrameTensor, Polarity, SoftLabel, CHANNELS};

pub const NMNIST_RECORD_SIZE: usize = 5;
pub const NMNIST_EXTENT: u16 = 34;

pub const NATIVE_MAGIC: [u8; 4] = *b"EVST";
pub const NATIVE_VERSION: u16 = 1;
/// Header (18 bytes) plus the trailing duration field (4 bytes).
pub const NATIVE_PREAMBLE_SIZE: usize = 22;
pub const NATIVE_RECORD_SIZE: usize = 9;

pub const TENSOR_MAGIC: [u8; 4] = *b"EVTN";
pub const TENSOR_MAX_NDIM: usize = 5;

/// Source format of an event file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventFormat {
    #[serde(rename = "native")]
    Native,
    #[serde(rename = "nmnist-bin")]
    NmnistBin,
    #[serde(rename = "csv")]
    Csv,
}

impl EventFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            EventFormat::Native => "native",
            EventFormat::NmnistBin => "nmnist-bin",
            EventFormat::Csv => "csv",
        }
    }
}

impl fmt::Display for EventFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(EventFormat::Native),
            "nmnist-bin" => Ok(EventFormat::NmnistBin),
            "csv" => Ok(EventFormat::Csv),
            other => Err(Error::InvalidConfig(format!("unknown event format {other:?}"))),
        }
    }
}

/// Decode a headerless ATIS `.bin` file.
pub fn parse_nmnist_bin(bytes: &[u8], width: u16, height: u16) -> Result<EventStream> {
    if !bytes.len().is_multiple_of(NMNIST_RECORD_SIZE) {
        return Err(Error::TruncatedFile { len: bytes.len(), record_size: NMNIST_RECORD_SIZE });
    }
    let mut events = Vec::with_capacity(bytes.len() / NMNIST_RECORD_SIZE);
    for (record, r) in bytes.chunks_exact(NMNIST_RECORD_SIZE).enumerate() {
        let x = r[0] as u16;
        let y = r[1] as u16;
        if x >= width || y >= height {
            return Err(Error::Format { record, reason: format!("({x}, {y}) outside {width}x{height} sensor") });
        }
        let p = if r[2] & 0x80 != 0 { Polarity::On } else { Polarity::Off };
        let t = ((r[2] as u32 & 0x7f) << 16) | ((r[3] as u32) << 8) | r[4] as u32;
        events.push(Event { t, x, y, p });
    }
    EventStream::from_events(events, width, height)
}

/// Encode a stream as `.bin` records. Timestamps must fit in 23 bits and
/// coordinates in a byte.
pub fn write_nmnist_bin(stream: &EventStream) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(stream.len() * NMNIST_RECORD_SIZE);
    for (record, e) in stream.events().iter().enumerate() {
        if e.t >= 1 << 23 || e.x > 255 || e.y > 255 {
            return Err(Error::Format { record, reason: "event does not fit the 40-bit record".into() });
        }
        let pol = if e.p == Polarity::On { 0x80 } else { 0 };
        out.extend_from_slice(&[e.x as u8, e.y as u8, pol | ((e.t >> 16) & 0x7f) as u8, (e.t >> 8) as u8, e.t as u8]);
    }
    Ok(out)
}

pub fn write_native(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(NATIVE_PREAMBLE_SIZE + stream.len() * NATIVE_RECORD_SIZE);
    out.extend_from_slice(&NATIVE_MAGIC);
    out.extend_from_slice(&NATIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&stream.width().to_le_bytes());
    out.extend_from_slice(&stream.height().to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    out.extend_from_slice(&stream.duration().to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.bit());
    }
    out
}

/// Little-endian field reader over a byte slice.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(Error::ShortPayload { expected: end, found: self.bytes.len() });
        }
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn remaining(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

pub fn read_native(bytes: &[u8]) -> Result<EventStream> {
    let mut r = Reader::new(bytes);
    let magic = r.take::<4>()?;
    if magic != NATIVE_MAGIC {
        return Err(Error::BadMagic { expected: NATIVE_MAGIC, found: magic });
    }
    let version = r.u16()?;
    if version != NATIVE_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: NATIVE_VERSION });
    }
    let width = r.u16()?;
    let height = r.u16()?;
    let count = r.u64()?;
    let duration = r.u32()?;

    let payload = r.remaining();
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(NATIVE_RECORD_SIZE))
        .ok_or(Error::ShortPayload { expected: usize::MAX, found: payload.len() })?;
    if payload.len() < expected {
        return Err(Error::ShortPayload { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::Format {
            record: count as usize,
            reason: format!("{} trailing bytes after the last record", payload.len() - expected),
        });
    }

    let mut events = Vec::with_capacity(count as usize);
    for (record, rec) in payload.chunks_exact(NATIVE_RECORD_SIZE).enumerate() {
        let t = u32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]);
        let x = u16::from_le_bytes([rec[4], rec[5]]);
        let y = u16::from_le_bytes([rec[6], rec[7]]);
        let p = Polarity::from_bit(rec[8])
            .ok_or_else(|| Error::Format { record, reason: format!("polarity byte {}", rec[8]) })?;
        events.push(Event { t, x, y, p });
    }
    EventStream::new(events, width, height, duration)
}

/// Parse `t,x,y,p` lines. Polarity may be `0`/`1` or `-1`/`+1`; blank lines
/// are skipped. Duration is the largest timestamp.
pub fn parse_csv_events(text: &str, width: u16, height: u16) -> Result<EventStream> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Csv { line, reason: format!("expected 4 fields, found {}", fields.len()) });
        }
        let t: u32 =
            fields[0].parse().map_err(|_| Error::Csv { line, reason: format!("bad timestamp {:?}", fields[0]) })?;
        let x: u16 = fields[1].parse().map_err(|_| Error::Csv { line, reason: format!("bad x {:?}", fields[1]) })?;
        let y: u16 = fields[2].parse().map_err(|_| Error::Csv { line, reason: format!("bad y {:?}", fields[2]) })?;
        let p = match fields[3] {
            "0" | "-1" => Polarity::Off,
            "1" | "+1" => Polarity::On,
            other => return Err(Error::Csv { line, reason: format!("bad polarity {other:?}") }),
        };
        if x >= width || y >= height {
            return Err(Error::Csv { line, reason: format!("({x}, {y}) outside {width}x{height} sensor") });
        }
        events.push(Event { t, x, y, p });
    }
    EventStream::from_events(events, width, height)
}

pub fn write_csv_events(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.len() * 16);
    for e in stream.events() {
        out.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.p.bit()));
    }
    out
}

/// Decode bytes in any supported event format. `width`/`height` are ignored
/// for native files, which carry their own extents.
pub fn parse_events(bytes: &[u8], format: EventFormat, width: u16, height: u16) -> Result<EventStream> {
    match format {
        EventFormat::Native => read_native(bytes),
        EventFormat::NmnistBin => parse_nmnist_bin(bytes, width, height),
        EventFormat::Csv => {
            let text =
                std::str::from_utf8(bytes).map_err(|e| Error::Csv { line: 0, reason: format!("not UTF-8: {e}") })?;
            parse_csv_events(text, width, height)
        }
    }
}

pub fn read_event_file(path: &Path, format: EventFormat, width: u16, height: u16) -> Result<EventStream> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_events(&bytes, format, width, height).map_err(|e| Error::in_file(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Dtype {
    U16 = 0,
    F32 = 1,
}

impl Dtype {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::U16),
            1 => Some(Dtype::F32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::U16(v) => v.len(),
            TensorData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::U16(_) => Dtype::U16,
            TensorData::F32(_) => Dtype::F32,
        }
    }
}

/// An n-dimensional array as stored in an `EVTN` container.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<u32>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        if dims.is_empty() || dims.len() > TENSOR_MAX_NDIM {
            return Err(Error::InvalidTensor(format!("ndim {} outside [1, {TENSOR_MAX_NDIM}]", dims.len())));
        }
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(Error::InvalidTensor(format!("dims {dims:?} need {n} elements, payload has {}", data.len())));
        }
        Ok(Tensor { dims, data })
    }

    /// Stores `values` as `dtype`. For [`Dtype::U16`] every value must be an
    /// integer in `[0, 65536)`.
    pub fn from_values(dims: Vec<u32>, values: &[f32], dtype: Dtype) -> Result<Self> {
        let data = match dtype {
            Dtype::F32 => TensorData::F32(values.to_vec()),
            Dtype::U16 => {
                let mut out = Vec::with_capacity(values.len());
                for (index, &v) in values.iter().enumerate() {
                    if !(v.fract() == 0.0 && (0.0..65536.0).contains(&v)) {
                        return Err(Error::DtypeOverflow { index, value: v });
                    }
                    out.push(v as u16);
                }
                TensorData::U16(out)
            }
        };
        Tensor::new(dims, data)
    }

    pub fn from_frame(frame: &FrameTensor, dtype: Dtype) -> Result<Self> {
        Tensor::from_values(dims_u32(&frame.shape())?, frame.counts(), dtype)
    }

    /// Stack equally shaped frames into `[batch, bins, 2, height, width]`.
    pub fn stack_frames(frames: &[FrameTensor], dtype: Dtype) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyBatch)?;
        let mut values = Vec::with_capacity(frames.len() * first.counts().len());
        for f in frames {
            first.check_same_extents(f)?;
            values.extend_from_slice(f.counts());
        }
        let mut dims = vec![frames.len()];
        dims.extend_from_slice(&first.shape());
        Tensor::from_values(dims_u32(&dims)?, &values, dtype)
    }

    /// `[batch, num_classes]` f32 matrix of label weights.
    pub fn stack_labels(labels: &[SoftLabel]) -> Result<Self> {
        let first = labels.first().ok_or(Error::EmptyBatch)?;
        let classes = first.num_classes();
        let mut values = Vec::with_capacity(labels.len() * classes);
        for l in labels {
            if l.num_classes() != classes {
                return Err(Error::ClassCountMismatch { left: classes, right: l.num_classes() });
            }
            values.extend(l.weights().iter().map(|&w| w as f32));
        }
        Tensor::from_values(dims_u32(&[labels.len(), classes])?, &values, Dtype::F32)
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            TensorData::U16(v) => v.iter().map(|&x| x as f32).collect(),
            TensorData::F32(v) => v.clone(),
        }
    }

    /// Interpret a 4-D `[bins, 2, height, width]` tensor as a frame.
    pub fn to_frame(&self) -> Result<FrameTensor> {
        match self.dims[..] {
            [bins, c, h, w] if c as usize == CHANNELS => {
                FrameTensor::from_counts(bins as usize, h as usize, w as usize, self.to_f32())
            }
            _ => Err(Error::InvalidTensor(format!("dims {:?} are not [bins, 2, height, width]", self.dims))),
        }
    }

    /// Split a 5-D batch back into frames.
    pub fn to_frames(&self) -> Result<Vec<FrameTensor>> {
        match self.dims[..] {
            [n, bins, c, h, w] if c as usize == CHANNELS => {
                let values = self.to_f32();
                let per = (bins * c * h * w) as usize;
                (0..n as usize)
                    .map(|i| {
                        FrameTensor::from_counts(
                            bins as usize,
                            h as usize,
                            w as usize,
                            values[i * per..(i + 1) * per].to_vec(),
                        )
                    })
                    .collect()
            }
            _ => Err(Error::InvalidTensor(format!("dims {:?} are not [batch, bins, 2, height, width]", self.dims))),
        }
    }
}

fn element_count(dims: &[u32]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::InvalidTensor(format!("dims {dims:?} overflow")))
}

fn dims_u32(dims: &[usize]) -> Result<Vec<u32>> {
    dims.iter()
        .map(|&d| u32::try_from(d).map_err(|_| Error::InvalidTensor(format!("dimension {d} exceeds u32"))))
        .collect()
}

pub fn write_tensor(tensor: &Tensor) -> Vec<u8> {
    let header = 6 + 4 * tensor.dims.len();
    let mut out = Vec::with_capacity(header + tensor.data.len() * tensor.dtype().size());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(tensor.dtype() as u8);
    out.push(tensor.dims.len() as u8);
    for d in &tensor.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &tensor.data {
        TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn read_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    let magic = r.take::<4>()?;
    if magic != TENSOR_MAGIC {
        return Err(Error::BadMagic { expected: TENSOR_MAGIC, found: magic });
    }
    let code = r.u8()?;
    let dtype = Dtype::from_code(code).ok_or_else(|| Error::InvalidTensor(format!("unknown dtype code {code}")))?;
    let ndim = r.u8()? as usize;
    if ndim == 0 || ndim > TENSOR_MAX_NDIM {
        return Err(Error::InvalidTensor(format!("ndim {ndim} outside [1, {TENSOR_MAX_NDIM}]")));
    }
    let dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n = element_count(&dims)?;
    let payload = r.remaining();
    let expected =
        n.checked_mul(dtype.size()).ok_or_else(|| Error::InvalidTensor(format!("dims {dims:?} overflow")))?;
    if payload.len() != expected {
        return Err(Error::InvalidTensor(format!(
            "dims {dims:?} need {expected} payload bytes, found {}",
            payload.len()
        )));
    }
    let data = match dtype {
        Dtype::U16 => TensorData::U16(payload.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()),
        Dtype::F32 => {
            TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
        }
    };
    Tensor::new(dims, data)
}

pub fn read_tensor_file(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_tensor(&bytes).map_err(|e| Error::in_file(path, e))
}
