//! Core domain types: events, event streams, dense frame tensors and soft labels.
//!
//! Every type validates its invariants at construction and is immutable
//! afterwards, so values can be shared freely across worker threads.

use std::fmt;

use crate::error::{Error, Result};

/// Sign of a brightness change.
///
/// Stored as a single bit: `Off` (decrease, sign −1) is channel 0 of a
/// [`FrameTensor`], `On` (increase, sign +1) is channel 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            -1 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::Off => -1,
            Polarity::On => 1,
        }
    }

    /// Channel index inside a [`FrameTensor`].
    pub fn channel(self) -> usize {
        self as usize
    }
}

/// A single brightness-change event. `t` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u32,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u32, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

/// One broken invariant found by [`validate_stream`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptySensor {
        width: u16,
        height: u16,
    },
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
    },
    /// Event `index` has a smaller timestamp than event `index - 1`.
    Unordered {
        index: usize,
        t: u32,
        previous: u32,
    },
    AfterDuration {
        index: usize,
        t: u32,
        duration: u32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::EmptySensor { width, height } => {
                write!(f, "sensor extent {width}x{height} has zero area")
            }
            Violation::OutOfBounds { index, x, y } => {
                write!(f, "event {index}: ({x}, {y}) outside the sensor")
            }
            Violation::Unordered { index, t, previous } => {
                write!(f, "event {index}: t={t} precedes previous t={previous}")
            }
            Violation::AfterDuration { index, t, duration } => {
                write!(f, "event {index}: t={t} exceeds duration {duration}")
            }
        }
    }
}

/// Check the [`EventStream`] invariants over raw parts without constructing one.
///
/// Returns every violation found; an empty vector means the parts are valid.
pub fn validate_stream(events: &[Event], width: u16, height: u16, duration: u32) -> Vec<Violation> {
    let mut report = Vec::new();
    if width == 0 || height == 0 {
        report.push(Violation::EmptySensor { width, height });
    }
    let mut previous: Option<u32> = None;
    for (index, e) in events.iter().enumerate() {
        if e.x >= width || e.y >= height {
            report.push(Violation::OutOfBounds { index, x: e.x, y: e.y });
        }
        if let Some(prev) = previous {
            if e.t < prev {
                report.push(Violation::Unordered { index, t: e.t, previous: prev });
            }
        }
        if e.t > duration {
            report.push(Violation::AfterDuration { index, t: e.t, duration });
        }
        previous = Some(e.t);
    }
    report
}

/// Time-ordered events from a `width` x `height` sensor spanning `duration` µs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    events: Vec<Event>,
    width: u16,
    height: u16,
    duration: u32,
}

impl EventStream {
    pub fn new(events: Vec<Event>, width: u16, height: u16, duration: u32) -> Result<Self> {
        let report = validate_stream(&events, width, height, duration);
        if !report.is_empty() {
            return Err(Error::InvalidStream(report));
        }
        Ok(EventStream { events, width, height, duration })
    }

    /// Builds a stream whose duration is the largest timestamp (0 when empty).
    pub fn from_events(events: Vec<Event>, width: u16, height: u16) -> Result<Self> {
        let duration = events.iter().map(|e| e.t).max().unwrap_or(0);
        Self::new(events, width, height, duration)
    }

    pub fn empty(width: u16, height: u16) -> Result<Self> {
        Self::new(Vec::new(), width, height, 0)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn duration(&self) -> u32 {
        self.duration
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Number of polarity channels in a [`FrameTensor`].
pub const CHANNELS: usize = 2;

/// Dense `[bins x 2 x height x width]` grid of event counts, row-major.
///
/// Values are stored as `f32`: integral for raw, EventMix and CutMix tensors
/// (exact up to 2^24), fractional only for MixUp outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    bins: usize,
    height: usize,
    width: usize,
    counts: Vec<f32>,
}

impl FrameTensor {
    pub fn zeros(bins: usize, height: usize, width: usize) -> Self {
        FrameTensor { bins, height, width, counts: vec![0.0; bins * CHANNELS * height * width] }
    }

    pub fn from_counts(bins: usize, height: usize, width: usize, counts: Vec<f32>) -> Result<Self> {
        let expected = bins * CHANNELS * height * width;
        if counts.len() != expected {
            return Err(Error::InvalidTensor(format!(
                "expected {expected} values for [{bins}, 2, {height}, {width}], got {}",
                counts.len()
            )));
        }
        if let Some(i) = counts.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidTensor(format!("element {i} = {} is not a non-negative count", counts[i])));
        }
        Ok(FrameTensor { bins, height, width, counts })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `[bins, 2, height, width]`
    pub fn shape(&self) -> [usize; 4] {
        [self.bins, CHANNELS, self.height, self.width]
    }

    /// `[bins, height, width]`, the extents a [`crate::mask::Mask3D`] must match.
    pub fn extents(&self) -> [usize; 3] {
        [self.bins, self.height, self.width]
    }

    pub fn counts(&self) -> &[f32] {
        &self.counts
    }

    pub fn into_counts(self) -> Vec<f32> {
        self.counts
    }

    #[inline]
    pub fn index(&self, bin: usize, channel: usize, y: usize, x: usize) -> usize {
        ((bin * CHANNELS + channel) * self.height + y) * self.width + x
    }

    pub fn get(&self, bin: usize, channel: usize, y: usize, x: usize) -> f32 {
        self.counts[self.index(bin, channel, y, x)]
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [f32] {
        &mut self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().map(|&v| v as f64).sum()
    }

    pub fn max(&self) -> f32 {
        self.counts.iter().copied().fold(0.0, f32::max)
    }

    pub fn is_integral(&self) -> bool {
        self.counts.iter().all(|v| v.fract() == 0.0)
    }

    pub(crate) fn check_same_extents(&self, other: &FrameTensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ExtentMismatch { left: self.shape().to_vec(), right: other.shape().to_vec() });
        }
        Ok(())
    }
}

/// Tolerance on the sum of a [`SoftLabel`]'s weights.
pub const LABEL_SUM_TOLERANCE: f64 = 1e-6;

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    weights: Vec<f64>,
}

impl SoftLabel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidLabel("no classes".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidLabel(format!("weight {i} = {} outside [0, 1]", weights[i])));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > LABEL_SUM_TOLERANCE {
            return Err(Error::InvalidLabel(format!("weights sum to {sum}")));
        }
        Ok(SoftLabel { weights })
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::InvalidLabel(format!("class {class} >= {num_classes} classes")));
        }
        let mut weights = vec![0.0; num_classes];
        weights[class] = 1.0;
        Ok(SoftLabel { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    /// Class with the largest weight (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// Where a mixed sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub source_a: u64,
    pub source_b: u64,
    /// Seed of the RNG stream that produced this sample.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    tensor: FrameTensor,
    label: SoftLabel,
    alpha: f64,
    provenance: Provenance,
}

impl MixedSample {
    pub fn new(tensor: FrameTensor, label: SoftLabel, alpha: f64, provenance: Provenance) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidLabel(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(MixedSample { tensor, label, alpha, provenance })
    }

    pub fn tensor(&self) -> &FrameTensor {
        &self.tensor
    }

    pub fn label(&self) -> &SoftLabel {
        &self.label
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn into_parts(self) -> (FrameTensor, SoftLabel) {
        (self.tensor, self.label)
    }
}
