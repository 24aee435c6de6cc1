//! Label weights for mixed samples.
//!
//! The weight α of sample A in `ỹ = α·y_A + (1 − α)·y_B` comes from one of
//! three rules:
//!
//! * `Area`: fraction of mask voxels that keep sample A.
//! * `Count`: share of events kept from A relative to events inserted from B,
//!   each normalized by its source's total.
//! * `Distance`: inverse squared MSE distance between the mixed tensor and
//!   each source after spatial average pooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{FrameTensor, SoftLabel, CHANNELS};
use crate::mask::Mask3D;

pub const DEFAULT_POOL_KERNEL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum AlphaRule {
    Area,
    Count,
    Distance { pool_kernel: usize },
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule::Distance { pool_kernel: DEFAULT_POOL_KERNEL }
    }
}

impl AlphaRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlphaRule::Distance { pool_kernel: 0 } => Err(Error::InvalidConfig("pool kernel must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlphaRule::Area => "area",
            AlphaRule::Count => "count",
            AlphaRule::Distance { .. } => "distance",
        }
    }
}

fn check_mask(x: &FrameTensor, mask: &Mask3D) -> Result<()> {
    if x.extents() != mask.extents() {
        return Err(Error::ExtentMismatch { left: x.extents().to_vec(), right: mask.extents().to_vec() });
    }
    Ok(())
}

pub fn alpha_area(mask: &Mask3D) -> f64 {
    if mask.is_empty() {
        return 1.0;
    }
    mask.ones() as f64 / mask.len() as f64
}

/// Sums of `x` over voxels where the mask is 1 and where it is 0. One mask
/// bit covers both polarity channels.
fn masked_sums(x: &FrameTensor, mask: &Mask3D) -> (f64, f64) {
    let plane = x.height() * x.width();
    let (mut inside, mut outside) = (0.0, 0.0);
    for bin in 0..x.bins() {
        let bits = mask.slice(bin);
        for c in 0..CHANNELS {
            let start = x.index(bin, c, 0, 0);
            for (&v, &b) in x.counts()[start..start + plane].iter().zip(bits) {
                if b {
                    inside += v as f64;
                } else {
                    outside += v as f64;
                }
            }
        }
    }
    (inside, outside)
}

/// Event-count rule. Falls back to [`alpha_area`] when either source has no
/// events or no events survive from either side.
pub fn alpha_count(x_a: &FrameTensor, x_b: &FrameTensor, mask: &Mask3D) -> Result<f64> {
    x_a.check_same_extents(x_b)?;
    check_mask(x_a, mask)?;
    let (kept_a, dropped_a) = masked_sums(x_a, mask);
    let (unused_b, inserted_b) = masked_sums(x_b, mask);
    let (total_a, total_b) = (kept_a + dropped_a, unused_b + inserted_b);
    if total_a == 0.0 || total_b == 0.0 {
        return Ok(alpha_area(mask));
    }
    let r_a = kept_a / total_a;
    let r_b = inserted_b / total_b;
    if r_a + r_b == 0.0 {
        return Ok(alpha_area(mask));
    }
    Ok((r_a / (r_a + r_b)).clamp(0.0, 1.0))
}

/// Spatially average-pooled tensor, `[bins x 2 x pooled_height x pooled_width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub bins: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// Non-overlapping `kernel x kernel` average pooling with stride `kernel` on
/// every `(bin, polarity)` slice. Partial windows at the trailing edges are
/// averaged over the cells they actually cover.
pub fn pool_avg(x: &FrameTensor, kernel: usize) -> Pooled {
    let k = kernel.max(1);
    let (h, w) = (x.height(), x.width());
    let (ph, pw) = (h.div_ceil(k), w.div_ceil(k));
    let mut values = vec![0.0; x.bins() * CHANNELS * ph * pw];
    for bin in 0..x.bins() {
        for c in 0..CHANNELS {
            let base = (bin * CHANNELS + c) * ph * pw;
            for y in 0..h {
                let row = &x.counts()[x.index(bin, c, y, 0)..][..w];
                for (xi, &v) in row.iter().enumerate() {
                    values[base + (y / k) * pw + xi / k] += v as f64;
                }
            }
            for py in 0..ph {
                let rows = (h - py * k).min(k);
                for px in 0..pw {
                    let cols = (w - px * k).min(k);
                    values[base + py * pw + px] /= (rows * cols) as f64;
                }
            }
        }
    }
    Pooled { bins: x.bins(), height: ph, width: pw, values }
}

/// Mean squared value of the pooled difference `x - y`. Pooling is linear,
/// so this equals the MSE of the two pooled tensors; differencing first keeps
/// integer counts exact and makes `d(x, z)` and `d(y, z)` agree bit-for-bit
/// whenever `x - z = z - y`.
fn pooled_mse(x: &FrameTensor, y: &FrameTensor, kernel: usize) -> f64 {
    let k = kernel.max(1);
    let (h, w) = (x.height(), x.width());
    let (ph, pw) = (h.div_ceil(k), w.div_ceil(k));
    let cells = x.bins() * CHANNELS * ph * pw;
    if cells == 0 {
        return 0.0;
    }
    let mut window = vec![0.0; pw];
    let mut sum = 0.0;
    for bin in 0..x.bins() {
        for c in 0..CHANNELS {
            for py in 0..ph {
                window.iter_mut().for_each(|v| *v = 0.0);
                let rows = (h - py * k).min(k);
                for yy in py * k..py * k + rows {
                    let start = x.index(bin, c, yy, 0);
                    let (rx, ry) = (&x.counts()[start..start + w], &y.counts()[start..start + w]);
                    for (xi, (&a, &b)) in rx.iter().zip(ry).enumerate() {
                        window[xi / k] += a as f64 - b as f64;
                    }
                }
                for (px, &v) in window.iter().enumerate() {
                    let cols = (w - px * k).min(k);
                    let d = v / (rows * cols) as f64;
                    sum += d * d;
                }
            }
        }
    }
    sum / cells as f64
}

/// MSE between the pooled tensors.
pub fn stream_distance(x_a: &FrameTensor, x_b: &FrameTensor, kernel: usize) -> Result<f64> {
    x_a.check_same_extents(x_b)?;
    Ok(pooled_mse(x_a, x_b, kernel))
}

/// `α = E(B, x̃)² / (E(A, x̃)² + E(B, x̃)²)`, with α = ½ when both distances
/// vanish.
pub fn alpha_distance(x_a: &FrameTensor, x_b: &FrameTensor, mixed: &FrameTensor, kernel: usize) -> Result<f64> {
    x_a.check_same_extents(x_b)?;
    x_a.check_same_extents(mixed)?;
    Ok(distance_weight(pooled_mse(x_a, mixed, kernel), pooled_mse(x_b, mixed, kernel)))
}

fn distance_weight(d_a: f64, d_b: f64) -> f64 {
    match (d_a == 0.0, d_b == 0.0) {
        (true, true) => 0.5,
        (_, true) => 0.0,
        // ratio form avoids underflow of tiny squared distances
        _ => {
            let r = d_a / d_b;
            1.0 / (1.0 + r * r)
        }
    }
}

/// α for `rule`, given both sources, the mixed tensor and the mask that built it.
pub fn compute_alpha(
    rule: &AlphaRule,
    x_a: &FrameTensor,
    x_b: &FrameTensor,
    mixed: &FrameTensor,
    mask: &Mask3D,
) -> Result<f64> {
    match *rule {
        AlphaRule::Area => {
            check_mask(x_a, mask)?;
            Ok(alpha_area(mask))
        }
        AlphaRule::Count => alpha_count(x_a, x_b, mask),
        AlphaRule::Distance { pool_kernel } => alpha_distance(x_a, x_b, mixed, pool_kernel),
    }
}

/// `α·y_A + (1 − α)·y_B`
pub fn mix_labels(y_a: &SoftLabel, y_b: &SoftLabel, alpha: f64) -> Result<SoftLabel> {
    if y_a.num_classes() != y_b.num_classes() {
        return Err(Error::ClassCountMismatch { left: y_a.num_classes(), right: y_b.num_classes() });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidLabel(format!("alpha {alpha} outside [0, 1]")));
    }
    let weights = y_a
        .weights()
        .iter()
        .zip(y_b.weights())
        .map(|(&a, &b)| (alpha * a + (1.0 - alpha) * b).clamp(0.0, 1.0))
        .collect();
    SoftLabel::new(weights)
}
