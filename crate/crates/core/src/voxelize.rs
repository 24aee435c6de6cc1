//! Event stream to frame tensor conversion.
//!
//! The stream span `[0, duration]` is cut into `bins` equal slices and events
//! are counted per polarity in each slice. All index arithmetic is integer:
//! an event at `t` goes to bin `t * bins / duration` (the final timestamp is
//! clamped into the last bin) and pixel `(x, y)` of a `width x height` sensor
//! goes to `(x * out_width / width, y * out_height / height)`. Scaling the
//! coordinates rather than interpolating frames keeps every event counted
//! exactly once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{EventStream, FrameTensor, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelizeConfig {
    pub bins: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl Default for VoxelizeConfig {
    fn default() -> Self {
        VoxelizeConfig { bins: 10, out_height: 48, out_width: 48 }
    }
}

impl VoxelizeConfig {
    pub fn new(bins: usize, out_height: usize, out_width: usize) -> Result<Self> {
        let cfg = VoxelizeConfig { bins, out_height, out_width };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.out_height == 0 || self.out_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "voxel grid {}x{}x{} must be non-empty",
                self.bins, self.out_height, self.out_width
            )));
        }
        Ok(())
    }
}

/// Time bin of timestamp `t`.
#[inline]
pub fn time_bin(t: u32, duration: u32, bins: usize) -> usize {
    let bin = (t as u64 * bins as u64 / duration as u64) as usize;
    bin.min(bins - 1)
}

#[inline]
fn scale(coord: usize, from: usize, to: usize) -> usize {
    coord * to / from
}

pub fn voxelize(stream: &EventStream, cfg: &VoxelizeConfig) -> Result<FrameTensor> {
    cfg.validate()?;
    let mut out = FrameTensor::zeros(cfg.bins, cfg.out_height, cfg.out_width);
    if stream.is_empty() {
        return Ok(out);
    }
    let duration = stream.duration();
    if duration == 0 {
        return Err(Error::DegenerateDuration);
    }
    let (w, h) = (stream.width() as usize, stream.height() as usize);
    let (ow, oh) = (cfg.out_width, cfg.out_height);
    for e in stream.events() {
        let bin = time_bin(e.t, duration, cfg.bins);
        let y = scale(e.y as usize, h, oh);
        let x = scale(e.x as usize, w, ow);
        let i = out.index(bin, e.p.channel(), y, x);
        out.counts_mut()[i] += 1.0;
    }
    Ok(out)
}

/// Re-accumulate counts onto an `out_height x out_width` grid with the same
/// floor-scaling map as [`voxelize`]. Totals are conserved.
pub fn resize_counts(tensor: &FrameTensor, out_height: usize, out_width: usize) -> FrameTensor {
    let (h, w) = (tensor.height(), tensor.width());
    if (h, w) == (out_height, out_width) {
        return tensor.clone();
    }
    let mut out = FrameTensor::zeros(tensor.bins(), out_height, out_width);
    let xmap: Vec<usize> = (0..w).map(|x| scale(x, w, out_width)).collect();
    for bin in 0..tensor.bins() {
        for c in 0..CHANNELS {
            for y in 0..h {
                let oy = scale(y, h, out_height);
                let row = tensor.index(bin, c, y, 0);
                let src = &tensor.counts()[row..row + w];
                let dst_row = out.index(bin, c, oy, 0);
                let dst = &mut out.counts_mut()[dst_row..dst_row + out_width];
                for (x, &v) in src.iter().enumerate() {
                    dst[xmap[x]] += v;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};

    #[test]
    fn single_event_lands_in_first_bin() {
        let s = EventStream::new(vec![Event::new(0, 0, 0, Polarity::On)], 48, 48, 100).unwrap();
        let f = voxelize(&s, &VoxelizeConfig::default()).unwrap();
        assert_eq!(f.get(0, 1, 0, 0), 1.0);
        assert_eq!(f.total(), 1.0);
    }

    #[test]
    fn empty_stream_gives_zero_tensor() {
        let s = EventStream::empty(34, 34).unwrap();
        let f = voxelize(&s, &VoxelizeConfig::default()).unwrap();
        assert_eq!(f.shape(), [10, 2, 48, 48]);
        assert_eq!(f.total(), 0.0);
    }

    #[test]
    fn zero_duration_with_events_is_an_error() {
        let s = EventStream::from_events(vec![Event::new(0, 1, 1, Polarity::Off)], 4, 4).unwrap();
        assert!(matches!(voxelize(&s, &VoxelizeConfig::default()), Err(Error::DegenerateDuration)));
    }

    #[test]
    fn last_timestamp_is_clamped_into_last_bin() {
        let s = EventStream::from_events(
            vec![
                Event::new(0, 0, 0, Polarity::Off),
                Event::new(99, 0, 0, Polarity::Off),
                Event::new(100, 0, 0, Polarity::Off),
            ],
            2,
            2,
        )
        .unwrap();
        let f = voxelize(&s, &VoxelizeConfig::new(4, 2, 2).unwrap()).unwrap();
        assert_eq!(f.get(0, 0, 0, 0), 1.0);
        assert_eq!(f.get(3, 0, 0, 0), 2.0);
    }

    #[test]
    fn coordinates_scale_by_floor() {
        // 34 -> 48: x = 33 maps to 33 * 48 / 34 = 46
        let s = EventStream::new(vec![Event::new(5, 33, 17, Polarity::On)], 34, 34, 10).unwrap();
        let f = voxelize(&s, &VoxelizeConfig::default()).unwrap();
        assert_eq!(f.get(5, 1, 24, 46), 1.0);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(VoxelizeConfig::new(0, 4, 4).is_err());
        assert!(VoxelizeConfig::new(1, 0, 4).is_err());
    }

    #[test]
    fn resize_identity() {
        let f = FrameTensor::from_counts(1, 2, 2, (0..8).map(|v| v as f32).collect()).unwrap();
        assert_eq!(resize_counts(&f, 2, 2), f);
    }

    #[test]
    fn resize_four_by_four_ones_to_two_by_two() {
        let f = FrameTensor::from_counts(2, 4, 4, vec![1.0; 2 * 2 * 16]).unwrap();
        let r = resize_counts(&f, 2, 2);
        // coordinate-map oracle: each output cell receives the 2x2 block mapping onto it
        let mut expected = vec![0.0f32; 2 * 2 * 4];
        for b in 0..2 {
            for c in 0..2 {
                for y in 0..4 {
                    for x in 0..4 {
                        expected[((b * 2 + c) * 2 + y / 2) * 2 + x / 2] += 1.0;
                    }
                }
            }
        }
        assert!(expected.iter().all(|&v| v == 4.0));
        assert_eq!(r.counts(), &expected[..]);
    }

    #[test]
    fn resize_upscale_conserves() {
        let f = FrameTensor::from_counts(1, 3, 3, vec![2.0; 18]).unwrap();
        let r = resize_counts(&f, 7, 5);
        assert_eq!(r.total(), f.total());
    }
}
