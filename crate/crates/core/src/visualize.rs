//! PNG rendering of frame tensors and masks, one image per time bin.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::event::FrameTensor;
use crate::io::Tensor;
use crate::mask::Mask3D;

/// Polarity 0 in red, polarity 1 in green, both scaled linearly by the
/// tensor-wide maximum.
pub fn render_frame(frame: &FrameTensor) -> Vec<RgbImage> {
    let max = frame.max();
    let scale = |v: f32| if max > 0.0 { (v / max * 255.0).round() as u8 } else { 0 };
    (0..frame.bins())
        .map(|bin| {
            RgbImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgb([scale(frame.get(bin, 0, y, x)), scale(frame.get(bin, 1, y, x)), 0])
            })
        })
        .collect()
}

/// 1 bits white, 0 bits black.
pub fn render_mask(mask: &Mask3D) -> Vec<RgbImage> {
    (0..mask.bins())
        .map(|t| {
            RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
                let v = if mask.get(t, y as usize, x as usize) { 255 } else { 0 };
                Rgb([v, v, v])
            })
        })
        .collect()
}

fn save_all(images: &[RgbImage], out_dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let path = out_dir.join(format!("{prefix}bin_{i:03}.png"));
            img.save(&path).map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
            Ok(path)
        })
        .collect()
}

/// Render a container: 3-D tensors as masks, 4-D as a frame, 5-D as a batch
/// of frames (`sample_NNN_bin_NNN.png`). Returns the written paths.
pub fn render_tensor(tensor: &Tensor, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    match tensor.dims().len() {
        3 => save_all(&render_mask(&Mask3D::from_tensor(tensor)?), out_dir, ""),
        4 => save_all(&render_frame(&tensor.to_frame()?), out_dir, ""),
        5 => {
            let mut paths = Vec::new();
            for (i, frame) in tensor.to_frames()?.iter().enumerate() {
                paths.extend(save_all(&render_frame(frame), out_dir, &format!("sample_{i:03}_"))?);
            }
            Ok(paths)
        }
        n => Err(Error::InvalidTensor(format!("cannot render a {n}-D tensor"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame_is_black() {
        let imgs = render_frame(&FrameTensor::zeros(3, 4, 5));
        assert_eq!(imgs.len(), 3);
        assert!(imgs.iter().all(|i| i.pixels().all(|p| p.0 == [0, 0, 0])));
    }

    #[test]
    fn polarities_map_to_red_and_green() {
        let mut v = vec![0.0; 2 * 2 * 2];
        v[0] = 2.0; // bin 0, channel 0, (0, 0)
        v[4 + 1] = 1.0; // bin 0, channel 1, (0, 1)
        let imgs = render_frame(&FrameTensor::from_counts(1, 2, 2, v).unwrap());
        assert_eq!(imgs[0].get_pixel(0, 0).0, [255, 0, 0]);
        assert_eq!(imgs[0].get_pixel(1, 0).0, [0, 128, 0]);
    }

    #[test]
    fn full_mask_is_white() {
        let imgs = render_mask(&Mask3D::filled([2, 3, 3], true));
        assert!(imgs.iter().all(|i| i.pixels().all(|p| p.0 == [255; 3])));
    }
}
