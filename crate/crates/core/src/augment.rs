//! Sample mixing and geometric augmentation of frame tensors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{FrameTensor, MixedSample, Provenance, SoftLabel, CHANNELS};
use crate::label::{alpha_area, compute_alpha, mix_labels, AlphaRule};
use crate::mask::{make_mask, sample_lambda, GmmRanges, Mask3D, MaskKind};
use crate::rng::{derive_seed, seeded, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    EventMix,
    CutMix,
    MixUp,
    None,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::EventMix => "eventmix",
            Strategy::CutMix => "cutmix",
            Strategy::MixUp => "mixup",
            Strategy::None => "none",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eventmix" => Ok(Strategy::EventMix),
            "cutmix" => Ok(Strategy::CutMix),
            "mixup" => Ok(Strategy::MixUp),
            "none" => Ok(Strategy::None),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixConfig {
    pub strategy: Strategy,
    /// Used by EventMix only.
    pub mask_kind: MaskKind,
    /// Used by EventMix only; CutMix always weighs by area, MixUp by λ.
    pub alpha_rule: AlphaRule,
    pub mix_probability: f64,
    pub gmm: GmmRanges,
    pub master_seed: u64,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            strategy: Strategy::EventMix,
            mask_kind: MaskKind::SpatioTemporal,
            alpha_rule: AlphaRule::default(),
            mix_probability: 1.0,
            gmm: GmmRanges::default(),
            master_seed: 0,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mix_probability) {
            return Err(Error::InvalidConfig(format!("mix probability {} outside [0, 1]", self.mix_probability)));
        }
        self.alpha_rule.validate()?;
        self.gmm.validate()
    }
}

/// A tensor with its label and an identifier recorded in provenance.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    pub id: u64,
    pub tensor: &'a FrameTensor,
    pub label: &'a SoftLabel,
}

impl<'a> SampleRef<'a> {
    pub fn new(id: u64, tensor: &'a FrameTensor, label: &'a SoftLabel) -> Self {
        SampleRef { id, tensor, label }
    }
}

fn check_pair(a: &SampleRef<'_>, b: &SampleRef<'_>) -> Result<()> {
    a.tensor.check_same_extents(b.tensor)?;
    if a.label.num_classes() != b.label.num_classes() {
        return Err(Error::ClassCountMismatch { left: a.label.num_classes(), right: b.label.num_classes() });
    }
    Ok(())
}

/// `M ⊙ x_A + (1 − M) ⊙ x_B`, one mask bit per voxel covering both polarities.
pub fn apply_mask(x_a: &FrameTensor, x_b: &FrameTensor, mask: &Mask3D) -> Result<FrameTensor> {
    x_a.check_same_extents(x_b)?;
    if x_a.extents() != mask.extents() {
        return Err(Error::ExtentMismatch { left: x_a.extents().to_vec(), right: mask.extents().to_vec() });
    }
    let mut out = x_a.clone();
    let plane = x_a.height() * x_a.width();
    for bin in 0..x_a.bins() {
        let bits = mask.slice(bin);
        for c in 0..CHANNELS {
            let start = x_a.index(bin, c, 0, 0);
            let src = &x_b.counts()[start..start + plane];
            let dst = &mut out.counts_mut()[start..start + plane];
            for ((d, &s), &keep) in dst.iter_mut().zip(src).zip(bits) {
                if !keep {
                    *d = s;
                }
            }
        }
    }
    Ok(out)
}

/// EventMix with a fresh λ drawn from the stream seeded by `seed`.
pub fn event_mix(a: SampleRef<'_>, b: SampleRef<'_>, cfg: &MixConfig, seed: u64) -> Result<MixedSample> {
    let mut rng = seeded(seed);
    let lambda = sample_lambda(&mut rng);
    event_mix_at(a, b, cfg, lambda, &mut rng, seed)
}

/// EventMix at a given λ; `rng` drives mask generation.
pub fn event_mix_at<R: Rng + ?Sized>(
    a: SampleRef<'_>,
    b: SampleRef<'_>,
    cfg: &MixConfig,
    lambda: f64,
    rng: &mut R,
    seed: u64,
) -> Result<MixedSample> {
    check_pair(&a, &b)?;
    let mask = make_mask(cfg.mask_kind, a.tensor.extents(), lambda, &cfg.gmm, rng);
    let mixed = apply_mask(a.tensor, b.tensor, &mask)?;
    let alpha = compute_alpha(&cfg.alpha_rule, a.tensor, b.tensor, &mixed, &mask)?;
    let label = mix_labels(a.label, b.label, alpha)?;
    MixedSample::new(mixed, label, alpha, Provenance { source_a: a.id, source_b: b.id, seed })
}

pub fn mixup3d(a: SampleRef<'_>, b: SampleRef<'_>, seed: u64) -> Result<MixedSample> {
    let lambda = sample_lambda(&mut seeded(seed));
    mixup3d_at(a, b, lambda, seed)
}

/// Convex combination of tensors and labels with weight λ on sample A.
pub fn mixup3d_at(a: SampleRef<'_>, b: SampleRef<'_>, lambda: f64, seed: u64) -> Result<MixedSample> {
    check_pair(&a, &b)?;
    let counts = a
        .tensor
        .counts()
        .iter()
        .zip(b.tensor.counts())
        .map(|(&xa, &xb)| (lambda * xa as f64 + (1.0 - lambda) * xb as f64) as f32)
        .collect();
    let [bins, _, h, w] = a.tensor.shape();
    let tensor = FrameTensor::from_counts(bins, h, w, counts)?;
    let label = mix_labels(a.label, b.label, lambda)?;
    MixedSample::new(tensor, label, lambda, Provenance { source_a: a.id, source_b: b.id, seed })
}

pub fn cutmix3d(a: SampleRef<'_>, b: SampleRef<'_>, seed: u64) -> Result<MixedSample> {
    let mut rng = seeded(seed);
    let lambda = sample_lambda(&mut rng);
    cutmix3d_at(a, b, lambda, &mut rng, seed)
}

/// A square spatial cut repeated over every time bin, labels weighted by area.
pub fn cutmix3d_at<R: Rng + ?Sized>(
    a: SampleRef<'_>,
    b: SampleRef<'_>,
    lambda: f64,
    rng: &mut R,
    seed: u64,
) -> Result<MixedSample> {
    check_pair(&a, &b)?;
    let mask = make_mask(MaskKind::Square, a.tensor.extents(), lambda, &GmmRanges::default(), rng);
    let mixed = apply_mask(a.tensor, b.tensor, &mask)?;
    let alpha = alpha_area(&mask);
    let label = mix_labels(a.label, b.label, alpha)?;
    MixedSample::new(mixed, label, alpha, Provenance { source_a: a.id, source_b: b.id, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometricParams {
    pub enabled: bool,
    pub flip_probability: f64,
    /// Zero padding on each side before the random crop.
    pub crop_padding: usize,
    pub max_rotation_deg: f64,
}

impl Default for GeometricParams {
    fn default() -> Self {
        GeometricParams { enabled: true, flip_probability: 0.5, crop_padding: 4, max_rotation_deg: 15.0 }
    }
}

impl GeometricParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::InvalidConfig(format!("flip probability {} outside [0, 1]", self.flip_probability)));
        }
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg.is_finite()) {
            return Err(Error::InvalidConfig(format!("rotation range {} invalid", self.max_rotation_deg)));
        }
        Ok(())
    }
}

/// One realization of the random geometric transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricDraw {
    pub flip: bool,
    /// Crop origin inside the padded frame; `(padding, padding)` is the identity.
    pub crop_y: usize,
    pub crop_x: usize,
    pub padding: usize,
    pub angle_deg: f64,
}

impl GeometricDraw {
    pub fn identity(padding: usize) -> Self {
        GeometricDraw { flip: false, crop_y: padding, crop_x: padding, padding, angle_deg: 0.0 }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, params: &GeometricParams) -> Self {
        let flip = rng.random_bool(params.flip_probability);
        let pad = params.crop_padding;
        let crop_y = rng.random_range(0..=2 * pad);
        let crop_x = rng.random_range(0..=2 * pad);
        let m = params.max_rotation_deg;
        let angle_deg = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        GeometricDraw { flip, crop_y, crop_x, padding: pad, angle_deg }
    }
}

/// Flip, pad-and-crop, then rotate; the same draw applies to every bin and channel.
pub fn geometric_augment<R: Rng + ?Sized>(x: &FrameTensor, rng: &mut R, params: &GeometricParams) -> FrameTensor {
    apply_geometric(x, &GeometricDraw::sample(rng, params))
}

pub fn apply_geometric(x: &FrameTensor, draw: &GeometricDraw) -> FrameTensor {
    let (h, w) = (x.height(), x.width());
    let mut out = x.clone();
    if draw.flip {
        for row in out.counts_mut().chunks_exact_mut(w) {
            row.reverse();
        }
    }
    if (draw.crop_y, draw.crop_x) != (draw.padding, draw.padding) {
        let dy = draw.crop_y as isize - draw.padding as isize;
        let dx = draw.crop_x as isize - draw.padding as isize;
        out = remap(&out, |y, x| {
            let (sy, sx) = (y as isize + dy, x as isize + dx);
            ((0..h as isize).contains(&sy) && (0..w as isize).contains(&sx)).then_some((sy as usize, sx as usize))
        });
    }
    if draw.angle_deg != 0.0 {
        let (sin, cos) = draw.angle_deg.to_radians().sin_cos();
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        out = remap(&out, |y, x| {
            // inverse rotation of the output pixel onto the source grid
            let (ry, rx) = (y as f64 - cy, x as f64 - cx);
            let sx = (cos * rx + sin * ry + cx).round();
            let sy = (-sin * rx + cos * ry + cy).round();
            (sy >= 0.0 && sx >= 0.0 && sy < h as f64 && sx < w as f64).then_some((sy as usize, sx as usize))
        });
    }
    out
}

/// Gather every output pixel from `source(y, x)`; `None` reads as zero.
fn remap(x: &FrameTensor, source: impl Fn(usize, usize) -> Option<(usize, usize)>) -> FrameTensor {
    let (h, w) = (x.height(), x.width());
    let map: Vec<Option<(usize, usize)>> =
        (0..h).flat_map(|y| (0..w).map(move |xx| (y, xx))).map(|(y, xx)| source(y, xx)).collect();
    let mut out = FrameTensor::zeros(x.bins(), h, w);
    for bin in 0..x.bins() {
        for c in 0..CHANNELS {
            let base = x.index(bin, c, 0, 0);
            for (i, m) in map.iter().enumerate() {
                if let Some((sy, sx)) = *m {
                    out.counts_mut()[base + i] = x.counts()[base + sy * w + sx];
                }
            }
        }
    }
    out
}

/// Mix every sample of a batch with a random partner.
pub fn mix_batch(samples: &[(FrameTensor, SoftLabel)], cfg: &MixConfig) -> Result<Vec<MixedSample>> {
    mix_batch_at(samples, cfg, 0)
}

/// [`mix_batch`] for a batch whose first sample has global stream index
/// `first_index`. Sample `i` draws from the stream
/// `derive_seed(master_seed, Mix, first_index + i)`, so the output does not
/// depend on thread count or scheduling.
pub fn mix_batch_at(
    samples: &[(FrameTensor, SoftLabel)],
    cfg: &MixConfig,
    first_index: u64,
) -> Result<Vec<MixedSample>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = samples.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let id_a = first_index + i as u64;
            let stream_seed = derive_seed(cfg.master_seed, Purpose::Mix, id_a);
            let mut rng = seeded(stream_seed);
            let j = if n == 1 {
                i
            } else {
                let r = rng.random_range(0..n - 1);
                if r >= i {
                    r + 1
                } else {
                    r
                }
            };
            let apply = cfg.strategy != Strategy::None && rng.random_bool(cfg.mix_probability);
            let (xa, ya) = &samples[i];
            if !apply {
                let prov = Provenance { source_a: id_a, source_b: id_a, seed: stream_seed };
                return MixedSample::new(xa.clone(), ya.clone(), 1.0, prov);
            }
            let (xb, yb) = &samples[j];
            let a = SampleRef::new(id_a, xa, ya);
            let b = SampleRef::new(first_index + j as u64, xb, yb);
            let seed: u64 = rng.random();
            match cfg.strategy {
                Strategy::EventMix => event_mix(a, b, cfg, seed),
                Strategy::CutMix => cutmix3d(a, b, seed),
                Strategy::MixUp => mixup3d(a, b, seed),
                Strategy::None => unreachable!("pass-through handled above"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn ramp(bins: usize, h: usize, w: usize, offset: f32) -> FrameTensor {
        let n = bins * 2 * h * w;
        FrameTensor::from_counts(bins, h, w, (0..n).map(|i| (i % 7) as f32 + offset).collect()).unwrap()
    }

    #[test]
    fn apply_mask_selects_per_voxel() {
        let a = FrameTensor::from_counts(1, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = FrameTensor::from_counts(1, 1, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let m = Mask3D::new([1, 1, 2], vec![true, false]).unwrap();
        assert_eq!(apply_mask(&a, &b, &m).unwrap().counts(), &[1.0, 6.0, 3.0, 8.0]);
    }

    #[test]
    fn event_mix_lambda_limits() {
        let (xa, xb) = (ramp(3, 4, 5, 0.0), ramp(3, 4, 5, 10.0));
        let (ya, yb) = (SoftLabel::one_hot(0, 3).unwrap(), SoftLabel::one_hot(2, 3).unwrap());
        let a = SampleRef::new(0, &xa, &ya);
        let b = SampleRef::new(1, &xb, &yb);
        for rule in [AlphaRule::Count, AlphaRule::Distance { pool_kernel: 2 }, AlphaRule::Area] {
            for kind in MaskKind::ALL {
                let cfg = MixConfig { alpha_rule: rule, mask_kind: kind, ..Default::default() };
                let m = event_mix_at(a, b, &cfg, 0.0, &mut seeded(1), 1).unwrap();
                assert_eq!(m.tensor(), &xa);
                assert_eq!(m.alpha(), 1.0);
                assert_eq!(m.label(), &ya);
                let m = event_mix_at(a, b, &cfg, 1.0, &mut seeded(1), 1).unwrap();
                assert_eq!(m.tensor(), &xb);
                assert_eq!(m.label(), &yb);
            }
        }
    }

    #[test]
    fn event_mix_rejects_mismatches() {
        let (xa, xb) = (ramp(1, 2, 2, 0.0), ramp(1, 2, 3, 0.0));
        let y = SoftLabel::one_hot(0, 2).unwrap();
        let cfg = MixConfig::default();
        assert!(event_mix(SampleRef::new(0, &xa, &y), SampleRef::new(1, &xb, &y), &cfg, 0).is_err());
        let y3 = SoftLabel::one_hot(0, 3).unwrap();
        assert!(event_mix(SampleRef::new(0, &xa, &y), SampleRef::new(1, &xa, &y3), &cfg, 0).is_err());
    }

    #[test]
    fn mixup_values() {
        let xa = FrameTensor::from_counts(1, 1, 1, vec![4.0, 1.0]).unwrap();
        let xb = FrameTensor::from_counts(1, 1, 1, vec![0.0, 3.0]).unwrap();
        let (ya, yb) = (SoftLabel::one_hot(0, 2).unwrap(), SoftLabel::one_hot(1, 2).unwrap());
        let (a, b) = (SampleRef::new(0, &xa, &ya), SampleRef::new(1, &xb, &yb));
        let m = mixup3d_at(a, b, 1.0, 0).unwrap();
        assert_eq!(m.tensor(), &xa);
        assert_eq!(m.label(), &ya);
        let m = mixup3d_at(a, b, 0.5, 0).unwrap();
        assert_eq!(m.tensor().counts(), &[2.0, 2.0]);
        assert_eq!(m.label().weights(), &[0.5, 0.5]);
    }

    #[test]
    fn cutmix_zero_lambda_is_identity() {
        let (xa, xb) = (ramp(2, 6, 6, 0.0), ramp(2, 6, 6, 3.0));
        let y = SoftLabel::one_hot(0, 2).unwrap();
        let m = cutmix3d_at(SampleRef::new(0, &xa, &y), SampleRef::new(1, &xb, &y), 0.0, &mut seeded(2), 0).unwrap();
        assert_eq!(m.tensor(), &xa);
        assert_eq!(m.alpha(), 1.0);
    }

    #[test]
    fn flip_twice_is_identity() {
        let x = ramp(2, 5, 7, 0.0);
        let draw = GeometricDraw { flip: true, ..GeometricDraw::identity(4) };
        let once = apply_geometric(&x, &draw);
        assert_ne!(once, x);
        assert_eq!(once.get(0, 0, 0, 0), x.get(0, 0, 0, 6));
        assert_eq!(apply_geometric(&once, &draw), x);
    }

    #[test]
    fn crop_at_padding_origin_and_zero_rotation_are_identity() {
        let x = ramp(2, 5, 7, 1.0);
        assert_eq!(apply_geometric(&x, &GeometricDraw::identity(4)), x);
        let shifted = apply_geometric(&x, &GeometricDraw { crop_y: 5, ..GeometricDraw::identity(4) });
        assert_eq!(shifted.get(1, 1, 0, 3), x.get(1, 1, 1, 3));
        assert_eq!(shifted.get(1, 1, 4, 3), 0.0);
    }

    #[test]
    fn rotation_by_ninety_degrees_moves_corners() {
        let mut v = vec![0.0; 2 * 3 * 3];
        v[0] = 1.0; // (y 0, x 0) of channel 0
        let x = FrameTensor::from_counts(1, 3, 3, v).unwrap();
        let r = apply_geometric(&x, &GeometricDraw { angle_deg: 90.0, ..GeometricDraw::identity(0) });
        assert_eq!(r.total(), 1.0);
        assert_eq!(r.get(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn sampled_geometry_keeps_integral_counts() {
        let x = ramp(3, 12, 12, 0.0);
        let mut rng = seeded(3);
        for _ in 0..20 {
            let y = geometric_augment(&x, &mut rng, &GeometricParams::default());
            assert_eq!(y.shape(), x.shape());
            assert!(y.is_integral());
            assert!(y.total() <= x.total());
        }
    }

    #[test]
    fn batch_pass_through_when_probability_zero() {
        let samples: Vec<_> =
            (0..4).map(|i| (ramp(2, 3, 3, i as f32), SoftLabel::one_hot(i % 2, 2).unwrap())).collect();
        let cfg = MixConfig { mix_probability: 0.0, ..Default::default() };
        let out = mix_batch(&samples, &cfg).unwrap();
        for (m, (x, y)) in out.iter().zip(&samples) {
            assert_eq!(m.tensor(), x);
            assert_eq!(m.label(), y);
            assert_eq!(m.alpha(), 1.0);
        }
    }

    #[test]
    fn batch_of_one_mixes_with_itself() {
        let samples = vec![(ramp(2, 4, 4, 0.0), SoftLabel::one_hot(1, 3).unwrap())];
        let out = mix_batch(&samples, &MixConfig::default()).unwrap();
        assert_eq!(out[0].tensor(), &samples[0].0);
        assert_eq!(out[0].alpha(), 0.5);
        assert_eq!(out[0].provenance().source_b, 0);
    }

    #[test]
    fn batch_partners_are_distinct() {
        let samples: Vec<_> = (0..5).map(|i| (ramp(1, 2, 2, i as f32), SoftLabel::one_hot(0, 1).unwrap())).collect();
        for seed in 0..20 {
            let cfg = MixConfig { master_seed: seed, ..Default::default() };
            for m in mix_batch_at(&samples, &cfg, 100).unwrap() {
                let p = m.provenance();
                assert_ne!(p.source_a, p.source_b);
                assert!((100..105).contains(&p.source_b));
            }
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(matches!(mix_batch(&[], &MixConfig::default()), Err(Error::EmptyBatch)));
    }

    #[test]
    fn strategy_names() {
        for s in [Strategy::EventMix, Strategy::CutMix, Strategy::MixUp, Strategy::None] {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
    }
}
