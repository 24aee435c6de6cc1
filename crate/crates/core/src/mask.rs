//! Binary 3-D mixing masks.
//!
//! A random Gaussian mixture is evaluated at every voxel center of the
//! `(t, y, x)` grid and thresholded at its λ-quantile: a voxel keeps sample A
//! (bit 1) when its density is strictly below the `floor(λ·N)`-th largest
//! density, otherwise it takes sample B (bit 0). On fields with distinct
//! values exactly `floor(λ·N)` voxels are zero.
//!
//! Besides the full spatio-temporal mask, a 2-D spatial mixture replicated
//! over time, a 1-D temporal mixture replicated over space, and a CutMix-style
//! square are available.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Tensor, TensorData};

/// Draw λ ~ Beta(1, 1).
pub fn sample_lambda<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let beta = Beta::new(1.0, 1.0).expect("Beta(1, 1) parameters are valid");
    let lambda: f64 = beta.sample(rng);
    lambda.clamp(0.0, 1.0)
}

/// Sampling ranges for random mixtures. Standard deviations are drawn as a
/// fraction of the axis extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmRanges {
    pub k_min: usize,
    pub k_max: usize,
    pub sigma_min_frac: f64,
    pub sigma_max_frac: f64,
}

impl Default for GmmRanges {
    fn default() -> Self {
        GmmRanges { k_min: 1, k_max: 6, sigma_min_frac: 0.125, sigma_max_frac: 0.5 }
    }
}

impl GmmRanges {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidConfig(format!("component range {}..={} invalid", self.k_min, self.k_max)));
        }
        if !(self.sigma_min_frac > 0.0 && self.sigma_min_frac <= self.sigma_max_frac && self.sigma_max_frac.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "sigma fraction range [{}, {}] invalid",
                self.sigma_min_frac, self.sigma_max_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmComponent<const D: usize> {
    pub weight: f64,
    pub mean: [f64; D],
    /// Per-axis standard deviation (diagonal covariance).
    pub sigma: [f64; D],
}

/// A Gaussian mixture over a `D`-dimensional grid, axis order `(t, y, x)`
/// truncated to the trailing axes for `D < 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec<const D: usize> {
    components: Vec<GmmComponent<D>>,
}

impl<const D: usize> GmmSpec<D> {
    pub fn new(components: Vec<GmmComponent<D>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::InvalidConfig(format!("component {i} weight {} outside (0, 1]", c.weight)));
            }
            if c.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) || c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::InvalidConfig(format!("component {i} has invalid mean or sigma")));
            }
        }
        let sum: f64 = components.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("mixture weights sum to {sum}")));
        }
        Ok(GmmSpec { components })
    }

    pub fn components(&self) -> &[GmmComponent<D>] {
        &self.components
    }
}

/// Draw a random mixture for a grid of the given extents.
///
/// K is uniform on `ranges.k_min..=ranges.k_max`; weights are K independent
/// uniform(0, 1] draws normalized to sum to one; means are uniform on
/// `[0, extent)` and standard deviations uniform on
/// `[extent * sigma_min_frac, extent * sigma_max_frac]`, per axis.
pub fn sample_gmm<R: Rng + ?Sized, const D: usize>(rng: &mut R, extents: [usize; D], ranges: &GmmRanges) -> GmmSpec<D> {
    let k = rng.random_range(ranges.k_min..=ranges.k_max);
    let raw: Vec<f64> = (0..k).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let components = raw
        .iter()
        .map(|&r| {
            let mut mean = [0.0; D];
            let mut sigma = [0.0; D];
            for axis in 0..D {
                let e = extents[axis] as f64;
                mean[axis] = rng.random::<f64>() * e;
                let lo = e * ranges.sigma_min_frac;
                let hi = e * ranges.sigma_max_frac;
                sigma[axis] = lo + (hi - lo) * rng.random::<f64>();
            }
            GmmComponent { weight: r / total, mean, sigma }
        })
        .collect();
    GmmSpec { components }
}

/// Real-valued field over a `D`-dimensional grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<const D: usize> {
    pub extents: [usize; D],
    pub values: Vec<f64>,
}

/// Mixture density at every voxel center (`index + 0.5` on each axis).
pub fn evaluate_density<const D: usize>(spec: &GmmSpec<D>, extents: [usize; D]) -> Field<D> {
    let n: usize = extents.iter().product();
    let mut values = vec![0.0; n];
    let norm = (2.0 * PI).sqrt();
    let mut comp = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    for c in &spec.components {
        // The diagonal Gaussian factorizes into per-axis 1-D densities.
        comp.clear();
        comp.push(c.weight);
        for axis in 0..D {
            let (mu, s) = (c.mean[axis], c.sigma[axis]);
            let factors: Vec<f64> = (0..extents[axis])
                .map(|i| {
                    let z = (i as f64 + 0.5 - mu) / s;
                    (-0.5 * z * z).exp() / (norm * s)
                })
                .collect();
            next.clear();
            for &a in &comp {
                next.extend(factors.iter().map(|&f| a * f));
            }
            std::mem::swap(&mut comp, &mut next);
        }
        for (v, &x) in values.iter_mut().zip(&comp) {
            *v += x;
        }
    }
    Field { extents, values }
}

/// Number of zero bits requested for `n` voxels at ratio `lambda`.
pub fn zero_target(lambda: f64, n: usize) -> usize {
    ((lambda.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n)
}

/// Threshold `values` at the `floor(λ·N)`-th largest value: `true` where the
/// value is strictly below it. `floor(λ·N) = 0` gives all `true`.
pub fn quantile_bits(values: &[f64], lambda: f64) -> Vec<bool> {
    let n = values.len();
    let k = zero_target(lambda, n);
    if k == 0 {
        return vec![true; n];
    }
    let mut scratch = values.to_vec();
    let (_, &mut threshold, _) = scratch.select_nth_unstable_by(n - k, f64::total_cmp);
    values.iter().map(|&v| v < threshold).collect()
}

pub fn binarize(field: &Field<3>, lambda: f64) -> Mask3D {
    let [bins, height, width] = field.extents;
    Mask3D { bins, height, width, bits: quantile_bits(&field.values, lambda) }
}

/// Binary `[bins x height x width]` mask; `true` selects sample A.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    bins: usize,
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask3D {
    pub fn new(extents: [usize; 3], bits: Vec<bool>) -> Result<Self> {
        let [bins, height, width] = extents;
        if bits.len() != bins * height * width {
            return Err(Error::InvalidTensor(format!(
                "mask {bins}x{height}x{width} needs {} bits, got {}",
                bins * height * width,
                bits.len()
            )));
        }
        Ok(Mask3D { bins, height, width, bits })
    }

    pub fn filled(extents: [usize; 3], value: bool) -> Self {
        let [bins, height, width] = extents;
        Mask3D { bins, height, width, bits: vec![value; bins * height * width] }
    }

    pub fn extents(&self) -> [usize; 3] {
        [self.bins, self.height, self.width]
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> bool {
        self.bits[(t * self.height + y) * self.width + x]
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn zeros(&self) -> usize {
        self.len() - self.ones()
    }

    pub fn complement(&self) -> Mask3D {
        Mask3D { bits: self.bits.iter().map(|b| !b).collect(), ..*self }
    }

    /// One time slice, row-major `[height x width]`.
    pub fn slice(&self, t: usize) -> &[bool] {
        let n = self.height * self.width;
        &self.bits[t * n..(t + 1) * n]
    }

    /// Stored as a 3-D u16 tensor of 0/1 values.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.bits.iter().map(|&b| b as u16).collect();
        Tensor::new(vec![self.bins as u32, self.height as u32, self.width as u32], TensorData::U16(data))
            .expect("mask extents match its bit count")
    }

    pub fn from_tensor(tensor: &Tensor) -> Result<Self> {
        let [bins, height, width] = match tensor.dims() {
            &[b, h, w] => [b as usize, h as usize, w as usize],
            dims => return Err(Error::InvalidTensor(format!("mask dims {dims:?} are not 3-D"))),
        };
        let mut bits = Vec::with_capacity(bins * height * width);
        for (i, v) in tensor.to_f32().into_iter().enumerate() {
            match v {
                0.0 => bits.push(false),
                1.0 => bits.push(true),
                _ => return Err(Error::InvalidTensor(format!("mask element {i} = {v} is not 0 or 1"))),
            }
        }
        Mask3D::new([bins, height, width], bits)
    }

    fn replicate_spatial(bins: usize, height: usize, width: usize, plane: &[bool]) -> Self {
        let mut bits = Vec::with_capacity(bins * plane.len());
        for _ in 0..bins {
            bits.extend_from_slice(plane);
        }
        Mask3D { bins, height, width, bits }
    }

    fn replicate_temporal(height: usize, width: usize, per_bin: &[bool]) -> Self {
        let plane = height * width;
        let bits = per_bin.iter().flat_map(|&b| std::iter::repeat_n(b, plane)).collect();
        Mask3D { bins: per_bin.len(), height, width, bits }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaskKind {
    #[serde(rename = "st")]
    SpatioTemporal,
    #[serde(rename = "spatial")]
    Spatial,
    #[serde(rename = "temporal")]
    Temporal,
    #[serde(rename = "square")]
    Square,
}

impl MaskKind {
    pub const ALL: [MaskKind; 4] = [MaskKind::Square, MaskKind::Spatial, MaskKind::Temporal, MaskKind::SpatioTemporal];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::SpatioTemporal => "st",
            MaskKind::Spatial => "spatial",
            MaskKind::Temporal => "temporal",
            MaskKind::Square => "square",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "st" => Ok(MaskKind::SpatioTemporal),
            "spatial" => Ok(MaskKind::Spatial),
            "temporal" => Ok(MaskKind::Temporal),
            "square" => Ok(MaskKind::Square),
            other => Err(Error::InvalidConfig(format!("unknown mask kind {other:?}"))),
        }
    }
}

/// Axis-aligned rectangle in a `height x width` frame, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }
}

/// Rectangle with sides `round(height·√λ) x round(width·√λ)` at a uniform
/// position fully inside the frame.
pub fn sample_square<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize, lambda: f64) -> Rect {
    let ratio = lambda.clamp(0.0, 1.0).sqrt();
    let rh = ((height as f64 * ratio).round() as usize).min(height);
    let rw = ((width as f64 * ratio).round() as usize).min(width);
    let y0 = rng.random_range(0..=height - rh);
    let x0 = rng.random_range(0..=width - rw);
    Rect { y0, x0, y1: (y0 + rh).min(height), x1: (x0 + rw).min(width) }
}

/// Mask of the given kind whose zero fraction targets `lambda`.
pub fn make_mask<R: Rng + ?Sized>(
    kind: MaskKind,
    extents: [usize; 3],
    lambda: f64,
    ranges: &GmmRanges,
    rng: &mut R,
) -> Mask3D {
    let [bins, height, width] = extents;
    match kind {
        MaskKind::SpatioTemporal => {
            let spec = sample_gmm(rng, extents, ranges);
            binarize(&evaluate_density(&spec, extents), lambda)
        }
        MaskKind::Spatial => {
            let spec = sample_gmm(rng, [height, width], ranges);
            let plane = quantile_bits(&evaluate_density(&spec, [height, width]).values, lambda);
            Mask3D::replicate_spatial(bins, height, width, &plane)
        }
        MaskKind::Temporal => {
            let spec = sample_gmm(rng, [bins], ranges);
            let per_bin = quantile_bits(&evaluate_density(&spec, [bins]).values, lambda);
            Mask3D::replicate_temporal(height, width, &per_bin)
        }
        MaskKind::Square => {
            let rect = sample_square(rng, height, width, lambda);
            let plane: Vec<bool> = (0..height).flat_map(|y| (0..width).map(move |x| !rect.contains(y, x))).collect();
            Mask3D::replicate_spatial(bins, height, width, &plane)
        }
    }
}
