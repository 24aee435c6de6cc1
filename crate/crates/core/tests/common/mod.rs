#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use eventmix::dataset::{DatasetManifest, ManifestEntry};
use eventmix::io::{write_nmnist_bin, EventFormat};
use eventmix::mask::Mask3D;
use eventmix::{Event, EventStream, FrameTensor, Polarity};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sorted random stream; duration is at least the last timestamp.
pub fn random_stream<R: Rng>(rng: &mut R, n: usize, width: u16, height: u16, max_t: u32) -> EventStream {
    let mut times: Vec<u32> = (0..n).map(|_| rng.random_range(0..=max_t)).collect();
    times.sort_unstable();
    let events = times
        .into_iter()
        .map(|t| {
            let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
            Event::new(t, rng.random_range(0..width), rng.random_range(0..height), p)
        })
        .collect();
    EventStream::new(events, width, height, max_t).unwrap()
}

/// Sparse integer count tensor; roughly `density` of cells non-zero.
pub fn random_tensor<R: Rng>(rng: &mut R, extents: [usize; 3], density: f64) -> FrameTensor {
    let [b, h, w] = extents;
    let counts = (0..b * 2 * h * w)
        .map(|_| if rng.random_bool(density) { rng.random_range(1..6) as f32 } else { 0.0 })
        .collect();
    FrameTensor::from_counts(b, h, w, counts).unwrap()
}

pub fn random_mask<R: Rng>(rng: &mut R, extents: [usize; 3]) -> Mask3D {
    let n = extents.iter().product();
    let p: f64 = rng.random();
    Mask3D::new(extents, (0..n).map(|_| rng.random_bool(p)).collect()).unwrap()
}

/// Events clustered around a class-specific location on a 34x34 sensor.
pub fn class_stream<R: Rng>(rng: &mut R, class: usize, n: usize) -> EventStream {
    let cx = 6.0 + (class % 4) as f64 * 7.0;
    let cy = 6.0 + (class / 4) as f64 * 7.0;
    let duration = 100_000u32;
    let mut times: Vec<u32> = (0..n).map(|_| rng.random_range(0..=duration)).collect();
    times.sort_unstable();
    let events = times
        .into_iter()
        .map(|t| {
            let x = (cx + rng.random_range(-5.0..5.0f64)).clamp(0.0, 33.0) as u16;
            let y = (cy + rng.random_range(-5.0..5.0f64)).clamp(0.0, 33.0) as u16;
            let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
            Event::new(t, x, y, p)
        })
        .collect();
    EventStream::from_events(events, 34, 34).unwrap()
}

/// Writes `per_class` N-MNIST style .bin files per class plus `manifest.json`.
/// Returns the manifest path and the event count of every written file.
pub fn synthetic_dataset(dir: &Path, classes: usize, per_class: usize, seed: u64) -> (PathBuf, Vec<usize>) {
    let mut r = rng(seed);
    let mut entries = Vec::new();
    let mut counts = Vec::new();
    for class in 0..classes {
        fs::create_dir_all(dir.join(class.to_string())).unwrap();
        for i in 0..per_class {
            let n = r.random_range(50..400);
            let stream = class_stream(&mut r, class, n);
            let rel = PathBuf::from(format!("{class}/{i:05}.bin"));
            fs::write(dir.join(&rel), write_nmnist_bin(&stream).unwrap()).unwrap();
            counts.push(n);
            entries.push(ManifestEntry { path: rel, format: EventFormat::NmnistBin, class, width: 34, height: 34 });
        }
    }
    let manifest = DatasetManifest::new("synthetic", classes, entries, dir).unwrap();
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json().unwrap()).unwrap();
    (path, counts)
}

/// All regular files under `dir`, relative path and bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
