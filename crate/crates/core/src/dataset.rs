//! Dataset manifests, train/valid splits, class balancing and batch emission.
//!
//! Manifest (JSON):
//!
//! ```json
//! {"name": "nmnist", "num_classes": 10,
//!  "entries": [{"path": "0/00002.bin", "format": "nmnist-bin", "class": 0, "width": 34, "height": 34}]}
//! ```
//!
//! Relative entry paths resolve against the manifest's directory.
//!
//! Each emitted batch `<prefix>_<NNNNN>` consists of three files:
//!
//! * `.evtn`: mixed tensors, `[batch, bins, 2, height, width]`; u16 when every
//!   value is an integer count below 65536, f32 otherwise.
//! * `.labels.evtn`: soft labels, `[batch, num_classes]`, f32.
//! * `.txt`: `#`-prefixed `key=value` metadata lines followed by one
//!   `index,source_a,source_b,alpha,seed` line per sample.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{apply_geometric, mix_batch_at, GeometricDraw, GeometricParams, MixConfig, Strategy};
use crate::error::{Error, Result};
use crate::event::{EventStream, FrameTensor, MixedSample, SoftLabel};
use crate::io::{read_event_file, write_tensor, Dtype, EventFormat, Tensor};
use crate::rng::{stream_rng, Purpose};
use crate::voxelize::{voxelize, VoxelizeConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub format: EventFormat,
    pub class: usize,
    pub width: u16,
    pub height: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub num_classes: usize,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        num_classes: usize,
        entries: Vec<ManifestEntry>,
        base_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        let m = DatasetManifest { name: name.into(), num_classes, entries, base_dir: base_dir.into() };
        m.validate()?;
        Ok(m)
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest = serde_json::from_str(text)?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base).map_err(|e| Error::in_file(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("manifest declares zero classes".into()));
        }
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.class >= self.num_classes {
                return Err(Error::InvalidConfig(format!(
                    "entry {i} class {} outside [0, {})",
                    e.class, self.num_classes
                )));
            }
            if !seen.insert(&e.path) {
                return Err(Error::InvalidConfig(format!("duplicate path {}", e.path.display())));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    pub fn load_stream(&self, index: usize) -> Result<EventStream> {
        let e = &self.entries[index];
        read_event_file(&self.resolve(e), e.format, e.width, e.height)
    }

    /// Manifest restricted to `indices`, sharing this manifest's base directory.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        DatasetManifest {
            name: name.into(),
            num_classes: self.num_classes,
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            base_dir: self.base_dir.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub subset_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.9, seed: 0, subset_fraction: 1.0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train_fraction), ("subset", self.subset_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Manifest indices on each side of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Shuffled order.
    pub train: Vec<usize>,
    /// Manifest order.
    pub valid: Vec<usize>,
}

const ORDER_STREAM: u64 = u64::MAX;

fn by_class(manifest: &DatasetManifest, indices: impl IntoIterator<Item = usize>) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in indices {
        groups.entry(manifest.entries[i].class).or_default().push(i);
    }
    groups
}

/// Stratified seeded split, then a stratified subsample of the train side.
///
/// Each class contributes `round(n * train_fraction)` samples to train;
/// classes with fewer than two samples go entirely to train. The retained
/// train count is `round(total * subset_fraction)` (at least one), allocated
/// across classes by largest remainder.
pub fn split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut train_by_class = Vec::new();
    let mut valid = Vec::new();
    for (class, mut members) in by_class(manifest, 0..manifest.entries.len()) {
        members.shuffle(&mut stream_rng(spec.seed, Purpose::Split, class as u64));
        let n = members.len();
        let n_train = if n < 2 {
            log::warn!("class {class} has {n} sample(s); assigning to train");
            n
        } else {
            ((n as f64 * spec.train_fraction).round() as usize).clamp(1, n)
        };
        valid.extend_from_slice(&members[n_train..]);
        members.truncate(n_train);
        train_by_class.push(members);
    }

    let total: usize = train_by_class.iter().map(Vec::len).sum();
    if spec.subset_fraction < 1.0 && total > 0 {
        let target = ((total as f64 * spec.subset_fraction).round() as usize).clamp(1, total);
        let keep = largest_remainder(&train_by_class.iter().map(Vec::len).collect::<Vec<_>>(), target, spec.seed);
        for (members, k) in train_by_class.iter_mut().zip(keep) {
            members.truncate(k);
        }
    }

    let mut train: Vec<usize> = train_by_class.into_iter().flatten().collect();
    train.sort_unstable();
    train.shuffle(&mut stream_rng(spec.seed, Purpose::Split, ORDER_STREAM));
    valid.sort_unstable();
    Ok(Split { train, valid })
}

/// Apportion `target` items across groups proportionally to `sizes`.
/// Remainder ties are broken in a seeded random order.
fn largest_remainder(sizes: &[usize], target: usize, seed: u64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let quotas: Vec<f64> = sizes.iter().map(|&s| s as f64 * target as f64 / total as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(&mut stream_rng(seed, Purpose::Split, ORDER_STREAM - 1));
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    let mut remaining = target - alloc.iter().sum::<usize>();
    for &g in order.iter().cycle().take(sizes.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[g] < sizes[g] {
            alloc[g] += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// Oversample every class (with replacement) up to the size of the largest
/// one, then shuffle. Classes absent from `items` stay absent.
pub fn resample_balanced<T: Clone>(items: &[T], class_of: impl Fn(&T) -> usize, seed: u64) -> Result<Vec<T>> {
    if items.is_empty() {
        return Err(Error::InvalidConfig("cannot balance an empty training list".into()));
    }
    let mut groups: BTreeMap<usize, Vec<&T>> = BTreeMap::new();
    for item in items {
        groups.entry(class_of(item)).or_default().push(item);
    }
    let largest = groups.values().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<T> = items.to_vec();
    for (&class, members) in &groups {
        let mut rng = stream_rng(seed, Purpose::Resample, class as u64);
        for _ in members.len()..largest {
            out.push(members[rng.random_range(0..members.len())].clone());
        }
    }
    out.shuffle(&mut stream_rng(seed, Purpose::Resample, ORDER_STREAM));
    Ok(out)
}

/// Everything that determines the bytes of emitted batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub voxelize: VoxelizeConfig,
    pub mix: MixConfig,
    pub geometric: GeometricParams,
    pub batch_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            voxelize: VoxelizeConfig::default(),
            mix: MixConfig::default(),
            geometric: GeometricParams::default(),
            batch_size: 32,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        self.voxelize.validate()?;
        self.mix.validate()?;
        self.geometric.validate()
    }

    /// First 16 hex digits of the SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub index: usize,
    pub size: usize,
    pub dtype: Dtype,
    pub tensor_path: PathBuf,
    pub labels_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub mean_alpha: f64,
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "batch {:>5}: {} samples, dtype {}, mean alpha {:.4} -> {}",
            self.index,
            self.size,
            self.dtype as u8,
            self.mean_alpha,
            self.tensor_path.display()
        )
    }
}

/// Parse and voxelize the manifest entries at `order`, in parallel.
pub fn load_tensors(manifest: &DatasetManifest, order: &[usize], cfg: &VoxelizeConfig) -> Result<Vec<FrameTensor>> {
    let unique: Vec<usize> = order.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let loaded: Vec<(usize, FrameTensor)> = unique
        .par_iter()
        .map(|&i| {
            let path = manifest.resolve(&manifest.entries[i]);
            let stream = manifest.load_stream(i)?;
            let tensor = voxelize(&stream, cfg).map_err(|e| Error::in_file(&path, e))?;
            Ok((i, tensor))
        })
        .collect::<Result<_>>()?;
    let lookup: BTreeMap<usize, FrameTensor> = loaded.into_iter().collect();
    Ok(order.iter().map(|i| lookup[i].clone()).collect())
}

/// Voxelize, geometrically augment, mix and write `order` in batches.
///
/// Sample `p` (position in `order`) uses random streams indexed by `p`, so the
/// output bytes depend only on the inputs and `cfg`.
pub fn emit_batches(
    manifest: &DatasetManifest,
    order: &[usize],
    cfg: &PipelineConfig,
    out_dir: &Path,
    prefix: &str,
) -> Result<Vec<BatchSummary>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tensors = load_tensors(manifest, order, &cfg.voxelize)?;
    let samples: Vec<(FrameTensor, SoftLabel)> = tensors
        .into_par_iter()
        .enumerate()
        .map(|(p, t)| {
            let label = SoftLabel::one_hot(manifest.entries[order[p]].class, manifest.num_classes)?;
            let t = if cfg.geometric.enabled {
                let mut rng = stream_rng(cfg.mix.master_seed, Purpose::Geometry, p as u64);
                apply_geometric(&t, &GeometricDraw::sample(&mut rng, &cfg.geometric))
            } else {
                t
            };
            Ok((t, label))
        })
        .collect::<Result<_>>()?;

    let hash = cfg.hash();
    let mut summaries = Vec::new();
    for (b, chunk) in samples.chunks(cfg.batch_size).enumerate() {
        let first = b * cfg.batch_size;
        let mixed = mix_batch_at(chunk, &cfg.mix, first as u64)?;
        let stem = format!("{prefix}_{b:05}");
        let summary = write_batch(manifest, order, &mixed, cfg, &hash, out_dir, &stem, b)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

fn batch_dtype(mixed: &[MixedSample], strategy: Strategy) -> Dtype {
    let integral = mixed.iter().all(|m| m.tensor().counts().iter().all(|&v| v.fract() == 0.0 && v < 65536.0));
    if strategy == Strategy::MixUp || !integral {
        Dtype::F32
    } else {
        Dtype::U16
    }
}

#[allow(clippy::too_many_arguments)]
fn write_batch(
    manifest: &DatasetManifest,
    order: &[usize],
    mixed: &[MixedSample],
    cfg: &PipelineConfig,
    hash: &str,
    out_dir: &Path,
    stem: &str,
    index: usize,
) -> Result<BatchSummary> {
    let dtype = batch_dtype(mixed, cfg.mix.strategy);
    let frames: Vec<FrameTensor> = mixed.iter().map(|m| m.tensor().clone()).collect();
    let labels: Vec<SoftLabel> = mixed.iter().map(|m| m.label().clone()).collect();
    let tensor = Tensor::stack_frames(&frames, dtype)?;
    let label_tensor = Tensor::stack_labels(&labels)?;

    let join = |dims: &[u32]| dims.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    let mut sidecar = String::new();
    sidecar.push_str(&format!("# config_hash={hash}\n"));
    sidecar.push_str(&format!("# tensor_dims={}\n", join(tensor.dims())));
    sidecar.push_str(&format!("# tensor_dtype={}\n", dtype as u8));
    sidecar.push_str(&format!("# label_dims={}\n", join(label_tensor.dims())));
    sidecar.push_str("# columns=index,source_a,source_b,alpha,seed\n");
    for m in mixed {
        let p = m.provenance();
        let path = |pos: u64| manifest.entries[order[pos as usize]].path.display().to_string();
        sidecar.push_str(&format!(
            "{},{},{},{},{}\n",
            p.source_a,
            path(p.source_a),
            path(p.source_b),
            m.alpha(),
            p.seed
        ));
    }

    let tensor_path = out_dir.join(format!("{stem}.evtn"));
    let labels_path = out_dir.join(format!("{stem}.labels.evtn"));
    let sidecar_path = out_dir.join(format!("{stem}.txt"));
    fs::write(&tensor_path, write_tensor(&tensor)).map_err(|e| Error::io(&tensor_path, e))?;
    fs::write(&labels_path, write_tensor(&label_tensor)).map_err(|e| Error::io(&labels_path, e))?;
    fs::write(&sidecar_path, sidecar).map_err(|e| Error::io(&sidecar_path, e))?;

    let mean_alpha = mixed.iter().map(MixedSample::alpha).sum::<f64>() / mixed.len() as f64;
    Ok(BatchSummary { index, size: mixed.len(), dtype, tensor_path, labels_path, sidecar_path, mean_alpha })
}

/// Options for [`augment_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentOptions {
    pub pipeline: PipelineConfig,
    pub split: SplitSpec,
    pub balance: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentReport {
    pub train: Vec<BatchSummary>,
    pub valid: Vec<BatchSummary>,
}

/// Split, optionally balance, then emit augmented train batches under
/// `out_dir/train` and plain valid batches under `out_dir/valid`.
pub fn augment_dataset(manifest: &DatasetManifest, opts: &AugmentOptions, out_dir: &Path) -> Result<AugmentReport> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    opts.pipeline.validate()?;
    let parts = split(manifest, &opts.split)?;
    let train = if opts.balance {
        resample_balanced(&parts.train, |&i| manifest.entries[i].class, opts.split.seed)?
    } else {
        parts.train
    };
    let train_batches = emit_batches(manifest, &train, &opts.pipeline, &out_dir.join("train"), "train")?;

    let valid_batches = if parts.valid.is_empty() {
        Vec::new()
    } else {
        let plain = PipelineConfig {
            mix: MixConfig { strategy: Strategy::None, ..opts.pipeline.mix },
            geometric: GeometricParams { enabled: false, ..opts.pipeline.geometric },
            ..opts.pipeline
        };
        emit_batches(manifest, &parts.valid, &plain, &out_dir.join("valid"), "valid")?
    };
    Ok(AugmentReport { train: train_batches, valid: valid_batches })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Summary {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Summary { min, mean: values.iter().sum::<f64>() / values.len() as f64, max }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub name: String,
    pub samples: usize,
    pub class_counts: Vec<usize>,
    pub events: Summary,
    pub duration_us: Summary,
}

pub fn dataset_stats(manifest: &DatasetManifest) -> Result<DatasetStats> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let per_file: Vec<(f64, f64)> = (0..manifest.entries.len())
        .into_par_iter()
        .map(|i| {
            let s = manifest.load_stream(i)?;
            Ok((s.len() as f64, s.duration() as f64))
        })
        .collect::<Result<_>>()?;
    let mut class_counts = vec![0; manifest.num_classes];
    for e in &manifest.entries {
        class_counts[e.class] += 1;
    }
    let events: Vec<f64> = per_file.iter().map(|p| p.0).collect();
    let durations: Vec<f64> = per_file.iter().map(|p| p.1).collect();
    Ok(DatasetStats {
        name: manifest.name.clone(),
        samples: manifest.entries.len(),
        class_counts,
        events: Summary::of(&events),
        duration_us: Summary::of(&durations),
    })
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset: {}", self.name)?;
        writeln!(f, "samples: {}", self.samples)?;
        writeln!(f, "classes: {}", self.class_counts.len())?;
        for (c, n) in self.class_counts.iter().enumerate() {
            writeln!(f, "  class {c}: {n}")?;
        }
        let Summary { min, mean, max } = self.events;
        writeln!(f, "events per sample: min {min} mean {mean:.2} max {max}")?;
        let Summary { min, mean, max } = self.duration_us;
        writeln!(f, "duration (us): min {min} mean {mean:.2} max {max}")
    }
}
