//! Command-line interface.
//!
//! Settings come from an optional JSON file (`--config`) whose keys are the
//! snake_case forms of the flags; flags given on the command line win.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::augment::{GeometricParams, Strategy};
use crate::dataset::{augment_dataset, dataset_stats, resample_balanced, split, AugmentOptions, DatasetManifest};
use crate::error::{Error, Result};
use crate::io::{read_event_file, write_native, write_tensor, EventFormat};
use crate::label::{AlphaRule, DEFAULT_POOL_KERNEL};
use crate::mask::{make_mask, GmmRanges, MaskKind};
use crate::rng::seeded;
use crate::visualize::render_tensor;

#[derive(Debug, Parser)]
#[command(name = "eventmix", version, about = "EventMix augmentation for event-camera datasets")]
pub struct Cli {
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an event file to the native EVST format
    Convert(ConvertArgs),
    /// Split, voxelize, augment and write batch containers
    Augment(AugmentArgs),
    /// Render a tensor or mask container to one PNG per time bin
    Visualize(VisualizeArgs),
    /// Print per-class and per-file statistics for a manifest
    Stats(StatsArgs),
    /// Write train/valid manifests
    Split(SplitArgs),
    /// Generate a single mask container
    Mask(MaskArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Native,
    NmnistBin,
    Csv,
}

impl From<FormatArg> for EventFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Native => EventFormat::Native,
            FormatArg::NmnistBin => EventFormat::NmnistBin,
            FormatArg::Csv => EventFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Eventmix,
    Cutmix,
    Mixup,
    None,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Eventmix => Strategy::EventMix,
            StrategyArg::Cutmix => Strategy::CutMix,
            StrategyArg::Mixup => Strategy::MixUp,
            StrategyArg::None => Strategy::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKindArg {
    St,
    Spatial,
    Temporal,
    Square,
}

impl From<MaskKindArg> for MaskKind {
    fn from(k: MaskKindArg) -> Self {
        match k {
            MaskKindArg::St => MaskKind::SpatioTemporal,
            MaskKindArg::Spatial => MaskKind::Spatial,
            MaskKindArg::Temporal => MaskKind::Temporal,
            MaskKindArg::Square => MaskKind::Square,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaRuleArg {
    Area,
    Count,
    Distance,
}

/// `HxW`, e.g. `48x48`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub height: usize,
    pub width: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad extent {v:?} in {s:?}"));
        Ok(Size { height: parse(h)?, width: parse(w)? })
    }
}

impl Serialize for Size {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}x{}", self.height, self.width))
    }
}

impl<'de> Deserialize<'de> for Size {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: FormatArg,
    /// Sensor width for headerless formats
    #[arg(long, default_value_t = 34)]
    pub width: u16,
    /// Sensor height for headerless formats
    #[arg(long, default_value_t = 34)]
    pub height: u16,
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Pipeline settings shared by `augment` and `split`. Every field is optional
/// so that file values can be layered under flags.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    pub mask_kind: Option<MaskKindArg>,
    #[arg(long, value_enum)]
    pub alpha_rule: Option<AlphaRuleArg>,
    #[arg(long)]
    pub pool_kernel: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Output frame extents, HxW
    #[arg(long)]
    pub size: Option<Size>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub subset_fraction: Option<f64>,
    #[arg(long)]
    pub mix_probability: Option<f64>,
    /// Oversample the train split to equal class counts
    #[arg(long)]
    pub balance: bool,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub sigma_min_frac: Option<f64>,
    #[arg(long)]
    pub sigma_max_frac: Option<f64>,
    /// Disable flip/crop/rotation before mixing
    #[arg(long)]
    pub no_geometric: bool,
    #[arg(long)]
    pub max_rotation: Option<f64>,
    #[arg(long)]
    pub crop_padding: Option<usize>,
    #[arg(skip)]
    pub jobs: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::in_file(path, e.into()))
    }

    /// `self` with every value set in `flags` replaced.
    pub fn merged(mut self, flags: &CliConfig) -> Self {
        overlay!(
            self,
            flags,
            seed,
            strategy,
            mask_kind,
            alpha_rule,
            pool_kernel,
            bins,
            size,
            batch_size,
            train_fraction,
            subset_fraction,
            mix_probability,
            k_min,
            k_max,
            sigma_min_frac,
            sigma_max_frac,
            max_rotation,
            crop_padding,
            jobs
        );
        self.balance |= flags.balance;
        self.no_geometric |= flags.no_geometric;
        self
    }

    pub fn to_options(&self) -> Result<AugmentOptions> {
        let mut o = AugmentOptions::default();
        let seed = self.seed.unwrap_or(0);
        o.split.seed = seed;
        o.pipeline.mix.master_seed = seed;
        if let Some(s) = self.strategy {
            o.pipeline.mix.strategy = s.into();
        }
        if let Some(k) = self.mask_kind {
            o.pipeline.mix.mask_kind = k.into();
        }
        let kernel = self.pool_kernel.unwrap_or(DEFAULT_POOL_KERNEL);
        o.pipeline.mix.alpha_rule = match self.alpha_rule.unwrap_or(AlphaRuleArg::Distance) {
            AlphaRuleArg::Area => AlphaRule::Area,
            AlphaRuleArg::Count => AlphaRule::Count,
            AlphaRuleArg::Distance => AlphaRule::Distance { pool_kernel: kernel },
        };
        if let Some(p) = self.mix_probability {
            o.pipeline.mix.mix_probability = p;
        }
        let gmm = &mut o.pipeline.mix.gmm;
        *gmm = GmmRanges {
            k_min: self.k_min.unwrap_or(gmm.k_min),
            k_max: self.k_max.unwrap_or(gmm.k_max),
            sigma_min_frac: self.sigma_min_frac.unwrap_or(gmm.sigma_min_frac),
            sigma_max_frac: self.sigma_max_frac.unwrap_or(gmm.sigma_max_frac),
        };
        if let Some(b) = self.bins {
            o.pipeline.voxelize.bins = b;
        }
        if let Some(Size { height, width }) = self.size {
            o.pipeline.voxelize.out_height = height;
            o.pipeline.voxelize.out_width = width;
        }
        if let Some(b) = self.batch_size {
            o.pipeline.batch_size = b;
        }
        if let Some(f) = self.train_fraction {
            o.split.train_fraction = f;
        }
        if let Some(f) = self.subset_fraction {
            o.split.subset_fraction = f;
        }
        o.balance = self.balance;
        let g = &mut o.pipeline.geometric;
        *g = GeometricParams {
            enabled: !self.no_geometric,
            max_rotation_deg: self.max_rotation.unwrap_or(g.max_rotation_deg),
            crop_padding: self.crop_padding.unwrap_or(g.crop_padding),
            ..*g
        };
        o.pipeline.validate()?;
        o.split.validate()?;
        Ok(o)
    }
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with default settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: CliConfig,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    /// EVTN tensor (4-D frame, 5-D batch) or mask (3-D) container
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: CliConfig,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long, value_enum, default_value = "st")]
    pub kind: MaskKindArg,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value = "48x48")]
    pub size: Size,
    /// Target fraction of voxels taken from sample B
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn settings(config: Option<&Path>, flags: &CliConfig, jobs: Option<usize>) -> Result<CliConfig> {
    let base = match config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let mut merged = base.merged(flags);
    if jobs.is_some() {
        merged.jobs = jobs;
    }
    Ok(merged)
}

/// Thread count from `--jobs` or the config file.
pub fn resolve_jobs(cli: &Cli) -> Result<Option<usize>> {
    if cli.jobs.is_some() {
        return Ok(cli.jobs);
    }
    let config = match &cli.command {
        Command::Augment(a) => a.config.as_deref(),
        Command::Split(s) => s.config.as_deref(),
        _ => None,
    };
    Ok(match config {
        Some(p) => CliConfig::load(p)?.jobs,
        None => None,
    })
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let stream = read_event_file(&args.input, args.format.into(), args.width, args.height)?;
    fs::write(&args.output, write_native(&stream)).map_err(|e| Error::io(&args.output, e))?;
    println!("{}: {} events -> {}", args.input.display(), stream.len(), args.output.display());
    Ok(())
}

pub fn cmd_augment(args: &AugmentArgs, jobs: Option<usize>) -> Result<()> {
    let cfg = settings(args.config.as_deref(), &args.settings, jobs)?;
    let opts = cfg.to_options()?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let report = augment_dataset(&manifest, &opts, &args.out)?;
    let config_path = args.out.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&opts)?).map_err(|e| Error::io(&config_path, e))?;
    for b in report.train.iter().chain(&report.valid) {
        println!("{b}");
    }
    Ok(())
}

pub fn cmd_visualize(args: &VisualizeArgs) -> Result<()> {
    let tensor = crate::io::read_tensor_file(&args.input)?;
    let paths = render_tensor(&tensor, &args.out)?;
    println!("wrote {} images to {}", paths.len(), args.out.display());
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    print!("{}", dataset_stats(&manifest)?);
    Ok(())
}

pub fn cmd_split(args: &SplitArgs, jobs: Option<usize>) -> Result<()> {
    let opts = settings(args.config.as_deref(), &args.settings, jobs)?.to_options()?;
    let mut manifest = DatasetManifest::load(&args.manifest)?;
    if manifest.entries.is_empty() {
        return Err(Error::EmptyManifest);
    }
    // written manifests live elsewhere, so store absolute entry paths
    let base = if manifest.base_dir.as_os_str().is_empty() { PathBuf::from(".") } else { manifest.base_dir.clone() };
    let base = base.canonicalize().map_err(|e| Error::io(&base, e))?;
    for e in &mut manifest.entries {
        e.path = base.join(&e.path);
    }
    let parts = split(&manifest, &opts.split)?;
    let train = if opts.balance {
        resample_balanced(&parts.train, |&i| manifest.entries[i].class, opts.split.seed)?
    } else {
        parts.train
    };
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    // balanced manifests may repeat paths, so they are not re-validated
    for (name, idx) in [("train", &train), ("valid", &parts.valid)] {
        let sub = manifest.subset(format!("{}-{name}", manifest.name), idx);
        let path = args.out.join(format!("{name}.json"));
        fs::write(&path, sub.to_json()?).map_err(|e| Error::io(&path, e))?;
        println!("{name}: {} samples -> {}", idx.len(), path.display());
    }
    Ok(())
}

pub fn cmd_mask(args: &MaskArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.lambda) {
        return Err(Error::InvalidConfig(format!("lambda {} outside [0, 1]", args.lambda)));
    }
    let extents = [args.bins, args.size.height, args.size.width];
    if extents.contains(&0) {
        return Err(Error::InvalidConfig("mask extents must be non-zero".into()));
    }
    let mask = make_mask(args.kind.into(), extents, args.lambda, &GmmRanges::default(), &mut seeded(args.seed));
    fs::write(&args.output, write_tensor(&mask.to_tensor())).map_err(|e| Error::io(&args.output, e))?;
    println!(
        "{} mask, {} of {} voxels zero -> {}",
        MaskKind::from(args.kind),
        mask.zeros(),
        mask.len(),
        args.output.display()
    );
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::Augment(a) => cmd_augment(a, cli.jobs),
        Command::Visualize(a) => cmd_visualize(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Split(a) => cmd_split(a, cli.jobs),
        Command::Mask(a) => cmd_mask(a),
    }
}
