//! Parameter resolution: command-line flag, then config file, then default.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use sceneflow::flow::FlowParams;
use sceneflow::keyvalue::KeyValues;
use sceneflow::stereo::SgmParams;

/// Every key a config file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "dataset",
    "output",
    "calib",
    "threads",
    "max_disparity",
    "census_window",
    "p1",
    "p2",
    "lr_threshold",
    "pyramid_levels",
    "patch_radius",
    "prop_iterations",
    "search_radius_schedule",
    "descriptor_window",
    "knn",
    "consistency_threshold",
    "seed",
];

/// A loaded config file, or an empty one.
#[derive(Debug, Default)]
pub struct Config {
    kv: KeyValues,
}

impl Config {
    pub fn load(path: Option<&PathBuf>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let kv = KeyValues::read(path)?;
        for key in kv.keys() {
            if !KNOWN_KEYS.contains(&key) {
                bail!("{}: unknown key `{key}`", path.display());
            }
        }
        Ok(Self { kv })
    }

    /// `flag` if given, else the config value of `key`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.kv.get(key)?),
        }
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        self.pick(flag, key)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SgmArgs {
    /// Largest disparity searched [default: 128]
    #[arg(long)]
    pub max_disparity: Option<usize>,
    /// Census window edge length, odd, 3 to 7 [default: 5]
    #[arg(long)]
    pub census_window: Option<usize>,
    /// Small disparity change penalty [default: 7]
    #[arg(long)]
    pub p1: Option<u32>,
    /// Large disparity jump penalty [default: 100]
    #[arg(long)]
    pub p2: Option<u32>,
    /// Left-right consistency tolerance in pixels [default: 1.0]
    #[arg(long)]
    pub lr_threshold: Option<f32>,
}

impl SgmArgs {
    pub fn resolve(&self, cfg: &Config) -> Result<SgmParams> {
        let d = SgmParams::default();
        let p = SgmParams {
            max_disparity: cfg
                .pick(self.max_disparity, "max_disparity")?
                .unwrap_or(d.max_disparity),
            census_window: cfg
                .pick(self.census_window, "census_window")?
                .unwrap_or(d.census_window),
            p1: cfg.pick(self.p1, "p1")?.unwrap_or(d.p1),
            p2: cfg.pick(self.p2, "p2")?.unwrap_or(d.p2),
            lr_threshold: cfg
                .pick(self.lr_threshold, "lr_threshold")?
                .unwrap_or(d.lr_threshold),
        };
        p.validate().context("stereo parameters")?;
        Ok(p)
    }
}

/// Comma-separated list of search radii.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSchedule(pub Vec<f32>);

impl std::str::FromStr for RadiusSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|r| r.trim().parse::<f32>().map_err(|e| format!("`{r}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(RadiusSchedule)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct FlowArgs {
    /// Pyramid levels including full resolution [default: 3]
    #[arg(long)]
    pub pyramid_levels: Option<usize>,
    /// Patch radius of the matching cost [default: 4]
    #[arg(long)]
    pub patch_radius: Option<usize>,
    /// Propagation sweeps per level [default: 8]
    #[arg(long)]
    pub prop_iterations: Option<usize>,
    /// Comma-separated random-search radii per sweep; the last repeats
    /// [default: 8,4,2,1,0.5,0.25,0.125,0.0625]
    #[arg(long)]
    pub search_radius_schedule: Option<RadiusSchedule>,
    /// Descriptor patch size: 4, 8 or 16 [default: 8]
    #[arg(long)]
    pub descriptor_window: Option<usize>,
    /// Descriptor neighbours per pixel at initialization [default: 4]
    #[arg(long)]
    pub knn: Option<usize>,
    /// Forward-backward tolerance in pixels [default: 1.0]
    #[arg(long)]
    pub consistency_threshold: Option<f32>,
    /// Random seed of the search [default: 24301]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl FlowArgs {
    pub fn resolve(&self, cfg: &Config) -> Result<FlowParams> {
        let d = FlowParams::default();
        let p = FlowParams {
            pyramid_levels: cfg
                .pick(self.pyramid_levels, "pyramid_levels")?
                .unwrap_or(d.pyramid_levels),
            patch_radius: cfg
                .pick(self.patch_radius, "patch_radius")?
                .unwrap_or(d.patch_radius),
            prop_iterations: cfg
                .pick(self.prop_iterations, "prop_iterations")?
                .unwrap_or(d.prop_iterations),
            search_radius_schedule: cfg
                .pick(
                    self.search_radius_schedule.clone(),
                    "search_radius_schedule",
                )?
                .map_or(d.search_radius_schedule, |s| s.0),
            descriptor_window: cfg
                .pick(self.descriptor_window, "descriptor_window")?
                .unwrap_or(d.descriptor_window),
            knn: cfg.pick(self.knn, "knn")?.unwrap_or(d.knn),
            consistency_threshold: cfg
                .pick(self.consistency_threshold, "consistency_threshold")?
                .unwrap_or(d.consistency_threshold),
            rng_seed: cfg.pick(self.seed, "seed")?.unwrap_or(d.rng_seed),
        };
        p.validate().context("flow parameters")?;
        Ok(p)
    }
}
