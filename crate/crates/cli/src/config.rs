//! Effective masking configuration: built-in defaults, then a flat
//! `key = value` file, then command-line flags. Later sources win.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use pgs_core::edge::EdgeDetector;
use pgs_core::otn::PositiveKernel;
use pgs_core::selector::Neighborhood;
use pgs_core::similarity::{alpha_schedule, BlendSchedule, RandomProjection};
use pgs_core::PgsConfig;

pub const SEED_ENV: &str = "PGS_SEED";

/// Human-readable statement of how the number of masked patches is chosen.
pub const K_RULE: &str = "k = number of finite expansion scores >= their median, \
clamped to [floor(lower_ratio*n), min(floor(upper_ratio*n), maskable)]; ties by lower index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EdgeChoice {
    Sobel,
    Canny,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NeighborhoodChoice {
    Adjacent,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Shift,
    Entropic,
}

/// Masking flags shared by `mask`, `visualize`, `bench` and `toy-train`.
/// Every flag can also be given as a key of the same name in `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct MaskArgs {
    /// Flat `key = value` file; keys are the long flag names without dashes.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub initial_ratio: Option<f64>,
    #[arg(long)]
    pub lower_ratio: Option<f64>,
    #[arg(long)]
    pub upper_ratio: Option<f64>,
    /// Mask exactly `upper-ratio` of the patches.
    #[arg(long)]
    pub fixed: bool,
    #[arg(long, value_enum)]
    pub edge_detector: Option<EdgeChoice>,
    /// Turn edge retention off but keep the chosen detector in the echoed config.
    #[arg(long)]
    pub no_edge: bool,
    #[arg(long)]
    pub canny_low: Option<f64>,
    #[arg(long)]
    pub canny_high: Option<f64>,
    #[arg(long)]
    pub edge_quantile: Option<f64>,
    /// Skip Sinkhorn refinement.
    #[arg(long)]
    pub no_otn: bool,
    /// Constant feature weight; overrides the ramp.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub alpha_ramp_epochs: Option<usize>,
    /// Epoch used to evaluate the alpha ramp.
    #[arg(long)]
    pub epoch: Option<usize>,
    #[arg(long)]
    pub sinkhorn_iters: Option<usize>,
    #[arg(long)]
    pub sinkhorn_tol: Option<f64>,
    #[arg(long, value_enum)]
    pub sinkhorn_kernel: Option<KernelChoice>,
    /// Temperature of the entropic kernel.
    #[arg(long)]
    pub sinkhorn_epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub neighborhood: Option<NeighborhoodChoice>,
    /// Width of the random patch projection used as features.
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Global seed; otherwise the config file, then $PGS_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl MaskArgs {
    fn as_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($key:literal, $field:expr) => {
                if let Some(v) = &$field {
                    out.push(($key, v.to_string()));
                }
            };
        }
        push!("patch-size", self.patch_size);
        push!("initial-ratio", self.initial_ratio);
        push!("lower-ratio", self.lower_ratio);
        push!("upper-ratio", self.upper_ratio);
        if self.fixed {
            out.push(("fixed", "true".into()));
        }
        if let Some(e) = self.edge_detector {
            out.push(("edge-detector", e.to_possible_value().unwrap().get_name().to_string()));
        }
        if self.no_edge {
            out.push(("edge-detector", "none".into()));
        }
        push!("canny-low", self.canny_low);
        push!("canny-high", self.canny_high);
        push!("edge-quantile", self.edge_quantile);
        if self.no_otn {
            out.push(("otn", "false".into()));
        }
        push!("alpha", self.alpha);
        push!("alpha-min", self.alpha_min);
        push!("alpha-max", self.alpha_max);
        push!("alpha-ramp-epochs", self.alpha_ramp_epochs);
        push!("epoch", self.epoch);
        push!("sinkhorn-iters", self.sinkhorn_iters);
        push!("sinkhorn-tol", self.sinkhorn_tol);
        if let Some(k) = self.sinkhorn_kernel {
            out.push(("sinkhorn-kernel", k.to_possible_value().unwrap().get_name().to_string()));
        }
        push!("sinkhorn-epsilon", self.sinkhorn_epsilon);
        if let Some(n) = self.neighborhood {
            out.push(("neighborhood", n.to_possible_value().unwrap().get_name().to_string()));
        }
        push!("feature-dim", self.feature_dim);
        push!("seed", self.seed);
        out
    }

    /// Resolves flags, config file, `$PGS_SEED` and `base`, in that order of priority.
    pub fn resolve(&self, base: &PgsConfig) -> Result<Settings> {
        let env_seed = std::env::var(SEED_ENV).ok();
        self.resolve_with_env(base, env_seed.as_deref())
    }

    pub fn resolve_with_env(&self, base: &PgsConfig, env_seed: Option<&str>) -> Result<Settings> {
        let mut s = Settings::from_base(base);
        if let Some(v) = env_seed {
            s.seed = v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?;
        }
        if let Some(path) = &self.config {
            for (line, key, value) in read_config_file(path)? {
                s.apply(&key, &value).with_context(|| format!("{}:{line}", path.display()))?;
            }
        }
        for (key, value) in self.as_pairs() {
            s.apply(key, &value).with_context(|| format!("--{key}"))?;
        }
        s.finish()?;
        Ok(s)
    }
}

/// `(line number, key, value)` triples; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`, got {line:?}", i + 1))?;
        out.push((i + 1, k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn read_config_file(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub pgs: PgsConfig,
    /// Detector used when edge retention is on; never `None`.
    pub detector: EdgeChoice,
    pub edge_retention: bool,
    pub canny_low: f64,
    pub canny_high: f64,
    pub fixed: bool,
    pub epoch: usize,
    pub feature_dim: usize,
    pub seed: u64,
    entropic_epsilon: f64,
    entropic: bool,
}

impl Settings {
    fn from_base(base: &PgsConfig) -> Self {
        let (detector, canny_low, canny_high) = match base.masking.edge {
            None | Some(EdgeDetector::Sobel) => {
                (EdgeChoice::Sobel, EdgeDetector::DEFAULT_CANNY_LOW, EdgeDetector::DEFAULT_CANNY_HIGH)
            }
            Some(EdgeDetector::Canny { low, high }) => (EdgeChoice::Canny, low, high),
        };
        let (entropic, entropic_epsilon) = match base.sinkhorn.kernel {
            PositiveKernel::Shift => (false, 0.05),
            PositiveKernel::Entropic { epsilon } => (true, epsilon),
        };
        Self {
            pgs: base.clone(),
            detector,
            edge_retention: base.masking.edge.is_some(),
            canny_low,
            canny_high,
            fixed: false,
            epoch: 0,
            feature_dim: RandomProjection::DEFAULT_DIM,
            seed: base.masking.seed,
            entropic_epsilon,
            entropic,
        }
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}"))
        }
        fn choice<T: ValueEnum>(key: &str, v: &str) -> Result<T> {
            T::from_str(v, true).map_err(|_| anyhow!("invalid value {v:?} for {key}"))
        }
        let m = &mut self.pgs.masking;
        match key {
            "patch-size" => self.pgs.patch_size = num(key, value)?,
            "initial-ratio" => m.initial_ratio = num(key, value)?,
            "lower-ratio" => m.lower_ratio = num(key, value)?,
            "upper-ratio" => m.upper_ratio = num(key, value)?,
            "fixed" => self.fixed = num(key, value)?,
            "edge-detector" => match choice(key, value)? {
                EdgeChoice::None => self.edge_retention = false,
                d => {
                    self.detector = d;
                    self.edge_retention = true;
                }
            },
            "edge-retention" => self.edge_retention = num(key, value)?,
            "no-edge" => self.edge_retention = !num::<bool>(key, value)?,
            "canny-low" => self.canny_low = num(key, value)?,
            "canny-high" => self.canny_high = num(key, value)?,
            "edge-quantile" => m.edge_quantile = num(key, value)?,
            "otn" => m.otn = num(key, value)?,
            "no-otn" => m.otn = !num::<bool>(key, value)?,
            "alpha" => self.pgs.schedule = BlendSchedule::constant(num(key, value)?),
            "alpha-min" => self.pgs.schedule.alpha_min = num(key, value)?,
            "alpha-max" => self.pgs.schedule.alpha_max = num(key, value)?,
            "alpha-ramp-epochs" => self.pgs.schedule.ramp_epochs = num(key, value)?,
            "epoch" => self.epoch = num(key, value)?,
            "sinkhorn-iters" => self.pgs.sinkhorn.max_iters = num(key, value)?,
            "sinkhorn-tol" => self.pgs.sinkhorn.tol = num(key, value)?,
            "sinkhorn-kernel" => self.entropic = choice::<KernelChoice>(key, value)? == KernelChoice::Entropic,
            "sinkhorn-epsilon" => self.entropic_epsilon = num(key, value)?,
            "neighborhood" => {
                m.neighborhood = match choice::<NeighborhoodChoice>(key, value)? {
                    NeighborhoodChoice::Adjacent => Neighborhood::Adjacent,
                    NeighborhoodChoice::Global => Neighborhood::Global,
                }
            }
            "feature-dim" => self.feature_dim = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        if self.fixed {
            self.pgs.masking.lower_ratio = self.pgs.masking.upper_ratio;
        }
        if !(self.canny_low >= 0.0 && self.canny_low <= self.canny_high) {
            bail!("canny thresholds must satisfy 0 <= low <= high, got {} and {}", self.canny_low, self.canny_high);
        }
        let detector = self.detector();
        let m = &mut self.pgs.masking;
        m.edge = self.edge_retention.then_some(detector);
        m.seed = self.seed;
        self.pgs.sinkhorn.kernel = if self.entropic {
            PositiveKernel::Entropic { epsilon: self.entropic_epsilon }
        } else {
            PositiveKernel::Shift
        };
        if self.feature_dim == 0 {
            bail!("feature-dim must be positive");
        }
        self.pgs.validate()?;
        Ok(())
    }

    /// The configured detector, whether or not retention uses it.
    pub fn detector(&self) -> EdgeDetector {
        match self.detector {
            EdgeChoice::Canny => EdgeDetector::Canny { low: self.canny_low, high: self.canny_high },
            _ => EdgeDetector::Sobel,
        }
    }

    /// Config for one image: the global seed offset by the per-image seed.
    pub fn for_image(&self, image_seed: u64) -> PgsConfig {
        let mut cfg = self.pgs.clone();
        cfg.masking.seed = image_seed;
        cfg
    }

    pub fn echo(&self) -> ConfigEcho {
        let m = &self.pgs.masking;
        let s = &self.pgs.sinkhorn;
        ConfigEcho {
            patch_size: self.pgs.patch_size,
            variant: if m.is_fixed() { "fixed" } else { "dynamic" },
            initial_ratio: m.initial_ratio,
            lower_ratio: m.lower_ratio,
            upper_ratio: m.upper_ratio,
            k_rule: K_RULE,
            edge_retention: m.edge.is_some(),
            edge_detector: self.detector().name(),
            canny_low: (self.detector == EdgeChoice::Canny).then_some(self.canny_low),
            canny_high: (self.detector == EdgeChoice::Canny).then_some(self.canny_high),
            edge_quantile: m.edge_quantile,
            otn: m.otn,
            neighborhood: match m.neighborhood {
                Neighborhood::Adjacent => "adjacent",
                Neighborhood::Global => "global",
            },
            alpha: alpha_schedule(self.epoch, &self.pgs.schedule),
            alpha_min: self.pgs.schedule.alpha_min,
            alpha_max: self.pgs.schedule.alpha_max,
            alpha_ramp_epochs: self.pgs.schedule.ramp_epochs,
            epoch: self.epoch,
            sinkhorn_iters: s.max_iters,
            sinkhorn_tol: s.tol,
            sinkhorn_kernel: match s.kernel {
                PositiveKernel::Shift => "shift",
                PositiveKernel::Entropic { .. } => "entropic",
            },
            sinkhorn_epsilon: match s.kernel {
                PositiveKernel::Shift => None,
                PositiveKernel::Entropic { epsilon } => Some(epsilon),
            },
            feature_dim: self.feature_dim,
            seed: self.seed,
        }
    }
}

/// Effective configuration echoed into every output record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub patch_size: usize,
    pub variant: &'static str,
    pub initial_ratio: f64,
    pub lower_ratio: f64,
    pub upper_ratio: f64,
    pub k_rule: &'static str,
    pub edge_retention: bool,
    pub edge_detector: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canny_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canny_high: Option<f64>,
    pub edge_quantile: f64,
    pub otn: bool,
    pub neighborhood: &'static str,
    pub alpha: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_ramp_epochs: usize,
    pub epoch: usize,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    pub sinkhorn_kernel: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sinkhorn_epsilon: Option<f64>,
    pub feature_dim: usize,
    pub seed: u64,
}
