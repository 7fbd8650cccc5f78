//! Effective settings: command-line flags over config file over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use instmatte::{parse_error_kinds, Aggregation, ImqConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::raster::BitDepth;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "INSTMATTE_CONFIG";

/// Keys accepted in the TOML config file; all optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub w: Option<f64>,
    pub iou_thresh: Option<f64>,
    pub errors: Option<KindList>,
    pub grad_sigma: Option<f64>,
    pub conn_step: Option<f64>,
    pub agg: Option<String>,
    pub seed: Option<u64>,
    pub band_k: Option<usize>,
    pub patch: Option<usize>,
    pub threshold: Option<f64>,
    pub jobs: Option<usize>,
    pub bit_depth: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum KindList {
    Csv(String),
    List(Vec<String>),
}

impl KindList {
    fn joined(&self) -> String {
        match self {
            KindList::Csv(s) => s.clone(),
            KindList::List(v) => v.join(","),
        }
    }
}

impl FileConfig {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("{}: {e}", origin.display())))
    }

    /// Reads `explicit`, else the file named by [`CONFIG_ENV`], else nothing.
    pub fn load(explicit: Option<&Path>) -> CliResult<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path)
    }
}

/// Flags shared by every verb.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file (default: $INSTMATTE_CONFIG)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses all cores
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Base seed for layout sampling and augmentation [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bit depth of written alpha and image rasters (8 or 16)
    #[arg(long, global = true, value_name = "BITS")]
    pub bit_depth: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Common {
    pub jobs: usize,
    pub seed: u64,
    pub bit_depth: BitDepth,
}

impl GlobalArgs {
    pub fn resolve(&self, file: &FileConfig) -> CliResult<Common> {
        let bits = self.bit_depth.or(file.bit_depth).unwrap_or(16);
        Ok(Common {
            jobs: self.jobs.or(file.jobs).unwrap_or(0),
            seed: self.seed.or(file.seed).unwrap_or(0),
            bit_depth: BitDepth::try_from(bits).map_err(CliError::Usage)?,
        })
    }
}

/// Metric parameters of `evaluate`.
#[derive(Debug, Clone, Default, Args)]
pub struct MetricArgs {
    /// Balance factor of the similarity score [default: 10]
    #[arg(long)]
    pub w: Option<f64>,
    /// IoU a match must exceed to count as a true positive [default: 0.5]
    #[arg(long = "iou-thresh")]
    pub iou_thresh: Option<f64>,
    /// Comma-separated error kinds [default: mad,mse,grad,conn]
    #[arg(long)]
    pub errors: Option<String>,
    /// Gaussian scale of the gradient error [default: 1.4]
    #[arg(long = "grad-sigma")]
    pub grad_sigma: Option<f64>,
    /// Threshold step of the connectivity error [default: 0.1]
    #[arg(long = "conn-step")]
    pub conn_step: Option<f64>,
    /// Dataset aggregation: mean or pooled [default: mean]
    #[arg(long)]
    pub agg: Option<String>,
}

impl MetricArgs {
    pub fn resolve(&self, file: &FileConfig) -> CliResult<ImqConfig> {
        let d = ImqConfig::default();
        let error_kinds = match self.errors.clone().or_else(|| file.errors.as_ref().map(KindList::joined)) {
            Some(list) => parse_error_kinds(&list)?,
            None => d.error_kinds,
        };
        let aggregation = match self.agg.as_deref().or(file.agg.as_deref()) {
            Some(s) => s.parse::<Aggregation>()?,
            None => d.aggregation,
        };
        let config = ImqConfig {
            w: self.w.or(file.w).unwrap_or(d.w),
            iou_threshold: self.iou_thresh.or(file.iou_thresh).unwrap_or(d.iou_threshold),
            error_kinds,
            grad_sigma: self.grad_sigma.or(file.grad_sigma).unwrap_or(d.grad_sigma),
            conn_step: self.conn_step.or(file.conn_step).unwrap_or(d.conn_step),
            aggregation,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Runs `f` on a pool with `jobs` threads (0: rayon's default).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}
