//! Run configuration: command-line flags over an optional `key=value` file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use crate::error::{Error, Result};
use crate::matcher::Fusion;
use crate::metrics::MetricId;
use crate::templates::{LayerTag, TemplateFormat};

pub const DEFAULT_FAR_TARGETS: [f64; 2] = [0.01, 0.001];

/// Flags shared by every subcommand. Each one may also be given in the
/// `--config` file under the same kebab-case name; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Probe template file
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Gallery (enrolled) template file
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// Validation probe file used to pick thresholds under transfer-from-validation
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Subject roster, one id per line, in class-score index order
    #[arg(long)]
    pub roster: Option<PathBuf>,
    /// Metric name or "all"
    #[arg(long)]
    pub metric: Option<String>,
    /// fc or score
    #[arg(long)]
    pub layer: Option<String>,
    /// L1-normalize every template before matching
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Clamp negative features to 0 instead of rejecting them
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub clamp: Option<bool>,
    /// Gallery fusion for identification: min or mean
    #[arg(long)]
    pub fusion: Option<String>,
    /// Comma-separated target FARs
    #[arg(long)]
    pub far_targets: Option<String>,
    /// Directory for reports (default: current directory)
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// per-set or transfer-from-validation
    #[arg(long)]
    pub threshold_policy: Option<String>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Template file format: jsonl or csv (default: from extension)
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricChoice {
    One(MetricId),
    All,
}

impl MetricChoice {
    pub fn metrics(self) -> Vec<MetricId> {
        match self {
            MetricChoice::One(m) => vec![m],
            MetricChoice::All => MetricId::ALL.to_vec(),
        }
    }
}

impl FromStr for MetricChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(MetricChoice::All)
        } else {
            s.parse().map(MetricChoice::One)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdPolicy {
    #[default]
    PerSet,
    TransferFromValidation,
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-set" => Ok(ThresholdPolicy::PerSet),
            "transfer-from-validation" => Ok(ThresholdPolicy::TransferFromValidation),
            other => Err(Error::Config(format!(
                "unknown threshold policy '{other}' (expected per-set or transfer-from-validation)"
            ))),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdPolicy::PerSet => "per-set",
            ThresholdPolicy::TransferFromValidation => "transfer-from-validation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub probe_path: PathBuf,
    pub gallery_path: Option<PathBuf>,
    pub validation_path: Option<PathBuf>,
    pub roster_path: Option<PathBuf>,
    pub metric: MetricChoice,
    pub layer: LayerTag,
    pub normalize: bool,
    pub clamp: bool,
    pub fusion: Fusion,
    /// Strictly inside (0, 1), sorted descending, no duplicates.
    pub far_targets: Vec<f64>,
    pub output_dir: PathBuf,
    pub threshold_policy: ThresholdPolicy,
    pub workers: usize,
    pub format: Option<TemplateFormat>,
}

impl RunConfig {
    pub fn format_for(&self, path: &Path) -> TemplateFormat {
        self.format.unwrap_or_else(|| TemplateFormat::from_path(path))
    }
}

const KEYS: [&str; 14] = [
    "probe",
    "gallery",
    "validation",
    "roster",
    "metric",
    "layer",
    "normalize",
    "clamp",
    "fusion",
    "far-targets",
    "output-dir",
    "threshold-policy",
    "workers",
    "format",
];

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected key=value", i + 1))
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!(
                "config line {}: unknown key '{key}'",
                i + 1
            )));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: '{other}' is not a boolean"))),
    }
}

/// Parses and validates a comma-separated FAR list.
pub fn parse_far_targets(s: &str) -> Result<Vec<f64>> {
    let mut targets = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            let v: f64 = t
                .parse()
                .map_err(|_| Error::Config(format!("far-targets: '{t}' is not a number")))?;
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!(
                    "far-targets: {v} is outside (0, 1)"
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;
    targets.sort_by(|a, b| b.total_cmp(a));
    targets.dedup();
    Ok(targets)
}

impl RunArgs {
    /// Merges flags over the config file and validates the result.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let from_file = |key: &str| file.get(key).map(String::as_str);
        let path_of = |flag: &Option<PathBuf>, key: &str| {
            flag.clone().or_else(|| from_file(key).map(PathBuf::from))
        };
        let text_of =
            |flag: &Option<String>, key: &str| flag.clone().or_else(|| from_file(key).map(String::from));
        let bool_of = |flag: Option<bool>, key: &str| -> Result<bool> {
            match (flag, from_file(key)) {
                (Some(v), _) => Ok(v),
                (None, Some(v)) => parse_bool(key, v),
                (None, None) => Ok(false),
            }
        };

        let probe_path = path_of(&self.probe, "probe")
            .ok_or_else(|| Error::Config("--probe is required".into()))?;
        let metric = text_of(&self.metric, "metric")
            .as_deref()
            .unwrap_or("dice")
            .parse()?;
        let layer = text_of(&self.layer, "layer")
            .as_deref()
            .unwrap_or("fc")
            .parse()?;
        let fusion = text_of(&self.fusion, "fusion")
            .as_deref()
            .unwrap_or("min")
            .parse()?;
        let far_targets = match text_of(&self.far_targets, "far-targets") {
            Some(s) => parse_far_targets(&s)?,
            None => DEFAULT_FAR_TARGETS.to_vec(),
        };
        let threshold_policy: ThresholdPolicy = text_of(&self.threshold_policy, "threshold-policy")
            .as_deref()
            .unwrap_or("per-set")
            .parse()?;
        let workers = match (self.workers, from_file("workers")) {
            (Some(n), _) => n,
            (None, Some(v)) => v
                .parse()
                .map_err(|_| Error::Config(format!("workers: '{v}' is not a count")))?,
            (None, None) => 0,
        };
        let format = text_of(&self.format, "format")
            .map(|f| f.parse())
            .transpose()?;

        let cfg = RunConfig {
            probe_path,
            gallery_path: path_of(&self.gallery, "gallery"),
            validation_path: path_of(&self.validation, "validation"),
            roster_path: path_of(&self.roster, "roster"),
            metric,
            layer,
            normalize: bool_of(self.normalize, "normalize")?,
            clamp: bool_of(self.clamp, "clamp")?,
            fusion,
            far_targets,
            output_dir: path_of(&self.output_dir, "output-dir").unwrap_or_else(|| ".".into()),
            threshold_policy,
            workers,
            format,
        };
        if cfg.threshold_policy == ThresholdPolicy::TransferFromValidation
            && cfg.validation_path.is_none()
        {
            return Err(Error::Config(
                "threshold policy transfer-from-validation needs --validation".into(),
            ));
        }
        Ok(cfg)
    }
}
