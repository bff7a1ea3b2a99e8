//! TOML run configuration. Every key is optional; unknown keys are errors.
//!
//! ```toml
//! w = 0.8
//! steps = 20
//! start_fraction = 1.0
//! mode = "latent"            # sample_space | score_space | latent
//! harmonizer = "global"      # global | local
//! kernel_length = 8
//! sigma_seed = 0.0           # sigma = 100^seed + 0.2
//! flow_direction = "backward"
//! seed = 0
//! train_steps = 1000
//! beta_start = 1e-4
//! beta_end = 2e-2
//!
//! [paths]
//! flows = "flows/"
//! occlusions = "occ/"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::flow::FlowDirection;
use crate::harmonize::{gaussian_kernel, sigma_from_seed, HarmonizerKind, SmoothingKernel};
use crate::sampler::{GuidanceConfig, GuidanceMode};

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub flows: Option<PathBuf>,
    pub occlusions: Option<PathBuf>,
    pub distant_flows: Option<PathBuf>,
    pub distant_occlusions: Option<PathBuf>,
    pub video: Option<PathBuf>,
    pub codes: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    w: Option<f64>,
    steps: Option<i64>,
    start_fraction: Option<f64>,
    mode: Option<String>,
    harmonizer: Option<String>,
    kernel_length: Option<i64>,
    sigma_seed: Option<f64>,
    flow_direction: Option<String>,
    seed: Option<u64>,
    train_steps: Option<i64>,
    beta_start: Option<f64>,
    beta_end: Option<f64>,
    #[serde(default)]
    paths: PathsConfig,
}

/// Resolved run settings with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub w: f64,
    pub steps: usize,
    pub start_fraction: f64,
    pub mode: GuidanceMode,
    pub local: bool,
    pub kernel_length: usize,
    pub sigma_seed: f64,
    pub flow_direction: FlowDirection,
    pub seed: u64,
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            w: 0.8,
            steps: 20,
            start_fraction: 1.0,
            mode: GuidanceMode::default(),
            local: false,
            kernel_length: 8,
            sigma_seed: 0.0,
            flow_direction: FlowDirection::Backward,
            seed: 0,
            train_steps: NoiseSchedule::DEFAULT_TRAIN_STEPS,
            beta_start: NoiseSchedule::DEFAULT_BETA_START,
            beta_end: NoiseSchedule::DEFAULT_BETA_END,
            paths: PathsConfig::default(),
        }
    }
}

fn positive_count(name: &'static str, v: i64) -> Result<usize> {
    if v < 1 {
        return Err(Error::param(name, format!("must be at least 1, got {v}")));
    }
    Ok(v as usize)
}

impl RunConfig {
    pub fn sigma(&self) -> f64 {
        sigma_from_seed(self.sigma_seed)
    }

    pub fn kernel(&self) -> Result<SmoothingKernel> {
        gaussian_kernel(self.kernel_length, self.sigma())
    }

    pub fn harmonizer(&self) -> Result<HarmonizerKind> {
        Ok(if self.local {
            HarmonizerKind::Local(self.kernel()?)
        } else {
            HarmonizerKind::Global
        })
    }

    pub fn guidance(&self) -> Result<GuidanceConfig> {
        let cfg = GuidanceConfig {
            w: self.w,
            mode: self.mode,
            harmonizer: self.harmonizer()?,
            steps: self.steps,
            start_fraction: self.start_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.train_steps, self.beta_start, self.beta_end)
    }

    pub fn validate(&self) -> Result<()> {
        self.guidance()?;
        self.schedule()?;
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut cfg = RunConfig::default();
    if let Some(w) = raw.w {
        cfg.w = w;
    }
    if let Some(steps) = raw.steps {
        cfg.steps = positive_count("steps", steps)?;
    }
    if let Some(f) = raw.start_fraction {
        cfg.start_fraction = f;
    }
    if let Some(mode) = raw.mode {
        cfg.mode = mode.parse()?;
    }
    if let Some(h) = raw.harmonizer {
        cfg.local = match h.as_str() {
            "global" => false,
            "local" => true,
            other => {
                return Err(Error::param(
                    "harmonizer",
                    format!("expected global or local, got {other:?}"),
                ))
            }
        };
    }
    if let Some(len) = raw.kernel_length {
        if len < 0 {
            return Err(Error::param(
                "kernel_length",
                format!("must be non-negative, got {len}"),
            ));
        }
        cfg.kernel_length = len as usize;
    }
    if let Some(s) = raw.sigma_seed {
        cfg.sigma_seed = s;
    }
    if let Some(d) = raw.flow_direction {
        cfg.flow_direction = d.parse()?;
    }
    if let Some(seed) = raw.seed {
        cfg.seed = seed;
    }
    if let Some(t) = raw.train_steps {
        cfg.train_steps = positive_count("train_steps", t)?;
    }
    if let Some(b) = raw.beta_start {
        cfg.beta_start = b;
    }
    if let Some(b) = raw.beta_end {
        cfg.beta_end = b;
    }
    cfg.paths = raw.paths;
    cfg.validate()?;
    if cfg.local {
        cfg.kernel()?;
    }
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(reason) => Error::Config(format!("{}: {reason}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.w, 0.8);
        assert_eq!(cfg.steps, 20);
        assert_eq!(cfg.start_fraction, 1.0);
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn weight_out_of_range() {
        assert!(matches!(
            parse_config("w = 1.5"),
            Err(Error::InvalidParameter { name: "w", .. })
        ));
    }

    #[test]
    fn sigma_seed_maps_to_sigma() {
        let cfg = parse_config("sigma_seed = -1.0").unwrap();
        assert_abs_diff_eq!(cfg.sigma(), 0.21, epsilon = 1e-12);
    }

    #[test]
    fn unknown_and_mistyped_keys_rejected() {
        assert!(matches!(parse_config("guidance = 1"), Err(Error::Config(_))));
        assert!(matches!(parse_config("steps = \"twenty\""), Err(Error::Config(_))));
        assert!(parse_config("steps = 0").is_err());
        assert!(parse_config("start_fraction = 0.0").is_err());
        assert!(parse_config("mode = \"pixels\"").is_err());
        assert!(parse_config("harmonizer = \"local\"\nkernel_length = 3").is_err());
        assert!(parse_config("[paths]\nvideos = \"x\"").is_err());
    }

    #[test]
    fn full_config() {
        let cfg = parse_config(
            r#"
            w = 1.0
            steps = 10
            start_fraction = 0.5
            mode = "score_space"
            harmonizer = "local"
            kernel_length = 4
            sigma_seed = -0.4
            flow_direction = "forward"
            seed = 9
            [paths]
            flows = "f"
            codes = "c.mdtn"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, GuidanceMode::ScoreSpace);
        assert_eq!(cfg.flow_direction, FlowDirection::Forward);
        assert!(matches!(cfg.harmonizer().unwrap(), HarmonizerKind::Local(k) if k.length() == 4));
        assert_eq!(cfg.paths.codes.as_deref(), Some(Path::new("c.mdtn")));
        assert_eq!(cfg.guidance().unwrap().start_fraction, 0.5);
    }
}
