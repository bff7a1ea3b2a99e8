use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "flowmed",
    version,
    about = "Flow coding, trajectory harmonization and guided sampling"
)]
pub struct Cli {
    /// TOML run configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn optical flows into trajectory codes.
    Encode(EncodeArgs),
    /// Harmonize a video along its trajectory codes.
    Harmonize(HarmonizeArgs),
    /// Harmonize a tensor-container video and write a tensor container.
    HarmonizeTensor(HarmonizeTensorArgs),
    /// Run guided sampling with a built-in model.
    Generate(GenerateArgs),
    /// Endpoint and warp error against ground-truth flows.
    Evaluate(EvaluateArgs),
    /// Horizontal scan image of a video.
    Scan(ScanArgs),
    /// Write a panning-texture scene with exact flows.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Forward,
    Backward,
}

impl From<Direction> for flowmed::FlowDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Forward => flowmed::FlowDirection::Forward,
            Direction::Backward => flowmed::FlowDirection::Backward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HarmonizerChoice {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    SampleSpace,
    ScoreSpace,
    Latent,
}

impl From<ModeChoice> for flowmed::GuidanceMode {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::SampleSpace => flowmed::GuidanceMode::SampleSpace,
            ModeChoice::ScoreSpace => flowmed::GuidanceMode::ScoreSpace,
            ModeChoice::Latent => flowmed::GuidanceMode::Latent,
        }
    }
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Local kernel length (even; the kernel has length + 1 taps).
    #[arg(long)]
    pub kernel_length: Option<usize>,
    /// Gaussian standard deviation of the local kernel.
    #[arg(long, conflicts_with = "sigma_seed")]
    pub sigma: Option<f64>,
    /// Sigma seed s, giving sigma = 100^s + 0.2.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_seed: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Directory of `.flo` files, one per adjacent frame pair.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Directory of occlusion mask PNGs; all pixels visible when omitted.
    #[arg(long)]
    pub occlusions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub direction: Option<Direction>,
    /// Directory of flows spanning `gap + 1` frames.
    #[arg(long, requires = "gap")]
    pub distant: Option<PathBuf>,
    #[arg(long, requires = "distant")]
    pub distant_occlusions: Option<PathBuf>,
    #[arg(long)]
    pub gap: Option<usize>,
    /// Output codes container.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarmonizeArgs {
    /// PNG frame directory or video tensor container.
    #[arg(long)]
    pub video: Option<PathBuf>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<HarmonizerChoice>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Output directory for frames, tensor and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HarmonizeTensorArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<HarmonizerChoice>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Built-in frame-wise models.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Oracle(PathBuf),
    NoisyOracle(PathBuf, f64),
}

pub fn parse_model(s: &str) -> Result<ModelSpec, String> {
    if let Some(path) = s.strip_prefix("oracle:") {
        if path.is_empty() {
            return Err("oracle needs a target path".into());
        }
        return Ok(ModelSpec::Oracle(PathBuf::from(path)));
    }
    if let Some(rest) = s.strip_prefix("noisy-oracle:") {
        let (path, scale) = rest.rsplit_once(':').ok_or("expected noisy-oracle:PATH:SCALE")?;
        let scale: f64 = scale.parse().map_err(|_| format!("bad noise scale {scale:?}"))?;
        if !(scale >= 0.0 && scale.is_finite()) || path.is_empty() {
            return Err("noisy-oracle needs a path and a finite non-negative scale".into());
        }
        return Ok(ModelSpec::NoisyOracle(PathBuf::from(path), scale));
    }
    Err(format!(
        "unknown model {s:?}; expected oracle:PATH or noisy-oracle:PATH:SCALE"
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoencoderSpec {
    Identity,
    AvgPool(usize),
}

pub fn parse_autoencoder(s: &str) -> Result<AutoencoderSpec, String> {
    if s == "identity" {
        return Ok(AutoencoderSpec::Identity);
    }
    if let Some(f) = s.strip_prefix("avgpool:") {
        let f: usize = f.parse().map_err(|_| format!("bad pooling factor {f:?}"))?;
        if f == 0 {
            return Err("pooling factor must be at least 1".into());
        }
        return Ok(AutoencoderSpec::AvgPool(f));
    }
    Err(format!("unknown autoencoder {s:?}; expected identity or avgpool:F"))
}

pub fn parse_weight(s: &str) -> Result<f64, String> {
    let w: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(0.0..=1.0).contains(&w) {
        return Err(format!("guidance weight must lie in [0, 1], got {w}"));
    }
    Ok(w)
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// `oracle:TARGET` or `noisy-oracle:TARGET:SCALE`; TARGET is a PNG
    /// directory or video tensor container in observation space.
    #[arg(long, value_parser = parse_model)]
    pub model: ModelSpec,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    #[arg(long, value_parser = parse_weight)]
    pub w: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub start_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeChoice>,
    #[arg(long, value_enum)]
    pub harmonizer: Option<HarmonizerChoice>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `identity` or `avgpool:F`.
    #[arg(long, value_parser = parse_autoencoder, default_value = "identity")]
    pub autoencoder: AutoencoderSpec,
    /// Start from this video noised to the start step instead of pure noise.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Sweep w over 0, 0.1, ..., 1 and emit a metric table instead of frames.
    #[arg(long, requires = "flows")]
    pub sweep: bool,
    /// Ground-truth backward flows for the sweep table.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub occlusions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Video whose flow is estimated by block matching.
    #[arg(long, required_unless_present = "flows")]
    pub video: Option<PathBuf>,
    /// Estimated flows to score instead of block matching.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub gt_flows: PathBuf,
    /// Pixels to leave out of the statistics.
    #[arg(long)]
    pub occlusions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub direction: Option<Direction>,
    #[arg(long, default_value_t = 4)]
    pub radius: usize,
    #[arg(long, default_value_t = 5)]
    pub patch: usize,
    /// Also write the report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub video: PathBuf,
    /// Strip start in the first frame; defaults to the rightmost strip.
    #[arg(long)]
    pub column: Option<usize>,
    #[arg(long, default_value_t = flowmed::DEFAULT_SCAN_WIDTH)]
    pub width: usize,
    /// Leftward strip shift per frame.
    #[arg(long, default_value_t = 1)]
    pub shift: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub dy: isize,
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub dx: isize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}
