//! Deterministic denoising loop with temporal correspondence guidance.
//!
//! At every step each frame is denoised independently by the score model; the
//! per-frame estimates are then pulled toward their harmonized counterpart
//! with weight `w` before (score and latent modes) or after (sample mode) the
//! DDIM update.

use ndarray::{s, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::autoencoder::Autoencoder;
use crate::diffusion::{add_noise, blend, ddim_step, ddim_update, eps_from_x0, predict_x0, NoiseSchedule};
use crate::error::{Error, Result};
use crate::flow::Video;
use crate::harmonize::{Harmonizer, HarmonizerKind};
use crate::model::ScoreModel;

/// Where the guidance blend is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GuidanceMode {
    /// Blend the noisy sample produced by each step with its harmonization.
    SampleSpace,
    /// Blend the noise prediction with its harmonization.
    ScoreSpace,
    /// Harmonize decoded clean-sample estimates and convert back to noise.
    #[default]
    Latent,
}

impl GuidanceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GuidanceMode::SampleSpace => "sample_space",
            GuidanceMode::ScoreSpace => "score_space",
            GuidanceMode::Latent => "latent",
        }
    }
}

impl std::str::FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample_space" | "sample" => Ok(GuidanceMode::SampleSpace),
            "score_space" | "score" => Ok(GuidanceMode::ScoreSpace),
            "latent" => Ok(GuidanceMode::Latent),
            other => Err(Error::param(
                "mode",
                format!("expected sample_space, score_space or latent, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub w: f64,
    pub mode: GuidanceMode,
    pub harmonizer: HarmonizerKind,
    pub steps: usize,
    pub start_fraction: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            w: 0.8,
            mode: GuidanceMode::default(),
            harmonizer: HarmonizerKind::Global,
            steps: 20,
            start_fraction: 1.0,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::param(
                "w",
                format!("guidance weight must lie in [0, 1], got {}", self.w),
            ));
        }
        if self.steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if !(self.start_fraction > 0.0 && self.start_fraction <= 1.0) {
            return Err(Error::param(
                "start_fraction",
                format!("must lie in (0, 1], got {}", self.start_fraction),
            ));
        }
        Ok(())
    }
}

/// Harmonized noise prediction for latent diffusion:
/// `(x_t - sqrt(ab) * E(G(D(x0_hat)))) / sqrt(1 - ab)` with
/// `x0_hat = predict_x0(x_t, eps_pred, t)`.
pub fn harmonized_eps_latent(
    x_t: &Video,
    eps_pred: &Video,
    t: usize,
    sched: &NoiseSchedule,
    ae: &dyn Autoencoder,
    harmonizer: &Harmonizer,
) -> Result<Video> {
    let x0 = predict_x0(x_t, eps_pred, t, sched)?;
    let latent = harmonized_latent(&x0, ae, harmonizer, x_t.dim())?;
    eps_from_x0(x_t, &latent, t, sched)
}

fn harmonized_latent(
    x0: &Video,
    ae: &dyn Autoencoder,
    harmonizer: &Harmonizer,
    dim: (usize, usize, usize, usize),
) -> Result<Video> {
    let harmonized = harmonizer.apply(&ae.decode(x0)?)?;
    let latent = ae.encode(&harmonized)?;
    if latent.dim() != dim {
        return Err(Error::Shape(format!(
            "re-encoded latent {:?} does not match sample {:?}",
            latent.dim(),
            dim
        )));
    }
    Ok(latent)
}

/// Starting point of a sampling run.
#[derive(Debug, Clone)]
pub enum Init {
    /// Seeded standard normal latent with `channels` channels.
    Noise { channels: usize, seed: u64 },
    /// Observation-space video encoded and noised to the start step.
    Source { video: Video, seed: u64 },
}

fn standard_normal(shape: (usize, usize, usize, usize), seed: u64) -> Video {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_simple_fn(shape, || StandardNormal.sample(&mut rng))
}

/// Latent state at step `t_start`.
pub fn initial_latent(
    init: &Init,
    harmonizer: &Harmonizer,
    ae: &dyn Autoencoder,
    sched: &NoiseSchedule,
    t_start: usize,
) -> Result<Video> {
    match init {
        Init::Noise { channels, seed } => {
            let (t, h, w) = harmonizer.codes().dim();
            let f = ae.scale();
            if h % f != 0 || w % f != 0 {
                return Err(Error::Shape(format!(
                    "frame {h}×{w} is not divisible by autoencoder scale {f}"
                )));
            }
            Ok(standard_normal((t, *channels, h / f, w / f), *seed))
        }
        Init::Source { video, seed } => {
            harmonizer.codes().check_video(video.dim(), "source video")?;
            let z0 = ae.encode(video)?;
            let eps = standard_normal(z0.dim(), *seed);
            add_noise(&z0, t_start, sched, &eps)
        }
    }
}

fn predict_all(model: &dyn ScoreModel, x_t: &Video, t: usize, alpha_bar: f64) -> Result<Video> {
    let frames: Vec<_> = (0..x_t.dim().0)
        .into_par_iter()
        .map(|i| model.predict_eps(i, x_t.slice(s![i, .., .., ..]), t, alpha_bar))
        .collect::<Result<_>>()?;
    let mut eps = Array4::zeros(x_t.dim());
    for (i, frame) in frames.into_iter().enumerate() {
        if frame.dim() != eps.slice(s![i, .., .., ..]).dim() {
            return Err(Error::Shape(format!(
                "model output for frame {i} has shape {:?}",
                frame.dim()
            )));
        }
        eps.slice_mut(s![i, .., .., ..]).assign(&frame);
    }
    Ok(eps)
}

/// Runs guided sampling and returns the decoded observation-space video.
///
/// Sample- and score-space guidance harmonize the latent directly and so need
/// an autoencoder whose latent grid matches the codes.
pub fn generate(
    model: &dyn ScoreModel,
    harmonizer: &Harmonizer,
    ae: &dyn Autoencoder,
    cfg: &GuidanceConfig,
    sched: &NoiseSchedule,
    init: &Init,
) -> Result<Video> {
    generate_with(model, harmonizer, ae, cfg, sched, init, |_, _| {})
}

/// [`generate`] with a hook observing the latent after every step.
pub fn generate_with(
    model: &dyn ScoreModel,
    harmonizer: &Harmonizer,
    ae: &dyn Autoencoder,
    cfg: &GuidanceConfig,
    sched: &NoiseSchedule,
    init: &Init,
    mut on_step: impl FnMut(usize, &Video),
) -> Result<Video> {
    cfg.validate()?;
    if cfg.harmonizer != *harmonizer.kind() {
        return Err(Error::param("harmonizer", "config and prepared harmonizer disagree"));
    }
    let timesteps = sched.timesteps(cfg.steps, cfg.start_fraction)?;
    let mut x = initial_latent(init, harmonizer, ae, sched, timesteps[0])?;

    for pair in timesteps.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let alpha_bar = sched.alpha_bar(t)?;
        let mut eps = predict_all(model, &x, t, alpha_bar)?;
        match cfg.mode {
            GuidanceMode::SampleSpace => {}
            GuidanceMode::ScoreSpace if cfg.w > 0.0 => {
                let harmonized = harmonizer.apply(&eps)?;
                eps = blend(&eps, &harmonized, cfg.w)?;
            }
            GuidanceMode::Latent if cfg.w > 0.0 => {
                // blending the clean estimates alongside the noise keeps the
                // last step exact instead of round-tripping through eps
                let x0 = predict_x0(&x, &eps, t, sched)?;
                let x0_harm = harmonized_latent(&x0, ae, harmonizer, x.dim())?;
                let eps_harm = eps_from_x0(&x, &x0_harm, t, sched)?;
                let x0 = blend(&x0, &x0_harm, cfg.w)?;
                eps = blend(&eps, &eps_harm, cfg.w)?;
                x = ddim_update(&x0, &eps, t_prev, sched)?;
                on_step(t_prev, &x);
                continue;
            }
            _ => {}
        }
        x = ddim_step(&x, &eps, t, t_prev, sched)?;
        if cfg.mode == GuidanceMode::SampleSpace && cfg.w > 0.0 {
            let harmonized = harmonizer.apply(&x)?;
            x = blend(&x, &harmonized, cfg.w)?;
        }
        on_step(t_prev, &x);
    }
    ae.decode(&x)
}
