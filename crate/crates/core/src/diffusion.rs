//! Noise schedule and the closed-form relations between clean samples, noisy
//! samples and noise, plus the deterministic DDIM update.

use ndarray::Zip;

use crate::error::{Error, Result};
use crate::flow::Video;

/// Cumulative signal levels `alpha_bar[t]` for `t = 0..=T`, with
/// `alpha_bar[0] = 1` and strictly decreasing afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub const DEFAULT_TRAIN_STEPS: usize = 1000;
    pub const DEFAULT_BETA_START: f64 = 1e-4;
    pub const DEFAULT_BETA_END: f64 = 2e-2;

    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::param("alpha_bar", "schedule needs at least one step"));
        }
        if alpha_bar[0] != 1.0 {
            return Err(Error::param("alpha_bar", "alpha_bar[0] must be exactly 1"));
        }
        if !alpha_bar.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::param("alpha_bar", "must be strictly decreasing"));
        }
        if !(*alpha_bar.last().unwrap() > 0.0) {
            return Err(Error::param("alpha_bar", "final level must stay positive"));
        }
        Ok(Self { alpha_bar })
    }

    /// Linear variance ramp from `beta_start` to `beta_end` over `steps`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::param("train_steps", "must be at least 1"));
        }
        if !(beta_start > 0.0 && beta_end >= beta_start && beta_end < 1.0) {
            return Err(Error::param(
                "beta",
                format!("need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"),
            ));
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for s in 0..steps {
            let frac = if steps == 1 { 0.0 } else { s as f64 / (steps - 1) as f64 };
            let beta = beta_start + (beta_end - beta_start) * frac;
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self::from_alpha_bar(alpha_bar)
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or(Error::StepOutOfRange(t))
    }

    pub fn levels(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Descending timesteps for a sampling run: `steps + 1` points spread
    /// uniformly over `[0, ceil(start_fraction * T)]`, largest first and
    /// ending at 0. Duplicates from rounding are dropped.
    pub fn timesteps(&self, steps: usize, start_fraction: f64) -> Result<Vec<usize>> {
        if steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if !(start_fraction > 0.0 && start_fraction <= 1.0) {
            return Err(Error::param(
                "start_fraction",
                format!("must lie in (0, 1], got {start_fraction}"),
            ));
        }
        let start = self.start_step(start_fraction);
        let mut ts: Vec<usize> = (0..=steps)
            .map(|j| ((start * (steps - j)) as f64 / steps as f64).round() as usize)
            .collect();
        ts.dedup();
        Ok(ts)
    }

    /// `ceil(start_fraction * T)`, at least 1.
    pub fn start_step(&self, start_fraction: f64) -> usize {
        ((start_fraction * self.steps() as f64).ceil() as usize).clamp(1, self.steps())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(
            Self::DEFAULT_TRAIN_STEPS,
            Self::DEFAULT_BETA_START,
            Self::DEFAULT_BETA_END,
        )
        .expect("default schedule is valid")
    }
}

fn check_same(a: &Video, b: &Video, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `sqrt(ab) * x0 + sqrt(1 - ab) * eps`
pub fn add_noise(x0: &Video, t: usize, sched: &NoiseSchedule, eps: &Video) -> Result<Video> {
    check_same(x0, eps, "add_noise")?;
    let ab = sched.alpha_bar(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(x0).and(eps).map_collect(|&x, &e| a * x + b * e))
}

/// Clean-sample estimate from a noisy sample and its noise.
pub fn predict_x0(x_t: &Video, eps: &Video, t: usize, sched: &NoiseSchedule) -> Result<Video> {
    check_same(x_t, eps, "predict_x0")?;
    let ab = sched.alpha_bar(t)?;
    if !(ab > 0.0) {
        return Err(Error::DegenerateStep {
            t,
            reason: "zero signal level",
        });
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(x_t).and(eps).map_collect(|&x, &e| (x - b * e) / a))
}

/// Noise implied by a noisy sample and a clean-sample estimate.
pub fn eps_from_x0(x_t: &Video, x0: &Video, t: usize, sched: &NoiseSchedule) -> Result<Video> {
    check_same(x_t, x0, "eps_from_x0")?;
    let ab = sched.alpha_bar(t)?;
    if !(ab < 1.0) {
        return Err(Error::DegenerateStep {
            t,
            reason: "zero noise level",
        });
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(x_t).and(x0).map_collect(|&x, &c| (x - a * c) / b))
}

/// Deterministic (eta = 0) DDIM update from step `t` to `t_prev`.
pub fn ddim_step(x_t: &Video, eps: &Video, t: usize, t_prev: usize, sched: &NoiseSchedule) -> Result<Video> {
    if t_prev >= t {
        return Err(Error::param(
            "t_prev",
            format!("must precede the current step (t={t}, t_prev={t_prev})"),
        ));
    }
    let x0 = predict_x0(x_t, eps, t, sched)?;
    ddim_update(&x0, eps, t_prev, sched)
}

/// Second half of a DDIM step: re-noises a clean-sample estimate to
/// `t_prev` along the direction `eps`.
pub fn ddim_update(x0: &Video, eps: &Video, t_prev: usize, sched: &NoiseSchedule) -> Result<Video> {
    check_same(x0, eps, "ddim_update")?;
    let ab_prev = sched.alpha_bar(t_prev)?;
    if ab_prev == 1.0 {
        return Ok(x0.clone());
    }
    let (a, b) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    Ok(Zip::from(x0).and(eps).map_collect(|&c, &e| a * c + b * e))
}

fn check_weight(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::param(
            "w",
            format!("guidance weight must lie in [0, 1], got {w}"),
        ));
    }
    Ok(())
}

/// Interpolates between a prediction and its harmonized counterpart.
pub fn blend(pred: &Video, harmonized: &Video, w: f64) -> Result<Video> {
    check_weight(w)?;
    check_same(pred, harmonized, "guidance blend")?;
    if w == 0.0 {
        return Ok(pred.clone());
    }
    if w == 1.0 {
        return Ok(harmonized.clone());
    }
    Ok(Zip::from(pred)
        .and(harmonized)
        .map_collect(|&p, &h| (1.0 - w) * p + w * h))
}

/// Guidance on noisy samples.
pub fn guide_sample_space(x_pred: &Video, x_harm: &Video, w: f64) -> Result<Video> {
    blend(x_pred, x_harm, w)
}

/// Guidance on noise predictions.
pub fn guide_score_space(eps_pred: &Video, eps_harm: &Video, w: f64) -> Result<Video> {
    blend(eps_pred, eps_harm, w)
}
