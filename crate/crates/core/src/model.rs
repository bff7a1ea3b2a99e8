//! Frame-wise noise predictors. Models see one frame at a time and know
//! nothing about the other frames of the video.

use ndarray::{s, Array3, ArrayView3, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::flow::Video;

pub trait ScoreModel: Sync {
    /// Noise prediction for frame `frame` of the noisy sample at step `t`.
    fn predict_eps(&self, frame: usize, x_t: ArrayView3<'_, f64>, t: usize, alpha_bar: f64) -> Result<Array3<f64>>;
}

/// Predicts the exact noise that separates `x_t` from a known target, so
/// every clean-sample estimate equals the target.
#[derive(Debug, Clone)]
pub struct OracleModel {
    target: Video,
}

impl OracleModel {
    /// `target` must live in the space where denoising runs.
    pub fn new(target: Video) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &Video {
        &self.target
    }

    fn exact_eps(&self, frame: usize, x_t: ArrayView3<'_, f64>, t: usize, alpha_bar: f64) -> Result<Array3<f64>> {
        let target = self.target.slice(s![frame, .., .., ..]);
        if target.dim() != x_t.dim() {
            return Err(Error::Shape(format!(
                "oracle target frame {:?} vs sample frame {:?}",
                target.dim(),
                x_t.dim()
            )));
        }
        if !(alpha_bar < 1.0) {
            return Err(Error::DegenerateStep {
                t,
                reason: "zero noise level",
            });
        }
        let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
        Ok(Zip::from(&x_t).and(&target).map_collect(|&x, &c| (x - a * c) / b))
    }
}

impl ScoreModel for OracleModel {
    fn predict_eps(&self, frame: usize, x_t: ArrayView3<'_, f64>, t: usize, alpha_bar: f64) -> Result<Array3<f64>> {
        self.exact_eps(frame, x_t, t, alpha_bar)
    }
}

/// Oracle noise plus a seeded Gaussian perturbation drawn independently per
/// frame and step, standing in for a frame-wise model whose estimates
/// disagree across frames.
#[derive(Debug, Clone)]
pub struct NoisyOracleModel {
    oracle: OracleModel,
    scale: f64,
    seed: u64,
}

impl NoisyOracleModel {
    pub fn new(target: Video, scale: f64, seed: u64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::param(
                "scale",
                format!("must be finite and non-negative, got {scale}"),
            ));
        }
        Ok(Self {
            oracle: OracleModel::new(target),
            scale,
            seed,
        })
    }
}

impl ScoreModel for NoisyOracleModel {
    fn predict_eps(&self, frame: usize, x_t: ArrayView3<'_, f64>, t: usize, alpha_bar: f64) -> Result<Array3<f64>> {
        let mut eps = self.oracle.exact_eps(frame, x_t, t, alpha_bar)?;
        let stream = ((frame as u64) << 32) ^ t as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        for v in eps.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += self.scale * z;
        }
        Ok(eps)
    }
}
