//! Autoencoders mapping observation-space frames to the latent space where
//! denoising runs. Both shipped implementations are deterministic mocks.

use ndarray::Array4;

use crate::error::{Error, Result};
use crate::flow::Video;

pub trait Autoencoder: Sync {
    fn encode(&self, x: &Video) -> Result<Video>;
    fn decode(&self, z: &Video) -> Result<Video>;
    /// Spatial downsampling factor between observation and latent space.
    fn scale(&self) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityAutoencoder;

impl Autoencoder for IdentityAutoencoder {
    fn encode(&self, x: &Video) -> Result<Video> {
        Ok(x.clone())
    }

    fn decode(&self, z: &Video) -> Result<Video> {
        Ok(z.clone())
    }

    fn scale(&self) -> usize {
        1
    }
}

/// Average-pool encoder with a nearest-neighbour decoder.
#[derive(Debug, Clone, Copy)]
pub struct AvgPoolAutoencoder {
    factor: usize,
}

impl AvgPoolAutoencoder {
    pub fn new(factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("factor", "must be at least 1"));
        }
        Ok(Self { factor })
    }
}

impl Autoencoder for AvgPoolAutoencoder {
    fn encode(&self, x: &Video) -> Result<Video> {
        let (t, c, h, w) = x.dim();
        let f = self.factor;
        if h % f != 0 || w % f != 0 {
            return Err(Error::Shape(format!(
                "frame {h}×{w} is not divisible by pooling factor {f}"
            )));
        }
        let norm = (f * f) as f64;
        Ok(Array4::from_shape_fn((t, c, h / f, w / f), |(i, ch, y, xx)| {
            let mut acc = 0.0;
            for dy in 0..f {
                for dx in 0..f {
                    acc += x[[i, ch, y * f + dy, xx * f + dx]];
                }
            }
            acc / norm
        }))
    }

    fn decode(&self, z: &Video) -> Result<Video> {
        let (t, c, h, w) = z.dim();
        let f = self.factor;
        Ok(Array4::from_shape_fn((t, c, h * f, w * f), |(i, ch, y, x)| {
            z[[i, ch, y / f, x / f]]
        }))
    }

    fn scale(&self) -> usize {
        self.factor
    }
}
