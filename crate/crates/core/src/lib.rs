//! Temporally consistent video from frame-wise diffusion.
//!
//! Pixels are linked across frames by [`coding::flow_code`], which turns
//! optical flows into trajectory codes. A harmonizer mixes the pixels sharing
//! a code ([`harmonize::harmonize_global`] averages them,
//! [`harmonize::harmonize_local`] smooths them along time), and
//! [`sampler::generate`] applies that mixing as guidance inside a
//! deterministic DDIM loop.

pub mod autoencoder;
pub mod coding;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod flow;
pub mod harmonize;
pub mod io;
pub mod model;
pub mod sampler;
pub mod synthetic;

pub use autoencoder::{Autoencoder, AvgPoolAutoencoder, IdentityAutoencoder};
pub use coding::{decode, flow_code, flow_code_distant, validate_codes, CodeReport, EncodedFrames};
pub use diffusion::{
    add_noise, ddim_step, ddim_update, eps_from_x0, guide_sample_space, guide_score_space, predict_x0, NoiseSchedule,
};
pub use error::{Error, Result};
pub use eval::{
    block_matching_flow, endpoint_error, horizontal_scan, warp_error, EpeReport, WarpError, DEFAULT_SCAN_WIDTH,
};
pub use flow::{FlowDirection, FlowField, OcclusionMask, Video};
pub use harmonize::{
    build_inverse_repository, consistency_loss, gaussian_kernel, harmonize_global, harmonize_local, sigma_from_seed,
    Harmonizer, HarmonizerKind, InverseRepository, PixelRepository, SmoothingKernel,
};
pub use model::{NoisyOracleModel, OracleModel, ScoreModel};
pub use sampler::{generate, harmonized_eps_latent, GuidanceConfig, GuidanceMode, Init};
