//! Code-conditioned diffusion policy: schedule, conditioning encoder, FiLM
//! UNet, training, and samplers.

pub mod encoder;
pub mod policy;
pub mod schedule;
pub mod train;
pub mod unet;

pub use encoder::{CondEncoder, CondSample, CondText};
pub use policy::{
    ddim_sample_with, ddpm_sample_with, ActionChunk, DiffusionError, DiffusionPolicy, ACTION_DIM,
    CHUNK_LEN, H_CHUNK,
};
pub use schedule::{add_noise, loss_weight, NoiseSchedule, K_STEPS};
pub use train::{oracle_cache_text, train_dp, CondMode, DpData, DpTrainConfig};
pub use unet::UNet1d;
