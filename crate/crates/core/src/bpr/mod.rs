//! Behavior-prior pretraining: an encoder and predictor trained to match the
//! direction of dataset actions, after which the encoder is frozen.

mod loss;
mod model;
mod pretrain;

pub use loss::{bpr_batch, bpr_loss, unnormalized_bc_loss, BprBatch, DEFAULT_EPS_STABILITY};
pub use model::{encode, EncoderManifest, EncoderModel, PredictorModel};
pub use pretrain::{pretrain, pretrain_with_hook, usable_samples, windowed_mean, PretrainConfig, PretrainOutcome};
