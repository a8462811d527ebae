//! Tiny differentiable models with gradients exposed with respect to their
//! inputs, so the latent engine can differentiate through frozen weights.

pub mod checkpoint;
pub mod decode;
pub mod layers;
pub mod math;
pub mod models;
pub mod tape;
pub mod train;

use serde::{Deserialize, Serialize};

pub use decode::{DecodeMode, DecodeState, DecoderCore};
pub use models::{chain_paraphrase, Autoencoder, Captioner, ParaphraseChain, Paraphraser};
pub use models::{LATENT_DIM, MAX_DECODE_LEN};
pub use tape::{Gradients, NodeId, ParamId, ParamSet, Tape};
pub use train::{train_autoencoder, train_captioner, train_paraphraser, TrainConfig, TrainLog};

/// A point in the vector connection space shared by images and sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
}

impl LatentVector {
    pub fn zeros(dim: usize) -> Self {
        LatentVector { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        math::l2_norm(&self.values)
    }
}
