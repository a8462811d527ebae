//! A desk-scale caption-conditioned image generation lab.
//!
//! A closed world of colored shapes on a grid stands in for a natural-image
//! corpus: scenes are rendered to small images and described by a closed
//! caption grammar. Four tiny models (image encoder, generator, captioner,
//! paraphraser) trained on that world share a latent vector space, and image
//! generation is an iterative update of a latent vector driven by
//! BLEU-scaled caption-word gradients, reconstruction terms, and noise.

pub mod bleu;
pub mod engine;
pub mod error;
pub mod image;
pub mod nn;
pub mod pairs;
pub mod pipeline;
pub mod text;
pub mod world;

pub use error::{Error, Result};
