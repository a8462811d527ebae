//! Single-threaded SGD-with-momentum training loops. Every run is a pure
//! function of (data, epochs, seed): sample order, initialization, and
//! updates are all drawn from seeded generators.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::math::Mat;
use crate::nn::models::{Autoencoder, Captioner, Paraphraser};
use crate::nn::tape::{Gradients, ParamSet, Tape};
use crate::text::{Caption, Vocabulary};
use crate::world::corpus::Corpus;
use crate::world::mix_seed;

/// The fixed training recipe, persisted alongside checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub component: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn autoencoder(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            component: "autoencoder".into(),
            epochs,
            learning_rate: 1.0,
            momentum: 0.9,
            grad_clip: 5.0,
            seed,
        }
    }

    pub fn captioner(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            component: "captioner".into(),
            epochs,
            learning_rate: 0.2,
            momentum: 0.9,
            grad_clip: 5.0,
            seed,
        }
    }

    pub fn paraphraser(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            component: "paraphraser".into(),
            epochs,
            learning_rate: 0.2,
            momentum: 0.9,
            grad_clip: 5.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    /// mean per-sample loss before any update
    pub initial_loss: f64,
    /// running mean per-sample loss of each epoch
    pub epoch_losses: Vec<f64>,
}

struct Sgd {
    lr: f64,
    momentum: f64,
    clip: f64,
    velocity: Vec<Mat>,
}

impl Sgd {
    fn new(set: &ParamSet, cfg: &TrainConfig) -> Self {
        let velocity = set.entries().map(|(_, m)| Mat::zeros(m.rows, m.cols)).collect();
        Sgd { lr: cfg.learning_rate, momentum: cfg.momentum, clip: cfg.grad_clip, velocity }
    }

    fn apply(&mut self, set: &mut ParamSet, grads: &Gradients) {
        let Some(slots) = grads.params_for(set) else { return };
        let mut sq = 0.0;
        for g in slots.iter().flatten() {
            sq += g.data.iter().map(|v| v * v).sum::<f64>();
        }
        let norm = sq.sqrt();
        let scale = if norm > self.clip { self.clip / norm } else { 1.0 };
        let grads: Vec<Option<Mat>> = slots.to_vec();
        for (index, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let v = &mut self.velocity[index];
            for (vel, g) in v.data.iter_mut().zip(&grad.data) {
                *vel = self.momentum * *vel + scale * g;
            }
            let id = set.id(index);
            let p = set.get_mut(id);
            for (value, vel) in p.data.iter_mut().zip(&v.data) {
                *value -= self.lr * *vel;
            }
        }
    }
}

/// Minimizes mean squared pixel reconstruction over the corpus images.
/// With zero epochs the returned model equals its seeded initialization.
pub fn train_autoencoder(
    corpus: &Corpus,
    epochs: usize,
    seed: u64,
) -> Result<(Autoencoder, TrainLog)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let canvas = corpus.images[0].height();
    let mut model = Autoencoder::init(canvas, mix_seed(seed, 1));
    let cfg = TrainConfig::autoencoder(epochs, seed);
    let mut sgd = Sgd::new(&model.params, &cfg);
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
    let scale = 1.0 / model.image_len() as f64;

    fn sample_loss<'m>(
        model: &'m Autoencoder,
        image: &crate::image::Image,
        scale: f64,
    ) -> (Tape<'m>, usize) {
        let mut tape = Tape::new();
        let x = tape.input(image.data().to_vec());
        let h = model.encode_node(&mut tape, x);
        let y = model.generate_node(&mut tape, h);
        let sq = tape.squared_diff(y, x);
        let loss = tape.scale(sq, scale);
        (tape, loss)
    }

    let initial_loss = corpus
        .images
        .iter()
        .map(|img| {
            let (tape, loss) = sample_loss(&model, img, scale);
            tape.scalar(loss)
        })
        .sum::<f64>()
        / corpus.len() as f64;

    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        indices.shuffle(&mut order_rng);
        let mut running = 0.0;
        for &i in &indices {
            let (tape, loss) = sample_loss(&model, &corpus.images[i], scale);
            running += tape.scalar(loss);
            let grads = tape.backward(loss, true);
            sgd.apply(&mut model.params, &grads);
        }
        epoch_losses.push(running / indices.len() as f64);
    }
    Ok((model, TrainLog { initial_loss, epoch_losses }))
}

/// Minimizes teacher-forced cross-entropy of each caption given its image.
pub fn train_captioner(corpus: &Corpus, epochs: usize, seed: u64) -> Result<(Captioner, TrainLog)> {
    if corpus.is_empty() || corpus.captions.iter().all(|c| c.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let canvas = corpus.images[0].height();
    let mut model = Captioner::init(canvas, corpus.vocab.len(), mix_seed(seed, 1));
    let cfg = TrainConfig::captioner(epochs, seed);
    let mut sgd = Sgd::new(&model.params, &cfg);
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));

    let samples: Vec<(usize, Vec<u32>)> = corpus
        .captions
        .iter()
        .enumerate()
        .flat_map(|(i, caps)| caps.iter().map(move |c| (i, c.with_eos().ids().to_vec())))
        .collect();

    fn sample_loss<'m>(
        model: &'m Captioner,
        image: &crate::image::Image,
        targets: &[u32],
    ) -> (Tape<'m>, usize) {
        let mut tape = Tape::new();
        let x = tape.input(image.data().to_vec());
        let nll = model.word_loss_node(&mut tape, x, targets);
        // per-token mean keeps the step size independent of caption length
        let loss = tape.scale(nll, 1.0 / targets.len() as f64);
        (tape, loss)
    }

    let initial_loss = samples
        .iter()
        .map(|(i, t)| {
            let (tape, loss) = sample_loss(&model, &corpus.images[*i], t);
            tape.scalar(loss)
        })
        .sum::<f64>()
        / samples.len() as f64;

    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        indices.shuffle(&mut order_rng);
        let mut running = 0.0;
        for &s in &indices {
            let (i, targets) = &samples[s];
            let (tape, loss) = sample_loss(&model, &corpus.images[*i], targets);
            running += tape.scalar(loss);
            let grads = tape.backward(loss, true);
            sgd.apply(&mut model.params, &grads);
        }
        epoch_losses.push(running / indices.len() as f64);
    }
    Ok((model, TrainLog { initial_loss, epoch_losses }))
}

/// Minimizes teacher-forced cross-entropy on (source, target) caption pairs.
pub fn train_paraphraser(
    pairs: &[(Caption, Caption)],
    vocab: &Vocabulary,
    epochs: usize,
    seed: u64,
) -> Result<(Paraphraser, TrainLog)> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut model = Paraphraser::init(vocab.len(), mix_seed(seed, 1));
    let cfg = TrainConfig::paraphraser(epochs, seed);
    let mut sgd = Sgd::new(&model.params, &cfg);
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));

    let targets: Vec<Vec<u32>> = pairs.iter().map(|(_, t)| t.with_eos().ids().to_vec()).collect();

    fn sample_loss<'m>(
        model: &'m Paraphraser,
        source: &Caption,
        target: &[u32],
    ) -> (Tape<'m>, usize) {
        let mut tape = Tape::new();
        let nll = model.pair_loss_node(&mut tape, source, target);
        let loss = tape.scale(nll, 1.0 / target.len() as f64);
        (tape, loss)
    }

    let initial_loss = pairs
        .iter()
        .zip(&targets)
        .map(|((s, _), t)| {
            let (tape, loss) = sample_loss(&model, s, t);
            tape.scalar(loss)
        })
        .sum::<f64>()
        / pairs.len() as f64;

    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        indices.shuffle(&mut order_rng);
        let mut running = 0.0;
        for &s in &indices {
            let (tape, loss) = sample_loss(&model, &pairs[s].0, &targets[s]);
            running += tape.scalar(loss);
            let grads = tape.backward(loss, true);
            sgd.apply(&mut model.params, &grads);
        }
        epoch_losses.push(running / indices.len() as f64);
    }
    Ok((model, TrainLog { initial_loss, epoch_losses }))
}
