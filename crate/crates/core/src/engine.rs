//! The iterative latent-vector update that turns captions (and optionally a
//! target image) into a generated image.
//!
//! Each iteration combines three gradient terms over the latent vector h —
//! BLEU-scaled caption-word gradients through the generator-captioner path,
//! an image reconstruction pull when a ground-truth image is available, and
//! a latent re-encoding pull through the dotted encoder branch — plus
//! Gaussian exploration noise. Models stay frozen throughout; the update
//! moves only h.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bleu::bleu;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::math::l2_norm;
use crate::nn::models::{Autoencoder, Captioner};
use crate::nn::tape::Tape;
use crate::nn::LatentVector;
use crate::text::Caption;

/// Hyperparameters of the update rule. gamma1 is computed, not configured:
/// it is BLEU-1(predicted, reference) / reference length, per caption, per
/// iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    /// global multiplier on the caption-word term
    pub word_term_scale: f64,
    /// weight of the image reconstruction term
    pub gamma2: f64,
    /// weight of the latent re-encoding term
    pub gamma3: f64,
    /// noise standard deviation
    pub gamma4: f64,
    pub step_size: f64,
    pub iterations: usize,
    /// stop once every target caption is re-captioned with BLEU-1 = 1
    pub stop_on_perfect_bleu: bool,
    /// treat the re-encoded vector as a constant in the gamma3 term instead
    /// of differentiating through encoder(generator(h))
    pub encoder_branch_stop_gradient: bool,
    /// add the combined term instead of subtracting it (the published form
    /// of the rule adds; kept as a switch for study)
    pub ascent: bool,
    /// seed for the exploration noise
    pub seed: u64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig {
            word_term_scale: 1.0,
            gamma2: 1.0,
            gamma3: 0.1,
            gamma4: 1e-3,
            step_size: 0.1,
            iterations: 200,
            stop_on_perfect_bleu: true,
            encoder_branch_stop_gradient: false,
            ascent: false,
            seed: 0,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::invalid(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        for (name, v) in [
            ("word_term_scale", self.word_term_scale),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("gamma4", self.gamma4),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// The frozen models a run differentiates through.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub autoencoder: &'a Autoencoder,
    pub captioner: &'a Captioner,
}

/// Observable state between iterations. The generated image is always G(h),
/// and the predicted caption is the greedy decode of that image whenever
/// target captions are in play.
#[derive(Debug, Clone)]
pub struct UpdateState {
    pub h: LatentVector,
    pub generated: Image,
    pub predicted: Option<Caption>,
    pub targets: Vec<Caption>,
    pub target_image: Option<Image>,
}

impl UpdateState {
    pub fn new(
        h: LatentVector,
        targets: Vec<Caption>,
        target_image: Option<Image>,
        models: &Models,
    ) -> Self {
        let generated = models.autoencoder.generate(&h);
        let predicted = (!targets.is_empty()).then(|| models.captioner.greedy_caption(&generated));
        UpdateState { h, generated, predicted, targets, target_image }
    }
}

/// Everything observable about one executed iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// teacher-forced word loss, one entry per target caption
    pub word_losses: Vec<f64>,
    /// BLEU-1 of the predicted caption against each target
    pub bleu1: Vec<f64>,
    /// per-caption word-gradient scale (BLEU-1 / reference length)
    pub gamma1: Vec<f64>,
    /// squared pixel distance to the target image, when one is present
    pub image_loss: Option<f64>,
    /// squared distance between h and its re-encoding
    pub latent_loss: f64,
    pub word_grad_norm: Option<f64>,
    pub image_grad_norm: Option<f64>,
    pub latent_grad_norm: Option<f64>,
    pub noise_norm: f64,
    pub predicted_caption: Option<Caption>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct UpdateTrace {
    pub records: Vec<IterationRecord>,
    pub stopped_early: bool,
}

impl UpdateTrace {
    /// One JSON record per executed iteration.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for record in &self.records {
            let line = serde_json::to_string(record)?;
            writeln!(w, "{line}").map_err(|e| Error::io("write trace", e))?;
        }
        Ok(())
    }
}

/// Standard-normal starting vector, deterministic per seed.
pub fn init_h(dim: usize, seed: u64) -> LatentVector {
    assert!(dim >= 1, "latent dimension must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    LatentVector { values }
}

/// Word loss NLL(reference | G(h)) and its gradient with respect to h.
pub fn word_gradient(models: &Models, h: &LatentVector, reference: &Caption) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let h_node = tape.input(h.values.clone());
    let image = models.autoencoder.generate_node(&mut tape, h_node);
    let loss = models.captioner.word_loss_node(&mut tape, image, reference.ids());
    let grads = tape.backward(loss, false);
    (tape.scalar(loss), grads.wrt(h_node).expect("h reaches the loss").to_vec())
}

/// Image loss ||G(h) - x||^2 and its gradient with respect to h.
pub fn image_gradient(models: &Models, h: &LatentVector, target: &Image) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let h_node = tape.input(h.values.clone());
    let image = models.autoencoder.generate_node(&mut tape, h_node);
    let target_node = tape.input(target.data().to_vec());
    let loss = tape.squared_diff(image, target_node);
    let grads = tape.backward(loss, false);
    (tape.scalar(loss), grads.wrt(h_node).expect("h reaches the loss").to_vec())
}

/// Latent re-encoding loss ||h - E(G(h))||^2 and its gradient with respect
/// to h. With `stop_gradient` the re-encoding is treated as a constant and
/// the gradient is the closed form 2(h - E(G(h))).
pub fn latent_gradient(models: &Models, h: &LatentVector, stop_gradient: bool) -> (f64, Vec<f64>) {
    if stop_gradient {
        let encoded = models.autoencoder.encode(&models.autoencoder.generate(h));
        let diff: Vec<f64> = h.values.iter().zip(&encoded.values).map(|(a, b)| a - b).collect();
        let loss = diff.iter().map(|d| d * d).sum();
        (loss, diff.iter().map(|d| 2.0 * d).collect())
    } else {
        let mut tape = Tape::new();
        let h_node = tape.input(h.values.clone());
        let image = models.autoencoder.generate_node(&mut tape, h_node);
        let encoded = models.autoencoder.encode_node(&mut tape, image);
        let loss = tape.squared_diff(h_node, encoded);
        let grads = tape.backward(loss, false);
        (tape.scalar(loss), grads.wrt(h_node).expect("h reaches the loss").to_vec())
    }
}

fn bleu1_or_zero(candidate: &Caption, reference: &Caption) -> f64 {
    match candidate.content_caption() {
        Some(content) => {
            bleu(&content, std::slice::from_ref(reference), 1).map(|b| b.score).unwrap_or(0.0)
        }
        None => 0.0,
    }
}

/// One update of h. The word term averages per-caption gradients, each
/// scaled by its own gamma1; the per-caption gradients are computed
/// independently so the average is exactly the mean of the individual terms.
pub fn step(
    state: &UpdateState,
    models: &Models,
    config: &UpdateConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(UpdateState, IterationRecord)> {
    config.validate()?;
    let dim = state.h.dim();
    let mut record = IterationRecord {
        iteration: 0,
        word_losses: Vec::new(),
        bleu1: Vec::new(),
        gamma1: Vec::new(),
        image_loss: None,
        latent_loss: 0.0,
        word_grad_norm: None,
        image_grad_norm: None,
        latent_grad_norm: None,
        noise_norm: 0.0,
        predicted_caption: state.predicted.clone(),
        warnings: Vec::new(),
    };

    let mut combined = vec![0.0; dim];

    // caption-word term: mean over targets of gamma1_j * grad W_j
    if !state.targets.is_empty() {
        let predicted = state.predicted.as_ref().expect("predicted caption tracks targets");
        let mut word_term = vec![0.0; dim];
        for target in &state.targets {
            let reference = target.with_eos();
            let b1 = bleu1_or_zero(predicted, target);
            let n = target.content().len();
            let g1 = b1 / n as f64;
            record.bleu1.push(b1);
            record.gamma1.push(g1);
            if g1 > 0.0 && config.word_term_scale > 0.0 {
                let (loss, grad) = word_gradient(models, &state.h, &reference);
                record.word_losses.push(loss);
                for (acc, g) in word_term.iter_mut().zip(&grad) {
                    *acc += g1 * g;
                }
            } else {
                // gamma1 gates this caption out; log the loss without
                // paying for a backward pass
                let mut tape = Tape::new();
                let h_node = tape.input(state.h.values.clone());
                let image = models.autoencoder.generate_node(&mut tape, h_node);
                let loss = models.captioner.word_loss_node(&mut tape, image, reference.ids());
                record.word_losses.push(tape.scalar(loss));
            }
        }
        let m = state.targets.len() as f64;
        word_term.iter_mut().for_each(|v| *v /= m);
        if config.word_term_scale > 0.0 {
            for (acc, g) in combined.iter_mut().zip(&word_term) {
                *acc += config.word_term_scale * g;
            }
            record.word_grad_norm = Some(config.word_term_scale * l2_norm(&word_term));
        }
    }

    // image reconstruction term
    match (&state.target_image, config.gamma2 > 0.0) {
        (Some(target), true) => {
            let (loss, grad) = image_gradient(models, &state.h, target);
            record.image_loss = Some(loss);
            for (acc, g) in combined.iter_mut().zip(&grad) {
                *acc += config.gamma2 * g;
            }
            record.image_grad_norm = Some(config.gamma2 * l2_norm(&grad));
        }
        (Some(target), false) => {
            record.image_loss = Some(state.generated.squared_distance(target));
        }
        (None, true) => {
            record.warnings.push("gamma2 > 0 but no target image; image term skipped".to_string());
        }
        (None, false) => {}
    }

    // latent re-encoding term
    let (latent_loss, latent_grad) =
        latent_gradient(models, &state.h, config.encoder_branch_stop_gradient);
    record.latent_loss = latent_loss;
    if config.gamma3 > 0.0 {
        for (acc, g) in combined.iter_mut().zip(&latent_grad) {
            *acc += config.gamma3 * g;
        }
        record.latent_grad_norm = Some(config.gamma3 * l2_norm(&latent_grad));
    }

    // h <- h -/+ step_size * combined + noise
    let sign = if config.ascent { 1.0 } else { -1.0 };
    let mut next = state.h.values.clone();
    for (value, g) in next.iter_mut().zip(&combined) {
        *value += sign * config.step_size * g;
    }
    if config.gamma4 > 0.0 {
        let mut noise_sq = 0.0;
        for value in next.iter_mut() {
            let eps: f64 = StandardNormal.sample(rng);
            let eps = config.gamma4 * eps;
            noise_sq += eps * eps;
            *value += eps;
        }
        record.noise_norm = noise_sq.sqrt();
    }

    let next_state = UpdateState::new(
        LatentVector { values: next },
        state.targets.clone(),
        state.target_image.clone(),
        models,
    );
    Ok((next_state, record))
}

/// Runs the update loop from h0 until the iteration budget is exhausted or
/// every target caption is predicted with BLEU-1 = 1.
pub fn run(
    h0: LatentVector,
    targets: Vec<Caption>,
    target_image: Option<Image>,
    models: &Models,
    config: &UpdateConfig,
) -> Result<(Image, LatentVector, UpdateTrace)> {
    config.validate()?;
    if targets.is_empty() && target_image.is_none() {
        return Err(Error::invalid("need at least one target caption or a target image"));
    }
    for target in &targets {
        if target.content().is_empty() {
            return Err(Error::invalid("target caption has no content tokens"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = UpdateState::new(h0, targets, target_image, models);
    let mut trace = UpdateTrace::default();

    for iteration in 0..config.iterations {
        if config.stop_on_perfect_bleu && !state.targets.is_empty() {
            let predicted = state.predicted.as_ref().expect("tracked");
            let perfect =
                state.targets.iter().all(|target| bleu1_or_zero(predicted, target) == 1.0);
            if perfect {
                trace.stopped_early = true;
                break;
            }
        }
        let (next, mut record) = step(&state, models, config, &mut rng)?;
        record.iteration = iteration;
        trace.records.push(record);
        state = next;
    }

    Ok((state.generated.clone(), state.h.clone(), trace))
}
