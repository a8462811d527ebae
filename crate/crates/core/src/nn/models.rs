//! The four tiny differentiable models: image encoder and generator (trained
//! jointly as an autoencoder over a shared latent space), the image
//! captioner, and the sentence paraphraser.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::nn::decode::{DecodeMode, DecodeState, DecoderCore};
use crate::nn::layers::{Activation, Embedding, Linear, Lstm, Mlp};
use crate::nn::math::Mat;
use crate::nn::tape::{NodeId, ParamSet, Tape};
use crate::nn::LatentVector;
use crate::text::{Caption, TokenId, EOS};

/// Longest decoded sequence; the longest template is well under this.
pub const MAX_DECODE_LEN: usize = 20;

pub const LATENT_DIM: usize = 64;
const AE_HIDDEN: usize = 256;
const FEATURE_HIDDEN: usize = 128;
const FEATURE_DIM: usize = 64;
const DECODER_HIDDEN: usize = 128;
const EMBED_DIM: usize = 32;

/// Image encoder and generator spanning one latent space. Both halves live
/// in a single parameter set so they freeze, checkpoint, and train together.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub params: ParamSet,
    encoder: Mlp,
    generator: Mlp,
    pub latent_dim: usize,
    pub canvas: usize,
}

impl Autoencoder {
    pub fn init(canvas: usize, seed: u64) -> Self {
        Self::with_dims(canvas, AE_HIDDEN, LATENT_DIM, seed)
    }

    pub fn with_dims(canvas: usize, hidden: usize, latent_dim: usize, seed: u64) -> Self {
        let image_len = CHANNELS * canvas * canvas;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = Mlp::new(
            &mut params,
            "enc",
            &[image_len, hidden, latent_dim],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        );
        let generator = Mlp::new(
            &mut params,
            "gen",
            &[latent_dim, hidden, image_len],
            &[Activation::Tanh, Activation::Sigmoid],
            &mut rng,
        );
        Autoencoder { params, encoder, generator, latent_dim, canvas }
    }

    pub fn image_len(&self) -> usize {
        CHANNELS * self.canvas * self.canvas
    }

    pub fn encode_node<'a>(&'a self, tape: &mut Tape<'a>, image: NodeId) -> NodeId {
        self.encoder.forward(tape, &self.params, image)
    }

    pub fn generate_node<'a>(&'a self, tape: &mut Tape<'a>, latent: NodeId) -> NodeId {
        self.generator.forward(tape, &self.params, latent)
    }

    pub fn encode(&self, image: &Image) -> LatentVector {
        LatentVector { values: self.encoder.eval(&self.params, image.data()) }
    }

    /// Output pixels pass through a sigmoid, so every value lies in (0, 1).
    pub fn generate(&self, latent: &LatentVector) -> Image {
        let data = self.generator.eval(&self.params, &latent.values);
        Image::from_vec(data, self.canvas, self.canvas).expect("generator output length")
    }

    pub fn reconstruct(&self, image: &Image) -> Image {
        self.generate(&self.encode(image))
    }

    /// Mean per-pixel-value squared reconstruction error over a set.
    pub fn reconstruction_mse(&self, images: &[Image]) -> f64 {
        let total: f64 = images.iter().map(|x| self.reconstruct(x).mean_squared_error(x)).sum();
        total / images.len().max(1) as f64
    }

    pub(crate) fn rebuild(entries: Vec<(String, Mat)>) -> Result<Self> {
        let dims = shape_of(&entries, "enc.0.w")?;
        let hidden = dims.0;
        let image_len = dims.1;
        let latent_dim = shape_of(&entries, "enc.1.w")?.0;
        let canvas = ((image_len / CHANNELS) as f64).sqrt().round() as usize;
        if CHANNELS * canvas * canvas != image_len {
            return Err(Error::invalid(format!("non-square image length {image_len}")));
        }
        let mut model = Self::with_dims(canvas, hidden, latent_dim, 0);
        fill_params(&mut model.params, entries)?;
        Ok(model)
    }
}

/// Image-conditioned caption decoder: an image feature extractor initializes
/// the hidden state of an LSTM decoder over the vocabulary.
#[derive(Debug, Clone)]
pub struct Captioner {
    pub params: ParamSet,
    feature: Mlp,
    init_h: Linear,
    init_c: Linear,
    decoder: DecoderCore,
    pub vocab_size: usize,
    pub canvas: usize,
}

impl Captioner {
    pub fn init(canvas: usize, vocab_size: usize, seed: u64) -> Self {
        Self::with_dims(canvas, vocab_size, FEATURE_HIDDEN, FEATURE_DIM, DECODER_HIDDEN, EMBED_DIM, seed)
    }

    fn with_dims(
        canvas: usize,
        vocab_size: usize,
        feature_hidden: usize,
        feature_dim: usize,
        hidden: usize,
        embed_dim: usize,
        seed: u64,
    ) -> Self {
        let image_len = CHANNELS * canvas * canvas;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let feature = Mlp::new(
            &mut params,
            "feat",
            &[image_len, feature_hidden, feature_dim],
            &[Activation::Tanh, Activation::Tanh],
            &mut rng,
        );
        let init_h = Linear::new(&mut params, "init_h", feature_dim, hidden, &mut rng);
        let init_c = Linear::new(&mut params, "init_c", feature_dim, hidden, &mut rng);
        let embed = Embedding::new(&mut params, "embed", vocab_size, embed_dim, &mut rng);
        let cell = Lstm::new(&mut params, "cell", embed_dim, hidden, &mut rng);
        let out = Linear::new(&mut params, "out", hidden, vocab_size, &mut rng);
        Captioner {
            params,
            feature,
            init_h,
            init_c,
            decoder: DecoderCore { embed, cell, out },
            vocab_size,
            canvas,
        }
    }

    fn init_state_value(&self, image: &Image) -> DecodeState {
        let feature = self.feature.eval(&self.params, image.data());
        let h = self.init_h.eval(&self.params, &feature).iter().map(|v| v.tanh()).collect();
        let c = self.init_c.eval(&self.params, &feature).iter().map(|v| v.tanh()).collect();
        DecodeState { h, c }
    }

    /// Teacher-forced negative log-likelihood of `reference` given the image
    /// node, recorded on the tape. One summand per reference token, so a
    /// reference that carries its EOS ends with the EOS summand.
    pub fn word_loss_node<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        image: NodeId,
        reference: &[TokenId],
    ) -> NodeId {
        let feature = self.feature.forward(tape, &self.params, image);
        let h0_pre = self.init_h.forward(tape, &self.params, feature);
        let h0 = tape.tanh(h0_pre);
        let c0_pre = self.init_c.forward(tape, &self.params, feature);
        let c0 = tape.tanh(c0_pre);
        self.decoder.teacher_forced_nll(tape, &self.params, h0, c0, reference)
    }

    /// Word-level caption loss and its gradient with respect to every pixel.
    pub fn word_loss(&self, image: &Image, reference: &Caption) -> Result<(f64, Image)> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let mut tape = Tape::new();
        let image_node = tape.input(image.data().to_vec());
        let loss = self.word_loss_node(&mut tape, image_node, reference.ids());
        let grads = tape.backward(loss, false);
        let grad = grads.wrt(image_node).expect("image reaches the loss").to_vec();
        Ok((tape.scalar(loss), Image::from_vec(grad, image.height(), image.width())?))
    }

    pub fn greedy_caption(&self, image: &Image) -> Caption {
        let tokens = self.decoder.greedy(&self.params, self.init_state_value(image), MAX_DECODE_LEN);
        Caption::new(tokens)
    }

    /// The k best completed captions with their log-probabilities, sorted
    /// non-increasing.
    pub fn beam_captions(
        &self,
        image: &Image,
        beam_width: usize,
        k: usize,
    ) -> Result<Vec<(Caption, f64)>> {
        if !(beam_width >= k && k >= 1) {
            return Err(Error::invalid(format!("need beam_width >= k >= 1, got {beam_width} < {k}")));
        }
        Ok(self
            .decoder
            .beam(&self.params, self.init_state_value(image), beam_width, k, MAX_DECODE_LEN)
            .into_iter()
            .map(|(tokens, lp)| (Caption::new(tokens), lp))
            .collect())
    }

    /// Log-probability of an exact caption for the image (value path).
    pub fn caption_log_prob(&self, image: &Image, tokens: &[TokenId]) -> f64 {
        self.decoder.sequence_log_prob(&self.params, &self.init_state_value(image), tokens)
    }

    pub(crate) fn rebuild(entries: Vec<(String, Mat)>) -> Result<Self> {
        let (feature_hidden, image_len) = shape_of(&entries, "feat.0.w")?;
        let (feature_dim, _) = shape_of(&entries, "feat.1.w")?;
        let (hidden, _) = shape_of(&entries, "init_h.w")?;
        let (vocab_size, embed_dim) = shape_of(&entries, "embed")?;
        let canvas = ((image_len / CHANNELS) as f64).sqrt().round() as usize;
        if CHANNELS * canvas * canvas != image_len {
            return Err(Error::invalid(format!("non-square image length {image_len}")));
        }
        let mut model =
            Self::with_dims(canvas, vocab_size, feature_hidden, feature_dim, hidden, embed_dim, 0);
        fill_params(&mut model.params, entries)?;
        Ok(model)
    }
}

/// Sentence-to-sentence model: an LSTM encoder folds the source caption into
/// a vector, which initializes an LSTM decoder that emits a paraphrase.
#[derive(Debug, Clone)]
pub struct Paraphraser {
    pub params: ParamSet,
    embed: Embedding,
    enc_cell: Lstm,
    bridge_h: Linear,
    bridge_c: Linear,
    decoder: DecoderCore,
    pub vocab_size: usize,
}

impl Paraphraser {
    pub fn init(vocab_size: usize, seed: u64) -> Self {
        Self::with_dims(vocab_size, DECODER_HIDDEN, EMBED_DIM, seed)
    }

    fn with_dims(vocab_size: usize, hidden: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let embed = Embedding::new(&mut params, "embed", vocab_size, embed_dim, &mut rng);
        let enc_cell = Lstm::new(&mut params, "enc", embed_dim, hidden, &mut rng);
        let bridge_h = Linear::new(&mut params, "bridge_h", hidden, hidden, &mut rng);
        let bridge_c = Linear::new(&mut params, "bridge_c", hidden, hidden, &mut rng);
        let dec_cell = Lstm::new(&mut params, "dec", embed_dim, hidden, &mut rng);
        let out = Linear::new(&mut params, "out", hidden, vocab_size, &mut rng);
        Paraphraser {
            params,
            embed: embed.clone(),
            enc_cell,
            bridge_h,
            bridge_c,
            decoder: DecoderCore { embed, cell: dec_cell, out },
            vocab_size,
        }
    }

    fn hidden(&self) -> usize {
        self.enc_cell.hidden
    }

    /// Source framing: content tokens with a terminal EOS sentinel.
    fn source_ids(caption: &Caption) -> Vec<TokenId> {
        let mut ids = caption.content();
        ids.push(EOS);
        ids
    }

    /// The whole source is consumed before decoding starts; the final
    /// encoder state, bridged, initializes the decoder.
    fn encode_value(&self, source: &[TokenId]) -> DecodeState {
        let mut h = vec![0.0; self.hidden()];
        let mut c = vec![0.0; self.hidden()];
        for &token in source {
            let x = self.embed.eval(&self.params, token);
            let (h2, c2) = self.enc_cell.step_value(&self.params, &x, &h, &c);
            h = h2;
            c = c2;
        }
        let h0 = self.bridge_h.eval(&self.params, &h).iter().map(|v| v.tanh()).collect();
        let c0 = self.bridge_c.eval(&self.params, &c).iter().map(|v| v.tanh()).collect();
        DecodeState { h: h0, c: c0 }
    }

    /// Teacher-forced loss of (source -> target), recorded on a fresh tape.
    pub fn pair_loss_node<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        source: &Caption,
        target: &[TokenId],
    ) -> NodeId {
        let mut h = tape.input(vec![0.0; self.hidden()]);
        let mut c = tape.input(vec![0.0; self.hidden()]);
        for token in Self::source_ids(source) {
            let x = self.embed.lookup(tape, &self.params, token);
            let (h2, c2) = self.enc_cell.step(tape, &self.params, x, h, c);
            h = h2;
            c = c2;
        }
        let h0_pre = self.bridge_h.forward(tape, &self.params, h);
        let h0 = tape.tanh(h0_pre);
        let c0_pre = self.bridge_c.forward(tape, &self.params, c);
        let c0 = tape.tanh(c0_pre);
        self.decoder.teacher_forced_nll(tape, &self.params, h0, c0, target)
    }

    pub fn paraphrase(&self, source: &Caption, mode: DecodeMode, rng: &mut ChaCha8Rng) -> Caption {
        let init = self.encode_value(&Self::source_ids(source));
        let tokens = match mode {
            DecodeMode::Greedy => self.decoder.greedy(&self.params, init, MAX_DECODE_LEN),
            DecodeMode::Sampled { temperature } => {
                self.decoder.sample(&self.params, init, MAX_DECODE_LEN, temperature, rng)
            }
        };
        Caption::new(tokens)
    }

    pub(crate) fn rebuild(entries: Vec<(String, Mat)>) -> Result<Self> {
        let (vocab_size, embed_dim) = shape_of(&entries, "embed")?;
        let (hidden, _) = shape_of(&entries, "bridge_h.w")?;
        let mut model = Self::with_dims(vocab_size, hidden, embed_dim, 0);
        fill_params(&mut model.params, entries)?;
        Ok(model)
    }
}

/// A chain of paraphrases y_1..y_steps where each element is decoded from
/// the previous one, starting from y.
#[derive(Debug, Clone)]
pub struct ParaphraseChain {
    pub captions: Vec<Caption>,
    pub mode: DecodeMode,
    pub seed: u64,
}

/// Iterated paraphrasing. Each hop feeds the previous output's content
/// tokens back in as the next source.
pub fn chain_paraphrase(
    paraphraser: &Paraphraser,
    y: &Caption,
    steps: usize,
    mode: DecodeMode,
    seed: u64,
) -> Result<ParaphraseChain> {
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut captions = Vec::with_capacity(steps);
    let mut current = y.clone();
    for _ in 0..steps {
        let next = paraphraser.paraphrase(&current, mode, &mut rng);
        captions.push(next.clone());
        // an all-special output would make the next source the empty
        // sentinel; keep chaining off the raw output's content when possible
        current = next.content_caption().unwrap_or(next);
    }
    Ok(ParaphraseChain { captions, mode, seed })
}

fn shape_of(entries: &[(String, Mat)], name: &str) -> Result<(usize, usize)> {
    entries
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, m)| (m.rows, m.cols))
        .ok_or_else(|| Error::invalid(format!("checkpoint is missing tensor {name}")))
}

/// Overwrites a freshly constructed set's tensors from checkpoint entries;
/// names and shapes must line up exactly with the declaration order.
fn fill_params(params: &mut ParamSet, entries: Vec<(String, Mat)>) -> Result<()> {
    if params.len() != entries.len() {
        return Err(Error::invalid(format!(
            "checkpoint has {} tensors, model declares {}",
            entries.len(),
            params.len()
        )));
    }
    for ((name, mat), (expected_name, slot)) in entries.into_iter().zip(params.entries_mut()) {
        if name != expected_name {
            return Err(Error::invalid(format!(
                "checkpoint tensor {name} does not match declared {expected_name}"
            )));
        }
        if mat.rows != slot.rows || mat.cols != slot.cols {
            return Err(Error::invalid(format!(
                "tensor {name}: checkpoint shape {}x{} vs declared {}x{}",
                mat.rows, mat.cols, slot.rows, slot.cols
            )));
        }
        *slot = mat;
    }
    Ok(())
}
