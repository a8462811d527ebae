// scratch experimentation harness; not part of the deliverable surface
use std::time::Instant;

use vcs_core::engine::{init_h, run, Models, UpdateConfig};
use vcs_core::nn::{train_autoencoder, train_captioner};
use vcs_core::world::corpus::{build_corpus, load_corpus};
use vcs_core::world::grammar::parse_caption;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cmd = args.first().map(|s| s.as_str()).unwrap_or("ae");
    let dir = std::path::PathBuf::from("/tmp/lab_corpus");
    if !dir.join("manifest.json").exists() {
        build_corpus(500, 5, 11, &dir).unwrap();
    }
    let corpus = load_corpus(&dir.join("manifest.json")).unwrap();
    match cmd {
        "ae" => {
            let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
            let t = Instant::now();
            let (ae, log) = train_autoencoder(&corpus, epochs, 7).unwrap();
            println!("trained {} epochs in {:.1?}", epochs, t.elapsed());
            println!("initial loss {:.5}", log.initial_loss);
            for (i, l) in log.epoch_losses.iter().enumerate() {
                if i % 5 == 0 || i + 1 == log.epoch_losses.len() {
                    println!("epoch {i}: {l:.5}");
                }
            }
            println!("final recon mse: {:.5}", ae.reconstruction_mse(&corpus.images));
        }
        "cap" => {
            let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
            let t = Instant::now();
            let (cap, log) = train_captioner(&corpus, epochs, 7).unwrap();
            println!("trained {} epochs in {:.1?}", epochs, t.elapsed());
            println!("initial {:.4} last {:.4}", log.initial_loss, log.epoch_losses.last().unwrap());
            // greedy quality on training images
            let mut bleu_sum = 0.0;
            let mut semantic = 0;
            let n = 100.min(corpus.len());
            for i in 0..n {
                let pred = cap.greedy_caption(&corpus.images[i]);
                let refs = &corpus.captions[i];
                if let Some(content) = pred.content_caption() {
                    let b = vcs_core::bleu::bleu(&content, refs, 1).map(|b| b.score).unwrap_or(0.0);
                    bleu_sum += b;
                }
                if parse_caption(&corpus.vocab, &pred)
                    == Some(corpus.manifest.records[i].scene.semantics())
                {
                    semantic += 1;
                }
            }
            println!("train multi-ref BLEU-1 mean: {:.3}", bleu_sum / n as f64);
            println!("train semantic match: {}/{n}", semantic);
        }
        "conv" => {
            let ae_epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
            let step: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.1);
            let (ae, _) = train_autoencoder(&corpus, ae_epochs, 7).unwrap();
            let (cap, _) = train_captioner(&corpus, 1, 7).unwrap();
            let models = Models { autoencoder: &ae, captioner: &cap };
            let config = UpdateConfig {
                word_term_scale: 0.0,
                gamma2: 1.0,
                gamma3: 0.0,
                gamma4: 0.0,
                step_size: step,
                iterations: 200,
                ..UpdateConfig::default()
            };
            let mut ok = 0;
            let t = Instant::now();
            for seed in 0..20u64 {
                let target = corpus.images[(seed as usize * 13) % corpus.len()].clone();
                let h0 = init_h(ae.latent_dim, 1000 + seed);
                let initial = ae.generate(&h0).squared_distance(&target);
                let (final_img, _, trace) =
                    run(h0, Vec::new(), Some(target.clone()), &models, &config).unwrap();
                let final_d = final_img.squared_distance(&target);
                let ratio = final_d / initial;
                if ratio <= 0.1 {
                    ok += 1;
                }
                if seed < 6 {
                    println!(
                        "seed {seed}: initial {initial:.2} final {final_d:.2} ratio {ratio:.3} iters {}",
                        trace.records.len()
                    );
                }
            }
            println!("converged {ok}/20 in {:.1?}", t.elapsed());
        }
        "perf" => {
            let (ae, _) = train_autoencoder(&corpus, 0, 7).unwrap();
            let img = &corpus.images[0];
            let scale = 1.0 / (3.0 * 32.0 * 32.0);
            let n = 50;
            let t = Instant::now();
            for _ in 0..n {
                let mut tape = vcs_core::nn::Tape::new();
                let x = tape.input(img.data().to_vec());
                let h = ae.encode_node(&mut tape, x);
                let y = ae.generate_node(&mut tape, h);
                let sq = tape.squared_diff(y, x);
                let _loss = tape.scale(sq, scale);
            }
            println!("forward only: {:.2?}/sample", t.elapsed() / n);
            let t = Instant::now();
            for _ in 0..n {
                let mut tape = vcs_core::nn::Tape::new();
                let x = tape.input(img.data().to_vec());
                let h = ae.encode_node(&mut tape, x);
                let y = ae.generate_node(&mut tape, h);
                let sq = tape.squared_diff(y, x);
                let loss = tape.scale(sq, scale);
                let _g = tape.backward(loss, false);
            }
            println!("fwd+bwd(no params): {:.2?}/sample", t.elapsed() / n);
            let t = Instant::now();
            for _ in 0..n {
                let mut tape = vcs_core::nn::Tape::new();
                let x = tape.input(img.data().to_vec());
                let h = ae.encode_node(&mut tape, x);
                let y = ae.generate_node(&mut tape, h);
                let sq = tape.squared_diff(y, x);
                let loss = tape.scale(sq, scale);
                let _g = tape.backward(loss, true);
            }
            println!("fwd+bwd(with params): {:.2?}/sample", t.elapsed() / n);
        }
        other => eprintln!("unknown: {other}"),
    }
}
