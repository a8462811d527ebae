//! On-disk corpus: a JSON manifest of scenes, captions, and vocabulary, with
//! images stored as binary pixmaps for bit-exact cross-language reads.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::text::{Caption, Vocabulary};
use crate::world::grammar::describe_scene;
use crate::world::render::render_scene;
use crate::world::{mix_seed, sample_scene, Scene};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

const CAPTION_STREAM: u64 = 0x00c0_ffee;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: u32,
    pub scene: Scene,
    /// image file name, relative to the manifest directory
    pub image: String,
    /// captions as token strings
    pub captions: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub seed: u64,
    pub captions_per_scene: usize,
    pub vocabulary: Vec<String>,
    pub records: Vec<CorpusRecord>,
}

impl CorpusManifest {
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_tokens(self.vocabulary.clone())
    }
}

/// Generates `num_scenes` records with `captions_per_scene` captions each and
/// persists them under `out_dir`. Each record's randomness is derived from
/// hash(seed, index), so output is independent of generation order.
pub fn build_corpus(
    num_scenes: usize,
    captions_per_scene: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<CorpusManifest> {
    if num_scenes == 0 {
        return Err(Error::invalid("num_scenes must be at least 1"));
    }
    let vocab = Vocabulary::toy_world();
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir)
        .map_err(|e| Error::io(format!("create {}", images_dir.display()), e))?;

    let mut records = Vec::with_capacity(num_scenes);
    for index in 0..num_scenes {
        let record_seed = mix_seed(seed, index as u64);
        let scene = sample_scene(record_seed);
        let image = render_scene(&scene);
        let image_name = format!("images/scene_{index:05}.ppm");
        image.save_ppm(&out_dir.join(&image_name))?;
        let captions =
            describe_scene(&vocab, &scene, captions_per_scene, mix_seed(record_seed, CAPTION_STREAM))?;
        records.push(CorpusRecord {
            id: index as u32,
            scene,
            image: image_name,
            captions: captions
                .iter()
                .map(|c| c.words(&vocab).iter().map(|w| w.to_string()).collect())
                .collect(),
        });
    }

    let manifest = CorpusManifest {
        version: MANIFEST_VERSION,
        seed,
        captions_per_scene,
        vocabulary: vocab.tokens().to_vec(),
        records,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    Ok(manifest)
}

/// A corpus loaded back into memory: images decoded from their pixmaps and
/// captions re-encoded through the manifest vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub vocab: Vocabulary,
    pub images: Vec<Image>,
    pub captions: Vec<Vec<Caption>>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let raw = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(format!("read {}", manifest_path.display()), e))?;
    let manifest: CorpusManifest = serde_json::from_str(&raw).map_err(|e| Error::MalformedFile {
        path: manifest_path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::UnknownSchemaVersion {
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    let vocab = manifest.vocabulary()?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut images = Vec::with_capacity(manifest.records.len());
    let mut captions = Vec::with_capacity(manifest.records.len());
    for record in &manifest.records {
        images.push(Image::load_ppm(&dir.join(&record.image))?);
        captions.push(
            record
                .captions
                .iter()
                .map(|words| Caption::from_words(&vocab, words))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(Corpus { manifest, vocab, images, captions })
}

/// Path of a corpus manifest given either the directory or the file itself.
pub fn manifest_path(corpus: &Path) -> PathBuf {
    if corpus.is_dir() {
        corpus.join(MANIFEST_FILE)
    } else {
        corpus.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::grammar::parse_caption;

    #[test]
    fn corpus_counts_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_corpus(20, 5, 123, dir.path()).unwrap();
        assert_eq!(manifest.records.len(), 20);
        let total: usize = manifest.records.iter().map(|r| r.captions.len()).sum();
        assert_eq!(total, 100);

        let corpus = load_corpus(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(corpus.len(), 20);
        for (record, captions) in corpus.manifest.records.iter().zip(&corpus.captions) {
            for caption in captions {
                assert_eq!(
                    parse_caption(&corpus.vocab, caption),
                    Some(record.scene.semantics()),
                    "record {}",
                    record.id
                );
            }
        }
    }

    #[test]
    fn generation_is_byte_identical_per_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        build_corpus(8, 5, 7, a.path()).unwrap();
        build_corpus(8, 5, 7, b.path()).unwrap();
        let ma = std::fs::read(a.path().join(MANIFEST_FILE)).unwrap();
        let mb = std::fs::read(b.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, mb);
        for i in 0..8 {
            let name = format!("images/scene_{i:05}.ppm");
            assert_eq!(
                std::fs::read(a.path().join(&name)).unwrap(),
                std::fs::read(b.path().join(&name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        build_corpus(2, 5, 0, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut manifest: CorpusManifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        manifest.version = 99;
        std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::UnknownSchemaVersion { .. })));
    }
}
