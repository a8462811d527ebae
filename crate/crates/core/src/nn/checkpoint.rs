//! Binary checkpoint format.
//!
//! Layout: magic "VCS1", format version byte, model-kind byte, vocabulary
//! hash (u64 LE), tensor count (u32 LE), then the shape table in declaration
//! order (name length u16 LE, UTF-8 name, rows u32 LE, cols u32 LE), then
//! every tensor's f64 values little-endian in the same order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::math::Mat;
use crate::nn::models::{Autoencoder, Captioner, Paraphraser};
use crate::nn::tape::ParamSet;
use crate::text::Vocabulary;

pub const MAGIC: [u8; 4] = *b"VCS1";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Autoencoder,
    Captioner,
    Paraphraser,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Autoencoder => 1,
            ModelKind::Captioner => 2,
            ModelKind::Paraphraser => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Autoencoder),
            2 => Some(ModelKind::Captioner),
            3 => Some(ModelKind::Paraphraser),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Autoencoder => "autoencoder",
            ModelKind::Captioner => "captioner",
            ModelKind::Paraphraser => "paraphraser",
        }
    }
}

#[derive(Debug)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub vocab_hash: u64,
    pub entries: Vec<(String, Mat)>,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    kind: ModelKind,
    vocab_hash: u64,
    params: &ParamSet,
) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[FORMAT_VERSION, kind.tag()])?;
    w.write_all(&vocab_hash.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, mat) in params.entries() {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(mat.rows as u32).to_le_bytes())?;
        w.write_all(&(mat.cols as u32).to_le_bytes())?;
    }
    for (_, mat) in params.entries() {
        for v in &mat.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(
    path: &Path,
    kind: ModelKind,
    vocab_hash: u64,
    params: &ParamSet,
) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, kind, vocab_hash, params)
        .and_then(|()| w.flush())
        .map_err(|e| Error::io(format!("write {}", path.display()), e))
}

pub fn read_checkpoint<R: Read>(mut r: R, path: &Path) -> Result<Checkpoint> {
    let bad = |detail: &str| Error::BadCheckpoint { path: path.to_path_buf(), detail: detail.into() };
    let mut head = [0u8; 6];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if head[0..4] != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    if head[4] != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", head[4])));
    }
    let kind = ModelKind::from_tag(head[5]).ok_or_else(|| bad("unknown model kind"))?;
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8).map_err(|_| bad("truncated vocabulary hash"))?;
    let vocab_hash = u64::from_le_bytes(buf8);
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(|_| bad("truncated tensor count"))?;
    let count = u32::from_le_bytes(buf4) as usize;

    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut buf2 = [0u8; 2];
        r.read_exact(&mut buf2).map_err(|_| bad("truncated shape table"))?;
        let name_len = u16::from_le_bytes(buf2) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| bad("truncated tensor name"))?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        r.read_exact(&mut buf4).map_err(|_| bad("truncated shape table"))?;
        let rows = u32::from_le_bytes(buf4) as usize;
        r.read_exact(&mut buf4).map_err(|_| bad("truncated shape table"))?;
        let cols = u32::from_le_bytes(buf4) as usize;
        shapes.push((name, rows, cols));
    }

    let mut entries = Vec::with_capacity(count);
    for (name, rows, cols) in shapes {
        let mut data = vec![0.0f64; rows * cols];
        for v in data.iter_mut() {
            r.read_exact(&mut buf8).map_err(|_| bad("truncated parameter payload"))?;
            *v = f64::from_le_bytes(buf8);
        }
        entries.push((name, Mat::from_vec(rows, cols, data)));
    }
    let mut trailer = [0u8; 1];
    if r.read(&mut trailer).map_err(|_| bad("read error"))? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(Checkpoint { kind, vocab_hash, entries })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    read_checkpoint(std::io::BufReader::new(file), path)
}

fn check_kind_and_vocab(ckpt: &Checkpoint, expected: ModelKind, vocab: &Vocabulary, path: &Path) -> Result<()> {
    if ckpt.kind != expected {
        return Err(Error::BadCheckpoint {
            path: path.to_path_buf(),
            detail: format!("holds a {} model, expected {}", ckpt.kind.name(), expected.name()),
        });
    }
    if ckpt.vocab_hash != vocab.fingerprint() {
        return Err(Error::VocabularyMismatch {
            found: ckpt.vocab_hash,
            expected: vocab.fingerprint(),
        });
    }
    Ok(())
}

/// Load-for-use: the stored vocabulary hash must match the vocabulary the
/// model will decode against.
pub fn load_autoencoder(path: &Path, vocab: &Vocabulary) -> Result<Autoencoder> {
    let ckpt = load_checkpoint(path)?;
    check_kind_and_vocab(&ckpt, ModelKind::Autoencoder, vocab, path)?;
    Autoencoder::rebuild(ckpt.entries)
}

pub fn load_captioner(path: &Path, vocab: &Vocabulary) -> Result<Captioner> {
    let ckpt = load_checkpoint(path)?;
    check_kind_and_vocab(&ckpt, ModelKind::Captioner, vocab, path)?;
    Captioner::rebuild(ckpt.entries)
}

pub fn load_paraphraser(path: &Path, vocab: &Vocabulary) -> Result<Paraphraser> {
    let ckpt = load_checkpoint(path)?;
    check_kind_and_vocab(&ckpt, ModelKind::Paraphraser, vocab, path)?;
    Paraphraser::rebuild(ckpt.entries)
}
