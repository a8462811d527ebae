//! Closed vocabulary and token-id caption sequences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

pub fn is_special(id: TokenId) -> bool {
    id <= UNK
}

/// Token to id mapping. Specials occupy the fixed indices 0..=3 and precede
/// all content tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from content tokens; the four specials are prepended.
    pub fn new<S: AsRef<str>>(content_tokens: &[S]) -> Result<Self> {
        let mut tokens: Vec<String> =
            vec![PAD_TOKEN.into(), BOS_TOKEN.into(), EOS_TOKEN.into(), UNK_TOKEN.into()];
        tokens.extend(content_tokens.iter().map(|t| t.as_ref().to_string()));
        Self::from_tokens(tokens)
    }

    /// Builds from a full ordered token list, specials included (manifest form).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let specials = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];
        if tokens.len() < specials.len() || tokens[..4] != specials {
            return Err(Error::invalid("vocabulary must start with <pad> <bos> <eos> <unk>"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// The fixed vocabulary of the toy shapes-and-captions grammar.
    pub fn toy_world() -> Self {
        Self::new(&[
            // glue words used by the caption templates
            "a", "the", "there", "is", "and", "single", "picture", "image", "scene", "shows",
            "contains", "drawn", "on", "dark", "background",
            // spatial relation words
            "left", "right", "above", "below", "of",
            // colors
            "red", "green", "blue", "yellow", "magenta", "cyan",
            // shapes
            "circle", "square", "triangle",
        ])
        .expect("toy vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    /// FNV-1a over the ordered token list; stored in checkpoints so a model is
    /// never decoded against the wrong vocabulary.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tokens {
            for &b in t.as_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// A token-id sequence. Captions produced by decoders carry a trailing EOS;
/// captions stored in corpora are content tokens only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Caption {
    ids: Vec<TokenId>,
}

impl Caption {
    pub fn new(ids: Vec<TokenId>) -> Self {
        debug_assert!(!ids.is_empty(), "captions are non-empty");
        Caption { ids }
    }

    /// Tokenizes on whitespace after lowercasing; unknown words map to UNK.
    pub fn from_text(vocab: &Vocabulary, text: &str) -> Result<Self> {
        let ids: Vec<TokenId> =
            text.split_whitespace().map(|w| vocab.id_or_unk(&w.to_lowercase())).collect();
        if ids.is_empty() {
            return Err(Error::invalid("caption text has no tokens"));
        }
        Ok(Caption { ids })
    }

    pub fn from_words<S: AsRef<str>>(vocab: &Vocabulary, words: &[S]) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::invalid("caption has no tokens"));
        }
        Ok(Caption { ids: words.iter().map(|w| vocab.id_or_unk(w.as_ref())).collect() })
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Content tokens with all specials removed.
    pub fn content(&self) -> Vec<TokenId> {
        self.ids.iter().copied().filter(|&id| !is_special(id)).collect()
    }

    /// Copy with a trailing EOS appended (no-op if already terminated).
    pub fn with_eos(&self) -> Caption {
        let mut ids = self.ids.clone();
        if ids.last() != Some(&EOS) {
            ids.push(EOS);
        }
        Caption { ids }
    }

    /// Copy with specials stripped, or None if nothing remains.
    pub fn content_caption(&self) -> Option<Caption> {
        let ids = self.content();
        if ids.is_empty() {
            None
        } else {
            Some(Caption { ids })
        }
    }

    pub fn words<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.ids.iter().map(|&id| vocab.token(id)).collect()
    }

    pub fn text(&self, vocab: &Vocabulary) -> String {
        self.words(vocab).join(" ")
    }
}
