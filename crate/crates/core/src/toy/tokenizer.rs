use crate::scene2ds::{canonicalize, Color, Shape};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SYS: usize = 2;

const WORDS: &[&str] = &[
    "what", "color", "shape", "is", "at", "the", "of", "image", "which", "object", "top", "bottom", "left",
    "right", "to", "above", "below", "yes", "no",
];

/// Word-level vocabulary covering the 2DS-lite templates. Ids 0..3 are
/// `<pad>`, `<unk>` and `<sys>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    words: Vec<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        let mut words: Vec<String> = ["<pad>", "<unk>", "<sys>"].iter().map(|s| s.to_string()).collect();
        words.extend(WORDS.iter().map(|s| s.to_string()));
        words.extend(Color::ALL.iter().map(|c| c.name().to_string()));
        words.extend(Shape::ALL.iter().map(|s| s.name().to_string()));
        Self { words }
    }
}

impl Tokenizer {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.words.iter().position(|w| w == word).unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        canonicalize(text).split(' ').filter(|w| !w.is_empty()).map(|w| self.id(w)).collect()
    }

    /// Encodes and left-pads (or keeps the last `len` tokens) so the text
    /// always ends at the final position.
    pub fn encode_padded(&self, text: &str, len: usize) -> Vec<usize> {
        let ids = self.encode(text);
        if ids.len() >= len {
            return ids[ids.len() - len..].to_vec();
        }
        let mut out = vec![PAD; len - ids.len()];
        out.extend(ids);
        out
    }
}
