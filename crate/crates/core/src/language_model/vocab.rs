//! Whitespace word-level vocabulary.
//!
//! Text is split on whitespace; detokenization joins with single spaces, so
//! `detokenize(tokenize(t)) == t` for every text made of vocabulary words
//! separated by single spaces. Words outside the vocabulary, including the
//! literal spelling of a special token, map to `<unk>`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const IMG_START: usize = 3;
pub const IMG_END: usize = 4;
pub const UNK: usize = 5;

pub const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<img>", "</img>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Specials first, then the sorted distinct words of `corpus`.
    pub fn from_corpus<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<&str> = corpus
            .into_iter()
            .flat_map(str::split_whitespace)
            .filter(|w| !SPECIALS.contains(w))
            .collect();
        let tokens = SPECIALS.iter().copied().chain(words).map(String::from).collect();
        Vocab::from_tokens(tokens).expect("corpus vocabulary is well-formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(Error::usage("vocabulary must start with the special tokens in order"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::usage(format!("token {i} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::usage(format!("duplicate token {t}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.split_whitespace()
            .map(|w| match self.index.get(w) {
                Some(&id) if !Vocab::is_special(id) => id,
                _ => UNK,
            })
            .collect()
    }

    /// Joins token strings with single spaces; control specials are skipped,
    /// `<unk>` is rendered literally.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| !Vocab::is_special(id) || id == UNK)
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens = text.lines().map(String::from).collect();
        Vocab::from_tokens(tokens).map_err(|e| Error::format(path, e.to_string()))
    }
}
