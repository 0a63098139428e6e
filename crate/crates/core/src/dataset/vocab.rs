use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;

const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
const CONTINUATION: &str = "##";

/// Lower-cases and splits on whitespace, emitting punctuation as separate words.
pub fn basic_split(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() {
                current.extend(ch.to_lowercase());
            } else {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(ch.to_string());
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabOptions {
    /// Words seen fewer times than this are split into pieces.
    pub min_count: usize,
    /// Words longer than this (in characters) are split into pieces.
    pub max_word_len: usize,
    /// Character length of the pieces a split word is cut into.
    pub chunk_len: usize,
}

impl Default for VocabOptions {
    fn default() -> Self {
        Self {
            min_count: 2,
            max_word_len: 8,
            chunk_len: 4,
        }
    }
}

/// Token/id table with a greedy longest-match subword tokenizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, opts: &VocabOptions) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for w in basic_split(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut whole: Vec<(&String, usize)> = Vec::new();
        let mut pieces: BTreeSet<String> = BTreeSet::new();
        for (word, &count) in &counts {
            let chars: Vec<char> = word.chars().collect();
            for (i, ch) in chars.iter().enumerate() {
                pieces.insert(if i == 0 {
                    ch.to_string()
                } else {
                    format!("{CONTINUATION}{ch}")
                });
            }
            if count >= opts.min_count && chars.len() <= opts.max_word_len {
                whole.push((word, count));
            } else {
                for (i, chunk) in chars.chunks(opts.chunk_len.max(1)).enumerate() {
                    let s: String = chunk.iter().collect();
                    pieces.insert(if i == 0 { s } else { format!("{CONTINUATION}{s}") });
                }
            }
        }
        whole.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
        for (w, _) in whole {
            if seen.insert(w.clone()) {
                tokens.push(w.clone());
            }
        }
        for p in pieces {
            if seen.insert(p.clone()) {
                tokens.push(p);
            }
        }
        Self::from_tokens(tokens).expect("builder emits a valid table")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Validation(format!(
                "vocabulary must start with {SPECIALS:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Validation(format!("empty token at id {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Validation(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Greedy longest-match pieces for one word; `[UNK]` if any part is unmatched.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let body: String = chars[start..end].iter().collect();
                let piece = if start == 0 {
                    body
                } else {
                    format!("{CONTINUATION}{body}")
                };
                if let Some(id) = self.id(&piece) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => return vec![UNK],
            }
        }
        out
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        basic_split(text)
            .iter()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or("[?]")).collect()
    }

    /// Hex SHA-256 of the newline-joined token list.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
