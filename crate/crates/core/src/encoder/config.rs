use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_width: usize,
    pub key_width: usize,
    pub ff_width: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    /// Desk-scale default: 4 layers of 4 heads, width 128.
    fn default() -> Self {
        Self {
            num_layers: 4,
            num_heads: 4,
            model_width: 128,
            key_width: 32,
            ff_width: 256,
            vocab_size: 2000,
            max_seq_len: 48,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("model_width", self.model_width),
            ("key_width", self.key_width),
            ("ff_width", self.ff_width),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.model_width != self.num_heads * self.key_width {
            return Err(Error::Config(format!(
                "model_width {} != num_heads {} x key_width {}",
                self.model_width, self.num_heads, self.key_width
            )));
        }
        Ok(())
    }

    pub fn total_heads(&self) -> usize {
        self.num_layers * self.num_heads
    }

    pub fn head_ids(&self) -> impl Iterator<Item = HeadId> + '_ {
        (0..self.num_layers)
            .flat_map(move |layer| (0..self.num_heads).map(move |head| HeadId { layer, head }))
    }
}

/// Attention head `head` of layer `layer`, both 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }

    pub fn flat(self, num_heads: usize) -> usize {
        self.layer * num_heads + self.head
    }
}

impl std::fmt::Display for HeadId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.layer, self.head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_consistent() {
        let c = EncoderConfig::default();
        c.validate().unwrap();
        assert_eq!(c.head_ids().count(), 16);
    }

    #[test]
    fn width_must_split_into_heads() {
        let c = EncoderConfig {
            key_width: 30,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = EncoderConfig {
            ff_width: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
