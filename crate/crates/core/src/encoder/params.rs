use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::numkernel::{Element, Tensor};

const INIT_STD: f64 = 0.02;

macro_rules! slot_struct {
    ($(#[$meta:meta])* $name:ident { $($field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T> {
            $(pub $field: T,)*
        }

        impl<T> $name<T> {
            pub const FIELDS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn map<U>(&self, mut f: impl FnMut(&'static str, &T) -> U) -> $name<U> {
                $name { $($field: f(stringify!($field), &self.$field),)* }
            }

            pub fn try_map<U>(&self, mut f: impl FnMut(&'static str, &T) -> Result<U>) -> Result<$name<U>> {
                Ok($name { $($field: f(stringify!($field), &self.$field)?,)* })
            }

            fn refs(&self) -> Vec<(&'static str, &T)> {
                vec![$((stringify!($field), &self.$field)),*]
            }

            fn refs_mut(&mut self) -> Vec<(&'static str, &mut T)> {
                vec![$((stringify!($field), &mut self.$field)),*]
            }
        }
    };
}

slot_struct!(
    /// Per-layer slots: attention projections, feed-forward, and both norms.
    LayerSet {
        query_weight, query_bias, key_weight, key_bias, value_weight, value_bias,
        output_weight, output_bias, attn_norm_gain, attn_norm_bias,
        ff_in_weight, ff_in_bias, ff_out_weight, ff_out_bias, ff_norm_gain, ff_norm_bias,
    }
);

slot_struct!(
    /// Embedding-level slots.
    EmbeddingSet {
        token, position, segment, norm_gain, norm_bias,
    }
);

slot_struct!(
    /// Scalar score head over a `[CLS]` hidden state.
    ClassifierSet { weight, bias }
);

/// One value per model parameter, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub embeddings: EmbeddingSet<T>,
    pub layers: Vec<LayerSet<T>>,
    pub classifier: ClassifierSet<T>,
}

impl<T> ParamSet<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ParamSet<U> {
        ParamSet {
            embeddings: self.embeddings.map(&mut f),
            layers: self.layers.iter().map(|l| l.map(&mut f)).collect(),
            classifier: self.classifier.map(&mut f),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(&str, &T) -> Result<U>) -> Result<ParamSet<U>> {
        Ok(ParamSet {
            embeddings: self.embeddings.try_map(&mut f)?,
            layers: self
                .layers
                .iter()
                .map(|l| l.try_map(&mut f))
                .collect::<Result<_>>()?,
            classifier: self.classifier.try_map(&mut f)?,
        })
    }

    /// Fully qualified slot names with references, in canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out: Vec<(String, &T)> = self
            .embeddings
            .refs()
            .into_iter()
            .map(|(n, t)| (format!("embeddings.{n}"), t))
            .collect();
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.refs().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out.extend(
            self.classifier
                .refs()
                .into_iter()
                .map(|(n, t)| (format!("classifier.{n}"), t)),
        );
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out: Vec<(String, &mut T)> = self
            .embeddings
            .refs_mut()
            .into_iter()
            .map(|(n, t)| (format!("embeddings.{n}"), t))
            .collect();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(
                l.refs_mut()
                    .into_iter()
                    .map(|(n, t)| (format!("layers.{i}.{n}"), t)),
            );
        }
        out.extend(
            self.classifier
                .refs_mut()
                .into_iter()
                .map(|(n, t)| (format!("classifier.{n}"), t)),
        );
        out
    }

    pub fn values(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }
}

/// Expected shape of every slot for `cfg`.
pub fn param_shapes(cfg: &EncoderConfig) -> ParamSet<Vec<usize>> {
    let d = cfg.model_width;
    let f = cfg.ff_width;
    let layer = LayerSet {
        query_weight: vec![d, d],
        query_bias: vec![d],
        key_weight: vec![d, d],
        key_bias: vec![d],
        value_weight: vec![d, d],
        value_bias: vec![d],
        output_weight: vec![d, d],
        output_bias: vec![d],
        attn_norm_gain: vec![d],
        attn_norm_bias: vec![d],
        ff_in_weight: vec![d, f],
        ff_in_bias: vec![f],
        ff_out_weight: vec![f, d],
        ff_out_bias: vec![d],
        ff_norm_gain: vec![d],
        ff_norm_bias: vec![d],
    };
    ParamSet {
        embeddings: EmbeddingSet {
            token: vec![cfg.vocab_size, d],
            position: vec![cfg.max_seq_len, d],
            segment: vec![2, d],
            norm_gain: vec![d],
            norm_bias: vec![d],
        },
        layers: vec![layer; cfg.num_layers],
        classifier: ClassifierSet {
            weight: vec![d, 1],
            bias: vec![1],
        },
    }
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

fn init_kind(name: &str) -> Init {
    if name.ends_with("gain") {
        Init::Ones
    } else if name.ends_with("bias") {
        Init::Zeros
    } else {
        Init::Normal
    }
}

fn init_tensor<E: Element>(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<E> {
    match init_kind(name) {
        Init::Ones => Tensor::full(shape, E::one()),
        Init::Zeros => Tensor::zeros(shape),
        Init::Normal => {
            let normal = Normal::new(0.0, INIT_STD).expect("valid std");
            Tensor::from_fn(shape, |_| E::lit(normal.sample(rng)))
        }
    }
}

/// Encoder weights plus the layer the score head reads from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<E: Element = f64> {
    pub config: EncoderConfig,
    /// Layer whose `[CLS]` hidden state feeds the classifier.
    pub readout_layer: usize,
    pub tensors: ParamSet<Tensor<E>>,
}

impl<E: Element> ModelParams<E> {
    /// Weights `N(0, 0.02²)`, biases zero, norm gains one; seeded by `config.seed`.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = param_shapes(&config).map(|name, shape| init_tensor(name, shape, &mut rng));
        Ok(Self {
            config,
            readout_layer: config.num_layers - 1,
            tensors,
        })
    }

    pub fn from_parts(
        config: EncoderConfig,
        readout_layer: usize,
        tensors: ParamSet<Tensor<E>>,
    ) -> Result<Self> {
        let p = Self {
            config,
            readout_layer,
            tensors,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.readout_layer >= self.config.num_layers {
            return Err(Error::Config(format!(
                "readout layer {} outside [0, {})",
                self.readout_layer, self.config.num_layers
            )));
        }
        let shapes = param_shapes(&self.config);
        if shapes.layers.len() != self.tensors.layers.len() {
            return Err(Error::Shape(format!(
                "{} layers for a {}-layer config",
                self.tensors.layers.len(),
                self.config.num_layers
            )));
        }
        for ((name, want), (_, t)) in shapes.named().into_iter().zip(self.tensors.named()) {
            if t.shape() != want.as_slice() {
                return Err(Error::Shape(format!(
                    "{name}: {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Replaces the classifier with a freshly initialised one reading `layer`.
    pub fn attach_classifier(&mut self, layer: usize, seed: u64) -> Result<()> {
        if layer >= self.config.num_layers {
            return Err(Error::Config(format!(
                "probe layer {layer} outside [0, {})",
                self.config.num_layers
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = param_shapes(&self.config);
        self.tensors.classifier = shapes
            .classifier
            .map(|name, shape| init_tensor(name, shape, &mut rng));
        self.readout_layer = layer;
        Ok(())
    }

    pub fn cast<F: Element>(&self) -> ModelParams<F> {
        ModelParams {
            config: self.config,
            readout_layer: self.readout_layer,
            tensors: self.tensors.map(|_, t| t.cast()),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.values().iter().map(|t| t.len()).sum()
    }

    /// SHA-256 over every encoder (non-classifier) value.
    pub fn encoder_checksum(&self) -> String {
        digest(
            self.tensors
                .named()
                .into_iter()
                .filter(|(n, _)| !n.starts_with("classifier.")),
        )
    }

    /// SHA-256 over every value including the classifier and readout layer.
    pub fn checksum(&self) -> String {
        let mut named = self.tensors.named();
        let readout = Tensor::<E>::scalar(E::lit(self.readout_layer as f64));
        named.push(("readout_layer".into(), &readout));
        digest(named.into_iter())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().iter().all(|t| t.all_finite())
    }
}

fn digest<'a, E: Element>(items: impl Iterator<Item = (String, &'a Tensor<E>)>) -> String {
    let mut h = Sha256::new();
    for (name, t) in items {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.values() {
            h.update(v.as_f64().to_bits().to_le_bytes());
        }
    }
    crate::dataset::vocab::hex(&h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            model_width: 8,
            key_width: 4,
            ff_width: 16,
            vocab_size: 20,
            max_seq_len: 12,
            seed: 3,
        }
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = ModelParams::<f64>::init(tiny()).unwrap();
        let b = ModelParams::<f64>::init(tiny()).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let c = ModelParams::<f64>::init(EncoderConfig { seed: 4, ..tiny() }).unwrap();
        assert_ne!(a.checksum(), c.checksum());
        assert_eq!(a.tensors.layers[0].attn_norm_gain.values(), &[1.0; 8]);
        assert_eq!(a.tensors.layers[0].query_bias.values(), &[0.0; 8]);
    }

    #[test]
    fn names_are_unique_and_ordered() {
        let a = ModelParams::<f64>::init(tiny()).unwrap();
        let names: Vec<String> = a.tensors.named().into_iter().map(|(n, _)| n).collect();
        let set: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert_eq!(names[0], "embeddings.token");
        assert_eq!(names.last().unwrap(), "classifier.bias");
    }

    #[test]
    fn attaching_a_classifier_keeps_encoder() {
        let mut a = ModelParams::<f64>::init(tiny()).unwrap();
        let before = a.encoder_checksum();
        a.attach_classifier(0, 11).unwrap();
        assert_eq!(a.readout_layer, 0);
        assert_eq!(a.encoder_checksum(), before);
        assert!(a.attach_classifier(2, 11).is_err());
    }
}
