//! Post-LN BERT-style encoder with a scalar `[CLS]` score head.

mod config;
mod forward;
mod params;

pub use config::{EncoderConfig, HeadId};
pub use forward::{
    check_layout, cls_features, encode_batch, encode_pair, forward_with_scaled_attention,
    predict, probabilities, scaled_attention_passes, score_instance, score_sentences,
    AttentionCapture, HeadGrid, HeadMask, InstanceScore, Layout, ScaledPass, Scorer,
    SentenceEncoding, LAYER_NORM_EPS,
};
pub(crate) use forward::{build_graph, classify, load_params, GraphSpec};
pub use params::{param_shapes, ClassifierSet, EmbeddingSet, LayerSet, ModelParams, ParamSet};
