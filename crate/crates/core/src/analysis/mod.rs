//! Integrated-gradients attribution over attention heads, and head pruning.

mod ig;
mod probe;
mod prune;

pub use ig::{
    attribute_instance, integrated_gradients, riemann_integrated_gradients, Attribution,
    AttributionTensor, IgConfig, DEFAULT_IG_CHUNK, DEFAULT_IG_STEPS,
};
pub use probe::{instance_grids, probe_mac, probe_maw, sentence_grid, MacProbe, MawProbe};
pub use prune::{
    curve_area, head_order, layerwise_head_order, prune_heads, pruning_curve, CurvePoint, PruneSpec, PrunedModel,
};
