//! Link-strength metrics over attention weights or attribution scores.
//!
//! Every function takes a [`LinkSource`]-agnostic per-head matrix grid, so
//! attention- and attribution-derived numbers share one code path.

mod link;
mod mac;
mod maw;
mod stats;

pub use link::{a2q_link_weight, cls_link_weight, link_matrix, LinkMatrix, LinkSource};
pub use mac::{
    correct_split, head_count_table, mac_mas_all_heads, mac_mas_for_instance,
    mac_overlap_and_accuracy, HeadCountRow, MacMas, MacStats, SplitStats,
};
pub use maw::{
    maw_accuracies, maw_baseline, maw_for_head, maw_hits, per_layer_maw, relation_breakdown,
    LayerMawRow, MawHit, MawResult, RelationRow, DEFAULT_MIN_RELATION_COUNT,
};
pub use stats::{mean_std, paired_permutation_test, ranks, spearman, SeedSummary};
