//! Attribution and interaction analyses of a trained model.

mod ablation;
mod community;
mod ig;
mod interactions;

pub use ablation::{
    ablate_all, ablate_channel, ablation_csv, ablation_report, channel_saliency, zero_channels, ChannelImportance,
};
pub use community::{
    communities_csv, default_edge_threshold, greedy_modularity, greedy_modularity_adj, modularity, CommunityPartition,
};
pub use ig::{
    aggregate_attributions, integrated_gradients, integrated_gradients_fn, sample_embedding, AttributionEntry,
    AttributionReport, SampleAttribution, DEFAULT_STEPS,
};
pub use interactions::{
    detect_hubs, extract_interactions, head_averaged_attention, hubs_csv, InteractionMatrix,
    DEFAULT_MIN_COOCCURRENCE,
};
