//! Spherical K-Means, multi-view CH K-Means, and agglomerative clustering.

mod hac;
mod multiview;
mod spherical;

pub use hac::{hac, Linkage};
pub use multiview::{
    assign_to, ch_index, ch_index_of, consensus_means, final_assign, mv_ch_kmeans, mv_ch_kmeans_from, mvc_loss,
    view_loss, FusionResult, LossRecord, MvcConfig, CH_DENOMINATOR_FLOOR,
};
pub use spherical::{cluster_centers, e_step, kmeans_pp_init, m_step, random_init, spherical_kmeans, KMeansFit};
