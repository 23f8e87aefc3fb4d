//! Refitting final regions and grouping their features into anomaly types.

mod cluster;
mod features;
mod metrics;
mod report;

pub use cluster::{
    agglomerative, fcm_memberships, fuzzy_cmeans, kmeans, kmeans_pp_init, lloyd, Algorithm,
    ClusterAssignment, FcmParams, Linkage,
};
pub use features::{fit_region_feature, fit_region_features, standardize, RegionFeature};
pub use metrics::{ari, clustering_accuracy, contingency, hungarian, nmi};
pub use report::{
    categorize_results, CategorizeReport, CategorizeRequest, CategorizedRegion, ClusterScores,
};
