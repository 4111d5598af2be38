//! Formation comparison: overlap, Wasserstein distances, embedding and clustering.

mod cluster;
mod distance;
mod embed;

pub use cluster::{kmeans, ClusterResult, KMeansOptions};
pub use distance::{
    bhattacharyya_gaussian, formation_overlap_index, mixture_wasserstein, mixture_wasserstein_matching,
    substitution_distance_report, w2_gaussian, w2_gaussian_squared, SubstitutionRow,
};
pub use embed::{embedding_distance, sliced_embedding, Embedding, DEFAULT_DIRECTIONS};
