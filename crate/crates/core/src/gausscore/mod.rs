//! Dense 2D Gaussian and permutation primitives shared by every estimator.

mod gaussian;
mod permutation;

pub use gaussian::{
    empirical_moments, frame_log_density, gaussian_logpdf, regularize_cov, sym2, Formation, Point, PreparedFormation,
    PreparedGaussian, RoleGaussian, COV_FLOOR,
};
pub use permutation::{all_permutations, Permutation};

/// `Qᵀ y` for a frame; see [`Permutation::apply`].
pub fn apply_permutation<T: Clone>(q: &Permutation, y: &[T]) -> Vec<T> {
    q.apply(y)
}
