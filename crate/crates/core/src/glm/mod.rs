//! Lifted logistic models of pairwise disagreement: feature map, MLE,
//! matrix maintenance and confidence radii.

pub mod confidence;
pub mod estimator;
pub mod lift;
pub mod linalg;
pub mod link;
pub mod mle;

pub use confidence::{alpha_radius, beta_radius, ConfidenceConfig};
pub use estimator::{GlmEstimator, PairEstimator, RefitSchedule};
pub use lift::FeatureMapConfig;
pub use link::{kappa_lower_bound, sigmoid, sigmoid_derivative};
pub use mle::{score_residual, solve_mle, MleFit, MleSolver, ObservationLog};
