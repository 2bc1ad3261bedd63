//! Logistic latent-trait models: response functions, information curves,
//! EM calibration, ability scoring and model-fit statistics.

pub mod em;
pub mod fit_stats;
pub mod fitted;
pub mod model;
pub mod quadrature;
pub mod response;
pub mod scoring;
pub mod scree;

pub use em::{fit_em, marginal_log_likelihood, EmConfig};
pub use fit_stats::{fit_statistics, information_criteria, margin_statistic, MarginStatistic};
pub use fitted::{FitStatistics, FittedModel, Prior};
pub use model::{irf, item_information, standard_error_curve, standard_error_from_information, test_information, ItemParameters, ModelFamily};
pub use quadrature::QuadratureSpec;
pub use response::ResponseMatrix;
pub use scoring::{estimate_ability, AbilityFlag, AbilityMethod, LatentAbility, Scorer};
pub use scree::scree_eigenvalues;
