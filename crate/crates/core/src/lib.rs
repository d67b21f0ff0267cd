//! A desk-scale preference-alignment laboratory.
//!
//! The crate builds small synthetic "worlds" — finite prompt/response
//! universes with a known linear ground-truth reward — samples ranked
//! preference data from the Plackett-Luce model over those rewards, and
//! trains reward models against a family of ranking losses:
//!
//! * full-ranking Plackett-Luce and its n=2 special case Bradley-Terry,
//! * hardness-weighted preference sampling (HPS), exact and single-draw
//!   Monte Carlo, plus a two-level weighted variant,
//! * SLiC-style hinge and LiPO-style lambda losses as baselines.
//!
//! Because the ground truth is known, estimator error, reward margins and
//! ranking accuracy are all measurable exactly; the [`experiments`] module
//! turns those measurements into reproducible, resumable sweeps.

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod jsonio;
pub mod loss;
pub mod metrics;
pub mod numeric;
pub mod reward;
pub mod train;
pub mod world;

pub use dataset::{annotate_rewards, generate_dataset, pl_rank_probability, sample_ranking, AnnotateMode, PreferenceDataset, PreferenceSample};
pub use error::{PrefError, Result};
pub use loss::{
    bt_loss, hard_sampling_distribution, hps_exact_loss, hps_sampled_loss, lipo_loss, loss_gradient_check, pl_loss,
    slic_value, weighted_hps_loss, Evaluator, HpsDenominator, LossKind, LossValue,
};
pub use metrics::{compute_report, estimator_error, sigma_d, MetricReport};
pub use reward::{ModelKind, RewardModel};
pub use train::{fit_full_batch, train, GammaSchedule, OptimizerKind, RunRecord, TrainConfig};
pub use world::{build_world, derive_seed, World, WorldConfig};
