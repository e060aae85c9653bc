pub mod baselines;
pub mod depth;
pub mod error;
pub mod harness;
pub mod mechanism;
pub mod noise;
pub mod ptr;
pub mod regression;
pub mod sampler;

pub use baselines::{non_dp_baseline, ssp_regression, DataBounds};
pub use depth::{
    approx_tukey_depth, compute_log_volumes, sorted_projections, LogVolumes, SortedProjections,
};
pub use error::{Error, Result};
pub use harness::{
    run_experiment, DataSource, ExperimentConfig, ExperimentReport, Method, ReportFormat,
};
pub use mechanism::{tukey_em, tukey_em_traced, MechanismResult, PrivacyBudget};
pub use noise::RngHandle;
pub use regression::{Dataset, ModelSet, SyntheticSpec};
