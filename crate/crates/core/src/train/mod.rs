//! Target normalization, optimization, evaluation metrics and ablations.

pub mod ablation;
pub mod adam;
pub mod metrics;
pub mod normalize;
pub mod trainer;

pub use ablation::{ablate, AblationRow, Grid};
pub use adam::{Adam, AdamConfig};
pub use metrics::{MetricsReport, Prediction};
pub use normalize::NormStats;
pub use trainer::{evaluate, train, Dataset, EpochLog, TrainConfig, TrainOutcome};
