//! Experimental protocol: splits, model builders, training, R² scoring,
//! saliency and the summary table.

pub mod arch;
pub mod evaluate;
pub mod metrics;
pub mod model;
pub mod run;
pub mod saliency;
pub mod split;
pub mod train;

pub use arch::{cnn_architecture, cnn_grid, lstm_architecture, parse_element, InputLayout, ModelKind};
pub use evaluate::{evaluate_all, summary_table, write_summary, SummaryRow};
pub use metrics::{r_squared, r_squared_columns, RSquared};
pub use model::{Member, MemberBody, TrainedModel};
pub use run::{evaluate_model, evaluate_on, train_model, ExperimentConfig, TrainingReport};
pub use saliency::{rank_features, saliency, Category, SaliencyReport, SalientFeature};
pub use split::{split_indices, Split, SplitSpec};
pub use train::{train_network, EpochLoss, Samples, TrainConfig, TrainingHistory};
