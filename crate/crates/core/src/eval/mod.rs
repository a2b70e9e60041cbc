//! Downstream evaluation: prediction tasks, count features, patient-aware
//! splits, a regularized linear classifier and AUC.

pub mod experiment;
pub mod features;
pub mod logistic;
pub mod metrics;
pub mod simulation;
pub mod split;
pub mod tasks;

pub use experiment::{run_experiment, ExperimentConfig, ResultEntry, ResultsTable};
pub use features::{featurize, FeatureMatrix, Representation, Token};
pub use logistic::{fit_linear_classifier, fit_logistic, ClassifierConfig, LinearModel};
pub use metrics::{auc, auc_brute_force, paired_t_test, PairedTest};
pub use split::patient_aware_split;
pub use tasks::{label_events, make_task_rows, Event, EventKind, Horizon, TaskRow, TaskSpec};
