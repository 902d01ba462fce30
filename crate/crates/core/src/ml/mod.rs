//! Standardize → PCA → linear SVM, evaluated by leave-one-out
//! cross-validation, with exhaustive and greedy feature-subset search.

pub mod cv;
pub mod dataset;
pub mod pca;
pub mod scaler;
pub mod search;
pub mod svm;
pub mod synthetic;

pub use cv::{loocv_curve, loocv_evaluate, pc_sweep, CvConfig, CvMetrics, PcaScope, Sweep};
pub use dataset::Dataset;
pub use pca::PcaModel;
pub use scaler::Scaler;
pub use search::{binomial, greedy_extend, greedy_extend_to, subset_search, GreedyStep, SizeBest, SubsetResult};
pub use svm::{train_svm, SvmConfig, SvmModel};
pub use synthetic::PlantedSpec;
