//! Multimodal disaster prediction from per-city weather statistics, text
//! embeddings and satellite-image embeddings.
//!
//! The crate covers the modelling half of the workflow: manifest ingestion
//! ([`manifest`]), dataset shaping ([`dataset`]), SMOTE oversampling
//! ([`resample`]), gradient-boosted trees ([`boosting`]), evaluation
//! ([`metrics`]) and the modality ablation runner ([`pipeline`]).

pub mod boosting;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod resample;
pub mod synth;

pub use boosting::{load_model, save_model, train, BoostParams, Model, Trainer, TreeNode};
pub use dataset::{
    fuse_features, stratified_split, City, ClassCounts, Dataset, DisasterType, FeatureVector, Modality, ModalityMask,
    Sample,
};
pub use error::{Error, Result};
pub use manifest::{parse_manifest, write_manifest};
pub use metrics::{ConfusionMatrix, MetricSet};
pub use pipeline::{default_combos, render_report, run_ablation, AblationSpec, ReportFormat, ReportTable};
pub use resample::{smote_oversample, SmoteParams, SmoteTarget};
