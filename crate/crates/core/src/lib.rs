//! Decision-template fusion of base-classifier softmax outputs.
//!
//! Fit one `K x C` template per class from the training decision profiles of
//! `K` base classifiers, then label new samples by the template most similar
//! to their profile under one of six fuzzy measures (`S1`, `S2`, `I1`, `I2`,
//! `C`, `N`). Multi-crop samples are combined by majority vote.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod fusion;
pub mod inference;
pub mod metrics;
pub mod similarity;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use fusion::{
    build_profile, fit_templates, softmax, CrispLabel, DecisionProfile, DecisionTemplateSet,
    DecisionVector, EnsembleSpec, LabelSpace, LogitVector, ProbMatrix, RowSumPolicy,
};
pub use inference::{predict, predict_batch, vote_crops, CropGroup, CropSelection, Prediction};
pub use similarity::{score, MeasureKind};
