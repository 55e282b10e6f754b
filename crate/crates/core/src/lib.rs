//! Recursive Bayesian inference of an intended symbol from per-presentation
//! binary ERP evidence.
//!
//! * [`bayes`]: posterior state and the discriminative / generative update rules.
//! * [`dsp`]: notch and bandpass filtering, downsampling, epoching, z-scoring.
//! * [`models`]: logistic regression, LDA, PCA, KDE and the evidence-model interface.
//! * [`synth`]: synthetic ERP datasets with stratified train/test splits.
//! * [`sim`]: simulated typing, balanced accuracy and information transfer rate.
//! * [`io`], [`config`], [`report`], [`cli`]: file formats and the command-line surface.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod cli;
pub mod config;
pub mod dsp;
pub mod io;
pub mod models;
pub mod report;
pub mod rng;
pub mod sim;
pub mod synth;

pub use bayes::{
    apply_query, decide, init_posterior, update_discriminative, update_generative, Alphabet, BayesError, EvidenceMode,
    LabelPrior, LikelihoodPair, PosteriorState, QueryEvent,
};
pub use dsp::{Label, TrialEpoch};
