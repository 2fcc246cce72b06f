//! Latent-state modelling for longitudinal visit data.
//!
//! The crate covers the whole offline pipeline behind the cohort explorer:
//!
//! - [`ingest`]: CSV + JSON config into a validated [`Dataset`].
//! - [`hmm`]: Bernoulli-emission hidden Markov models, Baum-Welch training,
//!   forward-backward posteriors and Viterbi decoding.
//! - [`summarize`]: feature matrices, transition statistics, waterfall
//!   points and outcome-age kernel densities.
//! - [`query`]: the state-sequence query language and the cohort store.

pub mod hmm;
pub mod ingest;
pub mod json;
pub mod query;
pub mod summarize;

pub use hmm::{Decoding, DecodingSet, HmmError, HmmModel, TrainConfig};
pub use ingest::{Dataset, IngestConfig, IngestError, Subject, Visit};
pub use query::{Cohort, CohortStore, QueryError, StateQuery};
pub use summarize::{DensityEstimate, FeatureMatrix, SummaryError, TransitionSummary};
