//! Sparse coding by alternating minimization.
//!
//! Samples follow `y = A* x* + ξ` where `A*` is an `n × m` dictionary with
//! unit columns and `x*` has `k` nonzero entries on a uniformly random
//! support. The crate provides
//!
//! * the generative model and exact support statistics ([`genmodel`]),
//! * threshold decoding and the projected decoding matrices ([`decoding`]),
//! * the simple, Olshausen-Field and unbiased update directions, both as
//!   sample averages and in closed form, plus the projection onto the
//!   constraint set ([`updates`]),
//! * the descent driver with per-step correlation diagnostics ([`descent`]),
//! * pairwise spectral initialization ([`init`]),
//! * sign/permutation matching and nearness reports ([`metrics`]),
//! * file formats and the command-line tool ([`io`], [`cli`]).
//!
//! All randomness is derived from explicit seeds ([`rng`]), so every run
//! is reproducible bit for bit.

pub mod cli;
pub mod decoding;
pub mod descent;
pub mod genmodel;
pub mod init;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod rng;
pub mod updates;

pub use decoding::{threshold_decode, DecodeConfig};
pub use descent::{run_descent, CorrelationParams, DescentConfig, DescentTrace};
pub use genmodel::{CoeffLaw, ModelParams, SparseCode, SupportStats};
pub use init::{pairwise_init, InitConfig, InitInput};
pub use metrics::{nearness, NearnessReport};
pub use numerics::Matrix;
pub use updates::{GradientEstimate, GradientMode, ProjectionSetB, UpdateRule};

use thiserror::Error;

/// Any error raised by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    Model(#[from] genmodel::ModelError),
    #[error(transparent)]
    Decode(#[from] decoding::DecodeError),
    #[error(transparent)]
    Update(#[from] updates::UpdateError),
    #[error(transparent)]
    Descent(#[from] descent::DescentError),
    #[error(transparent)]
    Init(#[from] init::InitError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] io::IoError),
}
