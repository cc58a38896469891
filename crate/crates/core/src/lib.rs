//! Rank candidate data mixtures by merging per-domain experts instead of
//! training a model on every mixture.
//!
//! The building blocks are small and composable: [`simplex`] enumerates
//! candidate mixtures, [`train`] produces experts, [`params::merge_linear`]
//! builds proxies, [`evalx`] scores and ranks them against mixture-trained
//! oracles, and [`quadbed`] provides exact quadratic testbeds where the
//! optimal merge is known in closed form.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod baselines;
pub mod error;
pub mod evalx;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod params;
pub mod pipeline;
pub mod quadbed;
pub mod rng;
pub mod simplex;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use evalx::{spearman, RunRecord, SelectionReport, Target};
pub use params::{merge_hessian_weighted, merge_linear, ExpertSet, ParamVector};
pub use simplex::{enumerate_grid, sample_dirichlet, MixtureGrid, MixtureWeights};
