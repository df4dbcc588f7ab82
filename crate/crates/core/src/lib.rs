//! Additive models with low-rank thin-plate regression splines, crossed
//! random intercepts, and a two-step check for interaction effects that can
//! be explained by nonlinear main effects of dependent covariates.
//!
//! Modules, bottom up:
//!
//! - [`data`]: CSV ingestion, centering, dichotomization
//! - [`ols`]: parametric designs, least squares, Type-II two-way ANOVA
//! - [`smooth`]: single-covariate penalized splines with REML smoothing
//! - [`am`]: additive (mixed) models fitted by penalized least squares
//! - [`ambiguity`]: the two-step interaction test and model comparison
//! - [`simulate`]: seeded generators and the Monte Carlo study runner
//! - [`cli`]: the `ambig` command line

pub mod am;
pub mod cli;
pub mod ambiguity;
pub mod data;
pub mod error;
pub mod linalg;
pub mod ols;
pub mod optim;
pub mod simulate;
pub mod smooth;

pub use error::{Error, Result, Warning};
