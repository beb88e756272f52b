//! Distributionally robust extreme value analysis.
//!
//! This crate calibrates generalized extreme value (GEV) models to block
//! maxima and then asks how bad tail risk can get when the fitted model is
//! only trusted up to a divergence ball: worst-case tail probabilities and
//! worst-case extreme quantiles over Rényi/KL neighborhoods of the fitted
//! distribution, together with the asymptotic theory that links the
//! neighborhood radius and order to an inflated tail index.
//!
//! Module map:
//! - [`gev`]: GEV distribution kernels (CDF/tail/quantile/density, sampling,
//!   domain-of-attraction classification, von Mises shape estimates)
//! - [`divergence`]: Rényi/KL divergence primitives, density-based divergence
//!   between absolutely continuous laws, and a k-NN two-sample estimator
//! - [`worstcase`]: exact worst-case tail probability and quantile over a
//!   divergence ball, plus exponential-tilt solvers for discrete references
//! - [`asymptotics`]: worst-case tail index γ* = α/(α-1)·γ, order selection,
//!   and upper/lower tail envelopes
//! - [`fit`]: block-maxima extraction and GEV maximum likelihood with
//!   covariance, confidence intervals, and return-level standard errors
//! - [`cli`]: end-to-end pipeline (ingest, fit, robustify, emit curves) used
//!   by the `robust-evt` binary
//! - [`numerics`]: shared root finding, adaptive quadrature, Lambert W
//! - [`rng`]: deterministic seeded streams used everywhere randomness appears

pub mod asymptotics;
pub mod cli;
pub mod divergence;
pub mod fit;
pub mod gev;
pub mod numerics;
pub mod rng;
pub mod worstcase;
