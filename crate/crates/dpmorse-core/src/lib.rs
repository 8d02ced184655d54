//! Differentially private Gaussian mixture fitting with density-landscape
//! cluster merging.
//!
//! The crate is `no_std` + `alloc`: everything operates on plain `Vec<f64>`
//! buffers and uses `libm` for transcendentals so results are bit-identical
//! across platforms. IO, file formats and the CLI live in the companion
//! `dpmorse-cli` crate.
//!
//! Pipeline overview:
//!
//! 1. [`fit`] — fit `K0` Gaussian sub-clusters, privately
//!    ([`fit::fit_dpmog_hard`], [`fit::fit_dplloyd_mog`]) or not
//!    ([`fit::fit_em`], [`fit::fit_lloyd`]).
//! 2. [`tev`] — locate transition equilibrium vectors (index-1 saddles of
//!    `-ln p`) between sub-cluster pairs with a quadratic string search.
//! 3. [`merge`] — single-linkage merge of sub-clusters using saddle barrier
//!    heights as edge weights, cut to `K` groups.
//! 4. [`metrics`] — adjusted Rand index against ground truth.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod fit;
pub mod landscape;
pub mod linalg;
pub mod merge;
pub mod metrics;
pub mod model;
pub mod privacy;
pub mod rng;
pub mod tev;
