//! Geometric matrix completion with functional maps.
//!
//! A partially observed matrix is completed by representing it in the
//! truncated Laplacian eigenbases of a row graph and a column graph,
//! `X = Phi P C Q^T Psi^T`, and fitting the small coefficient matrices by
//! gradient descent under a Laplacian-commutativity penalty.
//!
//! Modules:
//!
//! - [`graph`]: weighted graphs, Laplacians, spectral bases, generators, I/O
//! - [`funcmap`]: coefficient encoding/decoding and band-limited synthesis
//! - [`objective`]: masks, energy terms and analytic gradients
//! - [`optimizer`]: initialization, train/validation split and fitting
//! - [`data`]: MovieLens-100K ingestion and random sampling masks
//! - [`experiments`]: RMSE, the sweep protocols and report files

pub mod data;
pub mod error;
pub mod experiments;
mod fsutil;
pub mod funcmap;
pub mod gradcheck;
pub mod graph;
mod linalg;
pub mod objective;
pub mod optimizer;
pub mod rng;

pub use nalgebra;

pub use error::{Error, Result};
pub use funcmap::FunctionalModel;
pub use graph::{Graph, SpectralBasis};
pub use objective::{EnergyBreakdown, Gradients, Mask, MaskedMatrix, Objective, RegTarget, SgmcWeights};
pub use experiments::{ExperimentReport, Method};
pub use optimizer::{FitConfig, FitResult};

