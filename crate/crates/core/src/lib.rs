//! Interpolation-based surrogate models for Craig-Bampton reduced matrices of
//! parameterized substructures.
//!
//! The crate follows the pipeline it implements:
//!
//! 1. [`model`] builds parameterized finite-element substructures (a 2-D
//!    lattice and a locally resonant unit cell) and partitions their matrices
//!    into interface/internal blocks.
//! 2. [`cb`] performs the Craig-Bampton reduction: static constraint modes,
//!    fixed-interface normal modes, and the reduced mass/stiffness/load.
//! 3. [`projection`] re-expresses the fixed-interface modes of a perturbed
//!    substructure in the modal basis of a reference model, so that reduced
//!    matrices vary smoothly with the design parameters.
//! 4. [`explore`] samples the parameter space, labels each sample by the
//!    conditioning of that projection, and groups samples into well-conditioned
//!    regions, each with its own reference model.
//! 5. [`svm`] trains a support-vector router that assigns new parameter points
//!    to regions.
//! 6. [`pca`], [`kriging`], and [`surrogate`] compress the reduced matrices to
//!    a low-dimensional latent space and interpolate the latent coordinates
//!    with ordinary Kriging; [`lagrange`] provides the tensor-grid polynomial
//!    baseline.
//! 7. [`assembly`] couples reduced (or full) substructures into a global model
//!    and computes harmonic response and transmissibility sweeps.
//!
//! [`io`] and [`config`] define the JSON/CSV serialization formats used by the
//! `cbmorph` command-line tool; every parser is exposed as a safe function of
//! raw bytes and fuzzed in `fuzz/`.
//!
//! # Determinism
//!
//! All stochastic steps (Latin hypercube sampling, Kriging fits, SVM training)
//! are driven by explicit `u64` seeds through a counter-based generator, and
//! every eigen/SVD routine applies a fixed sign convention, so identical
//! inputs produce byte-identical artifacts on every platform and thread count.

pub mod assembly;
pub mod cb;
pub mod config;
pub mod explore;
pub mod io;
pub mod kriging;
pub mod lagrange;
pub mod linalg;
pub mod model;
pub mod pca;
pub mod projection;
pub mod surrogate;
pub mod svm;

pub use linalg::{EigenPairs, LinalgError, SvdResult};
pub use model::{ModelError, ModelParams, Partition, Substructure};
