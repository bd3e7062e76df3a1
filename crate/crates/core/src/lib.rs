//! Sparsified block elimination for Eulerian directed Laplacians.
//!
//! A chain of approximate Schur complements is built once per Laplacian
//! ([`chain::build_chain`]) and then used as a preconditioner for Richardson
//! iteration ([`solver::solve`]). Numeric code is generic over [`Scalar`];
//! the aliases at the bottom fix it to `f64`.

pub mod augmented;
pub mod bench;
pub mod chain;
pub mod dense;
pub mod error;
pub mod generators;
pub mod laplacian;
pub mod mtx;
pub mod rcdd;
pub mod rng;
pub mod scalar;
pub mod schur;
pub mod solver;
pub mod sparse;
pub mod sparsify;

pub use chain::{build_chain, load_chain, save_chain, validate_chain, ChainConfig, ChainReport};
pub use error::{Error, Result};
pub use generators::{generate, Family};
pub use laplacian::{build_laplacian, Partition, Tolerances};
pub use rcdd::find_rcdd;
pub use rng::RngStream;
pub use scalar::Scalar;
pub use schur::{sparse_schur, SchurConfig};
pub use solver::{prec_apply, solve, Preconditioner, SolveConfig, SolveReport};
pub use sparsify::{spar_e, Backend, SparsifierConfig};

pub type SparseMatrix = sparse::SparseMatrix<f64>;
pub type DenseMatrix = dense::DenseMatrix<f64>;
pub type DirectedLaplacian = laplacian::DirectedLaplacian<f64>;
pub type SchurChain = chain::SchurChain<f64>;
pub type AugmentedMatrix = augmented::AugmentedMatrix<f64>;
