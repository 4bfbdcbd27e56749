//! Inductive additive model for cold-start recommendation, with a matrix
//! factorization baseline, ItemKNN and the evaluation protocol.

pub mod data;
pub mod error;
pub mod eval;
pub mod hyper;
pub mod iam;
pub mod knn;
pub mod linalg;
pub mod mf;
pub mod modelfile;
pub mod observe;
pub mod pca;
pub mod select;
pub mod session;

pub use error::{Error, Result};
pub use hyper::Hyperparams;
