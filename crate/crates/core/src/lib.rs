//! Tensor-train potential energy surfaces that convert into matrix product
//! operators.
//!
//! A model evaluates `V(x) = Φ(x·U)·W`: an orthonormal coordinator `U` maps
//! input coordinates to latent ones, each latent mode is expanded in a small
//! family of one-dimensional basis functions, and the tensor-product
//! coefficients `W` are stored as a tensor train. Training alternates Adam on
//! the basis parameters, Riemannian Adam on `U` and DMRG-style sweeps over the
//! train. Because the basis is a product over modes, a trained model turns
//! into a matrix product operator on any product grid basis, which in turn
//! feeds the vibrational eigensolvers in [`vibsolve`].

pub mod error;
pub mod linalg;
pub mod model;
pub mod mpo;
pub mod potentials;
pub mod tensor;
pub mod train;
pub mod vibsolve;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
