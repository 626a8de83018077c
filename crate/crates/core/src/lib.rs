//! Sparse estimation of the cross-power spectrum of hidden sources from the
//! cross-power spectrum of linearly mixed, noisy observations.
//!
//! The observed spectrum obeys `S_y = G S_x Gᵀ + S_e`, i.e.
//! `vec S_y = (G ⊗ G) vec S_x + vec S_e`. [`fista`] estimates a sparse,
//! Hermitian `S_x` by ℓ1-regularized least squares using the matrix-free
//! operator of [`kron`]; [`two_step`] is the Tikhonov-then-Welch baseline;
//! [`sim`] and [`metrics`] provide the synthetic benchmark around both.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fista;
pub mod io;
pub mod kron;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod study;
pub mod two_step;

pub use error::{Error, Result};
pub use fista::{FistaConfig, FistaResult, SplitSpectrum};
pub use kron::{KronOperator, LeadField};
pub use spectral::{CrossSpectrum, TimeSeriesSet, WelchConfig};
