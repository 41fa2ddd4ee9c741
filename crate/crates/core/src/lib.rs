//! Joint posterior maximization with an autoencoding prior (JPMAP) for
//! linear inverse problems on small images.
//!
//! The pipeline: train a small Gaussian VAE on digit images, then restore a
//! degraded observation `y = A x + noise` by alternating minimization of the
//! joint energy
//!
//! ```text
//! J1(x, z) = ‖A x − y‖²/(2σ²) + H(x, z) + ½‖z‖²
//! ```
//!
//! where `H` couples the image to the decoder. The encoder supplies a
//! quadratic surrogate `J2` whose z-minimizer is free, which the alternating
//! schemes in [`solver`] exploit. A gradient-descent baseline that ignores
//! the encoder ([`solver::csgm`]) is included for comparison.
//!
//! Modules follow the pipeline: [`nn`] and [`optim`] are the numerical
//! substrate, [`vae`] the prior, [`degradation`] the forward models,
//! [`energy`] the joint energies and their partial minimizers, [`solver`]
//! the iterative schemes, [`mnist`] and [`synth`] dataset I/O.

pub mod degradation;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod mnist;
pub mod model_io;
pub mod nn;
pub mod optim;
pub mod report;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod vae;

pub use error::{Error, Result};
