//! One-class anomaly detection with a dual generative adversarial network.
//!
//! A visual GAN maps latent codes to images and a latent GAN maps images back
//! to codes. Both are trained on normal images only; at test time an image is
//! encoded, decoded, and scored by its squared reconstruction error.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod losses;
pub mod networks;
pub mod scoring;
pub mod seed;
pub mod store;
pub mod trainer;

pub use error::{Error, Result};
