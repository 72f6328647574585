//! Algorithmic core for longitudinal lesion-incidence analysis: cohort
//! validation, incidence detection, intensity profiles, PCA, nested
//! mixed models, function-on-scalar regression and rater agreement.
#![no_std]

extern crate alloc;

pub mod cohort;
pub mod agreement;
pub mod components;
pub mod design;
pub mod distance;
pub mod error;
pub mod events;
pub mod fosr;
pub mod linalg;
pub mod lmm;
pub mod optimize;
pub mod panel;
pub mod pca;
pub mod profile;
pub mod rng;
pub mod simulate;
pub mod spline;
pub mod stats;
pub mod synth;
pub mod trial;
pub mod volume;

pub use error::{Error, Result};
