//! Design of optical multilayer thin films with a recurrent layer generator
//! trained by proximal policy optimization against a transfer-matrix
//! simulator, followed by bounded quasi-Newton refinement of thicknesses.

pub mod config;
pub mod error;
pub mod finetune;
pub mod io;
pub mod lbfgsb;
pub mod materials;
pub mod nn;
pub mod optics;
pub mod photometry;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod structure;

pub use error::{Error, Result};
