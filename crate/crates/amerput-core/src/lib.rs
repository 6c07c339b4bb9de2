//! American put pricing under diffusion and jump-diffusion models.
//!
//! Transition densities come from closed-form small-time expansions (Hermite
//! series in the Lamperti coordinate for diffusions, a C/D series in log price
//! for jump-diffusions). Prices follow from the early exercise premium
//! representation with a step-function exercise boundary solved backward in
//! time.

pub mod eep;
pub mod error;
pub mod hermite;
pub mod jump_eep;
pub mod jump_hermite;
pub mod lamperti;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
