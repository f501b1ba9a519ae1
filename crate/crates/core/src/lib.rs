pub mod env;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod oracle;
pub mod phantom;
pub mod pipeline;
mod record;
pub mod sac;
pub mod tracker;
pub mod tractogram;

pub use error::{Error, Result};
