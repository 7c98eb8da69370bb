//! Non-manifold surface extraction from unsigned distance fields.

pub mod error;
pub mod fields;
pub mod extraction;
pub mod geom;
pub mod io;
pub mod labeling;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod sampling;
pub mod signfield;
pub mod spatial;

pub use error::{Error, Result};
