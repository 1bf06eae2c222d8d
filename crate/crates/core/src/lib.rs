pub mod cli;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod evalsuite;
pub mod hdrio;
pub mod mlpnet;
pub mod oracle;
pub mod sampler;
pub mod skyctx;
pub mod spherical;

pub use error::{Error, Result};
