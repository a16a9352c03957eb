//! File formats, external-model adapter, pipeline commands and CLI for
//! car-following model benchmarking. The numerical work lives in
//! `cfbench-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod external;
pub mod ingest;
pub mod model_io;
pub mod pipeline;
pub mod report;
pub mod segments;

pub use config::RunConfig;
pub use error::{Error, Result};
