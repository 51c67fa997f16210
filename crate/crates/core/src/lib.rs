//! Quantization trees for Markov chains: Monte Carlo estimation of the
//! transition probabilities between Voronoi cells of per-layer grids, and
//! backward dynamic programming on the resulting tree for Bermudan and swing
//! options.

pub mod cli;
pub mod error;
pub mod model;
pub mod par;
pub mod pricer;
pub mod quant;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
pub use par::Execution;
