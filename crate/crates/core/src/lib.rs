//! Symmetric α-stable laws, triangular arrays built from their truncated
//! tails, and rank-one towers that realize those arrays as ergodic sums.

pub mod array;
pub mod error;
pub mod gof;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stable;
pub mod tower;

pub use error::{Error, Result};
pub use rng::{KeyedRng, RandomKey, StreamTag};
pub use stable::{make_params, AlphaStableParams};
