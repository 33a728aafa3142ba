//! The guide's chapters as doc comments, so `cargo test` runs their code
//! blocks. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/stable-laws.md")]
pub mod stable_laws {}
#[doc = include_str!("../../../book/src/keyed-randomness.md")]
pub mod keyed_randomness {}
#[doc = include_str!("../../../book/src/triangular-array.md")]
pub mod triangular_array {}
#[doc = include_str!("../../../book/src/coboundary-sums.md")]
pub mod coboundary_sums {}
#[doc = include_str!("../../../book/src/bounds.md")]
pub mod bounds {}
#[doc = include_str!("../../../book/src/towers.md")]
pub mod towers {}
#[doc = include_str!("../../../book/src/goodness-of-fit.md")]
pub mod goodness_of_fit {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
