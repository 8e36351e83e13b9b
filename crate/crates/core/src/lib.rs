//! Numerical laboratory for ergodic averages along Ω(n), the number of prime
//! factors of `n` counted with multiplicity, and along Ω of Beatty sequences.
//!
//! The modules build on each other:
//!
//! - [`sieve`]: Ω and Liouville tables up to a limit, with a binary dump.
//! - [`fixed`]: exact fixed-point arithmetic on the circle.
//! - [`torus`]: cyclic systems, unipotent affine maps on tori and the
//!   polynomial/initial-point transfer.
//! - [`sequences`]: Beatty sequences, index maps and unimodular weights.
//! - [`summation`]: compensated, thread-count independent summation.
//! - [`averages`]: the averaging engines and the orthogonality criterion.
//! - [`patterns`]: pattern witnesses in finite sets and grids.
//! - [`cli`]: experiment configuration and the command-line driver.

pub mod averages;
pub mod cli;
pub mod error;
pub mod fixed;
pub mod patterns;
pub mod sequences;
pub mod sieve;
pub mod summation;
pub mod torus;

pub use error::{Error, Result};
pub use fixed::Frac;
pub use sieve::OmegaTable;
