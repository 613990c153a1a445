//! Gradient descent on underdetermined least squares `min ½‖Ay − b‖²` where the
//! initialization, rather than an explicit regularizer, decides which of the
//! infinitely many interpolants the iteration converges to.
//!
//! The crate covers four model families that share one [`ProblemInstance`]:
//!
//! * [`flat`]: plain gradient descent on `y`, its closed-form limit and the
//!   controlled initialization that steers it to any chosen interpolant.
//! * [`hidden`]: one hidden layer `y = Wx`, the rank-one row-space
//!   initialization that makes the limit bi-optimal, and the reduced and
//!   compact (`n + 2` numbers of state) iterations equivalent to it.
//! * [`deep`]: depth-`h` linear networks, the two-layer construction and its
//!   compact iteration, and the kernel-component stability analysis.
//! * [`riemannian`]: the same networks with orthogonal hidden layers, trained
//!   by Riemannian gradient descent with a QR retraction.
//!
//! Everything here is `no_std` with `alloc`; IO, CSV and the CLI live in the
//! companion `rowspace` crate.

#![no_std]
// `!(x > 0.0)` and friends are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod deep;
pub mod error;
pub mod flat;
pub mod hidden;
pub mod linalg;
pub mod riemannian;
pub mod rng;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::{Matrix, ProblemInstance, SvdSplit, Vector};
pub use rng::RngSpec;
pub use trace::{GdConfig, IterateTrace, Termination, TraceRecord};
