//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Small by design: just enough operations to train the networks in this
//! crate and to differentiate network outputs with respect to their inputs.
//! Tapes are single-threaded; individual matrix products may use data
//! parallelism internally with a fixed summation order.

mod grad_check;
mod tape;
mod tensor;

pub use grad_check::grad_check;
pub use tape::{lu_inverse, BackwardStats, Tape, Var, LOG_FLOOR, PIVOT_FLOOR};
pub use tensor::Tensor;
