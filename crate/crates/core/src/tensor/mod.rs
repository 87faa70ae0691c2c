//! Dense f64 matrices with tape-recorded reverse-mode differentiation and a
//! finite-difference gradient checker.

mod check;
mod matrix;
mod tape;

pub use check::{compare_to_fd, grad_check, GradCheckReport};
pub use matrix::Matrix;
pub use tape::{Axis, EwiseKind, ReduceKind, Tape, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: empty tensor ({rows}x{cols})")]
    EmptyTensor {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("{op}: tensors belong to different tapes")]
    TapeMismatch { op: &'static str },
    #[error("{op}: expected a 1x1 scalar, got {rows}x{cols}")]
    NotScalar {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("{op}: slice [{start}, {start}+{len}) out of range for extent {extent}")]
    SliceOutOfRange {
        op: &'static str,
        start: usize,
        len: usize,
        extent: usize,
    },
    #[error("{op}: non-finite value at input {input}, element ({row}, {col})")]
    NonFinite {
        op: &'static str,
        input: usize,
        row: usize,
        col: usize,
    },
}
