//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records operations as they are built. [`Tape::forward`] binds the
//! free inputs and evaluates every node; [`Tape::backward`] walks the recorded
//! nodes in reverse to obtain the gradient of a scalar node with respect to
//! every input. The tape is immutable once built, so one tape can be
//! evaluated at many points (one per quadrature node) and shared across
//! threads.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub(crate) use tape::first_argmax;
pub use tape::{Evaluation, Gradients, NodeId, Tape};
pub use tensor::TensorValue;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: unsupported shape {shape:?}")]
    InvalidShape { op: &'static str, shape: Vec<usize> },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("row {row} out of range for a table with {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("expected {expected} input bindings, got {got}")]
    Unbound { expected: usize, got: usize },
    #[error("input {slot} bound with shape {got:?}, expected {expected:?}")]
    BindingShape {
        slot: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },
    #[error("backward target node {node} is not scalar (shape {shape:?})")]
    NotScalar { node: usize, shape: Vec<usize> },
    #[error("forward values do not belong to this tape")]
    MissingForward,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn forward_add() {
        let mut t = Tape::new();
        let a = t.input(&[2]);
        let b = t.input(&[2]);
        let f = t.add(a, b).unwrap();
        let ev = t
            .forward(&[TensorValue::vector(vec![1.0, 2.0]), TensorValue::vector(vec![3.0, 4.0])])
            .unwrap();
        assert_eq!(ev.value(f).data(), &[4.0, 6.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let a = t.input(&[2]);
        let s = t.softmax(a).unwrap();
        let ev = t.forward(&[TensorValue::vector(vec![0.0, 0.0])]).unwrap();
        assert_eq!(ev.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn dot_value_and_gradient() {
        let mut t = Tape::new();
        let x = t.input(&[2]);
        let w = t.constant(TensorValue::vector(vec![2.0, -1.0]));
        let f = t.dot(x, w).unwrap();
        let ev = t.forward(&[TensorValue::vector(vec![1.0, 1.0])]).unwrap();
        assert_eq!(ev.scalar(f), Some(1.0));
        let g = t.backward(&ev, f).unwrap();
        assert_eq!(g.input(0).data(), &[2.0, -1.0]);
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x1 = t.input(&[]);
        let x2 = t.input(&[]);
        let f = t.mul(x1, x2).unwrap();
        let ev = t.forward(&[TensorValue::scalar(3.0), TensorValue::scalar(5.0)]).unwrap();
        let g = t.backward(&ev, f).unwrap();
        assert_eq!(g.input(0).data(), &[5.0]);
        assert_eq!(g.input(1).data(), &[3.0]);
    }

    #[test]
    fn softmax_jacobian_at_uniform_point() {
        let mut t = Tape::new();
        let x = t.input(&[2]);
        let s = t.softmax(x).unwrap();
        let pick = t.constant(TensorValue::vector(vec![1.0, 0.0]));
        let f = t.dot(s, pick).unwrap();
        let ev = t.forward(&[TensorValue::vector(vec![0.0, 0.0])]).unwrap();
        let g = t.backward(&ev, f).unwrap();
        assert!(close(g.input(0).data(), &[0.25, -0.25], 1e-15));
    }

    #[test]
    fn unreachable_input_gets_exact_zero() {
        let mut t = Tape::new();
        let x = t.input(&[3]);
        let _unused = t.input(&[2, 2]);
        let f = t.sum(x);
        let ev = t
            .forward(&[TensorValue::vector(vec![1.0, 2.0, 3.0]), TensorValue::zeros(&[2, 2])])
            .unwrap();
        let g = t.backward(&ev, f).unwrap();
        assert_eq!(g.input(1).data(), &[0.0; 4]);
    }

    #[test]
    fn max_ties_route_to_lowest_index() {
        let mut t = Tape::new();
        let x = t.input(&[3]);
        let f = t.max(x).unwrap();
        let ev = t.forward(&[TensorValue::vector(vec![2.0, 5.0, 5.0])]).unwrap();
        assert_eq!(ev.scalar(f), Some(5.0));
        let g = t.backward(&ev, f).unwrap();
        assert_eq!(g.input(0).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn row_select_accumulates_repeated_rows() {
        let mut t = Tape::new();
        let table = t.input(&[3, 2]);
        let rows = t.row_select(table, &[2, 0, 2]).unwrap();
        let f = t.sum(rows);
        let ev = t
            .forward(&[TensorValue::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])])
            .unwrap();
        assert_eq!(ev.value(rows).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let g = t.backward(&ev, f).unwrap();
        assert_eq!(g.input(0).data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn matmul_shapes() {
        let mut t = Tape::new();
        let m = t.input(&[2, 3]);
        let v3 = t.input(&[3]);
        let v2 = t.input(&[2]);
        let mv = t.matmul(m, v3).unwrap();
        assert_eq!(t.shape(mv), &[2]);
        let r = t.matmul(v2, m).unwrap();
        assert_eq!(t.shape(r), &[3]);
        assert!(matches!(
            t.matmul(v3, m),
            Err(AutodiffError::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.input(&[2]);
        let b = t.input(&[3]);
        assert!(t.add(a, b).is_err());
        assert!(t.dot(a, b).is_err());
        let err = t.forward(&[TensorValue::vector(vec![1.0])]).unwrap_err();
        assert_eq!(err, AutodiffError::Unbound { expected: 2, got: 1 });
        let err = t
            .forward(&[TensorValue::vector(vec![1.0]), TensorValue::vector(vec![1.0; 3])])
            .unwrap_err();
        assert!(matches!(err, AutodiffError::BindingShape { slot: 0, .. }));
    }

    #[test]
    fn non_finite_reports_node() {
        let mut t = Tape::new();
        let a = t.input(&[2]);
        let l = t.log(a);
        let err = t.forward(&[TensorValue::vector(vec![1.0, 0.0])]).unwrap_err();
        assert_eq!(err, AutodiffError::NonFinite { node: l.index(), op: "log" });
    }

    #[test]
    fn backward_requires_scalar_target() {
        let mut t = Tape::new();
        let a = t.input(&[2]);
        let s = t.tanh(a);
        let ev = t.forward(&[TensorValue::vector(vec![0.1, 0.2])]).unwrap();
        assert!(matches!(t.backward(&ev, s), Err(AutodiffError::NotScalar { .. })));
        let other = Tape::new().forward(&[]).unwrap();
        let f = t.sum(s);
        assert_eq!(t.backward(&other, f), Err(AutodiffError::MissingForward));
    }

    #[test]
    fn concat_and_mean_rows_gradients() {
        let mut t = Tape::new();
        let a = t.input(&[1, 2]);
        let b = t.input(&[2, 2]);
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.shape(c), &[3, 2]);
        let m = t.mean_rows(c).unwrap();
        let w = t.constant(TensorValue::vector(vec![3.0, -6.0]));
        let f = t.dot(m, w).unwrap();
        let ev = t
            .forward(&[TensorValue::matrix(1, 2, vec![1.0, 1.0]), TensorValue::zeros(&[2, 2])])
            .unwrap();
        assert!((ev.scalar(f).unwrap() - (-1.0)).abs() < 1e-15);
        let g = t.backward(&ev, f).unwrap();
        assert_eq!(g.input(0).data(), &[1.0, -2.0]);
        assert_eq!(g.input(1).data(), &[1.0, -2.0, 1.0, -2.0]);
    }
}
