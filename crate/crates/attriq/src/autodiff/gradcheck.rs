use super::{NodeId, Tape, TensorValue};

/// Compares [`Tape::backward`] against central finite differences at
/// `bindings`, coordinate by coordinate, and returns the worst relative
/// error `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// Evaluation failures at a perturbed point count as an infinite error.
pub fn grad_check(tape: &Tape, bindings: &[TensorValue], target: NodeId, eps: f64) -> f64 {
    assert!(eps > 0.0, "eps must be positive");
    let analytic = match tape
        .forward(bindings)
        .and_then(|ev| tape.backward(&ev, target))
    {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let eval_at = |point: &[TensorValue]| -> Option<f64> {
        tape.forward(point).ok().and_then(|ev| ev.scalar(target))
    };

    let mut worst: f64 = 0.0;
    let mut point = bindings.to_vec();
    for slot in 0..bindings.len() {
        for i in 0..bindings[slot].len() {
            let orig = bindings[slot].data()[i];
            point[slot].data_mut()[i] = orig + eps;
            let plus = eval_at(&point);
            point[slot].data_mut()[i] = orig - eps;
            let minus = eval_at(&point);
            point[slot].data_mut()[i] = orig;
            let (Some(plus), Some(minus)) = (plus, minus) else {
                return f64::INFINITY;
            };
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.input(slot).data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn linear_tape_is_exact() {
        let f = fixtures::affine();
        assert!(grad_check(&f.tape, &f.input, f.target, 1e-5) <= 1e-9);
    }

    #[test]
    fn tanh_mlp_matches_finite_differences() {
        let f = fixtures::tanh_mlp(0);
        let err = grad_check(&f.tape, &f.input, f.target, 1e-5);
        assert!(err <= 1e-6, "{err:e}");
    }

    #[test]
    fn constant_target_has_zero_error() {
        let mut tape = Tape::new();
        let x = tape.input(&[3]);
        let c = tape.constant(TensorValue::scalar(2.5));
        let _ = tape.sum(x);
        assert_eq!(grad_check(&tape, &[TensorValue::vector(vec![1.0, -2.0, 0.5])], c, 1e-5), 0.0);
    }

    #[test]
    fn failing_forward_is_infinite() {
        let mut tape = Tape::new();
        let x = tape.input(&[1]);
        let l = tape.log(x);
        let f = tape.sum(l);
        assert_eq!(grad_check(&tape, &[TensorValue::vector(vec![0.0])], f, 1e-5), f64::INFINITY);
    }
}
