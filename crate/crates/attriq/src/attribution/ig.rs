use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, TensorValue};

use super::AttributionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// `α_k = k/m` for `k < m`, weight `1/m`.
    LeftRiemann,
    /// `α_k = k/m` for `k ≤ m`, weight `1/m` with halved end weights.
    #[default]
    Trapezoid,
}

impl Quadrature {
    /// `(α, weight)` pairs in ascending α, weights in units of `1/m`.
    pub fn nodes(self, m: usize) -> Vec<(f64, f64)> {
        match self {
            Quadrature::LeftRiemann => (0..m).map(|k| (k as f64 / m as f64, 1.0)).collect(),
            Quadrature::Trapezoid => (0..=m)
                .map(|k| {
                    let end = k == 0 || k == m;
                    (k as f64 / m as f64, if end { 0.5 } else { 1.0 })
                })
                .collect(),
        }
    }
}

/// Raw Integrated Gradients over every input slot of a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct PathIntegral {
    /// One attribution tensor per input slot.
    pub attributions: Vec<TensorValue>,
    pub f_input: f64,
    pub f_baseline: f64,
}

impl PathIntegral {
    pub fn total(&self) -> f64 {
        self.attributions.iter().flat_map(|t| t.data()).sum()
    }

    /// `|Σ attributions − (F(x) − F(x′))|`
    pub fn residual(&self) -> f64 {
        (self.total() - (self.f_input - self.f_baseline)).abs()
    }
}

/// Quadrature nodes per parallel work unit. Partial sums are combined in
/// ascending-α order, so results do not depend on the thread count.
const CHUNK: usize = 32;

fn eval_scalar(tape: &Tape, point: &[TensorValue], target: NodeId, alpha: f64) -> Result<f64, AttributionError> {
    let ev = tape
        .forward(point)
        .map_err(|e| AttributionError::at(alpha, e))?;
    ev.scalar(target).ok_or(AttributionError::NotScalar)
}

/// `IG_i = (x_i − x′_i) · (1/m) Σ_k w_k ∂F(x′ + α_k(x − x′))/∂x_i` over all input
/// slots of `tape`, with `F` the scalar node `target`.
pub fn integrate_path(
    tape: &Tape,
    target: NodeId,
    input: &[TensorValue],
    baseline: &[TensorValue],
    steps: usize,
    quadrature: Quadrature,
) -> Result<PathIntegral, AttributionError> {
    if steps == 0 {
        return Err(AttributionError::ZeroSteps);
    }
    if input.len() != baseline.len()
        || input.iter().zip(baseline).any(|(a, b)| a.shape() != b.shape())
    {
        return Err(AttributionError::BaselineShape);
    }
    let f_input = eval_scalar(tape, input, target, 1.0)?;
    let f_baseline = eval_scalar(tape, baseline, target, 0.0)?;

    let nodes = quadrature.nodes(steps);
    let zero: Vec<Vec<f64>> = input.iter().map(|t| vec![0.0; t.len()]).collect();
    let partials: Vec<Vec<Vec<f64>>> = nodes
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = zero.clone();
            for &(alpha, w) in chunk {
                let point: Vec<TensorValue> = input
                    .iter()
                    .zip(baseline)
                    .map(|(x, b)| x.lerp_from(b, alpha))
                    .collect();
                let ev = tape.forward(&point).map_err(|e| AttributionError::at(alpha, e))?;
                let g = tape
                    .backward(&ev, target)
                    .map_err(|e| AttributionError::at(alpha, e))?;
                for (a, gi) in acc.iter_mut().zip(g.as_slice()) {
                    for (s, &x) in a.iter_mut().zip(gi.data()) {
                        *s += w * x;
                    }
                }
                if acc.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(AttributionError::NonFiniteGradient { alpha });
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, _>>()?;

    let mut sum = zero;
    for part in partials {
        for (s, p) in sum.iter_mut().zip(part) {
            for (a, b) in s.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
    let m = steps as f64;
    let attributions = input
        .iter()
        .zip(baseline)
        .zip(sum)
        .map(|((x, b), g)| {
            let data = x
                .data()
                .iter()
                .zip(b.data())
                .zip(g)
                .map(|((xi, bi), gi)| {
                    let diff = xi - bi;
                    // zero-difference features get exactly zero
                    if diff == 0.0 {
                        0.0
                    } else {
                        diff * (gi / m)
                    }
                })
                .collect();
            TensorValue::new(x.shape().to_vec(), data).expect("shape preserved")
        })
        .collect();
    Ok(PathIntegral {
        attributions,
        f_input,
        f_baseline,
    })
}
