use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, NodeId, Tape, TensorValue};

use super::vocab::PAD;
use super::{Instance, Model, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 40,
            batch: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    /// Mean training loss before the first epoch and after each epoch.
    pub losses: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(params: &[TensorValue]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    fn update(&mut self, params: &mut [TensorValue], grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (k, p) in params.iter_mut().enumerate() {
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let g = grads[k][i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *x -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn loss_tapes(model: &Model, data: &[Instance]) -> Result<Vec<(Tape, NodeId)>, ModelError> {
    data.iter()
        .map(|inst| match model {
            Model::Classifier(m) => m.loss_tape(inst),
            Model::TableQa(m) => m.loss_tape(inst),
        })
        .collect()
}

fn params_of(model: &Model) -> Vec<TensorValue> {
    match model {
        Model::Classifier(m) => m.params(),
        Model::TableQa(m) => m.params(),
    }
}

fn set_params(model: &mut Model, p: Vec<TensorValue>) {
    match model {
        Model::Classifier(m) => m.set_params(p),
        Model::TableQa(m) => m.set_params(p),
    }
}

fn non_finite(batch: usize) -> impl Fn(AutodiffError) -> ModelError {
    move |e| match e {
        AutodiffError::NonFinite { .. } => ModelError::NonFiniteLoss { batch },
        other => other.into(),
    }
}

fn mean_loss(tapes: &[(Tape, NodeId)], params: &[TensorValue], batch: usize) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (tape, loss) in tapes {
        let ev = tape.forward(params).map_err(non_finite(batch))?;
        total += ev.scalar(*loss).expect("scalar loss");
    }
    let mean = total / tapes.len() as f64;
    if !mean.is_finite() {
        return Err(ModelError::NonFiniteLoss { batch });
    }
    Ok(mean)
}

/// Mini-batch Adam on the mean cross-entropy. Batches are drawn from a
/// seeded shuffle each epoch; the PAD embedding row is never updated.
///
/// The loss trace has `epochs + 1` entries. A non-finite loss aborts with the
/// index of the offending batch, counted from the start of training.
pub fn train(model: Model, data: &[Instance], cfg: &TrainConfig) -> Result<Trained, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let tapes = loss_tapes(&model, data)?;
    let mut model = model;
    let mut params = params_of(&model);
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch.max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = vec![mean_loss(&tapes, &params, 0)?];
    let mut batch_index = 0;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
            for &i in chunk {
                let (tape, loss) = &tapes[i];
                let ev = tape.forward(&params).map_err(non_finite(batch_index))?;
                if !ev.scalar(*loss).is_some_and(f64::is_finite) {
                    return Err(ModelError::NonFiniteLoss { batch: batch_index });
                }
                let g = tape.backward(&ev, *loss)?;
                for (acc, gi) in grads.iter_mut().zip(g.as_slice()) {
                    for (a, x) in acc.iter_mut().zip(gi.data()) {
                        *a += x;
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            for g in &mut grads {
                for x in g.iter_mut() {
                    *x *= scale;
                }
            }
            let d = params[0].shape()[1];
            grads[0][PAD * d..(PAD + 1) * d].fill(0.0);
            adam.update(&mut params, &grads, cfg.lr);
            batch_index += 1;
        }
        losses.push(mean_loss(&tapes, &params, batch_index.saturating_sub(1))?);
    }
    set_params(&mut model, params);
    Ok(Trained { model, losses })
}
