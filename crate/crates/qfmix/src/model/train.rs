//! Mini-batch SGD with momentum over the factorized model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, ModelError, Network, ParameterStore};

/// Model-ready vectors with class labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Softmax temperature applied to the output probabilities.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            temperature: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainReport {
    pub fn final_test_acc(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_acc)
    }
}

pub fn accuracy(net: &Network, params: &ParameterStore, data: &Samples) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut hits = 0usize;
    for (x, &y) in data.x.iter().zip(&data.y) {
        if argmax(&net.forward(params, x)?.output) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Trains in place. Deterministic for a fixed seed: the shuffle stream is
/// seeded and gradients are summed in sample order.
pub fn train(
    net: &Network,
    params: &mut ParameterStore,
    data: &Samples,
    test: Option<&Samples>,
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    net.check_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = vec![0.0; params.len()];
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut hits = 0usize;
        for (batch, idx) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let mut grad = vec![0.0; velocity.len()];
            let mut batch_loss = 0.0;
            for &i in idx {
                let trace = net.forward(params, &data.x[i])?;
                batch_loss += net.loss(&trace, data.y[i], cfg.temperature)?;
                if argmax(&trace.output) == data.y[i] {
                    hits += 1;
                }
                let g = net.backward(params, &trace, data.y[i], cfg.temperature)?;
                for (a, b) in grad.iter_mut().zip(g.to_flat()) {
                    *a += b;
                }
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::Diverged { epoch, batch });
            }
            total_loss += batch_loss;
            let scale = 1.0 / idx.len() as f64;
            let mut flat = params.to_flat();
            for ((p, v), g) in flat.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g * scale;
                *p -= cfg.lr * *v;
            }
            params.from_flat(&flat);
        }
        let test_acc = match test {
            Some(t) => Some(accuracy(net, params, t)?),
            None => None,
        };
        let m = EpochMetrics {
            epoch,
            train_loss: total_loss / data.len() as f64,
            train_acc: hits as f64 / data.len() as f64,
            test_acc,
        };
        log::info!(
            "epoch {} loss {:.4} train {:.4} test {:?}",
            m.epoch,
            m.train_loss,
            m.train_acc,
            m.test_acc
        );
        epochs.push(m);
    }
    Ok(TrainReport { epochs })
}
