//! Mini-batch Adam training for the shapelet bank.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{total_loss_with_grads, ShapeletBank, ShapeletHyper};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hyper: ShapeletHyper,
    pub lambda_match: f64,
    pub lambda_div: f64,
    pub delta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for a dataset: hyper from the series length, lambda_match 1.0,
    /// lambda_div 0.5, delta 0.3, lr 1e-3, batch 32, 100 epochs.
    pub fn defaults(ds: &Dataset) -> Self {
        Self {
            hyper: ShapeletHyper::defaults(ds.series_len(), ds.num_classes),
            lambda_match: 1.0,
            lambda_div: 0.5,
            delta: 0.3,
            lr: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub bank: ShapeletBank,
    /// Mean total loss per instance, one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Adam state over the flat parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - B1.powi(self.step as i32);
        let bc2 = 1.0 - B2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

/// Train a shapelet bank. Deterministic given the seed: same seed, same bank.
pub fn train(ds: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    let mut hyper = config.hyper.clone();
    hyper.num_classes = ds.num_classes;
    hyper.trained_t = ds.series_len();
    hyper.validate()?;
    if config.lambda_match < 0.0 || config.lambda_div < 0.0 {
        return Err(Error::Config("loss weights must be non-negative".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let labels: Vec<usize> = ds
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| inst.label.ok_or(Error::MissingLabel { index: i }))
        .collect::<Result<_>>()?;

    let mut bank = ShapeletBank::init(hyper, ds, config.seed)?;
    let mut params = bank.flatten_params();
    let mut adam = Adam::new(params.len(), config.lr);
    // Separate stream so shuffling is independent of initialization draws.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for _epoch in 0..config.epochs {
        // Fisher-Yates shuffle.
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = chunk
                .iter()
                .map(|&i| ds.instances[i].values.as_slice())
                .collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = total_loss_with_grads(
                &bank,
                &xs,
                &ys,
                config.lambda_match,
                config.lambda_div,
                config.delta,
            )?;
            epoch_loss += loss;
            adam.update(&mut params, &grads.flatten());
            bank.set_params(&params);
            bank.check_finite()?;
        }
        history.push(epoch_loss / ds.len() as f64);
    }

    Ok(TrainOutput {
        bank,
        loss_history: history,
    })
}
