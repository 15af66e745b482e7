use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::map::FloatMap;

use super::loss::SmoothL1Form;
use super::net::{refiner_grad, RefinerParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub lambda_gt: f64,
    pub beta: f64,
    /// Heavy-ball coefficient; 0 is plain gradient descent.
    pub momentum: f64,
    pub seed: u64,
    /// Reject steps that raise the loss, halving the learning rate instead.
    pub guarded: bool,
    pub form: SmoothL1Form,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            iterations: 500,
            lambda_gt: 1.0,
            beta: 1.0,
            momentum: 0.0,
            seed: 0,
            guarded: false,
            form: SmoothL1Form::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero rate is allowed and freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidValue("learning rate must be finite and non-negative"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidValue("beta must be positive"));
        }
        if !(self.lambda_gt >= 0.0 && self.lambda_gt.is_finite()) {
            return Err(Error::InvalidValue("lambda_gt must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidValue("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Inputs and supervision of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingFrame {
    /// Aligned inverse depth.
    pub z_ga: FloatMap,
    /// Inverse quasi-dense scale, filled with ones.
    pub inv_s_q_filled: FloatMap,
    pub d_gt: FloatMap,
    pub d_int: FloatMap,
}

impl TrainingFrame {
    pub fn loss_and_grad(&self, params: &RefinerParams, cfg: &TrainConfig) -> Result<(f64, RefinerParams)> {
        refiner_grad(params, &self.z_ga, &self.inv_s_q_filled, &self.d_gt, &self.d_int, cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: RefinerParams,
    /// Loss at the parameters in effect at the start of each step.
    pub history: Vec<f64>,
    /// Loss at the returned parameters.
    pub final_loss: f64,
}

/// Training stopped on a non-finite loss or gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Diverged {
    pub iteration: usize,
    pub history: Vec<f64>,
    /// Last finite parameters.
    pub params: RefinerParams,
}

impl From<&Diverged> for Error {
    fn from(d: &Diverged) -> Self {
        Error::DivergenceDetected { iteration: d.iteration }
    }
}

/// Mean loss and gradient over a batch, reduced in frame order.
pub fn batch_loss_and_grad(
    params: &RefinerParams,
    batch: &[TrainingFrame],
    cfg: &TrainConfig,
) -> Result<(f64, RefinerParams)> {
    let parts = batch
        .iter()
        .map(|f| f.loss_and_grad(params, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(parts))
}

/// Ordered mean of per-frame `(loss, grad)` pairs.
pub fn reduce(parts: Vec<(f64, RefinerParams)>) -> (f64, RefinerParams) {
    let n = parts.len().max(1) as f64;
    let mut loss = crate::sum::CompensatedSum::new();
    let mut grad = RefinerParams::zeros();
    for (l, g) in &parts {
        loss.add(*l);
        grad.add_scaled(g, 1.0);
    }
    grad.scale(1.0 / n);
    (loss.total() / n, grad)
}

/// Gradient descent with the default sequential batch evaluator.
pub fn train_refiner(
    init: RefinerParams,
    batch: &[TrainingFrame],
    cfg: &TrainConfig,
) -> Result<core::result::Result<Trained, Diverged>> {
    train_refiner_with(init, batch, cfg, |p| batch_loss_and_grad(p, batch, cfg))
}

/// Gradient descent where `eval` returns the batch loss and gradient at a
/// parameter value, so callers can evaluate frames in parallel.
///
/// Input errors come back in the outer `Result`; divergence in the inner.
pub fn train_refiner_with<F>(
    init: RefinerParams,
    batch: &[TrainingFrame],
    cfg: &TrainConfig,
    mut eval: F,
) -> Result<core::result::Result<Trained, Diverged>>
where
    F: FnMut(&RefinerParams) -> Result<(f64, RefinerParams)>,
{
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut params = init;
    if !params.is_finite() {
        return Err(Error::InvalidValue("non-finite refiner parameter"));
    }
    let mut lr = cfg.learning_rate;
    let mut velocity = RefinerParams::zeros();
    let mut history = Vec::with_capacity(cfg.iterations);
    let (mut loss, mut grad) = eval(&params)?;
    for it in 0..cfg.iterations {
        if !loss.is_finite() || !grad.is_finite() {
            return Ok(Err(Diverged {
                iteration: it,
                history,
                params,
            }));
        }
        history.push(loss);
        let prev = params.clone();
        velocity.scale(cfg.momentum);
        velocity.add_scaled(&grad, 1.0);
        params.add_scaled(&velocity, -lr);
        let (next_loss, next_grad) = eval(&params)?;
        if cfg.guarded && !(next_loss <= loss) {
            // step rejected: back off and retry from the same point
            params = prev;
            velocity = RefinerParams::zeros();
            lr *= 0.5;
            continue;
        }
        loss = next_loss;
        grad = next_grad;
    }
    if !loss.is_finite() {
        return Ok(Err(Diverged {
            iteration: cfg.iterations,
            history,
            params,
        }));
    }
    Ok(Ok(Trained {
        params,
        history,
        final_loss: loss,
    }))
}
