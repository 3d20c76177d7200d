//! Losses, Adam, and the full-batch training loop with early stopping.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::circuit::{AngleMap, Ansatz, CircuitParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grad::mapped_gradient;
use crate::seeding::{self, Rng};

/// Learning problem; decides the loss and the early-stopping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Self::Regression),
            "classification" => Ok(Self::Classification),
            _ => Err(Error::Config(format!("unknown task '{s}'"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_pair(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::invalid("loss of an empty batch"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Mean squared error for regression; mean binary cross-entropy with the
/// prediction read as a logit for classification.
pub fn loss(predictions: &[f64], targets: &[f64], task: Task) -> Result<f64> {
    check_pair(predictions, targets)?;
    let n = predictions.len() as f64;
    let total: f64 = match task {
        Task::Regression => predictions.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum(),
        Task::Classification => {
            if targets.iter().any(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::invalid("classification targets must be 0 or 1"));
            }
            predictions.iter().zip(targets).map(|(&f, &y)| softplus(f) - y * f).sum()
        }
    };
    Ok(total / n)
}

/// `∂loss/∂prediction_i`.
pub fn loss_gradient(predictions: &[f64], targets: &[f64], task: Task) -> Result<Vec<f64>> {
    check_pair(predictions, targets)?;
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| match task {
            Task::Regression => 2.0 * (p - y) / n,
            Task::Classification => (sigmoid(p) - y) / n,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self { config, first: vec![0.0; num_params], second: vec![0.0; num_params], step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::invalid(format!(
                "Adam state has {} entries, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

pub const MSE_STOP: f64 = 0.005;
pub const CE_STOP: f64 = 0.3;
pub const DEFAULT_MAX_EPOCHS: usize = 1000;
/// Stochastic forward passes averaged per training step.
pub const DEFAULT_TRAIN_PASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub mse_stop: f64,
    pub ce_stop: f64,
    pub task: Task,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            max_epochs: DEFAULT_MAX_EPOCHS,
            mse_stop: MSE_STOP,
            ce_stop: CE_STOP,
            task,
            seed,
            adam: AdamConfig::default(),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self.task {
            Task::Regression => self.mse_stop,
            Task::Classification => self.ce_stop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.mse_stop > 0.0 && self.ce_stop > 0.0) {
            return Err(Error::Config("early-stopping thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// One full-batch evaluation of a training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Data-fit term; compared against the early-stopping threshold.
    pub loss: f64,
    /// Extra penalty included in the optimized objective (zero for most models).
    pub regularizer: f64,
    /// Gradient of `loss + regularizer` with respect to the flat parameters.
    pub gradient: Vec<f64>,
}

/// A model whose flat parameter vector is trained by [`train`].
pub trait Objective {
    fn num_params(&self) -> usize;

    /// Evaluates loss and gradient; `rng` feeds any stochastic forward passes.
    fn evaluate(&self, params: &[f64], data: &Dataset, task: Task, rng: &mut Rng) -> Result<Evaluation>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    /// Loss at the start of every epoch that ran.
    pub trace: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Full-batch Adam until the loss drops below the task threshold or
/// `max_epochs` epochs have run. The epoch that meets the threshold is the
/// last one recorded and triggers no update.
pub fn train<O: Objective + ?Sized>(
    objective: &O,
    init: Vec<f64>,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if init.len() != objective.num_params() {
        return Err(Error::invalid(format!(
            "objective has {} parameters, initial vector has {}",
            objective.num_params(),
            init.len()
        )));
    }
    let mut rng = seeding::substream(config.seed, "train");
    let mut adam = Adam::new(init.len(), config.adam);
    let mut params = init;
    let mut trace = Vec::with_capacity(config.max_epochs);
    let threshold = config.threshold();
    for epoch in 1..=config.max_epochs {
        // Shapes and data were accepted at epoch 1, so a later rejection comes from blown-up parameters.
        let eval = match objective.evaluate(&params, data, config.task, &mut rng) {
            Err(Error::InvalidArgument(_)) if epoch > 1 => return Err(Error::Diverged { epoch, loss: f64::NAN }),
            other => other?,
        };
        let total = eval.loss + eval.regularizer;
        if !total.is_finite() || eval.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch, loss: total });
        }
        trace.push(eval.loss);
        if eval.loss < threshold {
            return Ok(TrainOutcome { params, trace, stopped_early: true });
        }
        adam.step(&mut params, &eval.gradient)?;
    }
    Ok(TrainOutcome { params, trace, stopped_early: false })
}

/// Sums `Σ_i weight_i · grad_i` into `out`.
pub(crate) fn accumulate(out: &mut [f64], weight: f64, grad: &[f64]) {
    for (o, g) in out.iter_mut().zip(grad) {
        *o += weight * g;
    }
}

/// Plain circuit trained on its point predictions.
#[derive(Debug, Clone)]
pub struct DeterministicObjective {
    pub ansatz: Ansatz,
}

impl Objective for DeterministicObjective {
    fn num_params(&self) -> usize {
        self.ansatz.num_params()
    }

    fn evaluate(&self, params: &[f64], data: &Dataset, task: Task, _rng: &mut Rng) -> Result<Evaluation> {
        let params = CircuitParams::from_flat(&self.ansatz, params)?;
        let mut preds = Vec::with_capacity(data.len());
        let mut grads = Vec::with_capacity(data.len());
        for x in &data.inputs {
            let (f, g) = mapped_gradient(&self.ansatz, &AngleMap::plain(&self.ansatz, x)?, &params)?;
            preds.push(f);
            grads.push(g.to_flat());
        }
        let loss_value = loss(&preds, &data.targets, task)?;
        let dl = loss_gradient(&preds, &data.targets, task)?;
        let mut gradient = vec![0.0; self.num_params()];
        for (w, g) in dl.iter().zip(&grads) {
            accumulate(&mut gradient, *w, g);
        }
        Ok(Evaluation { loss: loss_value, regularizer: 0.0, gradient })
    }
}

/// Writes a loss trace as `epoch,loss` CSV (epochs counted from 1).
pub fn write_trace_csv<W: Write>(writer: W, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "loss"])?;
    for (i, l) in trace.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{l:?}")])?;
    }
    w.flush()?;
    Ok(())
}
