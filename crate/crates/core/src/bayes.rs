//! Bayes-by-backprop over circuit parameters.
//!
//! Every weight and bias carries an independent Gaussian `N(μ, σ²)` with
//! `σ = softplus(ρ)`. Samples are drawn with the reparameterization
//! `θ = μ + softplus(ρ) ∘ ε`, so gradients reach `μ` directly and `ρ` through
//! `ε · logistic(ρ)`. The objective is the sample-averaged data loss plus
//! `β · KL(q ‖ N(0, 1))`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::{AngleMap, Ansatz, CircuitParams};
use crate::data::Dataset;
use crate::dropout::aggregate_rows;
use crate::error::{Error, Result};
use crate::grad::mapped_gradient;
use crate::optim::{accumulate, loss, loss_gradient, sigmoid, softplus, Evaluation, Objective, Task};
use crate::predictive::PredictiveSummary;
use crate::seeding::Rng as SeededRng;

pub const DEFAULT_TRAIN_SAMPLES: usize = 10;
pub const DEFAULT_PREDICT_SAMPLES: usize = 1000;
pub const DEFAULT_INIT_RHO: f64 = -3.0;

/// Diagonal Gaussian over the flat `[weights…, biases…]` parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl VariationalPosterior {
    pub fn new(ansatz: &Ansatz, mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let post = Self { mu, rho };
        post.check(ansatz)?;
        Ok(post)
    }

    /// `μ ~ U[0, 2π)` per component and constant `ρ`.
    pub fn init<R: Rng + ?Sized>(ansatz: &Ansatz, rho: f64, rng: &mut R) -> Self {
        let mu = CircuitParams::uniform(ansatz, rng).to_flat();
        let rho = vec![rho; mu.len()];
        Self { mu, rho }
    }

    pub fn check(&self, ansatz: &Ansatz) -> Result<()> {
        let n = ansatz.num_params();
        if self.mu.len() != n || self.rho.len() != n {
            return Err(Error::invalid(format!(
                "posterior has ({}, {}) entries, ansatz needs {n}",
                self.mu.len(),
                self.rho.len()
            )));
        }
        Ok(())
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }

    /// `[μ…, ρ…]`, the vector the optimizer sees.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.rho);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::invalid("flat posterior must have even length"));
        }
        let (mu, rho) = flat.split_at(flat.len() / 2);
        Ok(Self { mu: mu.to_vec(), rho: rho.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// `ρ` with `softplus(ρ) = σ`.
pub fn inverse_softplus(sigma: f64) -> f64 {
    sigma + (-(-sigma).exp_m1()).ln()
}

fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `θ = μ + softplus(ρ) ∘ ε`.
pub fn sample_weights(ansatz: &Ansatz, post: &VariationalPosterior, noise: &[f64]) -> Result<CircuitParams> {
    post.check(ansatz)?;
    if noise.len() != post.len() {
        return Err(Error::invalid(format!("noise has {} entries, posterior {}", noise.len(), post.len())));
    }
    let flat: Vec<f64> = post
        .mu
        .iter()
        .zip(&post.rho)
        .zip(noise)
        .map(|((m, r), e)| m + softplus(*r) * e)
        .collect();
    CircuitParams::from_flat(ansatz, &flat)
}

/// `KL(q ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − ln σ²)`.
pub fn kl_term(post: &VariationalPosterior) -> f64 {
    post.mu
        .iter()
        .zip(&post.rho)
        .map(|(&m, &r)| {
            let s = softplus(r);
            0.5 * (m * m + s * s - 1.0 - 2.0 * s.ln())
        })
        .sum()
}

/// `(∂KL/∂μ, ∂KL/∂ρ)`.
fn kl_gradient(post: &VariationalPosterior) -> (Vec<f64>, Vec<f64>) {
    let dmu = post.mu.clone();
    let drho = post
        .rho
        .iter()
        .map(|&r| {
            let s = softplus(r);
            (s - 1.0 / s) * sigmoid(r)
        })
        .collect();
    (dmu, drho)
}

/// Weighting of the KL term for a dataset of `n` points.
pub fn default_kl_weight(n: usize) -> f64 {
    1.0 / n.max(1) as f64
}

/// Loss, KL contribution and `[∂/∂μ…, ∂/∂ρ…]` for fixed noise draws.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesLoss {
    pub data: f64,
    pub kl: f64,
    pub gradient: Vec<f64>,
}

impl BayesLoss {
    pub fn total(&self) -> f64 {
        self.data + self.kl
    }
}

/// Evaluates the objective for explicit noise vectors (one per weight sample).
pub fn bayes_loss_with_noise(
    ansatz: &Ansatz,
    post: &VariationalPosterior,
    data: &Dataset,
    task: Task,
    kl_weight: f64,
    noises: &[Vec<f64>],
) -> Result<BayesLoss> {
    post.check(ansatz)?;
    if noises.is_empty() {
        return Err(Error::invalid("need at least one weight sample"));
    }
    let n = post.len();
    let scale = 1.0 / noises.len() as f64;
    let dsig: Vec<f64> = post.rho.iter().map(|&r| sigmoid(r)).collect();
    let mut data_loss = 0.0;
    let mut grad_mu = vec![0.0; n];
    let mut grad_rho = vec![0.0; n];
    for eps in noises {
        let params = sample_weights(ansatz, post, eps)?;
        let mut preds = Vec::with_capacity(data.len());
        let mut grads = Vec::with_capacity(data.len());
        for x in &data.inputs {
            let (f, g) = mapped_gradient(ansatz, &AngleMap::plain(ansatz, x)?, &params)?;
            preds.push(f);
            grads.push(g.to_flat());
        }
        data_loss += scale * loss(&preds, &data.targets, task)?;
        let dl = loss_gradient(&preds, &data.targets, task)?;
        let mut g_theta = vec![0.0; n];
        for (w, g) in dl.iter().zip(&grads) {
            accumulate(&mut g_theta, *w, g);
        }
        for k in 0..n {
            grad_mu[k] += scale * g_theta[k];
            grad_rho[k] += scale * g_theta[k] * eps[k] * dsig[k];
        }
    }
    let kl = kl_weight * kl_term(post);
    let (kl_mu, kl_rho) = kl_gradient(post);
    accumulate(&mut grad_mu, kl_weight, &kl_mu);
    accumulate(&mut grad_rho, kl_weight, &kl_rho);
    grad_mu.extend(grad_rho);
    Ok(BayesLoss { data: data_loss, kl, gradient: grad_mu })
}

/// Sample-averaged data loss plus `β·KL`, drawing `samples` noise vectors from `rng`.
pub fn bayes_loss<R: Rng + ?Sized>(
    ansatz: &Ansatz,
    post: &VariationalPosterior,
    data: &Dataset,
    task: Task,
    samples: usize,
    kl_weight: f64,
    rng: &mut R,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("need at least one weight sample"));
    }
    let noises: Vec<Vec<f64>> = (0..samples).map(|_| standard_normal(post.len(), rng)).collect();
    Ok(bayes_loss_with_noise(ansatz, post, data, task, kl_weight, &noises)?.total())
}

/// Outputs at every input under `samples` posterior draws, `[input][sample]`.
pub fn bayes_samples<R: Rng + ?Sized>(
    ansatz: &Ansatz,
    post: &VariationalPosterior,
    inputs: &[Vec<f64>],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    post.check(ansatz)?;
    let mut out = vec![Vec::with_capacity(samples); inputs.len()];
    for _ in 0..samples {
        let params = sample_weights(ansatz, post, &standard_normal(post.len(), rng))?;
        for (row, x) in out.iter_mut().zip(inputs) {
            row.push(crate::circuit::forward(ansatz, x, &params)?);
        }
    }
    Ok(out)
}

/// Monte-Carlo predictive summary from `samples ≥ 2` weight draws.
pub fn bayes_predict<R: Rng + ?Sized>(
    ansatz: &Ansatz,
    post: &VariationalPosterior,
    inputs: &[Vec<f64>],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<PredictiveSummary>> {
    if samples < 2 {
        return Err(Error::invalid("Monte-Carlo prediction needs at least two samples"));
    }
    aggregate_rows(&bayes_samples(ansatz, post, inputs, samples, rng)?)
}

/// Training objective over the flat `[μ…, ρ…]` vector.
#[derive(Debug, Clone)]
pub struct BayesObjective {
    pub ansatz: Ansatz,
    pub samples: usize,
    pub kl_weight: f64,
}

impl Objective for BayesObjective {
    fn num_params(&self) -> usize {
        2 * self.ansatz.num_params()
    }

    fn evaluate(&self, params: &[f64], data: &Dataset, task: Task, rng: &mut SeededRng) -> Result<Evaluation> {
        let post = VariationalPosterior::from_flat(params)?;
        let noises: Vec<Vec<f64>> = (0..self.samples).map(|_| standard_normal(post.len(), rng)).collect();
        let l = bayes_loss_with_noise(&self.ansatz, &post, data, task, self.kl_weight, &noises)?;
        Ok(Evaluation { loss: l.data, regularizer: l.kl, gradient: l.gradient })
    }
}
