//! Monte-Carlo dropout for re-upload circuits.
//!
//! Three perturbations are supported, each resampled for every forward pass:
//!
//! * **bias-only**: a dropped gate loses its additive parameters, `θ = w ∘ x̃`;
//! * **rotation**: a dropped gate is replaced by the identity;
//! * **gaussian**: every composed angle is scaled by `m ~ N(1, p/(1−p))`.
//!
//! Angles are not activations, so there is no `1/(1−p)` rescaling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::circuit::{forward_mapped, AngleMap, Ansatz, CircuitParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grad::mapped_gradient;
use crate::optim::{accumulate, loss, loss_gradient, Evaluation, Objective, Task};
use crate::predictive::PredictiveSummary;
use crate::seeding::Rng as SeededRng;

pub const DEFAULT_RATE: f64 = 0.1;
pub const DEFAULT_INFERENCE_PASSES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutVariant {
    BiasOnly,
    Rotation,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub variant: DropoutVariant,
    pub rate: f64,
    /// Bias-only variant: drop individual bias components instead of a gate's whole bias vector.
    #[serde(default)]
    pub per_component: bool,
}

impl DropoutSpec {
    pub fn new(variant: DropoutVariant, rate: f64) -> Result<Self> {
        let spec = Self { variant, rate, per_component: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::invalid(format!("dropout rate must lie in [0, 1), got {}", self.rate)));
        }
        Ok(())
    }

    /// Standard deviation of the Gaussian multiplier, `√(p/(1−p))`.
    pub fn gaussian_std(&self) -> f64 {
        (self.rate / (1.0 - self.rate)).sqrt()
    }
}

/// One sampled perturbation of the circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum DropoutMask {
    /// Per angle: `true` drops that bias component.
    Bias(Vec<bool>),
    /// Per gate: `true` replaces the gate by the identity.
    Rotation(Vec<bool>),
    /// Per angle multiplier on `w ∘ x̃ + b`.
    Gaussian(Vec<f64>),
}

impl DropoutMask {
    /// The mask that leaves the circuit untouched.
    pub fn identity(variant: DropoutVariant, ansatz: &Ansatz) -> Self {
        match variant {
            DropoutVariant::BiasOnly => Self::Bias(vec![false; ansatz.num_angles()]),
            DropoutVariant::Rotation => Self::Rotation(vec![false; ansatz.num_gates()]),
            DropoutVariant::Gaussian => Self::Gaussian(vec![1.0; ansatz.num_angles()]),
        }
    }

    fn check(&self, ansatz: &Ansatz) -> Result<()> {
        let (len, expect) = match self {
            Self::Bias(f) => (f.len(), ansatz.num_angles()),
            Self::Rotation(f) => (f.len(), ansatz.num_gates()),
            Self::Gaussian(m) => {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("non-finite Gaussian dropout multiplier"));
                }
                (m.len(), ansatz.num_angles())
            }
        };
        if len != expect {
            return Err(Error::invalid(format!("mask has {len} entries, ansatz needs {expect}")));
        }
        Ok(())
    }

    /// Angle map of the masked circuit at input `x`.
    pub fn angle_map(&self, ansatz: &Ansatz, x: &[f64]) -> Result<AngleMap> {
        self.check(ansatz)?;
        let mut map = AngleMap::plain(ansatz, x)?;
        match self {
            Self::Bias(dropped) => {
                for (cb, &d) in map.bias_coeffs.iter_mut().zip(dropped) {
                    if d {
                        *cb = 0.0;
                    }
                }
            }
            Self::Rotation(dropped) => {
                for (a, &d) in map.active.iter_mut().zip(dropped) {
                    *a = !d;
                }
            }
            Self::Gaussian(mult) => {
                for ((cw, cb), &m) in map.weight_coeffs.iter_mut().zip(map.bias_coeffs.iter_mut()).zip(mult) {
                    *cw *= m;
                    *cb *= m;
                }
            }
        }
        Ok(map)
    }

    /// Fraction of dropped units (gates or bias components); `None` for the Gaussian variant.
    pub fn dropped_fraction(&self) -> Option<f64> {
        match self {
            Self::Bias(f) | Self::Rotation(f) => Some(f.iter().filter(|&&d| d).count() as f64 / f.len() as f64),
            Self::Gaussian(_) => None,
        }
    }
}

/// Samples a fresh mask. `spec.rate` may be 1 here for the Bernoulli variants.
pub fn make_mask<R: Rng + ?Sized>(spec: &DropoutSpec, ansatz: &Ansatz, rng: &mut R) -> Result<DropoutMask> {
    let p = spec.rate;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout rate must lie in [0, 1], got {p}")));
    }
    Ok(match spec.variant {
        DropoutVariant::BiasOnly if spec.per_component => {
            DropoutMask::Bias((0..ansatz.num_angles()).map(|_| rng.gen_bool(p)).collect())
        }
        DropoutVariant::BiasOnly => DropoutMask::Bias(
            (0..ansatz.num_gates())
                .flat_map(|_| {
                    let d = rng.gen_bool(p);
                    [d; 3]
                })
                .collect(),
        ),
        DropoutVariant::Rotation => DropoutMask::Rotation((0..ansatz.num_gates()).map(|_| rng.gen_bool(p)).collect()),
        DropoutVariant::Gaussian => {
            if p >= 1.0 {
                return Err(Error::invalid("Gaussian dropout needs a rate below 1"));
            }
            let sd = spec.gaussian_std();
            DropoutMask::Gaussian(
                (0..ansatz.num_angles())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        1.0 + sd * z
                    })
                    .collect(),
            )
        }
    })
}

/// Forward pass of the masked circuit.
pub fn dropout_forward(ansatz: &Ansatz, params: &CircuitParams, x: &[f64], mask: &DropoutMask) -> Result<f64> {
    forward_mapped(ansatz, &mask.angle_map(ansatz, x)?, params)
}

/// Empirical mean and Bessel-corrected standard deviation.
pub fn mc_aggregate(samples: &[f64]) -> Result<PredictiveSummary> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two samples for a spread estimate, got {}",
            samples.len()
        )));
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(PredictiveSummary::new(mean, var.sqrt()))
}

/// Per-input aggregation of a `[input][pass]` sample table.
pub fn aggregate_rows(samples: &[Vec<f64>]) -> Result<Vec<PredictiveSummary>> {
    samples.iter().map(|row| mc_aggregate(row)).collect()
}

/// Outputs of `passes` masked forward passes at every input, `[input][pass]`.
/// Each pass samples one mask shared by all inputs.
pub fn dropout_samples<R: Rng + ?Sized>(
    ansatz: &Ansatz,
    params: &CircuitParams,
    spec: &DropoutSpec,
    inputs: &[Vec<f64>],
    passes: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::with_capacity(passes); inputs.len()];
    for _ in 0..passes {
        let mask = make_mask(spec, ansatz, rng)?;
        for (row, x) in out.iter_mut().zip(inputs) {
            row.push(dropout_forward(ansatz, params, x, &mask)?);
        }
    }
    Ok(out)
}

/// Monte-Carlo predictive summary from `passes ≥ 2` masked passes.
pub fn dropout_predict<R: Rng + ?Sized>(
    ansatz: &Ansatz,
    params: &CircuitParams,
    spec: &DropoutSpec,
    inputs: &[Vec<f64>],
    passes: usize,
    rng: &mut R,
) -> Result<Vec<PredictiveSummary>> {
    if passes < 2 {
        return Err(Error::invalid("Monte-Carlo prediction needs at least two passes"));
    }
    aggregate_rows(&dropout_samples(ansatz, params, spec, inputs, passes, rng)?)
}

/// Training objective: the loss of the mean over `passes` masked passes,
/// with gradients averaged pass by pass.
#[derive(Debug, Clone)]
pub struct DropoutObjective {
    pub ansatz: Ansatz,
    pub spec: DropoutSpec,
    pub passes: usize,
}

impl Objective for DropoutObjective {
    fn num_params(&self) -> usize {
        self.ansatz.num_params()
    }

    fn evaluate(&self, params: &[f64], data: &Dataset, task: Task, rng: &mut SeededRng) -> Result<Evaluation> {
        if self.passes == 0 {
            return Err(Error::invalid("dropout training needs at least one pass"));
        }
        let params = CircuitParams::from_flat(&self.ansatz, params)?;
        let masks = (0..self.passes)
            .map(|_| make_mask(&self.spec, &self.ansatz, rng))
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 / self.passes as f64;
        let mut preds = Vec::with_capacity(data.len());
        let mut grads = Vec::with_capacity(data.len());
        for x in &data.inputs {
            let mut mean = 0.0;
            let mut grad = vec![0.0; self.num_params()];
            for mask in &masks {
                let (f, g) = mapped_gradient(&self.ansatz, &mask.angle_map(&self.ansatz, x)?, &params)?;
                mean += scale * f;
                accumulate(&mut grad, scale, &g.to_flat());
            }
            preds.push(mean);
            grads.push(grad);
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
