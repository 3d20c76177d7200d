//! End-to-end runs: data generation, fitting, prediction and calibration.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bayes::{bayes_samples, default_kl_weight, BayesObjective, VariationalPosterior};
use crate::calib::{classification_ece, coverage_curve, CalibrationReport};
use crate::circuit::{forward, Ansatz, CircuitParams};
use crate::config::{ExperimentConfig, Method};
use crate::data::{evaluation_set, make_regression_dataset_with_noise, make_two_moons, Dataset};
use crate::dropout::{aggregate_rows, dropout_samples, DropoutObjective, DropoutSpec, DropoutVariant};
use crate::ensemble::{ensemble_samples, member_seeds, train_ensemble_with_seeds, EnsembleModel};
use crate::error::{Error, Result};
use crate::gp::{GpClassifier, GpDiagnostics, GpRegressor, LinkApproximation, QuantumKernel};
use crate::optim::{loss, sigmoid, train, AdamConfig, DeterministicObjective, Task, TrainConfig};
use crate::predictive::PredictiveSummary;
use crate::seeding;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Training and evaluation sets of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: Dataset,
    pub eval: Dataset,
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<ExperimentData> {
    config.validate()?;
    let data_seed = seeding::substream_seed(config.seed, "dataset");
    let eval_seed = seeding::substream_seed(config.seed, "eval");
    match config.task {
        Task::Regression => {
            let noise = config.effective_noise_std();
            let train = make_regression_dataset_with_noise(config.variant, config.train_points, noise, data_seed)?.data;
            let eval_noise = if config.noiseless_eval_targets { 0.0 } else { noise };
            let eval = evaluation_set(config.eval_points, eval_noise, eval_seed)?;
            Ok(ExperimentData { train, eval })
        }
        Task::Classification => {
            let train = make_two_moons(config.moons_points, config.moons_noise, data_seed)?.data;
            let eval = make_two_moons(config.eval_points.max(2), config.moons_noise, eval_seed)?.data;
            Ok(ExperimentData { train, eval })
        }
    }
}

/// A fitted model, self-contained enough to predict without the training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Circuit {
        ansatz: Ansatz,
        params: CircuitParams,
    },
    Bayes {
        ansatz: Ansatz,
        posterior: VariationalPosterior,
    },
    Dropout {
        ansatz: Ansatz,
        params: CircuitParams,
        spec: DropoutSpec,
    },
    Ensemble(EnsembleModel),
    /// GP regression; refactorized from the stored training set on load.
    GpRegression {
        kernel: QuantumKernel,
        train: Dataset,
        noise_var: f64,
        /// Report `√(V + σ²)` rather than the latent spread.
        observation_std: bool,
    },
    GpClassification {
        kernel: QuantumKernel,
        train: Dataset,
        link: LinkApproximation,
    },
}

/// Predictions at a list of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    /// Spread of the circuit output (or latent GP value).
    pub summaries: Vec<PredictiveSummary>,
    /// Probability of label 1, for classifiers.
    pub probabilities: Option<Vec<f64>>,
}

fn sample_outputs(samples: Vec<Vec<f64>>, task: Task) -> Result<ModelOutputs> {
    let probabilities = (task == Task::Classification).then(|| {
        samples
            .iter()
            .map(|row| row.iter().map(|&f| sigmoid(f)).sum::<f64>() / row.len() as f64)
            .collect()
    });
    Ok(ModelOutputs { summaries: aggregate_rows(&samples)?, probabilities })
}

impl TrainedModel {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Circuit { .. } => Method::Deterministic,
            TrainedModel::Bayes { .. } => Method::Bayes,
            TrainedModel::Dropout { spec, .. } => match spec.variant {
                DropoutVariant::BiasOnly => Method::McBias,
                DropoutVariant::Rotation => Method::McRotation,
                DropoutVariant::Gaussian => Method::McGaussian,
            },
            TrainedModel::Ensemble(_) => Method::Ensemble,
            TrainedModel::GpRegression { .. } | TrainedModel::GpClassification { .. } => Method::Gp,
        }
    }

    /// Predicts at `inputs`; stochastic models draw `passes` samples from substreams of `seed`.
    pub fn predict(&self, inputs: &[Vec<f64>], task: Task, passes: usize, seed: u64) -> Result<ModelOutputs> {
        match self {
            TrainedModel::Circuit { ansatz, params } => {
                let out = inputs.iter().map(|x| forward(ansatz, x, params)).collect::<Result<Vec<_>>>()?;
                let probabilities = (task == Task::Classification).then(|| out.iter().map(|&f| sigmoid(f)).collect());
                Ok(ModelOutputs { summaries: out.into_iter().map(PredictiveSummary::point).collect(), probabilities })
            }
            TrainedModel::Bayes { ansatz, posterior } => {
                let mut rng = seeding::substream(seed, "bayes-noise");
                sample_outputs(bayes_samples(ansatz, posterior, inputs, passes, &mut rng)?, task)
            }
            TrainedModel::Dropout { ansatz, params, spec } => {
                let mut rng = seeding::substream(seed, "dropout");
                sample_outputs(dropout_samples(ansatz, params, spec, inputs, passes, &mut rng)?, task)
            }
            TrainedModel::Ensemble(model) => sample_outputs(ensemble_samples(model, inputs)?, task),
            TrainedModel::GpRegression { kernel, train, noise_var, observation_std } => {
                let gp = GpRegressor::fit(kernel.clone(), train, *noise_var)?;
                let summaries = gp.predict(inputs, *observation_std)?;
                Ok(ModelOutputs { summaries, probabilities: None })
            }
            TrainedModel::GpClassification { kernel, train, link } => {
                let gp = GpClassifier::fit(kernel.clone(), train)?.with_link(*link);
                let mut summaries = Vec::with_capacity(inputs.len());
                let mut probs = Vec::with_capacity(inputs.len());
                for x in inputs {
                    let (m, v) = gp.predict_latent(x)?;
                    summaries.push(PredictiveSummary::new(m, v.sqrt()));
                    probs.push(crate::gp::link_probability(m, v, *link));
                }
                Ok(ModelOutputs { summaries, probabilities: Some(probs) })
            }
        }
    }
}

/// Result of fitting one model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: TrainedModel,
    /// One loss trace per trained circuit (empty for GPs).
    pub traces: Vec<Vec<f64>>,
    pub gp_diagnostics: Option<GpDiagnostics>,
}

fn train_config(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: config.max_epochs,
        mse_stop: config.mse_stop,
        ce_stop: config.ce_stop,
        task: config.task,
        seed,
        adam: AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() },
    }
}

pub fn model_ansatz(config: &ExperimentConfig) -> Result<Ansatz> {
    Ansatz::new(config.num_qubits, config.num_layers, config.input_dim())
}

pub fn kernel_for(config: &ExperimentConfig) -> Result<QuantumKernel> {
    Ok(QuantumKernel::random(Ansatz::new(config.kernel_qubits, config.kernel_layers, config.input_dim())?, config.seed))
}

fn dropout_spec(config: &ExperimentConfig, variant: DropoutVariant) -> Result<DropoutSpec> {
    let mut spec = DropoutSpec::new(variant, config.dropout_rate)?;
    spec.per_component = config.bias_per_component;
    Ok(spec)
}

pub fn fit(config: &ExperimentConfig, train_data: &Dataset) -> Result<FitOutcome> {
    config.validate()?;
    let tc = train_config(config, config.seed);
    let init_rng = || seeding::substream(config.seed, "init");
    let circuit = |objective_out: crate::optim::TrainOutcome, ansatz: &Ansatz| {
        CircuitParams::from_flat(ansatz, &objective_out.params)
    };
    match config.method {
        Method::Deterministic => {
            let ansatz = model_ansatz(config)?;
            let init = CircuitParams::uniform(&ansatz, &mut init_rng());
            let out = train(&DeterministicObjective { ansatz }, init.to_flat(), train_data, &tc)?;
            let traces = vec![out.trace.clone()];
            Ok(FitOutcome { model: TrainedModel::Circuit { ansatz, params: circuit(out, &ansatz)? }, traces, gp_diagnostics: None })
        }
        Method::McBias | Method::McRotation | Method::McGaussian => {
            let variant = match config.method {
                Method::McBias => DropoutVariant::BiasOnly,
                Method::McRotation => DropoutVariant::Rotation,
                _ => DropoutVariant::Gaussian,
            };
            let ansatz = model_ansatz(config)?;
            let spec = dropout_spec(config, variant)?;
            let init = CircuitParams::uniform(&ansatz, &mut init_rng());
            let objective = DropoutObjective { ansatz, spec, passes: config.train_passes };
            let out = train(&objective, init.to_flat(), train_data, &tc)?;
            let traces = vec![out.trace.clone()];
            Ok(FitOutcome {
                model: TrainedModel::Dropout { ansatz, params: circuit(out, &ansatz)?, spec },
                traces,
                gp_diagnostics: None,
            })
        }
        Method::Bayes => {
            let ansatz = model_ansatz(config)?;
            let init = VariationalPosterior::init(&ansatz, config.bayes_init_rho, &mut init_rng());
            let objective = BayesObjective {
                ansatz,
                samples: config.bayes_samples,
                kl_weight: config.kl_weight.unwrap_or_else(|| default_kl_weight(train_data.len())),
            };
            let out = train(&objective, init.to_flat(), train_data, &tc)?;
            let posterior = VariationalPosterior::from_flat(&out.params)?;
            Ok(FitOutcome { model: TrainedModel::Bayes { ansatz, posterior }, traces: vec![out.trace], gp_diagnostics: None })
        }
        Method::Ensemble => {
            let ansatz = model_ansatz(config)?;
            let seeds = member_seeds(config.seed, config.ensemble_members);
            let model = train_ensemble_with_seeds(&ansatz, train_data, &tc, &seeds, config.bagging)?;
            let traces = model.members.iter().map(|m| m.trace.clone()).collect();
            Ok(FitOutcome { model: TrainedModel::Ensemble(model), traces, gp_diagnostics: None })
        }
        Method::Gp => {
            let kernel = kernel_for(config)?;
            match config.task {
                Task::Regression => {
                    let noise_var = config.effective_gp_noise_var();
                    let gp = GpRegressor::fit(kernel.clone(), train_data, noise_var)?;
                    let observation_std = config.effective_noise_std() > 0.0 && !config.gp_latent_std;
                    Ok(FitOutcome {
                        model: TrainedModel::GpRegression { kernel, train: train_data.clone(), noise_var, observation_std },
                        traces: Vec::new(),
                        gp_diagnostics: Some(gp.diagnostics()),
                    })
                }
                Task::Classification => {
                    GpClassifier::fit(kernel.clone(), train_data)?;
                    let link = if config.gp_quadrature { LinkApproximation::Quadrature } else { LinkApproximation::Moderated };
                    Ok(FitOutcome {
                        model: TrainedModel::GpClassification { kernel, train: train_data.clone(), link },
                        traces: Vec::new(),
                        gp_diagnostics: None,
                    })
                }
            }
        }
    }
}

/// Prediction at one input next to its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub target: f64,
    pub mean: f64,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    /// Binned ECE on the evaluation set.
    pub ece: f64,
}

/// Everything a run produced, enough to re-plot without other context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub traces: Vec<Vec<f64>>,
    pub train_points: Vec<PointRecord>,
    pub points: Vec<PointRecord>,
    pub calibration: Option<CalibrationReport>,
    pub classification: Option<ClassificationMetrics>,
    pub gp_diagnostics: Option<GpDiagnostics>,
    pub wall_clock_seconds: f64,
}

impl ResultRecord {
    /// Headline calibration error: coverage ECE for regression, binned ECE for classification.
    pub fn ece(&self) -> Option<f64> {
        self.calibration.as_ref().map(|c| c.ece).or(self.classification.as_ref().map(|c| c.ece))
    }

    /// Mean training loss of the last recorded epoch, over all traces.
    pub fn final_losses(&self) -> Vec<f64> {
        self.traces.iter().filter_map(|t| t.last().copied()).collect()
    }

    /// JSON with the wall-clock field zeroed, for reproducibility checks.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_clock_seconds = 0.0;
        Ok(serde_json::to_string_pretty(&copy)?)
    }
}

fn point_records(data: &Dataset, out: &ModelOutputs) -> Vec<PointRecord> {
    data.inputs
        .iter()
        .zip(&data.targets)
        .enumerate()
        .map(|(i, (x, &target))| PointRecord {
            x: x.clone(),
            target,
            mean: out.summaries[i].mean,
            std: out.summaries[i].std,
            probability: out.probabilities.as_ref().map(|p| p[i]),
        })
        .collect()
}

fn accuracy(probs: &[f64], labels: &[f64]) -> f64 {
    let hits = probs.iter().zip(labels).filter(|(p, y)| (if **p >= 0.5 { 1.0 } else { 0.0 }) == **y).count();
    hits as f64 / labels.len().max(1) as f64
}

/// Predicts on both sets and computes the calibration summary.
pub fn evaluate(
    config: &ExperimentConfig,
    fitted: &FitOutcome,
    data: &ExperimentData,
    started: Instant,
) -> Result<ResultRecord> {
    let train_out = fitted.model.predict(&data.train.inputs, config.task, config.predict_passes, config.seed)?;
    let eval_out = fitted.model.predict(&data.eval.inputs, config.task, config.predict_passes, config.seed)?;
    let (calibration, classification) = match config.task {
        Task::Regression => (Some(coverage_curve(&eval_out.summaries, &data.eval.targets)?), None),
        Task::Classification => {
            let (tp, ep) = match (&train_out.probabilities, &eval_out.probabilities) {
                (Some(t), Some(e)) => (t, e),
                _ => return Err(Error::invalid("classifier produced no probabilities")),
            };
            let metrics = ClassificationMetrics {
                train_accuracy: accuracy(tp, &data.train.targets),
                eval_accuracy: accuracy(ep, &data.eval.targets),
                ece: classification_ece(ep, &data.eval.targets, config.calibration_bins)?,
            };
            (None, Some(metrics))
        }
    };
    Ok(ResultRecord {
        config: config.clone(),
        library_version: LIBRARY_VERSION.to_string(),
        traces: fitted.traces.clone(),
        train_points: point_records(&data.train, &train_out),
        points: point_records(&data.eval, &eval_out),
        calibration,
        classification,
        gp_diagnostics: fitted.gp_diagnostics,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// A finished run and the model behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub record: ResultRecord,
    pub model: TrainedModel,
    pub data: ExperimentData,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    let started = Instant::now();
    let data = prepare_data(config)?;
    let fitted = fit(config, &data.train)?;
    let record = evaluate(config, &fitted, &data, started)?;
    Ok(ExperimentRun { record, model: fitted.model, data })
}

/// Training loss of a plain circuit on a dataset, the quantity the early stop watches.
pub fn circuit_loss(ansatz: &Ansatz, params: &CircuitParams, data: &Dataset, task: Task) -> Result<f64> {
    let preds = data.inputs.iter().map(|x| forward(ansatz, x, params)).collect::<Result<Vec<_>>>()?;
    loss(&preds, &data.targets, task)
}

/// ECE of every uncertainty method for each root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub eces: Vec<f64>,
}

impl Table1Row {
    pub fn median(&self) -> f64 {
        median(&self.eces)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs the six uncertainty methods on `base`'s task for every seed.
pub fn run_table1(base: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<Table1Row>> {
    Method::UNCERTAINTY
        .iter()
        .map(|&method| {
            let eces = seeds
                .iter()
                .map(|&seed| {
                    let config = ExperimentConfig { method, seed, ..base.clone() };
                    let run = run_experiment(&config)?;
                    run.record.ece().ok_or_else(|| Error::invalid("run produced no calibration"))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Table1Row { method, seeds: seeds.to_vec(), eces })
        })
        .collect()
}
