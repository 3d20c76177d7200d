//! Experiment configuration: defaults, `key = value` files and overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::RegressionVariant;
use crate::error::{Error, Result};
use crate::optim::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Deterministic,
    Bayes,
    McBias,
    McRotation,
    McGaussian,
    Ensemble,
    Gp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Deterministic,
        Method::Bayes,
        Method::McBias,
        Method::McRotation,
        Method::McGaussian,
        Method::Ensemble,
        Method::Gp,
    ];

    /// The six methods that report an uncertainty.
    pub const UNCERTAINTY: [Method; 6] =
        [Method::Bayes, Method::McBias, Method::McRotation, Method::McGaussian, Method::Ensemble, Method::Gp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Deterministic => "deterministic",
            Method::Bayes => "bayes",
            Method::McBias => "mc_bias",
            Method::McRotation => "mc_rotation",
            Method::McGaussian => "mc_gaussian",
            Method::Ensemble => "ensemble",
            Method::Gp => "gp",
        }
    }

    /// Row label used in tables and plots.
    pub fn label(self) -> &'static str {
        match self {
            Method::Deterministic => "Deterministic circuit",
            Method::Bayes => "Bayesian QML",
            Method::McBias => "MC dropout (bias-only)",
            Method::McRotation => "MC dropout (rotation)",
            Method::McGaussian => "MC dropout (Gaussian)",
            Method::Ensemble => "Circuit ensemble",
            Method::Gp => "Quantum-kernel GP",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Every knob of one run. Defaults reproduce the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub task: Task,
    /// Regression only.
    pub variant: RegressionVariant,
    pub num_qubits: usize,
    pub num_layers: usize,
    /// Grid size before the gap is removed.
    pub train_points: usize,
    pub eval_points: usize,
    /// Observation noise of the noisy regression variant.
    pub noise_std: f64,
    /// Score coverage against the noise-free target function instead of noisy draws.
    pub noiseless_eval_targets: bool,
    pub moons_points: usize,
    pub moons_noise: f64,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub mse_stop: f64,
    pub ce_stop: f64,
    pub dropout_rate: f64,
    pub bias_per_component: bool,
    /// Stochastic forward passes averaged per training step.
    pub train_passes: usize,
    /// Stochastic forward passes at prediction time.
    pub predict_passes: usize,
    pub bayes_samples: usize,
    pub bayes_init_rho: f64,
    /// `None` means `1 / N`.
    pub kl_weight: Option<f64>,
    pub ensemble_members: usize,
    pub bagging: bool,
    pub kernel_qubits: usize,
    pub kernel_layers: usize,
    /// `None` means 0 for noiseless data and `noise_std²` otherwise.
    pub gp_noise_var: Option<f64>,
    /// Calibrate the noisy GP on the latent spread only.
    pub gp_latent_std: bool,
    pub gp_quadrature: bool,
    pub calibration_bins: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Deterministic,
            task: Task::Regression,
            variant: RegressionVariant::Noisy,
            num_qubits: 1,
            num_layers: 6,
            train_points: crate::data::DEFAULT_REGRESSION_POINTS,
            eval_points: crate::data::DEFAULT_EVAL_POINTS,
            noise_std: 0.1,
            noiseless_eval_targets: false,
            moons_points: 200,
            moons_noise: 0.15,
            max_epochs: crate::optim::DEFAULT_MAX_EPOCHS,
            learning_rate: 0.01,
            mse_stop: crate::optim::MSE_STOP,
            ce_stop: crate::optim::CE_STOP,
            dropout_rate: crate::dropout::DEFAULT_RATE,
            bias_per_component: false,
            train_passes: crate::optim::DEFAULT_TRAIN_PASSES,
            predict_passes: crate::dropout::DEFAULT_INFERENCE_PASSES,
            bayes_samples: crate::bayes::DEFAULT_TRAIN_SAMPLES,
            bayes_init_rho: crate::bayes::DEFAULT_INIT_RHO,
            kl_weight: None,
            ensemble_members: crate::ensemble::DEFAULT_MEMBERS,
            bagging: false,
            kernel_qubits: crate::gp::DEFAULT_KERNEL_QUBITS,
            kernel_layers: crate::gp::DEFAULT_KERNEL_LAYERS,
            gp_noise_var: None,
            gp_latent_std: false,
            gp_quadrature: false,
            calibration_bins: crate::calib::DEFAULT_BINS,
            seed: 0,
            output_dir: PathBuf::from("results"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value {
        "" | "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 33] = [
        "method",
        "task",
        "variant",
        "num_qubits",
        "num_layers",
        "train_points",
        "eval_points",
        "noise_std",
        "noiseless_eval_targets",
        "moons_points",
        "moons_noise",
        "max_epochs",
        "learning_rate",
        "mse_stop",
        "ce_stop",
        "dropout_rate",
        "bias_per_component",
        "train_passes",
        "predict_passes",
        "bayes_samples",
        "bayes_init_rho",
        "kl_weight",
        "ensemble_members",
        "bagging",
        "kernel_qubits",
        "kernel_layers",
        "gp_noise_var",
        "gp_latent_std",
        "gp_quadrature",
        "calibration_bins",
        "seed",
        "output_dir",
        "input_dim",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "method" => self.method = value.parse()?,
            "task" => self.task = parse(key, value)?,
            "variant" => self.variant = parse(key, value)?,
            "num_qubits" => self.num_qubits = parse(key, value)?,
            "num_layers" => self.num_layers = parse(key, value)?,
            "train_points" => self.train_points = parse(key, value)?,
            "eval_points" => self.eval_points = parse(key, value)?,
            "noise_std" => self.noise_std = parse(key, value)?,
            "noiseless_eval_targets" => self.noiseless_eval_targets = parse(key, value)?,
            "moons_points" => self.moons_points = parse(key, value)?,
            "moons_noise" => self.moons_noise = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "mse_stop" => self.mse_stop = parse(key, value)?,
            "ce_stop" => self.ce_stop = parse(key, value)?,
            "dropout_rate" => self.dropout_rate = parse(key, value)?,
            "bias_per_component" => self.bias_per_component = parse(key, value)?,
            "train_passes" => self.train_passes = parse(key, value)?,
            "predict_passes" => self.predict_passes = parse(key, value)?,
            "bayes_samples" => self.bayes_samples = parse(key, value)?,
            "bayes_init_rho" => self.bayes_init_rho = parse(key, value)?,
            "kl_weight" => self.kl_weight = parse_optional(key, value)?,
            "ensemble_members" => self.ensemble_members = parse(key, value)?,
            "bagging" => self.bagging = parse(key, value)?,
            "kernel_qubits" => self.kernel_qubits = parse(key, value)?,
            "kernel_layers" => self.kernel_layers = parse(key, value)?,
            "gp_noise_var" => self.gp_noise_var = parse_optional(key, value)?,
            "gp_latent_std" => self.gp_latent_std = parse(key, value)?,
            "gp_quadrature" => self.gp_quadrature = parse(key, value)?,
            "calibration_bins" => self.calibration_bins = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "input_dim" => return Err(Error::Config("`input_dim` follows from the task and cannot be set".into())),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_str_with_defaults(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_str(text)?;
        Ok(c)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// The resolved configuration in the file format accepted by [`apply_str`](Self::apply_str).
    pub fn to_key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let task = match self.task {
            Task::Regression => "regression",
            Task::Classification => "classification",
        };
        let lines = [
            ("method", self.method.to_string()),
            ("task", task.to_string()),
            ("variant", self.variant.as_str().to_string()),
            ("num_qubits", self.num_qubits.to_string()),
            ("num_layers", self.num_layers.to_string()),
            ("train_points", self.train_points.to_string()),
            ("eval_points", self.eval_points.to_string()),
            ("noise_std", self.noise_std.to_string()),
            ("noiseless_eval_targets", self.noiseless_eval_targets.to_string()),
            ("moons_points", self.moons_points.to_string()),
            ("moons_noise", self.moons_noise.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("mse_stop", self.mse_stop.to_string()),
            ("ce_stop", self.ce_stop.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("bias_per_component", self.bias_per_component.to_string()),
            ("train_passes", self.train_passes.to_string()),
            ("predict_passes", self.predict_passes.to_string()),
            ("bayes_samples", self.bayes_samples.to_string()),
            ("bayes_init_rho", self.bayes_init_rho.to_string()),
            ("kl_weight", opt(self.kl_weight)),
            ("ensemble_members", self.ensemble_members.to_string()),
            ("bagging", self.bagging.to_string()),
            ("kernel_qubits", self.kernel_qubits.to_string()),
            ("kernel_layers", self.kernel_layers.to_string()),
            ("gp_noise_var", opt(self.gp_noise_var)),
            ("gp_latent_std", self.gp_latent_std.to_string()),
            ("gp_quadrature", self.gp_quadrature.to_string()),
            ("calibration_bins", self.calibration_bins.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Input dimension implied by the task.
    pub fn input_dim(&self) -> usize {
        match self.task {
            Task::Regression => 1,
            Task::Classification => 2,
        }
    }

    /// Noise level of the training targets.
    pub fn effective_noise_std(&self) -> f64 {
        match self.variant {
            RegressionVariant::Noiseless => 0.0,
            RegressionVariant::Noisy => self.noise_std,
        }
    }

    pub fn effective_gp_noise_var(&self) -> f64 {
        self.gp_noise_var.unwrap_or_else(|| match self.task {
            Task::Regression => self.effective_noise_std().powi(2),
            Task::Classification => 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_qubits == 0 || self.num_qubits > crate::circuit::MAX_QUBITS {
            return bad(format!("num_qubits must lie in 1..={}", crate::circuit::MAX_QUBITS));
        }
        if self.kernel_qubits == 0 || self.kernel_qubits > crate::circuit::MAX_QUBITS {
            return bad(format!("kernel_qubits must lie in 1..={}", crate::circuit::MAX_QUBITS));
        }
        if self.num_layers == 0 || self.kernel_layers == 0 {
            return bad("layer counts must be positive".into());
        }
        if self.train_points < 2 || self.moons_points < 2 {
            return bad("need at least two training points".into());
        }
        if self.eval_points == 0 {
            return bad("need at least one evaluation point".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !(self.moons_noise >= 0.0 && self.moons_noise.is_finite())
        {
            return bad("noise levels must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.train_passes == 0 || self.bayes_samples == 0 {
            return bad("train_passes and bayes_samples must be positive".into());
        }
        if self.predict_passes < 2 {
            return bad("predict_passes must be at least 2".into());
        }
        if self.ensemble_members < 2 {
            return bad("ensemble_members must be at least 2".into());
        }
        if self.calibration_bins == 0 {
            return bad("calibration_bins must be positive".into());
        }
        if self.kl_weight.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
            return bad("kl_weight must be finite and non-negative".into());
        }
        if self.gp_noise_var.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
            return bad("gp_noise_var must be finite and non-negative".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if !self.bayes_init_rho.is_finite() {
            return bad("bayes_init_rho must be finite".into());
        }
        Ok(())
    }
}
