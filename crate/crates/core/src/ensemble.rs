//! Ensembles of independently initialized and trained circuits.

use serde::{Deserialize, Serialize};

use crate::circuit::{forward, Ansatz, CircuitParams};
use crate::data::Dataset;
use crate::dropout::mc_aggregate;
use crate::error::{Error, Result};
use crate::optim::{train, DeterministicObjective, TrainConfig};
use crate::predictive::PredictiveSummary;
use crate::seeding;

pub const DEFAULT_MEMBERS: usize = 8;

/// One trained circuit and everything needed to retrain it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub seed: u64,
    pub params: CircuitParams,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub ansatz: Ansatz,
    pub members: Vec<EnsembleMember>,
}

impl EnsembleModel {
    pub fn new(ansatz: Ansatz, members: Vec<EnsembleMember>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::invalid(format!("an ensemble needs at least two members, got {}", members.len())));
        }
        for m in &members {
            m.params.check(&ansatz)?;
        }
        Ok(Self { ansatz, members })
    }
}

/// Member seeds derived from one root seed.
pub fn member_seeds(root: u64, count: usize) -> Vec<u64> {
    (0..count).map(|i| seeding::substream_seed(root, &format!("ensemble-member-{i}"))).collect()
}

/// Trains one member: initialization and (optional) bootstrap sample come from its seed.
pub fn train_member(ansatz: &Ansatz, data: &Dataset, config: &TrainConfig, seed: u64, bagging: bool) -> Result<EnsembleMember> {
    let init = CircuitParams::uniform(ansatz, &mut seeding::substream(seed, "init"));
    let bagged;
    let data = if bagging {
        bagged = data.bootstrap(&mut seeding::substream(seed, "bootstrap"));
        &bagged
    } else {
        data
    };
    let config = TrainConfig { seed, ..*config };
    let out = train(&DeterministicObjective { ansatz: *ansatz }, init.to_flat(), data, &config)?;
    Ok(EnsembleMember { seed, params: CircuitParams::from_flat(ansatz, &out.params)?, trace: out.trace })
}

/// Trains one member per seed; members are independent of each other and of training order.
pub fn train_ensemble_with_seeds(
    ansatz: &Ansatz,
    data: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
    bagging: bool,
) -> Result<EnsembleModel> {
    if seeds.len() < 2 {
        return Err(Error::invalid(format!("an ensemble needs at least two members, got {}", seeds.len())));
    }
    let members = seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            train_member(ansatz, data, config, s, bagging).map_err(|e| Error::Member { member: i, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(*ansatz, members)
}

/// Trains `count` members with seeds derived from `config.seed`.
pub fn train_ensemble(ansatz: &Ansatz, data: &Dataset, config: &TrainConfig, count: usize) -> Result<EnsembleModel> {
    train_ensemble_with_seeds(ansatz, data, config, &member_seeds(config.seed, count), false)
}

/// Member outputs at every input, `[input][member]`.
pub fn ensemble_samples(model: &EnsembleModel, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs
        .iter()
        .map(|x| model.members.iter().map(|m| forward(&model.ansatz, x, &m.params)).collect())
        .collect()
}

/// Empirical mean and spread of the member outputs at every input.
pub fn ensemble_predict(model: &EnsembleModel, inputs: &[Vec<f64>]) -> Result<Vec<PredictiveSummary>> {
    ensemble_samples(model, inputs)?.iter().map(|row| mc_aggregate(row)).collect()
}
