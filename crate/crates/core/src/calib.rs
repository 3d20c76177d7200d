//! Calibration of Gaussian predictive outputs and binned classification confidence.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::predictive::PredictiveSummary;

pub const NUM_LEVELS: usize = 11;
pub const DEFAULT_BINS: usize = 10;
/// Coverage tolerance for points predicted with zero spread.
const POINT_MASS_TOLERANCE: f64 = 1e-12;

/// Observed coverage of central Gaussian intervals at confidence levels 0, 0.1, …, 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub levels: Vec<f64>,
    pub observed: Vec<f64>,
    pub ece: f64,
}

pub fn calibration_levels() -> Vec<f64> {
    (0..NUM_LEVELS).map(|i| i as f64 / (NUM_LEVELS - 1) as f64).collect()
}

/// Half-width, in standard deviations, of the central interval holding probability `q`.
pub fn two_sided_z(q: f64) -> f64 {
    if q <= 0.0 {
        0.0
    } else if q >= 1.0 {
        f64::INFINITY
    } else {
        Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.5 * (1.0 + q))
    }
}

fn covered(s: &PredictiveSummary, y: f64, q: f64, z: f64) -> bool {
    if q >= 1.0 {
        return true;
    }
    if q <= 0.0 {
        return false;
    }
    let dev = (y - s.mean).abs();
    if s.std == 0.0 {
        dev < POINT_MASS_TOLERANCE
    } else {
        dev <= s.std * z
    }
}

pub fn coverage_curve(summaries: &[PredictiveSummary], targets: &[f64]) -> Result<CalibrationReport> {
    if summaries.is_empty() {
        return Err(Error::invalid("calibration needs at least one prediction"));
    }
    if summaries.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} targets",
            summaries.len(),
            targets.len()
        )));
    }
    if let Some(bad) = summaries.iter().find(|s| !(s.std >= 0.0) || !s.mean.is_finite()) {
        return Err(Error::invalid(format!("invalid predictive summary {bad:?}")));
    }
    let levels = calibration_levels();
    let n = targets.len() as f64;
    let observed = levels
        .iter()
        .map(|&q| {
            let z = two_sided_z(q);
            summaries.iter().zip(targets).filter(|(s, &y)| covered(s, y, q, z)).count() as f64 / n
        })
        .collect();
    let mut report = CalibrationReport { levels, observed, ece: 0.0 };
    report.ece = ece(&report);
    Ok(report)
}

/// Mean absolute gap between observed and expected coverage.
pub fn ece(report: &CalibrationReport) -> f64 {
    let sum: f64 = report.levels.iter().zip(&report.observed).map(|(q, o)| (o - q).abs()).sum();
    sum / report.levels.len() as f64
}

/// Binned ECE over the confidence `max(p, 1 − p)` of the predicted label.
pub fn classification_ece(probabilities: &[f64], labels: &[f64], num_bins: usize) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::invalid("probabilities and labels differ in length"));
    }
    if num_bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("probabilities must lie in [0, 1]"));
    }
    if probabilities.is_empty() {
        return Ok(0.0);
    }
    let mut count = vec![0usize; num_bins];
    let mut conf = vec![0.0; num_bins];
    let mut correct = vec![0.0; num_bins];
    for (&p, &y) in probabilities.iter().zip(labels) {
        let c = p.max(1.0 - p);
        let bin = ((c * num_bins as f64) as usize).min(num_bins - 1);
        let predicted = if p >= 0.5 { 1.0 } else { 0.0 };
        count[bin] += 1;
        conf[bin] += c;
        if predicted == y {
            correct[bin] += 1.0;
        }
    }
    let n = probabilities.len() as f64;
    Ok((0..num_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (correct[b] - conf[b]).abs() / n)
        .sum())
}

pub fn write_calibration_csv<W: Write>(writer: W, report: &CalibrationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["level", "observed"])?;
    for (q, o) in report.levels.iter().zip(&report.observed) {
        w.write_record([format!("{q:.1}"), o.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
