use serde::{Deserialize, Serialize};

/// Mean and standard deviation of a predictive distribution at one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub std: f64,
}

impl PredictiveSummary {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    /// A point prediction with no spread.
    pub fn point(mean: f64) -> Self {
        Self { mean, std: 0.0 }
    }
}
