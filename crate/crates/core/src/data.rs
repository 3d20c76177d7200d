//! Seeded generators for the regression and two-moons benchmarks.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Inputs (one row per point) and scalar targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.len() != first.len()) {
                return Err(Error::invalid("inputs have inconsistent dimensions"));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    /// Bootstrap resample of the same size.
    pub fn bootstrap<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let n = self.len();
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// Degree-two Fourier series `Σ_{n=-2..2} c_n e^{-inx}` with `c_0 = 0.1`,
/// `c_1 = c_2 = 0.15 − 0.15i` and `c_{-k} = c_k*`.
pub fn fourier_target(x: f64) -> f64 {
    let c_pos = Complex64::new(0.15, -0.15);
    let coeff = |n: i32| match n {
        0 => Complex64::new(0.1, 0.0),
        n if n > 0 => c_pos,
        _ => c_pos.conj(),
    };
    (-2..=2)
        .map(|n| coeff(n) * Complex64::from_polar(1.0, -f64::from(n) * x))
        .sum::<Complex64>()
        .re
}

/// Which regression benchmark to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionVariant {
    /// Gap over `[π, 1.6π)`, exact targets.
    Noiseless,
    /// Gap over `[1.4π, 2π)`, targets with additive `N(0, 0.1²)` noise.
    Noisy,
}

impl RegressionVariant {
    /// Gap bounds in units of π.
    fn gap_in_pi(self) -> (f64, f64) {
        match self {
            Self::Noiseless => (1.0, 1.6),
            Self::Noisy => (1.4, 2.0),
        }
    }

    /// Gap interval in radians, half-open.
    pub fn gap(self) -> (f64, f64) {
        let (lo, hi) = self.gap_in_pi();
        (lo * PI, hi * PI)
    }

    /// Whether `x` falls inside the half-open gap. Grid points that are
    /// rounding-close to a bound are assigned as if the arithmetic were exact.
    pub fn in_gap(self, x: f64) -> bool {
        let (lo, hi) = self.gap_in_pi();
        let r = x / PI;
        r >= lo - 1e-9 && r < hi - 1e-9
    }

    pub fn default_noise_std(self) -> f64 {
        match self {
            Self::Noiseless => 0.0,
            Self::Noisy => 0.1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Noiseless => "noiseless",
            Self::Noisy => "noisy",
        }
    }
}

impl std::str::FromStr for RegressionVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noiseless" | "epistemic" => Ok(Self::Noiseless),
            "noisy" | "aleatoric" => Ok(Self::Noisy),
            _ => Err(Error::Config(format!("unknown regression variant '{s}'"))),
        }
    }
}

/// Gap-configured regression benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub variant: RegressionVariant,
    pub noise_std: f64,
    pub seed: u64,
    pub data: Dataset,
}

pub const DEFAULT_REGRESSION_POINTS: usize = 30;
pub const DEFAULT_EVAL_POINTS: usize = 200;

/// `n` uniformly spaced points over `[0, 2π)`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * TAU / n as f64).collect()
}

fn noisy_targets(xs: &[f64], noise_std: f64, seed: u64) -> Result<Vec<f64>> {
    if noise_std == 0.0 {
        return Ok(xs.iter().map(|&x| fourier_target(x)).collect());
    }
    let normal = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seeding::rng_from_seed(seed);
    Ok(xs.iter().map(|&x| fourier_target(x) + normal.sample(&mut rng)).collect())
}

/// Regression set with the variant's default noise level.
pub fn make_regression_dataset(variant: RegressionVariant, n_points: usize, seed: u64) -> Result<RegressionDataset> {
    make_regression_dataset_with_noise(variant, n_points, variant.default_noise_std(), seed)
}

/// `n_points` grid inputs over `[0, 2π)` minus the gap, with targets
/// `f(x) + ε`, `ε ~ N(0, noise_std²)`.
pub fn make_regression_dataset_with_noise(
    variant: RegressionVariant,
    n_points: usize,
    noise_std: f64,
    seed: u64,
) -> Result<RegressionDataset> {
    if n_points < 2 {
        return Err(Error::invalid("a regression set needs at least two grid points"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!("noise std must be finite and ≥ 0, got {noise_std}")));
    }
    let xs: Vec<f64> = uniform_grid(n_points).into_iter().filter(|&x| !variant.in_gap(x)).collect();
    let targets = noisy_targets(&xs, noise_std, seed)?;
    let data = Dataset::new(xs.into_iter().map(|x| vec![x]).collect(), targets)?;
    Ok(RegressionDataset { variant, noise_std, seed, data })
}

/// Evaluation grid covering the gaps, with targets drawn under `seed`
/// (noise-free when `noise_std == 0`).
pub fn evaluation_set(n_points: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    let xs = uniform_grid(n_points);
    let targets = noisy_targets(&xs, noise_std, seed)?;
    Dataset::new(xs.into_iter().map(|x| vec![x]).collect(), targets)
}

/// Two interleaved half circles with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsDataset {
    pub noise: f64,
    pub seed: u64,
    pub data: Dataset,
}

/// Upper arc of radius 1 about the origin (label 0) and lower arc of radius 1
/// about `(1, 0.5)` (label 1), each point perturbed by isotropic `N(0, noise²)`.
pub fn make_two_moons(n: usize, noise: f64, seed: u64) -> Result<MoonsDataset> {
    if n < 2 {
        return Err(Error::invalid("two-moons needs at least two points"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be finite and ≥ 0, got {noise}")));
    }
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let arc = |k: usize, m: usize| if m > 1 { PI * k as f64 / (m - 1) as f64 } else { 0.0 };
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for k in 0..n_outer {
        let t = arc(k, n_outer);
        inputs.push(vec![t.cos(), t.sin()]);
        targets.push(0.0);
    }
    for k in 0..n_inner {
        let t = arc(k, n_inner);
        inputs.push(vec![1.0 - t.cos(), 0.5 - t.sin()]);
        targets.push(1.0);
    }
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = seeding::rng_from_seed(seed);
        for p in &mut inputs {
            for v in p.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    Ok(MoonsDataset { noise, seed, data: Dataset::new(inputs, targets)? })
}

/// Writes tagged splits as CSV with a header row: `x,y,split` for scalar
/// inputs or `x1,x2,y,split` for planar inputs.
pub fn write_dataset_csv<W: Write>(writer: W, splits: &[(&str, &Dataset)]) -> Result<()> {
    let dim = splits.iter().find_map(|(_, d)| d.input_dim()).unwrap_or(1);
    let mut w = csv::Writer::from_writer(writer);
    match dim {
        1 => w.write_record(["x", "y", "split"])?,
        2 => w.write_record(["x1", "x2", "y", "split"])?,
        d => return Err(Error::invalid(format!("cannot export {d}-dimensional inputs"))),
    }
    for (tag, data) in splits {
        if data.input_dim().is_some_and(|d| d != dim) {
            return Err(Error::invalid("splits have different input dimensions"));
        }
        for (x, y) in data.inputs.iter().zip(&data.targets) {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            row.push(format!("{y:?}"));
            row.push((*tag).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_dataset_csv`], returning splits in order of first appearance.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Vec<(String, Dataset)>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let dim = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["x", "y", "split"] => 1,
        ["x1", "x2", "y", "split"] => 2,
        other => return Err(Error::invalid(format!("unexpected dataset header {other:?}"))),
    };
    let mut splits: Vec<(String, Dataset)> = Vec::new();
    for record in r.records() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        let num = |i: usize| -> Result<f64> {
            record[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                offset,
                message: format!("column {i}: {e}"),
            })
        };
        let x: Vec<f64> = (0..dim).map(num).collect::<Result<_>>()?;
        let y = num(dim)?;
        let tag = record[dim + 1].to_string();
        match splits.iter_mut().find(|(t, _)| *t == tag) {
            Some((_, d)) => {
                d.inputs.push(x);
                d.targets.push(y);
            }
            None => splits.push((tag, Dataset { inputs: vec![x], targets: vec![y] })),
        }
    }
    Ok(splits)
}
