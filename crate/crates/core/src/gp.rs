//! Gaussian processes with a fidelity kernel over frozen circuit embeddings.
//!
//! `k(x, x') = |⟨ψ(x)|ψ(x')⟩|²`, where `ψ` is the re-upload circuit with fixed
//! random parameters. Regression is exact (Cholesky of `K + σ²I`); binary
//! classification uses the Laplace approximation with a logistic likelihood.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::circuit::{embed, fidelity, Ansatz, CircuitParams, StateVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::optim::sigmoid;
use crate::predictive::PredictiveSummary;
use crate::seeding;

pub const DEFAULT_KERNEL_QUBITS: usize = 2;
pub const DEFAULT_KERNEL_LAYERS: usize = 2;
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
pub const MAX_NEWTON_ITERATIONS: usize = 100;
const NEWTON_TOLERANCE: f64 = 1e-10;

/// Frozen embedding circuit that defines the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumKernel {
    pub ansatz: Ansatz,
    pub params: CircuitParams,
    /// Seed the parameters were drawn from, when they were drawn.
    pub seed: Option<u64>,
}

impl QuantumKernel {
    pub fn new(ansatz: Ansatz, params: CircuitParams) -> Result<Self> {
        params.check(&ansatz)?;
        Ok(Self { ansatz, params, seed: None })
    }

    /// Parameters drawn uniformly from `[0, 2π)` on the `kernel` substream of `seed`.
    pub fn random(ansatz: Ansatz, seed: u64) -> Self {
        let params = CircuitParams::uniform(&ansatz, &mut seeding::substream(seed, "kernel"));
        Self { ansatz, params, seed: Some(seed) }
    }

    pub fn embed(&self, x: &[f64]) -> Result<StateVector> {
        embed(&self.ansatz, x, &self.params)
    }

    pub fn embed_all(&self, inputs: &[Vec<f64>]) -> Result<Vec<StateVector>> {
        inputs.iter().map(|x| self.embed(x)).collect()
    }
}

/// `|⟨ψ(x)|ψ(x')⟩|²`.
pub fn quantum_kernel(kernel: &QuantumKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    fidelity(&kernel.embed(x)?, &kernel.embed(y)?)
}

/// Pairwise kernel values and the inputs that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub inputs: Vec<Vec<f64>>,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    /// Row-per-input CSV with the input coordinates followed by the kernel row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dim = self.inputs.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (1..=dim).map(|d| format!("x{d}")).collect();
        header.extend((0..self.len()).map(|j| format!("k{j}")));
        w.write_record(&header)?;
        for (i, x) in self.inputs.iter().enumerate() {
            let row: Vec<String> = x.iter().chain(self.matrix.row(i).iter()).map(f64::to_string).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn gram_from_states(states: &[StateVector]) -> Result<DMatrix<f64>> {
    let n = states.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = fidelity(&states[i], &states[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

fn cross_column(states: &[StateVector], query: &StateVector) -> Result<DVector<f64>> {
    let col = states.iter().map(|s| fidelity(s, query)).collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(col))
}

pub fn gram_matrix(kernel: &QuantumKernel, inputs: &[Vec<f64>]) -> Result<GramMatrix> {
    if inputs.is_empty() {
        return Err(Error::invalid("Gram matrix needs at least one input"));
    }
    let matrix = gram_from_states(&kernel.embed_all(inputs)?)?;
    Ok(GramMatrix { matrix, inputs: inputs.to_vec() })
}

/// Conditioning information from the last factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpDiagnostics {
    /// Diagonal jitter that made the factorization succeed (on top of the noise variance).
    pub jitter: f64,
    /// Smallest eigenvalue of the bare Gram matrix.
    pub min_eigenvalue: f64,
}

/// Cholesky of `K + (σ² + jitter)·I`, escalating the jitter along [`JITTER_LADDER`].
fn factorize(k: &DMatrix<f64>, noise_var: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for &jitter in &JITTER_LADDER {
        let shifted = k + DMatrix::identity(k.nrows(), k.ncols()) * (noise_var + jitter);
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::SingularKernel { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })
}

/// Exact GP regression posterior; immutable after fitting.
#[derive(Debug, Clone)]
pub struct GpRegressor {
    kernel: QuantumKernel,
    data: Dataset,
    states: Vec<StateVector>,
    noise_var: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    diagnostics: GpDiagnostics,
}

impl GpRegressor {
    /// Factorizes `K + σ²I`. An empty dataset gives the prior.
    pub fn fit(kernel: QuantumKernel, data: &Dataset, noise_var: f64) -> Result<Self> {
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::invalid(format!("noise variance must be finite and non-negative, got {noise_var}")));
        }
        let states = kernel.embed_all(&data.inputs)?;
        if states.is_empty() {
            return Ok(Self {
                kernel,
                data: data.clone(),
                states,
                noise_var,
                chol: None,
                alpha: DVector::zeros(0),
                diagnostics: GpDiagnostics { jitter: 0.0, min_eigenvalue: f64::INFINITY },
            });
        }
        let k = gram_from_states(&states)?;
        let min_eig = min_eigenvalue(&k);
        let (chol, jitter) = factorize(&k, noise_var)?;
        let alpha = chol.solve(&DVector::from_column_slice(&data.targets));
        Ok(Self {
            kernel,
            data: data.clone(),
            states,
            noise_var,
            chol: Some(chol),
            alpha,
            diagnostics: GpDiagnostics { jitter, min_eigenvalue: min_eig },
        })
    }

    pub fn kernel(&self) -> &QuantumKernel {
        &self.kernel
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn diagnostics(&self) -> GpDiagnostics {
        self.diagnostics
    }

    /// Latent mean and variance at `x`; the variance is clamped at zero.
    pub fn predict_latent(&self, x: &[f64]) -> Result<(f64, f64)> {
        let query = self.kernel.embed(x)?;
        let prior = fidelity(&query, &query)?;
        let Some(chol) = &self.chol else {
            return Ok((0.0, prior));
        };
        let ks = cross_column(&self.states, &query)?;
        let mean = ks.dot(&self.alpha);
        let v = chol.l().solve_lower_triangular(&ks).expect("Cholesky factor has a nonzero diagonal");
        Ok((mean, (prior - v.norm_squared()).max(0.0)))
    }

    /// Predictive summaries; `include_noise` adds the observation noise to the variance.
    pub fn predict(&self, inputs: &[Vec<f64>], include_noise: bool) -> Result<Vec<PredictiveSummary>> {
        let extra = if include_noise { self.noise_var } else { 0.0 };
        inputs
            .iter()
            .map(|x| {
                let (m, v) = self.predict_latent(x)?;
                Ok(PredictiveSummary::new(m, (v + extra).sqrt()))
            })
            .collect()
    }
}

/// How the class probability integrates over the latent Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkApproximation {
    /// `σ(μ / √(1 + πv/8))`.
    #[default]
    Moderated,
    /// Numerical integration of `σ(f) N(f | μ, v)`.
    Quadrature,
}

/// Expected logistic output under `N(mean, var)`.
pub fn link_probability(mean: f64, var: f64, link: LinkApproximation) -> f64 {
    match link {
        LinkApproximation::Moderated => sigmoid(mean / (1.0 + std::f64::consts::PI * var / 8.0).sqrt()),
        LinkApproximation::Quadrature => {
            if var <= 0.0 {
                return sigmoid(mean);
            }
            let sd = var.sqrt();
            let steps = 2000;
            let h = 16.0 / steps as f64;
            let mut acc = 0.0;
            let mut norm = 0.0;
            for i in 0..=steps {
                let z = -8.0 + i as f64 * h;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 } * (-0.5 * z * z).exp();
                acc += w * sigmoid(mean + sd * z);
                norm += w;
            }
            acc / norm
        }
    }
}

/// Laplace-approximated GP classifier for labels in {0, 1}.
#[derive(Debug, Clone)]
pub struct GpClassifier {
    kernel: QuantumKernel,
    states: Vec<StateVector>,
    /// `t − π̂` at the posterior mode.
    residual: DVector<f64>,
    sqrt_w: DVector<f64>,
    chol_b: Option<Cholesky<f64, Dyn>>,
    pub iterations: usize,
    pub link: LinkApproximation,
}

impl GpClassifier {
    /// Newton iterations for the latent mode.
    pub fn fit(kernel: QuantumKernel, data: &Dataset) -> Result<Self> {
        if data.targets.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::invalid("GP classification needs labels in {0, 1}"));
        }
        let states = kernel.embed_all(&data.inputs)?;
        let n = states.len();
        if n == 0 {
            return Ok(Self {
                kernel,
                states,
                residual: DVector::zeros(0),
                sqrt_w: DVector::zeros(0),
                chol_b: None,
                iterations: 0,
                link: LinkApproximation::default(),
            });
        }
        let k = gram_from_states(&states)?;
        let t = DVector::from_column_slice(&data.targets);
        let mut f = DVector::zeros(n);
        let mut residual = f64::INFINITY;
        for it in 1..=MAX_NEWTON_ITERATIONS {
            let pi = f.map(sigmoid);
            let w = pi.map(|p| p * (1.0 - p));
            let sw = w.map(f64::sqrt);
            let chol = b_factor(&k, &sw)?;
            let b = w.component_mul(&f) + (&t - &pi);
            let rhs = sw.component_mul(&(&k * &b));
            let a = &b - sw.component_mul(&chol.solve(&rhs));
            let next = &k * a;
            residual = (&next - &f).amax();
            f = next;
            if residual < NEWTON_TOLERANCE {
                let pi = f.map(sigmoid);
                let sw = pi.map(|p| (p * (1.0 - p)).sqrt());
                let chol_b = b_factor(&k, &sw)?;
                return Ok(Self {
                    kernel,
                    states,
                    residual: &t - pi,
                    sqrt_w: sw,
                    chol_b: Some(chol_b),
                    iterations: it,
                    link: LinkApproximation::default(),
                });
            }
        }
        Err(Error::NoConvergence { iterations: MAX_NEWTON_ITERATIONS, residual })
    }

    pub fn with_link(mut self, link: LinkApproximation) -> Self {
        self.link = link;
        self
    }

    /// Latent predictive mean and variance at `x`.
    pub fn predict_latent(&self, x: &[f64]) -> Result<(f64, f64)> {
        let query = self.kernel.embed(x)?;
        let prior = fidelity(&query, &query)?;
        let Some(chol) = &self.chol_b else {
            return Ok((0.0, prior));
        };
        let ks = cross_column(&self.states, &query)?;
        let mean = ks.dot(&self.residual);
        let v = chol
            .l()
            .solve_lower_triangular(&self.sqrt_w.component_mul(&ks))
            .expect("Cholesky factor has a nonzero diagonal");
        Ok((mean, (prior - v.norm_squared()).max(0.0)))
    }

    /// Probability of label 1.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let (m, v) = self.predict_latent(x)?;
        Ok(link_probability(m, v, self.link))
    }
}

/// Cholesky of `I + W^{1/2} K W^{1/2}`, always well conditioned.
fn b_factor(k: &DMatrix<f64>, sw: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    let mut b = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += sw[i] * k[(i, j)] * sw[j];
        }
    }
    Cholesky::new(b).ok_or(Error::SingularKernel { jitter: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{rotation_matrix, RotationAngles, C64};
    use crate::seeding::rng_from_seed;
    use rand::Rng;

    fn default_kernel(seed: u64) -> QuantumKernel {
        QuantumKernel::random(Ansatz::new(2, 2, 1).unwrap(), seed)
    }

    /// Dense 2^Q×2^Q matrix chain, independent of the simulator's gate kernels.
    fn dense_embedding(kernel: &QuantumKernel, x: f64) -> DMatrix<C64> {
        let a = &kernel.ansatz;
        let q = a.num_qubits();
        let d = 1 << q;
        let xt = a.encode(&[x]).unwrap();
        let mut psi = DMatrix::<C64>::zeros(d, 1);
        psi[(0, 0)] = C64::new(1.0, 0.0);
        for l in 0..a.num_layers() {
            for qubit in 0..q {
                let i = CircuitParams::index(a, l, qubit, 0);
                let ang: Vec<f64> =
                    (0..3).map(|k| kernel.params.weights[i + k] * xt[k] + kernel.params.biases[i + k]).collect();
                let m = rotation_matrix(RotationAngles::new(ang[0], ang[1], ang[2])).unwrap();
                let mut full = DMatrix::<C64>::identity(1, 1);
                for k in 0..q {
                    let f = if k == qubit {
                        DMatrix::from_fn(2, 2, |r, c| m[r][c])
                    } else {
                        DMatrix::<C64>::identity(2, 2)
                    };
                    full = full.kronecker(&f);
                }
                psi = full * psi;
            }
            if q > 1 {
                for (c, t) in a.entangler() {
                    let mut cnot = DMatrix::<C64>::zeros(d, d);
                    for b in 0..d {
                        let out = if b & (1 << (q - 1 - c)) != 0 { b ^ (1 << (q - 1 - t)) } else { b };
                        cnot[(out, b)] = C64::new(1.0, 0.0);
                    }
                    psi = cnot * psi;
                }
            }
        }
        psi
    }

    #[test]
    fn kernel_basics_and_dense_oracle() {
        let mut rng = rng_from_seed(1);
        for seed in 0..20 {
            let k = default_kernel(seed);
            let (x, y) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3));
            assert!((quantum_kernel(&k, &[x], &[x]).unwrap() - 1.0).abs() < 1e-12);
            let kxy = quantum_kernel(&k, &[x], &[y]).unwrap();
            assert!((kxy - quantum_kernel(&k, &[y], &[x]).unwrap()).abs() < 1e-12);
            let (a, b) = (dense_embedding(&k, x), dense_embedding(&k, y));
            let overlap: C64 = a.iter().zip(b.iter()).map(|(u, v)| u.conj() * v).sum();
            assert!((kxy - overlap.norm_sqr()).abs() < 1e-10);
        }
        assert!(quantum_kernel(&default_kernel(0), &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn gram_properties() {
        let k = default_kernel(3);
        let single = gram_matrix(&k, &[vec![0.4]]).unwrap();
        assert_eq!(single.matrix[(0, 0)], 1.0);
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * std::f64::consts::TAU / 20.0]).collect();
        let g = gram_matrix(&k, &xs).unwrap();
        for i in 0..20 {
            assert!((g.matrix[(i, i)] - 1.0).abs() < 1e-12);
            for j in 0..20 {
                assert!((g.matrix[(i, j)] - g.matrix[(j, i)]).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&g.matrix[(i, j)]));
            }
        }
        assert!(g.min_eigenvalue() >= -1e-8);
        let dup = gram_matrix(&k, &[vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        let m = dup.min_eigenvalue();
        assert!(m >= -1e-8 && m < 1e-8);
        assert!(gram_matrix(&k, &[]).is_err());
    }

    #[test]
    fn gram_csv_shape() {
        let g = gram_matrix(&default_kernel(4), &[vec![0.0], vec![1.0]]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,k0,k1");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn empty_posterior_is_prior() {
        let gp = GpRegressor::fit(default_kernel(5), &Dataset::new(vec![], vec![]).unwrap(), 0.0).unwrap();
        let (m, v) = gp.predict_latent(&[1.3]).unwrap();
        assert_eq!(m, 0.0);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_interpolation() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![0.3 + i as f64 * 0.55]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| crate::data::fourier_target(x[0])).collect();
        let gp = GpRegressor::fit(default_kernel(6), &Dataset::new(xs.clone(), ys.clone()).unwrap(), 0.0).unwrap();
        assert_eq!(gp.diagnostics().jitter, 1e-10);
        for (x, y) in xs.iter().zip(&ys) {
            let (m, v) = gp.predict_latent(x).unwrap();
            assert!((m - y).abs() < 1e-6, "{m} vs {y}");
            assert!(v < 1e-6);
        }
    }

    #[test]
    fn matches_explicit_inverse() {
        let mut rng = rng_from_seed(7);
        for seed in 0..10 {
            let kernel = default_kernel(seed);
            let xs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(0.0..6.3)]).collect();
            let ys: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let noise = 0.01;
            let gp = GpRegressor::fit(kernel.clone(), &Dataset::new(xs.clone(), ys.clone()).unwrap(), noise).unwrap();
            let q = [rng.gen_range(0.0..6.3)];
            let (m, v) = gp.predict_latent(&q).unwrap();
            let mut kmat = DMatrix::from_fn(5, 5, |i, j| quantum_kernel(&kernel, &xs[i], &xs[j]).unwrap());
            for i in 0..5 {
                kmat[(i, i)] += noise + gp.diagnostics().jitter;
            }
            let inv = kmat.try_inverse().unwrap();
            let ks = DVector::from_fn(5, |i, _| quantum_kernel(&kernel, &xs[i], &q).unwrap());
            let y = DVector::from_vec(ys);
            let m_ref = (ks.transpose() * &inv * y)[(0, 0)];
            let v_ref = 1.0 - (ks.transpose() * &inv * &ks)[(0, 0)];
            assert!((m - m_ref).abs() < 1e-8 && (v - v_ref).abs() < 1e-8);
        }
    }

    #[test]
    fn variance_bounded_by_prior_and_shrinks_with_data() {
        let mut rng = rng_from_seed(8);
        for seed in 0..5 {
            let kernel = default_kernel(seed);
            let xs: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen_range(0.0..6.3)]).collect();
            let ys: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let small = GpRegressor::fit(kernel.clone(), &Dataset::new(xs[..7].to_vec(), ys[..7].to_vec()).unwrap(), 0.01)
                .unwrap();
            let big = GpRegressor::fit(kernel, &Dataset::new(xs, ys).unwrap(), 0.01).unwrap();
            for _ in 0..50 {
                let q = [rng.gen_range(0.0..6.3)];
                let (_, v7) = small.predict_latent(&q).unwrap();
                let (_, v8) = big.predict_latent(&q).unwrap();
                assert!(v7 <= 1.0 + 1e-9 && v8 <= v7 + 1e-8);
            }
        }
    }

    #[test]
    fn noise_is_added_on_request() {
        let data = Dataset::new(vec![vec![0.5], vec![2.0]], vec![0.1, 0.2]).unwrap();
        let gp = GpRegressor::fit(default_kernel(9), &data, 0.01).unwrap();
        let lat = gp.predict(&[vec![1.0]], false).unwrap()[0];
        let obs = gp.predict(&[vec![1.0]], true).unwrap()[0];
        assert!((obs.std.powi(2) - lat.std.powi(2) - 0.01).abs() < 1e-12);
        assert!(GpRegressor::fit(default_kernel(9), &data, -1.0).is_err());
    }

    #[test]
    fn classifier_without_data_is_undecided() {
        let c = GpClassifier::fit(default_kernel(10), &Dataset::new(vec![], vec![]).unwrap()).unwrap();
        assert_eq!(c.predict_proba(&[0.7]).unwrap(), 0.5);
    }

    fn moons_kernel(seed: u64) -> QuantumKernel {
        QuantumKernel::random(Ansatz::new(2, 2, 2).unwrap(), seed)
    }

    #[test]
    fn label_flip_complements_probability() {
        let moons = crate::data::make_two_moons(40, 0.15, 11).unwrap().data;
        let flipped = Dataset::new(moons.inputs.clone(), moons.targets.iter().map(|t| 1.0 - t).collect()).unwrap();
        let a = GpClassifier::fit(moons_kernel(12), &moons).unwrap();
        let b = GpClassifier::fit(moons_kernel(12), &flipped).unwrap();
        for x in [[0.0, 0.5], [1.0, -0.3], [-0.5, 0.9]] {
            let (p, q) = (a.predict_proba(&x).unwrap(), b.predict_proba(&x).unwrap());
            assert!((p + q - 1.0).abs() < 1e-6);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn newton_fit_is_stationary() {
        let moons = crate::data::make_two_moons(30, 0.15, 13).unwrap().data;
        let c = GpClassifier::fit(moons_kernel(14), &moons).unwrap();
        assert!(c.iterations <= MAX_NEWTON_ITERATIONS);
        // At the mode, f̂ = K (t − π̂); the training-point means reproduce that.
        let k = gram_matrix(&moons_kernel(14), &moons.inputs).unwrap().matrix;
        let f = &k * &c.residual;
        for (i, x) in moons.inputs.iter().enumerate() {
            let (m, _) = c.predict_latent(x).unwrap();
            assert!((m - f[i]).abs() < 1e-9);
            let pi = sigmoid(f[i]);
            assert!((moons.targets[i] - pi - c.residual[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn laplace_matches_grid_quadrature_on_two_points() {
        let kernel = default_kernel(15);
        let xs = vec![vec![0.8], vec![2.9]];
        let data = Dataset::new(xs.clone(), vec![1.0, 0.0]).unwrap();
        let c = GpClassifier::fit(kernel.clone(), &data).unwrap();
        let k = gram_matrix(&kernel, &xs).unwrap().matrix + DMatrix::identity(2, 2) * 1e-12;
        let kinv = k.clone().try_inverse().unwrap();
        let det = k.determinant();
        for q in [[0.3], [1.7], [4.4]] {
            let ks = DVector::from_fn(2, |i, _| quantum_kernel(&kernel, &xs[i], &q).unwrap());
            let proj = kinv.clone() * &ks;
            let cond_var = (1.0 - ks.dot(&proj)).max(0.0);
            // Integrate the exact posterior over a dense 2-D latent grid.
            let (lo, hi, n) = (-8.0, 8.0, 160);
            let h = (hi - lo) / n as f64;
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..=n {
                for j in 0..=n {
                    let f = DVector::from_vec(vec![lo + i as f64 * h, lo + j as f64 * h]);
                    let prior = (-0.5 * f.dot(&(&kinv * &f))).exp() / det.sqrt();
                    let post = prior * sigmoid(f[0]) * (1.0 - sigmoid(f[1]));
                    den += post;
                    num += post * link_probability(proj.dot(&f), cond_var, LinkApproximation::Quadrature);
                }
            }
            let exact = num / den;
            let approx = c.predict_proba(&q).unwrap();
            assert!((exact - approx).abs() < 0.02, "{exact} vs {approx}");
            let quad = c.clone().with_link(LinkApproximation::Quadrature).predict_proba(&q).unwrap();
            assert!((quad - approx).abs() < 0.01);
        }
    }

    #[test]
    fn rejects_non_binary_labels() {
        let data = Dataset::new(vec![vec![0.0]], vec![0.5]).unwrap();
        assert!(GpClassifier::fit(default_kernel(16), &data).is_err());
    }

    #[test]
    fn kernel_spectrum_is_band_limited() {
        // One qubit, one upload, unit weights and zero biases: the slice
        // k(x, x + δ) contains harmonics up to |ω| = 2 only.
        let ansatz = Ansatz::new(1, 1, 1).unwrap();
        let params = CircuitParams { weights: vec![1.0; 3], biases: vec![0.0; 3] };
        let kernel = QuantumKernel::new(ansatz, params).unwrap();
        let n = 256;
        let x0 = 0.37;
        let g: Vec<f64> = (0..n)
            .map(|i| quantum_kernel(&kernel, &[x0], &[x0 + i as f64 * std::f64::consts::TAU / n as f64]).unwrap())
            .collect();
        let mut total = 0.0;
        let mut low = 0.0;
        for w in 0..n {
            let coeff: C64 = g
                .iter()
                .enumerate()
                .map(|(i, v)| C64::from_polar(*v, -std::f64::consts::TAU * (w * i) as f64 / n as f64))
                .sum();
            let e = coeff.norm_sqr();
            total += e;
            let freq = w.min(n - w);
            if freq <= 2 {
                low += e;
            }
        }
        assert!(low / total > 0.999);
    }
}
