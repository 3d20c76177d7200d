//! Exact circuit gradients by the parameter-shift rule.
//!
//! Every angle enters its gate as `exp(-iθP/2)` with `P² = I`, so
//! `∂E/∂θ = [E(θ + π/2) − E(θ − π/2)] / 2` exactly. Shifted expectations are
//! evaluated against cached intermediate states and the observable
//! propagated backwards through the circuit, which costs one gate application
//! per shift instead of a full circuit run.

use std::f64::consts::FRAC_PI_2;

use crate::circuit::{
    rotation_matrix_unchecked, run_angles, AngleMap, Ansatz, CircuitParams, Matrix2, StateVector, C64,
};
use crate::error::{Error, Result};

/// Sensitivities of the circuit output to every weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(ansatz: &Ansatz) -> Self {
        let n = ansatz.num_angles();
        Self { dw: vec![0.0; n], db: vec![0.0; n] }
    }

    /// `[dw…, db…]`, matching [`CircuitParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.dw.clone();
        v.extend_from_slice(&self.db);
        v
    }

    pub fn max_abs_diff(&self, other: &GradientVector) -> f64 {
        self.dw
            .iter()
            .zip(&other.dw)
            .chain(self.db.iter().zip(&other.db))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Output value and per-angle derivatives of a circuit with explicit angles.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGradient {
    pub value: f64,
    /// `∂E/∂(φ, γ, ω)` per gate; zero for identity gates.
    pub angles: Vec<[f64; 3]>,
}

/// Dense observable, row-major.
struct Observable {
    dim: usize,
    data: Vec<C64>,
}

impl Observable {
    fn z(num_qubits: usize, qubit: usize) -> Self {
        let dim = 1usize << num_qubits;
        let bit = 1usize << (num_qubits - 1 - qubit);
        let mut data = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = C64::new(if i & bit == 0 { 1.0 } else { -1.0 }, 0.0);
        }
        Self { dim, data }
    }

    /// `O ← U† O U` for `U` acting on the qubit with mask `bit`.
    fn conjugate_single(&mut self, bit: usize, u: &Matrix2) {
        let d = self.dim;
        for r in 0..d {
            let row = &mut self.data[r * d..(r + 1) * d];
            for i in 0..d {
                if i & bit == 0 {
                    let j = i | bit;
                    let (a, b) = (row[i], row[j]);
                    row[i] = a * u[0][0] + b * u[1][0];
                    row[j] = a * u[0][1] + b * u[1][1];
                }
            }
        }
        for i in 0..d {
            if i & bit == 0 {
                let j = i | bit;
                for col in 0..d {
                    let (a, b) = (self.data[i * d + col], self.data[j * d + col]);
                    self.data[i * d + col] = u[0][0].conj() * a + u[1][0].conj() * b;
                    self.data[j * d + col] = u[0][1].conj() * a + u[1][1].conj() * b;
                }
            }
        }
    }

    /// `O ← C O C` for the (self-inverse) CNOT permutation.
    fn conjugate_cnot(&mut self, cbit: usize, tbit: usize) {
        let d = self.dim;
        for i in 0..d {
            if i & cbit != 0 && i & tbit == 0 {
                let j = i | tbit;
                for col in 0..d {
                    self.data.swap(i * d + col, j * d + col);
                }
                for row in 0..d {
                    self.data.swap(row * d + i, row * d + j);
                }
            }
        }
    }

    fn expectation(&self, psi: &[C64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for r in 0..d {
            let row = &self.data[r * d..(r + 1) * d];
            let v: C64 = row.iter().zip(psi).map(|(o, p)| o * p).sum();
            acc += (psi[r].conj() * v).re;
        }
        acc
    }
}

/// Parameter-shift derivatives of `⟨Z₀⟩` with respect to every gate angle.
pub fn angle_gradient(ansatz: &Ansatz, angles: &[Option<[f64; 3]>]) -> Result<AngleGradient> {
    if angles.len() != ansatz.num_gates() {
        return Err(Error::invalid(format!(
            "expected angles for {} gates, got {}",
            ansatz.num_gates(),
            angles.len()
        )));
    }
    if angles.iter().flatten().flatten().any(|a| !a.is_finite()) {
        return Err(Error::invalid("non-finite rotation angle"));
    }
    let nq = ansatz.num_qubits();
    let bit = |q: usize| 1usize << (nq - 1 - q);
    let ring = ansatz.entangler();

    // Forward sweep, keeping the state in front of every active gate.
    let mut before: Vec<Option<StateVector>> = vec![None; angles.len()];
    let mut state = StateVector::zero(nq)?;
    for (layer, gates) in angles.chunks(nq).enumerate() {
        for (qubit, a) in gates.iter().enumerate() {
            if let Some(a) = a {
                before[layer * nq + qubit] = Some(state.clone());
                state.apply_matrix(qubit, &rotation_matrix_unchecked(*a));
            }
        }
        for &(c, t) in &ring {
            state.apply_cnot(c, t);
        }
    }
    let value = state.expectation_z_unchecked(0);

    // Backward sweep with the Heisenberg-evolved observable.
    let mut obs = Observable::z(nq, 0);
    let mut grads = vec![[0.0; 3]; angles.len()];
    for layer in (0..ansatz.num_layers()).rev() {
        for &(c, t) in ring.iter().rev() {
            obs.conjugate_cnot(bit(c), bit(t));
        }
        for qubit in (0..nq).rev() {
            let g = layer * nq + qubit;
            let (Some(a), Some(psi)) = (angles[g], before[g].as_ref()) else {
                continue;
            };
            for k in 0..3 {
                let mut shifted = a;
                shifted[k] = a[k] + FRAC_PI_2;
                let plus = shifted_expectation(&obs, psi, qubit, shifted);
                shifted[k] = a[k] - FRAC_PI_2;
                let minus = shifted_expectation(&obs, psi, qubit, shifted);
                grads[g][k] = 0.5 * (plus - minus);
            }
            obs.conjugate_single(bit(qubit), &rotation_matrix_unchecked(a));
        }
    }
    Ok(AngleGradient { value, angles: grads })
}

fn shifted_expectation(obs: &Observable, psi: &StateVector, qubit: usize, angles: [f64; 3]) -> f64 {
    let mut phi = psi.clone();
    phi.apply_matrix(qubit, &rotation_matrix_unchecked(angles));
    obs.expectation(phi.amplitudes())
}

/// Maps angle derivatives onto weights and biases through `θ = cw·w + cb·b`.
pub fn chain_to_params(map: &AngleMap, grad: &AngleGradient) -> GradientVector {
    let n = map.weight_coeffs().len();
    let mut dw = vec![0.0; n];
    let mut db = vec![0.0; n];
    for (g, d) in grad.angles.iter().enumerate() {
        if !map.active()[g] {
            continue;
        }
        for c in 0..3 {
            let k = 3 * g + c;
            dw[k] = map.weight_coeffs()[k] * d[c];
            db[k] = map.bias_coeffs()[k] * d[c];
        }
    }
    GradientVector { dw, db }
}

/// Output and parameter gradient of a (possibly perturbed) circuit.
pub fn mapped_gradient(ansatz: &Ansatz, map: &AngleMap, params: &CircuitParams) -> Result<(f64, GradientVector)> {
    params.check(ansatz)?;
    if map.num_gates() != ansatz.num_gates() {
        return Err(Error::invalid("angle map does not match the ansatz"));
    }
    let ag = angle_gradient(ansatz, &map.angles(params))?;
    let g = chain_to_params(map, &ag);
    Ok((ag.value, g))
}

/// Parameter-shift gradient of the plain circuit output at `x`.
pub fn parameter_shift_gradient(ansatz: &Ansatz, x: &[f64], params: &CircuitParams) -> Result<GradientVector> {
    Ok(mapped_gradient(ansatz, &AngleMap::plain(ansatz, x)?, params)?.1)
}

/// Central differences of an arbitrary function of the circuit parameters.
pub fn finite_difference<F>(params: &CircuitParams, step: f64, f: F) -> Result<GradientVector>
where
    F: Fn(&CircuitParams) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = params.clone();
    let mut diff = |select: fn(&mut CircuitParams) -> &mut Vec<f64>, k: usize| -> Result<f64> {
        let orig = select(&mut probe)[k];
        select(&mut probe)[k] = orig + step;
        let plus = f(&probe)?;
        select(&mut probe)[k] = orig - step;
        let minus = f(&probe)?;
        select(&mut probe)[k] = orig;
        Ok((plus - minus) / (2.0 * step))
    };
    let n = params.weights.len();
    let dw = (0..n).map(|k| diff(|p| &mut p.weights, k)).collect::<Result<_>>()?;
    let db = (0..n).map(|k| diff(|p| &mut p.biases, k)).collect::<Result<_>>()?;
    Ok(GradientVector { dw, db })
}

/// Central-difference gradient of the plain circuit output at `x`.
pub fn finite_difference_gradient(
    ansatz: &Ansatz,
    x: &[f64],
    params: &CircuitParams,
    step: f64,
) -> Result<GradientVector> {
    let map = AngleMap::plain(ansatz, x)?;
    params.check(ansatz)?;
    finite_difference(params, step, |p| Ok(run_angles(ansatz, &map.angles(p)).expectation_z_unchecked(0)))
}
