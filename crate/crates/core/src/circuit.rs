//! Dense statevector simulation of layered data re-upload circuits.
//!
//! Basis states are labelled big-endian: qubit 0 is the most significant bit
//! of the amplitude index. Every layer applies one general rotation per qubit
//! whose three angles are `w ∘ x̃ + b`, followed (for two or more qubits) by a
//! ring of CNOTs `cnot(q, q + 1 mod Q)`. The model output is the Pauli-Z
//! expectation on qubit 0, which always lies in `[-1, 1]`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Row-major 2×2 complex matrix.
pub type Matrix2 = [[C64; 2]; 2];

/// Largest register the simulator accepts (statevector dimension 256).
pub const MAX_QUBITS: usize = 8;

const NORM_TOLERANCE: f64 = 1e-10;

/// The three angles `(φ, γ, ω)` of a general single-qubit rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationAngles {
    pub phi: f64,
    pub gamma: f64,
    pub omega: f64,
}

impl RotationAngles {
    pub fn new(phi: f64, gamma: f64, omega: f64) -> Self {
        Self { phi, gamma, omega }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.phi, self.gamma, self.omega]
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.gamma.is_finite() && self.omega.is_finite()
    }
}

/// `R(φ, γ, ω) = RZ(ω) RY(γ) RZ(φ)`:
///
/// ```text
/// [ e^{-i(φ+ω)/2} cos(γ/2)   -e^{ i(φ-ω)/2} sin(γ/2) ]
/// [ e^{-i(φ-ω)/2} sin(γ/2)    e^{ i(φ+ω)/2} cos(γ/2) ]
/// ```
pub fn rotation_matrix(angles: RotationAngles) -> Result<Matrix2> {
    if !angles.is_finite() {
        return Err(Error::invalid(format!("non-finite rotation angles {angles:?}")));
    }
    Ok(rotation_matrix_unchecked(angles.to_array()))
}

pub(crate) fn rotation_matrix_unchecked([phi, gamma, omega]: [f64; 3]) -> Matrix2 {
    let (s, c) = (0.5 * gamma).sin_cos();
    let sum = C64::from_polar(1.0, 0.5 * (phi + omega));
    let diff = C64::from_polar(1.0, 0.5 * (phi - omega));
    [
        [sum.conj() * c, -diff * s],
        [diff.conj() * s, sum * c],
    ]
}

/// A gate understood by [`StateVector::apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rotation { qubit: usize, angles: RotationAngles },
    Cnot { control: usize, target: usize },
}

/// Normalized amplitude vector of a register of `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    num_qubits: usize,
}

fn check_register(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return Err(Error::invalid(format!(
            "register size must be in 1..={MAX_QUBITS}, got {num_qubits}"
        )));
    }
    Ok(())
}

impl StateVector {
    /// The all-zero state `|0…0⟩`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    /// The computational basis state with the given (big-endian) index.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_register(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for {num_qubits} qubits")));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes, num_qubits })
    }

    /// Wraps raw amplitudes; the length must be a power of two and the vector normalized.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::invalid(format!("amplitude count {dim} is not a power of two ≥ 2")));
        }
        let num_qubits = dim.trailing_zeros() as usize;
        check_register(num_qubits)?;
        let state = Self { amplitudes, num_qubits };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid(format!("state is not normalized (‖ψ‖² = {norm})")));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn bit(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::invalid(format!(
                "qubit {qubit} out of range for a {}-qubit register",
                self.num_qubits
            )));
        }
        Ok(())
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::Rotation { qubit, angles } => {
                self.check_qubit(qubit)?;
                let m = rotation_matrix(angles)?;
                self.apply_matrix(qubit, &m);
            }
            Gate::Cnot { control, target } => {
                self.check_qubit(control)?;
                self.check_qubit(target)?;
                if control == target {
                    return Err(Error::invalid("CNOT control and target must differ"));
                }
                self.apply_cnot(control, target);
            }
        }
        Ok(())
    }

    pub(crate) fn apply_matrix(&mut self, qubit: usize, m: &Matrix2) {
        let bit = self.bit(qubit);
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let j = i | bit;
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[j] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub(crate) fn apply_cnot(&mut self, control: usize, target: usize) {
        let (cbit, tbit) = (self.bit(control), self.bit(target));
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
    }

    /// `⟨ψ|Z_q|ψ⟩`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        Ok(self.expectation_z_unchecked(qubit))
    }

    pub(crate) fn expectation_z_unchecked(&self, qubit: usize) -> f64 {
        let bit = self.bit(qubit);
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::invalid(format!(
                "register sizes differ ({} vs {} qubits)",
                self.num_qubits, other.num_qubits
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// Value-semantics wrapper around [`StateVector::apply`].
pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    let mut next = state.clone();
    next.apply(gate)?;
    Ok(next)
}

/// `|⟨b|a⟩|²`, clamped to `[0, 1]` against rounding.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(b.inner(a)?.norm_sqr().clamp(0.0, 1.0))
}

/// Shape of a layered re-upload circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ansatz {
    num_qubits: usize,
    num_layers: usize,
    input_dim: usize,
}

impl Ansatz {
    pub fn new(num_qubits: usize, num_layers: usize, input_dim: usize) -> Result<Self> {
        check_register(num_qubits)?;
        if num_layers == 0 {
            return Err(Error::invalid("an ansatz needs at least one layer"));
        }
        if !(1..=2).contains(&input_dim) {
            return Err(Error::invalid(format!("input dimension must be 1 or 2, got {input_dim}")));
        }
        Ok(Self { num_qubits, num_layers, input_dim })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Whether each layer ends in a CNOT ring.
    pub fn is_entangling(&self) -> bool {
        self.num_qubits >= 2
    }

    /// Number of rotation gates (`L·Q`).
    pub fn num_gates(&self) -> usize {
        self.num_layers * self.num_qubits
    }

    /// Number of rotation angles (`3·L·Q`).
    pub fn num_angles(&self) -> usize {
        3 * self.num_gates()
    }

    /// Number of trainable scalars, weights plus biases (`2·3·L·Q`).
    pub fn num_params(&self) -> usize {
        2 * self.num_angles()
    }

    /// CNOT pairs appended to every layer.
    pub fn entangler(&self) -> Vec<(usize, usize)> {
        if !self.is_entangling() {
            return Vec::new();
        }
        (0..self.num_qubits).map(|q| (q, (q + 1) % self.num_qubits)).collect()
    }

    /// Lifts an input point to the three-angle encoding vector:
    /// `(x, x, x)` for scalars and `(x1, x2, 0)` for planar inputs.
    pub fn encode(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, ansatz expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(match *x {
            [v] => [v, v, v],
            [a, b] => [a, b, 0.0],
            _ => unreachable!(),
        })
    }
}

/// Weights and biases of every gate, row-major over `(layer, qubit, angle)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl CircuitParams {
    pub fn zeros(ansatz: &Ansatz) -> Self {
        let n = ansatz.num_angles();
        Self { weights: vec![0.0; n], biases: vec![0.0; n] }
    }

    /// Every weight and bias drawn uniformly from `[0, 2π)`.
    pub fn uniform<R: Rng + ?Sized>(ansatz: &Ansatz, rng: &mut R) -> Self {
        let n = ansatz.num_angles();
        let weights = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
        let biases = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
        Self { weights, biases }
    }

    /// Splits a flat `[weights…, biases…]` vector.
    pub fn from_flat(ansatz: &Ansatz, flat: &[f64]) -> Result<Self> {
        if flat.len() != ansatz.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                ansatz.num_params(),
                flat.len()
            )));
        }
        let (w, b) = flat.split_at(ansatz.num_angles());
        Ok(Self { weights: w.to_vec(), biases: b.to_vec() })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(2 * self.weights.len());
        flat.extend_from_slice(&self.weights);
        flat.extend_from_slice(&self.biases);
        flat
    }

    pub fn check(&self, ansatz: &Ansatz) -> Result<()> {
        let n = ansatz.num_angles();
        if self.weights.len() != n || self.biases.len() != n {
            return Err(Error::invalid(format!(
                "parameter arrays have lengths ({}, {}), ansatz expects {n} each",
                self.weights.len(),
                self.biases.len()
            )));
        }
        Ok(())
    }

    /// Flat index of `(layer, qubit, angle)`.
    pub fn index(ansatz: &Ansatz, layer: usize, qubit: usize, angle: usize) -> usize {
        (layer * ansatz.num_qubits() + qubit) * 3 + angle
    }
}

/// Gate angles as an affine map of the parameters, `θ = cw·w + cb·b`, with
/// inactive gates replaced by the identity.
///
/// The plain circuit has `cw = x̃` and `cb = 1`; dropout variants only change
/// the coefficients or deactivate gates, so the same map drives both the
/// forward pass and the chain rule in [`crate::grad`].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMap {
    pub(crate) weight_coeffs: Vec<f64>,
    pub(crate) bias_coeffs: Vec<f64>,
    pub(crate) active: Vec<bool>,
}

impl AngleMap {
    /// Unperturbed circuit for the input `x`.
    pub fn plain(ansatz: &Ansatz, x: &[f64]) -> Result<Self> {
        let enc = ansatz.encode(x)?;
        let n = ansatz.num_angles();
        Ok(Self {
            weight_coeffs: (0..n).map(|k| enc[k % 3]).collect(),
            bias_coeffs: vec![1.0; n],
            active: vec![true; ansatz.num_gates()],
        })
    }

    pub fn num_gates(&self) -> usize {
        self.active.len()
    }

    pub fn weight_coeffs(&self) -> &[f64] {
        &self.weight_coeffs
    }

    pub fn bias_coeffs(&self) -> &[f64] {
        &self.bias_coeffs
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Angles of every gate; `None` marks an identity gate.
    pub fn angles(&self, params: &CircuitParams) -> Vec<Option<[f64; 3]>> {
        (0..self.num_gates())
            .map(|g| {
                self.active[g].then(|| {
                    let k = 3 * g;
                    std::array::from_fn(|c| {
                        self.weight_coeffs[k + c] * params.weights[k + c]
                            + self.bias_coeffs[k + c] * params.biases[k + c]
                    })
                })
            })
            .collect()
    }
}

/// Runs the layered circuit on `|0…0⟩` with explicit per-gate angles.
pub(crate) fn run_angles(ansatz: &Ansatz, angles: &[Option<[f64; 3]>]) -> StateVector {
    debug_assert_eq!(angles.len(), ansatz.num_gates());
    let mut state = StateVector::zero(ansatz.num_qubits()).expect("ansatz register size is validated");
    let ring = ansatz.entangler();
    for layer in angles.chunks(ansatz.num_qubits()) {
        for (qubit, a) in layer.iter().enumerate() {
            if let Some(a) = a {
                state.apply_matrix(qubit, &rotation_matrix_unchecked(*a));
            }
        }
        for &(c, t) in &ring {
            state.apply_cnot(c, t);
        }
    }
    state
}

fn check_angles(angles: &[Option<[f64; 3]>]) -> Result<()> {
    if angles.iter().flatten().flatten().any(|a| !a.is_finite()) {
        return Err(Error::invalid("non-finite rotation angle"));
    }
    Ok(())
}

/// Statevector produced by a perturbed (or plain) circuit.
pub fn embed_mapped(ansatz: &Ansatz, map: &AngleMap, params: &CircuitParams) -> Result<StateVector> {
    params.check(ansatz)?;
    if map.num_gates() != ansatz.num_gates() {
        return Err(Error::invalid("angle map does not match the ansatz"));
    }
    let angles = map.angles(params);
    check_angles(&angles)?;
    Ok(run_angles(ansatz, &angles))
}

/// Statevector `U(x; w, b)|0⟩` of the plain circuit.
pub fn embed(ansatz: &Ansatz, x: &[f64], params: &CircuitParams) -> Result<StateVector> {
    embed_mapped(ansatz, &AngleMap::plain(ansatz, x)?, params)
}

/// Model output `⟨0|U† Z₀ U|0⟩` of a perturbed (or plain) circuit.
pub fn forward_mapped(ansatz: &Ansatz, map: &AngleMap, params: &CircuitParams) -> Result<f64> {
    Ok(embed_mapped(ansatz, map, params)?.expectation_z_unchecked(0))
}

/// Model output `⟨0|U(x)† Z₀ U(x)|0⟩ ∈ [-1, 1]`.
pub fn forward(ansatz: &Ansatz, x: &[f64], params: &CircuitParams) -> Result<f64> {
    forward_mapped(ansatz, &AngleMap::plain(ansatz, x)?, params)
}
