//! Parameterized unitaries: the layered two-body ansatz used for `V` and `W`,
//! the `Rz` phase layer on the step register, and the parameter-shift rule.

use num_complex::Complex;
use num_traits::Zero;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Result};
use crate::linalg::CMatrix;
use crate::scalar::{Real, C};
use crate::statevector::{StateVector, UnitaryBlock};

/// Half-width of the uniform initialization interval for all circuit angles.
pub const INIT_SCALE: f64 = 0.1;

/// Rotation axis slot inside a `[layer][qubit][axis]` angle layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// `θ` of `Ry(θ)`.
    Y = 0,
    /// `φ` of `Rz(φ)`.
    Z = 1,
}

/// Angles of an `L`-layer ansatz on `n` qubits. Each of the `L` entangling
/// layers applies `Ry(θ)·Rz(φ)` to every qubit followed by a CNOT chain
/// `q → q+1`; a final rotation-only layer closes the circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzParams<R> {
    num_qubits: usize,
    num_layers: usize,
    angles: Vec<R>,
    real_only: bool,
}

impl<R: Real> AnsatzParams<R> {
    pub fn angle_count(num_qubits: usize, num_layers: usize) -> usize {
        (num_layers + 1) * num_qubits * 2
    }

    pub fn new(num_qubits: usize, num_layers: usize, angles: Vec<R>) -> Result<Self> {
        if num_qubits == 0 {
            return config("ansatz needs at least one qubit");
        }
        let want = Self::angle_count(num_qubits, num_layers);
        if angles.len() != want {
            return config(format!("expected {want} ansatz angles, got {}", angles.len()));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return config("ansatz angles must be finite");
        }
        Ok(Self { num_qubits, num_layers, angles, real_only: false })
    }

    pub fn zeros(num_qubits: usize, num_layers: usize) -> Self {
        Self { num_qubits, num_layers, angles: vec![R::zero(); Self::angle_count(num_qubits, num_layers)], real_only: false }
    }

    /// Uniform draws in `[-0.1, 0.1]`.
    pub fn random(num_qubits: usize, num_layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angles = (0..Self::angle_count(num_qubits, num_layers))
            .map(|_| R::lit(rng.random_range(-INIT_SCALE..=INIT_SCALE)))
            .collect();
        Self { num_qubits, num_layers, angles, real_only: false }
    }

    /// Restricts the ansatz to real orthogonal matrices: `Rz` gates are
    /// dropped and their angles pinned to zero.
    pub fn into_real(mut self) -> Self {
        self.real_only = true;
        for l in 0..=self.num_layers {
            for q in 0..self.num_qubits {
                let k = self.index(l, q, Axis::Z);
                self.angles[k] = R::zero();
            }
        }
        self
    }

    pub fn is_real(&self) -> bool {
        self.real_only
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn angles(&self) -> &[R] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [R] {
        &mut self.angles
    }

    pub fn index(&self, layer: usize, qubit: usize, axis: Axis) -> usize {
        (layer * self.num_qubits + qubit) * 2 + axis as usize
    }

    /// Whether angle `k` actually enters the circuit.
    pub fn is_active(&self, k: usize) -> bool {
        !(self.real_only && k % 2 == Axis::Z as usize)
    }

    pub fn map<S: Real>(&self, f: impl Fn(R) -> S) -> AnsatzParams<S> {
        AnsatzParams {
            num_qubits: self.num_qubits,
            num_layers: self.num_layers,
            angles: self.angles.iter().map(|a| f(*a)).collect(),
            real_only: self.real_only,
        }
    }
}

/// Rotation-angle vector for the phase layer `R = ⊗_k Rz(α_k)` on the step register.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseLayerParams<R> {
    angles: Vec<R>,
}

impl<R: Real> PhaseLayerParams<R> {
    pub fn new(angles: Vec<R>) -> Result<Self> {
        if angles.iter().any(|a| !a.is_finite()) {
            return config("phase angles must be finite");
        }
        Ok(Self { angles })
    }

    pub fn zeros(t: usize) -> Self {
        Self { angles: vec![R::zero(); t] }
    }

    pub fn random(t: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { angles: (0..t).map(|_| R::lit(rng.random_range(-INIT_SCALE..=INIT_SCALE))).collect() }
    }

    pub fn angles(&self) -> &[R] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [R] {
        &mut self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Phase picked up by step-register basis value `j`: `Σ_k α_k (b_k(j) − ½)`.
    pub fn branch_phase(&self, j: usize) -> R {
        let half = R::lit(0.5);
        self.angles
            .iter()
            .enumerate()
            .map(|(k, a)| if (j >> k) & 1 == 1 { *a * half } else { -*a * half })
            .sum()
    }

    pub fn map<S: Real>(&self, f: impl Fn(R) -> S) -> PhaseLayerParams<S> {
        PhaseLayerParams { angles: self.angles.iter().map(|a| f(*a)).collect() }
    }
}

pub fn ry<R: Real>(theta: R) -> CMatrix<R> {
    let (s, c) = (theta * R::lit(0.5)).sin_cos();
    let z = R::zero();
    CMatrix::from_row_major(2, 2, vec![Complex::new(c, z), Complex::new(-s, z), Complex::new(s, z), Complex::new(c, z)])
}

pub fn rz<R: Real>(phi: R) -> CMatrix<R> {
    let h = phi * R::lit(0.5);
    CMatrix::from_row_major(
        2,
        2,
        vec![Complex::from_polar(R::one(), -h), Complex::zero(), Complex::zero(), Complex::from_polar(R::one(), h)],
    )
}

/// CNOT with control = local bit 0, target = local bit 1.
fn cnot<R: Real>() -> CMatrix<R> {
    let mut m = CMatrix::zeros(4, 4);
    let one = Complex::new(R::one(), R::zero());
    m[(0, 0)] = one;
    m[(2, 2)] = one;
    // |c=1,t=0> (index 1) <-> |c=1,t=1> (index 3)
    m[(3, 1)] = one;
    m[(1, 3)] = one;
    m
}

/// Left-multiplies `u` by `block` (acting on qubits of the `u.rows()`-dim space).
fn left_apply<R: Real>(u: &mut CMatrix<R>, block: &UnitaryBlock<R>) {
    for col in 0..u.cols() {
        let mut s = StateVector::from_amplitudes(u.column(col)).expect("power-of-two dimension");
        s.apply_unitary_in_place(block).expect("targets inside the register");
        for (r, z) in s.amplitudes().iter().enumerate() {
            u[(r, col)] = *z;
        }
    }
}

fn rotation_layer<R: Real>(u: &mut CMatrix<R>, params: &AnsatzParams<R>, layer: usize) {
    for q in 0..params.num_qubits {
        let theta = params.angles[params.index(layer, q, Axis::Y)];
        let gate = if params.real_only {
            ry(theta)
        } else {
            ry(theta).matmul(&rz(params.angles[params.index(layer, q, Axis::Z)]))
        };
        left_apply(u, &UnitaryBlock::from_trusted(gate, vec![q]));
    }
}

/// The `2^n × 2^n` ansatz unitary on local qubits `0..n`.
pub fn build_ansatz_unitary<R: Real>(params: &AnsatzParams<R>) -> UnitaryBlock<R> {
    let n = params.num_qubits;
    let mut u = CMatrix::identity(1 << n);
    let entangler = cnot::<R>();
    for layer in 0..params.num_layers {
        rotation_layer(&mut u, params, layer);
        for q in 0..n.saturating_sub(1) {
            left_apply(&mut u, &UnitaryBlock::from_trusted(entangler.clone(), vec![q, q + 1]));
        }
    }
    rotation_layer(&mut u, params, params.num_layers);
    UnitaryBlock::from_trusted(u, (0..n).collect())
}

/// `⊗_k Rz(α_k)` with `α_k` on local qubit `k`.
pub fn build_phase_layer<R: Real>(params: &PhaseLayerParams<R>) -> UnitaryBlock<R> {
    let t = params.len();
    let dim = 1usize << t;
    let mut m = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        m[(j, j)] = Complex::from_polar(R::one(), params.branch_phase(j));
    }
    UnitaryBlock::from_trusted(m, (0..t).collect())
}

/// Two-point shift rule `[f(θ + π/2·e_k) − f(θ − π/2·e_k)] / 2`, exact for an
/// expectation in which parameter `k` enters through a single rotation gate
/// generated by a Pauli operator over two.
pub fn parameter_shift_gradient<R: Real>(loss_fn: impl Fn(&[R]) -> R, params: &[R], index: usize) -> R {
    let mut shifted = params.to_vec();
    shifted[index] = params[index] + R::FRAC_PI_2();
    let plus = loss_fn(&shifted);
    shifted[index] = params[index] - R::FRAC_PI_2();
    let minus = loss_fn(&shifted);
    (plus - minus) * R::lit(0.5)
}

/// Applies `gate` to a single-qubit state; handy for gradient examples.
pub fn rotate_qubit<R: Real>(gate: &CMatrix<R>, state: &[C<R>; 2]) -> [C<R>; 2] {
    let v = gate.mul_vec(state);
    [v[0], v[1]]
}
