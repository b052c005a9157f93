//! Dense state-vector simulation.
//!
//! Qubit ordering is little-endian throughout the crate: qubit `q` is bit `q`
//! of the basis index, so `|q1 q0⟩ = |10⟩` lives at amplitude index 2.

use std::collections::BTreeMap;
use std::ops::Range;

use num_complex::Complex;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{config, QsaError, Result};
use crate::linalg::{norm_sqr, vdot, CMatrix};
use crate::scalar::{Real, C};

/// Amplitudes of an `m`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<R> {
    num_qubits: usize,
    amplitudes: Vec<Complex<R>>,
}

impl<R: Real> StateVector<R> {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex::zero(); 1 << num_qubits];
        amplitudes[0] = Complex::one();
        Self { num_qubits, amplitudes }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if index >= 1 << num_qubits {
            return config(format!("basis index {index} out of range for {num_qubits} qubits"));
        }
        let mut amplitudes = vec![Complex::zero(); 1 << num_qubits];
        amplitudes[index] = Complex::one();
        Ok(Self { num_qubits, amplitudes })
    }

    /// Wraps raw amplitudes without renormalizing. The length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<C<R>>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return config(format!("amplitude count {len} is not a power of two"));
        }
        Ok(Self { num_qubits: len.trailing_zeros() as usize, amplitudes })
    }

    /// Wraps amplitudes after scaling them to unit norm.
    pub fn normalized(amplitudes: Vec<C<R>>) -> Result<Self> {
        let nrm = norm_sqr(&amplitudes).sqrt();
        if nrm.value() <= 1e-12 {
            return Err(QsaError::DegenerateInput("cannot normalize a zero vector".into()));
        }
        let inv = R::one() / nrm;
        Self::from_amplitudes(amplitudes.into_iter().map(|z| z * inv).collect())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C<R>] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C<R>> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> R {
        norm_sqr(&self.amplitudes)
    }

    /// `(U ⊗ I_rest)|self⟩`.
    pub fn apply_unitary(&self, block: &UnitaryBlock<R>) -> Result<Self> {
        let mut out = self.clone();
        out.apply_unitary_in_place(block)?;
        Ok(out)
    }

    pub fn apply_unitary_in_place(&mut self, block: &UnitaryBlock<R>) -> Result<()> {
        self.check_targets(block.targets())?;
        apply_kernel(&mut self.amplitudes, block, None);
        Ok(())
    }

    /// `Σ_j U_j ⊗ |j⟩⟨j|` where `j` is read from `controls` (control `k` is bit `k` of `j`).
    pub fn apply_controlled_by_register(
        &self,
        controls: &[usize],
        blocks: &BTreeMap<usize, UnitaryBlock<R>>,
    ) -> Result<Self> {
        let mut out = self.clone();
        out.apply_controlled_in_place(controls, blocks)?;
        Ok(out)
    }

    pub fn apply_controlled_in_place(
        &mut self,
        controls: &[usize],
        blocks: &BTreeMap<usize, UnitaryBlock<R>>,
    ) -> Result<()> {
        self.check_targets(controls)?;
        let control_mask = controls.iter().fold(0usize, |m, &q| m | (1 << q));
        for j in 0..1usize << controls.len() {
            let block = blocks
                .get(&j)
                .ok_or_else(|| QsaError::Config(format!("no block for control value {j}")))?;
            self.check_targets(block.targets())?;
            if block.targets().iter().any(|t| controls.contains(t)) {
                return config("controlled block overlaps its control register");
            }
            let value = controls
                .iter()
                .enumerate()
                .fold(0usize, |v, (bit, &q)| v | (((j >> bit) & 1) << q));
            apply_kernel(&mut self.amplitudes, block, Some((control_mask, value)));
        }
        Ok(())
    }

    /// `|⟨0…0|self⟩|²`, the expectation of `((Z+1)/2)^{⊗m}`.
    pub fn all_zeros_expectation(&self) -> R {
        self.amplitudes[0].norm_sqr()
    }

    /// Fraction of `shots` Bernoulli draws that land on `|0…0⟩`.
    pub fn sample_expectation(&self, shots: u64, seed: u64) -> Result<f64> {
        if shots == 0 {
            return config("shots must be at least 1");
        }
        let p = self.all_zeros_expectation().value().clamp(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits = Binomial::new(shots, p)
            .map_err(|e| QsaError::Numeric(format!("binomial sampler: {e}")))?
            .sample(&mut rng);
        Ok(hits as f64 / shots as f64)
    }

    /// `⟨self|other⟩`.
    pub fn inner_product(&self, other: &Self) -> Result<C<R>> {
        if self.num_qubits != other.num_qubits {
            return config(format!(
                "inner product between {} and {} qubit states",
                self.num_qubits, other.num_qubits
            ));
        }
        Ok(vdot(&self.amplitudes, &other.amplitudes))
    }

    /// Projects `qubits` onto the basis value `value` (bit `k` of `value` for
    /// `qubits[k]`) and returns the unnormalized state on the remaining qubits,
    /// in their original relative order.
    pub fn project(&self, qubits: &[usize], value: usize) -> Result<Self> {
        self.check_targets(qubits)?;
        let mask = qubits.iter().fold(0usize, |m, &q| m | (1 << q));
        let want = qubits.iter().enumerate().fold(0usize, |v, (bit, &q)| v | (((value >> bit) & 1) << q));
        let rest: Vec<usize> = (0..self.num_qubits).filter(|q| mask & (1 << q) == 0).collect();
        let mut out = vec![Complex::zero(); 1 << rest.len()];
        for (i, amp) in self.amplitudes.iter().enumerate() {
            if i & mask != want {
                continue;
            }
            let local = rest.iter().enumerate().fold(0usize, |v, (bit, &q)| v | (((i >> q) & 1) << bit));
            out[local] = *amp;
        }
        Self::from_amplitudes(out)
    }

    fn check_targets(&self, qubits: &[usize]) -> Result<()> {
        for (k, &q) in qubits.iter().enumerate() {
            if q >= self.num_qubits {
                return config(format!("qubit {q} out of range for {} qubits", self.num_qubits));
            }
            if qubits[..k].contains(&q) {
                return config(format!("qubit {q} listed twice"));
            }
        }
        Ok(())
    }
}

fn apply_kernel<R: Real>(amps: &mut [C<R>], block: &UnitaryBlock<R>, control: Option<(usize, usize)>) {
    let targets = block.targets();
    let dim = 1usize << targets.len();
    let target_mask = targets.iter().fold(0usize, |m, &q| m | (1 << q));
    let offsets: Vec<usize> = (0..dim)
        .map(|l| targets.iter().enumerate().fold(0usize, |o, (bit, &q)| o | (((l >> bit) & 1) << q)))
        .collect();
    let m = &block.matrix;
    let mut gathered = vec![Complex::zero(); dim];
    for base in 0..amps.len() {
        if base & target_mask != 0 {
            continue;
        }
        if let Some((cmask, cval)) = control {
            if base & cmask != cval {
                continue;
            }
        }
        for (g, off) in gathered.iter_mut().zip(&offsets) {
            *g = amps[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            amps[base | off] = m.row(r).iter().zip(&gathered).fold(Complex::zero(), |acc, (a, b)| acc + *a * *b);
        }
    }
}

/// Dense `2^k × 2^k` unitary acting on `k` named qubits. Local index bit `b`
/// of the matrix corresponds to `targets[b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryBlock<R> {
    matrix: CMatrix<R>,
    targets: Vec<usize>,
}

impl<R: Real> UnitaryBlock<R> {
    /// Validates shape, distinct targets and `U†U = I` within the scalar's tolerance.
    pub fn new(matrix: CMatrix<R>, targets: Vec<usize>) -> Result<Self> {
        let dim = 1usize << targets.len();
        if !matrix.is_square() || matrix.rows() != dim {
            return config(format!(
                "{}x{} matrix cannot act on {} target qubits",
                matrix.rows(),
                matrix.cols(),
                targets.len()
            ));
        }
        for (k, q) in targets.iter().enumerate() {
            if targets[..k].contains(q) {
                return config(format!("target qubit {q} listed twice"));
            }
        }
        let defect = matrix.unitarity_defect();
        if !(defect <= R::structural_tolerance()) {
            return config(format!("matrix is not unitary (defect {defect:e})"));
        }
        Ok(Self { matrix, targets })
    }

    pub fn identity(targets: Vec<usize>) -> Self {
        Self { matrix: CMatrix::identity(1 << targets.len()), targets }
    }

    pub fn hadamard(target: usize) -> Self {
        let h = R::FRAC_1_SQRT_2();
        let m = CMatrix::from_row_major(
            2,
            2,
            vec![Complex::new(h, R::zero()), Complex::new(h, R::zero()), Complex::new(h, R::zero()), Complex::new(-h, R::zero())],
        );
        Self { matrix: m, targets: vec![target] }
    }

    pub fn pauli_x(target: usize) -> Self {
        let m = CMatrix::from_row_major(2, 2, vec![Complex::zero(), Complex::one(), Complex::one(), Complex::zero()]);
        Self { matrix: m, targets: vec![target] }
    }

    pub fn pauli_z(target: usize) -> Self {
        let m = CMatrix::from_row_major(2, 2, vec![Complex::one(), Complex::zero(), Complex::zero(), -Complex::one()]);
        Self { matrix: m, targets: vec![target] }
    }

    /// Same matrix, placed on different qubits.
    pub fn on(&self, targets: Vec<usize>) -> Result<Self> {
        if targets.len() != self.targets.len() {
            return config("retargeting must keep the qubit count");
        }
        Ok(Self { matrix: self.matrix.clone(), targets })
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), targets: self.targets.clone() }
    }

    pub fn matrix(&self) -> &CMatrix<R> {
        &self.matrix
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn dimension(&self) -> usize {
        self.matrix.rows()
    }

    pub(crate) fn from_trusted(matrix: CMatrix<R>, targets: Vec<usize>) -> Self {
        debug_assert_eq!(matrix.rows(), 1 << targets.len());
        Self { matrix, targets }
    }
}

/// Qubit assignment for the three registers: A (`n` qubits), B (`n` qubits)
/// and C (`t` qubits), laid out in that order from qubit 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    a: Range<usize>,
    b: Range<usize>,
    c: Range<usize>,
}

impl RegisterLayout {
    pub fn new(n: usize, t: usize) -> Result<Self> {
        if n == 0 {
            return config("data registers need at least one qubit");
        }
        Ok(Self { a: 0..n, b: n..2 * n, c: 2 * n..2 * n + t })
    }

    /// Layout for token dimension `d` and sequence length `seq_len` (both powers of two).
    pub fn for_dims(d: usize, seq_len: usize) -> Result<Self> {
        if d < 2 || !d.is_power_of_two() {
            return config(format!("token dimension {d} is not a power of two >= 2"));
        }
        if seq_len < 2 || !seq_len.is_power_of_two() {
            return config(format!("sequence length T={seq_len} is not a power of two >= 2"));
        }
        Self::new(d.trailing_zeros() as usize, seq_len.trailing_zeros() as usize)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn t(&self) -> usize {
        self.c.len()
    }

    pub fn total_qubits(&self) -> usize {
        self.a.len() + self.b.len() + self.c.len()
    }

    pub fn a_qubits(&self) -> Vec<usize> {
        self.a.clone().collect()
    }

    pub fn b_qubits(&self) -> Vec<usize> {
        self.b.clone().collect()
    }

    pub fn c_qubits(&self) -> Vec<usize> {
        self.c.clone().collect()
    }

    /// A followed by B: the `2n` data qubits.
    pub fn ab_qubits(&self) -> Vec<usize> {
        self.a.clone().chain(self.b.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;
    use rand::{RngExt, SeedableRng};

    fn random_unitary(k: usize, rng: &mut ChaCha8Rng) -> CMatrix<f64> {
        let dim = 1 << k;
        let v: Vec<C<f64>> = (0..dim).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let nrm = norm_sqr(&v).sqrt();
        let first: Vec<_> = v.iter().map(|z| z / nrm).collect();
        // Mix with a random diagonal phase so the matrix is not just a completion.
        let u = crate::linalg::complete_unitary(&first);
        let phases = CMatrix::from_fn(dim, dim, |r, cc| {
            if r == cc {
                Complex::from_polar(1.0, rng.random_range(0.0..6.28))
            } else {
                Complex::zero()
            }
        });
        u.matmul(&phases).matmul(&u.adjoint()).matmul(&crate::linalg::complete_unitary(&first))
    }

    fn random_state(m: usize, rng: &mut ChaCha8Rng) -> StateVector<f64> {
        let v = (0..1 << m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        StateVector::normalized(v).unwrap()
    }

    /// Dense embedding of a block acting on `targets` within `m` qubits.
    fn dense_operator(block: &UnitaryBlock<f64>, m: usize) -> CMatrix<f64> {
        let dim = 1 << m;
        CMatrix::from_fn(dim, dim, |r, col| {
            let mask = block.targets().iter().fold(0, |a, &q| a | (1 << q));
            if r & !mask != col & !mask {
                return Complex::zero();
            }
            let local = |i: usize| block.targets().iter().enumerate().fold(0, |v, (b, &q)| v | (((i >> q) & 1) << b));
            block.matrix()[(local(r), local(col))]
        })
    }

    #[test]
    fn hadamard_on_zero() {
        let s = StateVector::<f64>::zero(1).apply_unitary(&UnitaryBlock::hadamard(0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0] - c(h, 0.)).norm() < 1e-15);
        assert!((s.amplitudes()[1] - c(h, 0.)).norm() < 1e-15);
    }

    #[test]
    fn identity_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_state(3, &mut rng);
        let out = s.apply_unitary(&UnitaryBlock::identity(vec![2, 0])).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn x_on_qubit_one_is_little_endian() {
        let s = StateVector::<f64>::zero(2).apply_unitary(&UnitaryBlock::pauli_x(1)).unwrap();
        assert_eq!(s.amplitudes()[2], c(1., 0.));
    }

    #[test]
    fn rejects_bad_blocks() {
        let s = StateVector::<f64>::zero(2);
        assert!(UnitaryBlock::new(CMatrix::<f64>::identity(4), vec![0]).is_err());
        assert!(UnitaryBlock::new(CMatrix::<f64>::identity(4), vec![1, 1]).is_err());
        let not_unitary = CMatrix::<f64>::from_row_major(2, 2, vec![c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.)]);
        assert!(UnitaryBlock::new(not_unitary, vec![0]).is_err());
        assert!(s.apply_unitary(&UnitaryBlock::pauli_x(2)).is_err());
    }

    #[test]
    fn definite_control_selects_block() {
        // controls = qubit 1 in |0>, block for 0 is X on qubit 0.
        let blocks = BTreeMap::from([(0, UnitaryBlock::pauli_x(0)), (1, UnitaryBlock::identity(vec![0]))]);
        let s = StateVector::<f64>::zero(2).apply_controlled_by_register(&[1], &blocks).unwrap();
        assert_eq!(s.amplitudes()[1], c(1., 0.));
    }

    #[test]
    fn controlled_x_makes_bell_state() {
        let plus = StateVector::<f64>::zero(2).apply_unitary(&UnitaryBlock::hadamard(1)).unwrap();
        let blocks = BTreeMap::from([(0, UnitaryBlock::identity(vec![0])), (1, UnitaryBlock::pauli_x(0))]);
        let bell = plus.apply_controlled_by_register(&[1], &blocks).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((bell.amplitudes()[0] - c(h, 0.)).norm() < 1e-15);
        assert!((bell.amplitudes()[3] - c(h, 0.)).norm() < 1e-15);
        assert!(bell.amplitudes()[1].norm() < 1e-15 && bell.amplitudes()[2].norm() < 1e-15);
    }

    #[test]
    fn missing_control_block_is_an_error() {
        let blocks = BTreeMap::from([(0, UnitaryBlock::<f64>::identity(vec![0]))]);
        let err = StateVector::<f64>::zero(2).apply_controlled_by_register(&[1], &blocks);
        assert!(matches!(err, Err(QsaError::Config(_))));
        let overlapping = BTreeMap::from([(0, UnitaryBlock::<f64>::identity(vec![1])), (1, UnitaryBlock::identity(vec![1]))]);
        assert!(StateVector::<f64>::zero(2).apply_controlled_by_register(&[1], &overlapping).is_err());
    }

    #[test]
    fn controlled_blocks_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let state = random_state(3, &mut rng);
            let u0 = random_unitary(2, &mut rng);
            let u1 = random_unitary(2, &mut rng);
            let blocks = BTreeMap::from([
                (0, UnitaryBlock::new(u0.clone(), vec![0, 1]).unwrap()),
                (1, UnitaryBlock::new(u1.clone(), vec![0, 1]).unwrap()),
            ]);
            let out = state.apply_controlled_by_register(&[2], &blocks).unwrap();
            // Σ_j U_j ⊗ |j><j| with the control on the high qubit.
            let p0 = CMatrix::from_row_major(2, 2, vec![c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
            let p1 = CMatrix::from_row_major(2, 2, vec![c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);
            let a = p0.kron(&u0);
            let b = p1.kron(&u1);
            let dense = CMatrix::from_fn(8, 8, |r, cc| a[(r, cc)] + b[(r, cc)]);
            let expected = dense.mul_vec(state.amplitudes());
            for (x, y) in out.amplitudes().iter().zip(&expected) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn composition_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let state = random_state(3, &mut rng);
            let u = UnitaryBlock::new(random_unitary(2, &mut rng), vec![2, 0]).unwrap();
            let v = UnitaryBlock::new(random_unitary(2, &mut rng), vec![1, 2]).unwrap();
            let seq = state.apply_unitary(&u).unwrap().apply_unitary(&v).unwrap();
            let vu = dense_operator(&v, 3).matmul(&dense_operator(&u, 3));
            let expected = vu.mul_vec(state.amplitudes());
            for (x, y) in seq.amplitudes().iter().zip(&expected) {
                assert!((x - y).norm() < 1e-12);
            }
            assert!((seq.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn all_zeros_expectation_cases() {
        assert_eq!(StateVector::<f64>::zero(3).all_zeros_expectation(), 1.0);
        assert_eq!(StateVector::<f64>::basis(3, 5).unwrap().all_zeros_expectation(), 0.0);
        let mut s = StateVector::<f64>::zero(4);
        for q in 0..4 {
            s.apply_unitary_in_place(&UnitaryBlock::hadamard(q)).unwrap();
        }
        assert!((s.all_zeros_expectation() - 1.0 / 16.0).abs() < 1e-15);
        let rest: f64 = s.amplitudes()[1..].iter().map(|z| z.norm_sqr()).sum();
        assert!((s.all_zeros_expectation() + rest - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_edge_cases_and_accuracy() {
        assert_eq!(StateVector::<f64>::zero(2).sample_expectation(17, 3).unwrap(), 1.0);
        assert_eq!(StateVector::<f64>::basis(2, 1).unwrap().sample_expectation(17, 3).unwrap(), 0.0);
        assert!(StateVector::<f64>::zero(2).sample_expectation(0, 3).is_err());
        let mut s = StateVector::<f64>::zero(2);
        s.apply_unitary_in_place(&UnitaryBlock::hadamard(0)).unwrap();
        s.apply_unitary_in_place(&UnitaryBlock::hadamard(1)).unwrap();
        let shots = 1_000_000u64;
        let est = s.sample_expectation(shots, 42).unwrap();
        let se = (0.25f64 * 0.75 / shots as f64).sqrt();
        assert!((est - 0.25).abs() < 3.0 * se, "{est}");
        assert_eq!(est, s.sample_expectation(shots, 42).unwrap());
    }

    #[test]
    fn inner_products() {
        let zero = StateVector::<f64>::zero(1);
        let one = StateVector::basis(1, 1).unwrap();
        let plus = zero.apply_unitary(&UnitaryBlock::hadamard(0)).unwrap();
        assert!((zero.inner_product(&zero).unwrap() - c(1., 0.)).norm() < 1e-15);
        assert_eq!(zero.inner_product(&one).unwrap(), c(0., 0.));
        assert!((plus.inner_product(&zero).unwrap().re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(zero.inner_product(&StateVector::zero(2)).is_err());
    }

    #[test]
    fn projection_keeps_remaining_qubits_in_order() {
        // |q2 q1 q0> = |1 0 1> ; project q1 onto 0 -> |q2 q0> = |11>
        let s = StateVector::<f64>::basis(3, 0b101).unwrap();
        let p = s.project(&[1], 0).unwrap();
        assert_eq!(p.amplitudes()[3], c(1., 0.));
        assert_eq!(s.project(&[1], 1).unwrap().norm_sqr(), 0.0);
    }

    #[test]
    fn layout_rejects_non_powers() {
        assert!(RegisterLayout::for_dims(3, 4).is_err());
        assert!(RegisterLayout::for_dims(4, 1).is_err());
        let l = RegisterLayout::for_dims(4, 4).unwrap();
        assert_eq!((l.a_qubits(), l.b_qubits(), l.c_qubits()), (vec![0, 1], vec![2, 3], vec![4, 5]));
        assert_eq!(l.total_qubits(), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn norm_is_preserved(seed in any::<u64>(), steps in 1usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = random_state(4, &mut rng);
                for _ in 0..steps {
                    let a = rng.random_range(0..4usize);
                    let b = (a + 1 + rng.random_range(0..3usize)) % 4;
                    let u = UnitaryBlock::new(random_unitary(2, &mut rng), vec![a, b]).unwrap();
                    s.apply_unitary_in_place(&u).unwrap();
                    let blocks: BTreeMap<_, _> = (0..2)
                        .map(|j| (j, UnitaryBlock::new(random_unitary(1, &mut rng), vec![a]).unwrap()))
                        .collect();
                    s.apply_controlled_in_place(&[b], &blocks).unwrap();
                }
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            }
        }
    }
}
