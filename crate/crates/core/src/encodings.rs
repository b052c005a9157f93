//! Data-dependent state preparation: amplitude encodings of tokens, the
//! entangled prefix states `∝ Σ_{i≤j} |x_i⟩_A|x_i⟩_B`, the step-indexed input
//! superposition and basis encodings of word indices.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{config, QsaError, Result};
use crate::linalg::{complete_unitary, norm_sqr};
use crate::scalar::{Real, C};
use crate::statevector::{RegisterLayout, StateVector, UnitaryBlock};

const ZERO_NORM_TOLERANCE: f64 = 1e-12;

/// A token vector together with its normalized amplitude encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedToken<R> {
    raw: Vec<C<R>>,
    state: StateVector<R>,
    norm: R,
}

impl<R: Real> EncodedToken<R> {
    pub fn raw(&self) -> &[C<R>] {
        &self.raw
    }

    pub fn state(&self) -> &StateVector<R> {
        &self.state
    }

    /// Normalized amplitudes.
    pub fn amplitudes(&self) -> &[C<R>] {
        self.state.amplitudes()
    }

    /// Euclidean norm of the raw vector.
    pub fn norm(&self) -> R {
        self.norm
    }

    pub fn num_qubits(&self) -> usize {
        self.state.num_qubits()
    }

    /// Unitary with `|x⟩` as its first column, i.e. `U|0…0⟩ = |x⟩`.
    pub fn preparation_unitary(&self) -> crate::linalg::CMatrix<R> {
        complete_unitary(self.amplitudes())
    }
}

/// `|x⟩ = Σ_k x_k/‖x‖ |k⟩` on `n` qubits.
pub fn amplitude_encode<R: Real>(x: &[C<R>], n: usize) -> Result<EncodedToken<R>> {
    if x.len() != 1 << n {
        return config(format!("vector of length {} cannot be encoded on {n} qubits", x.len()));
    }
    let norm = norm_sqr(x).sqrt();
    if !(norm.value() > ZERO_NORM_TOLERANCE) {
        return Err(QsaError::DegenerateInput(format!("token norm {} is below tolerance", norm.value())));
    }
    let inv = R::one() / norm;
    let state = StateVector::from_amplitudes(x.iter().map(|z| *z * inv).collect())?;
    Ok(EncodedToken { raw: x.to_vec(), state, norm })
}

/// Encodes a whole token list, checking that all share one qubit count.
pub fn encode_all<R: Real>(vectors: &[Vec<C<R>>]) -> Result<Vec<EncodedToken<R>>> {
    let d = vectors.first().map_or(0, Vec::len);
    if d == 0 || !d.is_power_of_two() {
        return config(format!("token dimension {d} is not a power of two"));
    }
    let n = d.trailing_zeros() as usize;
    vectors.iter().map(|v| amplitude_encode(v, n)).collect()
}

/// Unnormalized `Σ_{i≤j} |x_i⟩_A ⊗ |x_i⟩_B` with A on the low `n` bits.
fn prefix_sum<R: Real>(tokens: &[EncodedToken<R>], j: usize) -> Result<Vec<C<R>>> {
    if j == 0 || j > tokens.len() {
        return config(format!("prefix length {j} outside 1..={}", tokens.len()));
    }
    let n = tokens[0].num_qubits();
    if tokens[..j].iter().any(|t| t.num_qubits() != n) {
        return config("tokens have mixed qubit counts");
    }
    let d = 1usize << n;
    let mut acc = vec![Complex::zero(); d * d];
    for tok in &tokens[..j] {
        let x = tok.amplitudes();
        for b in 0..d {
            for a in 0..d {
                acc[a + (b << n)] = acc[a + (b << n)] + x[a] * x[b];
            }
        }
    }
    Ok(acc)
}

/// Normalized `|ψ_j⟩ ∝ Σ_{i≤j} |x_i⟩_A|x_i⟩_B` on `2n` qubits and its squared
/// pre-normalization norm `M_j` (1-based prefix length `j`).
pub fn entangled_prefix_encoding<R: Real>(tokens: &[EncodedToken<R>], j: usize) -> Result<(StateVector<R>, R)> {
    let acc = prefix_sum(tokens, j)?;
    let m = norm_sqr(&acc);
    let inv = R::one() / m.sqrt();
    let state = StateVector::from_amplitudes(acc.into_iter().map(|z| z * inv).collect())?;
    Ok((state, m))
}

/// Controlled preparation blocks `U_{ψ_j}` on the AB qubits, keyed by the C
/// register value `j − 1`.
pub fn prefix_preparation_blocks<R: Real>(
    tokens: &[EncodedToken<R>],
    seq_len: usize,
    layout: &RegisterLayout,
) -> Result<BTreeMap<usize, UnitaryBlock<R>>> {
    (0..seq_len)
        .map(|k| {
            let (psi, _) = entangled_prefix_encoding(tokens, k + 1)?;
            let u = complete_unitary(psi.amplitudes());
            Ok((k, UnitaryBlock::from_trusted(u, layout.ab_qubits())))
        })
        .collect()
}

/// `(1/√T) Σ_j |ψ_j⟩_AB ⊗ |j−1⟩_C`, built as Hadamards on C followed by the
/// controlled `U_{ψ_j}` preparation.
pub fn prepare_input_superposition<R: Real>(
    tokens: &[EncodedToken<R>],
    seq_len: usize,
    layout: &RegisterLayout,
) -> Result<StateVector<R>> {
    if seq_len < 2 || !seq_len.is_power_of_two() {
        return config(format!("T={seq_len} must be a power of two >= 2"));
    }
    if layout.t() != seq_len.trailing_zeros() as usize {
        return config("layout C register does not match T");
    }
    if tokens.len() < seq_len {
        return config(format!("{} tokens supplied for T={seq_len}", tokens.len()));
    }
    if tokens.iter().any(|t| t.num_qubits() != layout.n()) {
        return config("token qubit count does not match layout");
    }
    let mut state = StateVector::zero(layout.total_qubits());
    for q in layout.c_qubits() {
        state.apply_unitary_in_place(&UnitaryBlock::hadamard(q))?;
    }
    let blocks = prefix_preparation_blocks(tokens, seq_len, layout)?;
    state.apply_controlled_in_place(&layout.c_qubits(), &blocks)?;
    Ok(state)
}

/// Computational basis state `|ℓ⟩` on `n` qubits.
pub fn basis_encode<R: Real>(word_index: usize, n: usize) -> Result<StateVector<R>> {
    StateVector::basis(n, word_index)
}
