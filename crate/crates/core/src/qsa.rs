//! The quantum self-attention circuit.
//!
//! Registers A and B hold `n = log2 d` qubits each, C holds `t = log2 T`.
//! The circuit prepares `(1/√T) Σ_j |ψ_j⟩_AB |j⟩_C`, applies `V_A ⊗ W_B`,
//! then for each branch `j` the controlled projection
//! `(Ũ_{j+1}†)_A ⊗ (U_j†)_B`, the phase layer on C and Hadamards on C. The
//! probability of reading all zeros is the training signal.
//!
//! Two evaluation routes are provided: [`circuit_expectation`] simulates the
//! full `2n + t` qubit state, [`analytic_expectation`] sums the branch overlaps
//! `a_j = Σ_{i≤j} ⟨x̃_{j+1}|V|x_i⟩⟨x_j|W|x_i⟩` directly. They must agree.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::Zero;

use crate::ansatz::{build_ansatz_unitary, rz, AnsatzParams, PhaseLayerParams};
use crate::encodings::{prefix_preparation_blocks, EncodedToken};
use crate::error::{config, QsaError, Result};
use crate::linalg::{complete_unitary, norm_sqr, vdot};
use crate::objectives::{renyi_half_from_expectation, LossValue};
use crate::scalar::{Real, C};
use crate::statevector::{RegisterLayout, StateVector, UnitaryBlock};

/// Encoded data of one training sequence: tokens `x_1..x_{T+1}` and shifted
/// targets `x̃_2..x̃_{T+1}`.
#[derive(Clone, Debug)]
pub struct QsaSequence<R> {
    tokens: Vec<EncodedToken<R>>,
    targets: Vec<EncodedToken<R>>,
    layout: RegisterLayout,
}

impl<R: Real> QsaSequence<R> {
    pub fn new(tokens: Vec<EncodedToken<R>>, targets: Vec<EncodedToken<R>>) -> Result<Self> {
        if tokens.len() < 3 {
            return config("a sequence needs at least T+1 = 3 tokens");
        }
        let seq_len = tokens.len() - 1;
        if !seq_len.is_power_of_two() {
            return config(format!("T = {seq_len} is not a power of two"));
        }
        if targets.len() != seq_len {
            return config(format!("expected {seq_len} shifted targets, got {}", targets.len()));
        }
        let n = tokens[0].num_qubits();
        if tokens.iter().chain(&targets).any(|t| t.num_qubits() != n) {
            return config("all tokens must live on the same number of qubits");
        }
        let layout = RegisterLayout::new(n, seq_len.trailing_zeros() as usize)?;
        Ok(Self { tokens, targets, layout })
    }

    /// Number of prediction steps `T`.
    pub fn seq_len(&self) -> usize {
        self.targets.len()
    }

    pub fn tokens(&self) -> &[EncodedToken<R>] {
        &self.tokens
    }

    pub fn targets(&self) -> &[EncodedToken<R>] {
        &self.targets
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }
}

/// `V`, `W` as dense blocks on local qubits `0..n`, plus the phase layer angles.
#[derive(Clone, Debug)]
pub struct QsaCircuit<R> {
    v: UnitaryBlock<R>,
    w: UnitaryBlock<R>,
    phases: PhaseLayerParams<R>,
}

impl<R: Real> QsaCircuit<R> {
    pub fn compile(params_v: &AnsatzParams<R>, params_w: &AnsatzParams<R>, params_r: &PhaseLayerParams<R>) -> Result<Self> {
        if params_v.num_qubits() != params_w.num_qubits() {
            return config("V and W act on registers of different size");
        }
        Ok(Self { v: build_ansatz_unitary(params_v), w: build_ansatz_unitary(params_w), phases: params_r.clone() })
    }

    /// Circuit with arbitrary unitaries in place of the ansatz, e.g. identities.
    pub fn from_blocks(v: UnitaryBlock<R>, w: UnitaryBlock<R>, phases: PhaseLayerParams<R>) -> Result<Self> {
        if v.targets().len() != w.targets().len() {
            return config("V and W act on registers of different size");
        }
        Ok(Self { v, w, phases })
    }

    pub fn v(&self) -> &UnitaryBlock<R> {
        &self.v
    }

    pub fn w(&self) -> &UnitaryBlock<R> {
        &self.w
    }

    pub fn phases(&self) -> &PhaseLayerParams<R> {
        &self.phases
    }

    fn check(&self, seq: &QsaSequence<R>) -> Result<()> {
        if self.v.targets().len() != seq.layout.n() {
            return config("circuit register size does not match the token dimension");
        }
        if self.phases.len() != seq.layout.t() {
            return config(format!("phase layer has {} angles, C register has {} qubits", self.phases.len(), seq.layout.t()));
        }
        Ok(())
    }
}

/// One sequence plus all circuit parameters.
#[derive(Clone, Debug)]
pub struct QsaInstance<R> {
    pub sequence: QsaSequence<R>,
    pub params_v: AnsatzParams<R>,
    pub params_w: AnsatzParams<R>,
    pub params_r: PhaseLayerParams<R>,
}

impl<R: Real> QsaInstance<R> {
    pub fn new(
        sequence: QsaSequence<R>,
        params_v: AnsatzParams<R>,
        params_w: AnsatzParams<R>,
        params_r: PhaseLayerParams<R>,
    ) -> Result<Self> {
        let inst = Self { sequence, params_v, params_w, params_r };
        inst.compile()?.check(&inst.sequence)?;
        Ok(inst)
    }

    pub fn compile(&self) -> Result<QsaCircuit<R>> {
        QsaCircuit::compile(&self.params_v, &self.params_w, &self.params_r)
    }
}

/// Elementary-block bookkeeping for the simulated circuit. Every applied
/// dense block adds its dimension `2^k` to `weighted`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GateTally {
    pub blocks: u64,
    pub weighted: u64,
    /// Weighted cost of the controlled (per-branch) blocks alone.
    pub controlled_weighted: u64,
}

impl GateTally {
    fn record(&mut self, dim: usize, controlled: bool) {
        self.blocks += 1;
        self.weighted += dim as u64;
        if controlled {
            self.controlled_weighted += dim as u64;
        }
    }
}

/// Prepared, transformed and projected state before the final Hadamards.
fn run_to_projection<R: Real>(
    seq: &QsaSequence<R>,
    circuit: &QsaCircuit<R>,
    project_targets: bool,
    mut tally: Option<&mut GateTally>,
) -> Result<StateVector<R>> {
    circuit.check(seq)?;
    let layout = &seq.layout;
    let seq_len = seq.seq_len();
    let mut rec = |dim: usize, controlled: bool| {
        if let Some(t) = tally.as_deref_mut() {
            t.record(dim, controlled);
        }
    };

    let mut state = StateVector::zero(layout.total_qubits());
    for q in layout.c_qubits() {
        state.apply_unitary_in_place(&UnitaryBlock::hadamard(q))?;
        rec(2, false);
    }
    let prep = prefix_preparation_blocks(&seq.tokens, seq_len, layout)?;
    state.apply_controlled_in_place(&layout.c_qubits(), &prep)?;
    for b in prep.values() {
        rec(b.dimension(), true);
    }

    state.apply_unitary_in_place(&circuit.v.on(layout.a_qubits())?)?;
    state.apply_unitary_in_place(&circuit.w.on(layout.b_qubits())?)?;
    rec(circuit.v.dimension(), false);
    rec(circuit.w.dimension(), false);

    let d = 1usize << layout.n();
    let projections: BTreeMap<usize, UnitaryBlock<R>> = (0..seq_len)
        .map(|k| {
            let u_b = complete_unitary(seq.tokens[k].amplitudes()).adjoint();
            let u_a = if project_targets {
                complete_unitary(seq.targets[k].amplitudes()).adjoint()
            } else {
                crate::linalg::CMatrix::identity(d)
            };
            (k, UnitaryBlock::from_trusted(u_b.kron(&u_a), layout.ab_qubits()))
        })
        .collect();
    state.apply_controlled_in_place(&layout.c_qubits(), &projections)?;
    for b in projections.values() {
        rec(b.dimension(), true);
    }
    Ok(state)
}

fn circuit_route<R: Real>(seq: &QsaSequence<R>, circuit: &QsaCircuit<R>, tally: Option<&mut GateTally>) -> Result<R> {
    let mut tally = tally;
    let mut state = run_to_projection(seq, circuit, true, tally.as_deref_mut())?;
    let c_qubits = seq.layout.c_qubits();
    for (k, &q) in c_qubits.iter().enumerate() {
        let gate = UnitaryBlock::from_trusted(rz(circuit.phases.angles()[k]), vec![q]);
        state.apply_unitary_in_place(&gate)?;
        if let Some(t) = tally.as_deref_mut() {
            t.record(2, false);
        }
    }
    for &q in &c_qubits {
        state.apply_unitary_in_place(&UnitaryBlock::hadamard(q))?;
        if let Some(t) = tally.as_deref_mut() {
            t.record(2, false);
        }
    }
    Ok(state.all_zeros_expectation())
}

/// All-zeros probability of the full simulated circuit.
pub fn circuit_expectation_with<R: Real>(seq: &QsaSequence<R>, circuit: &QsaCircuit<R>) -> Result<R> {
    circuit_route(seq, circuit, None)
}

/// Same as [`circuit_expectation_with`], also counting the applied blocks.
pub fn circuit_expectation_traced<R: Real>(seq: &QsaSequence<R>, circuit: &QsaCircuit<R>) -> Result<(R, GateTally)> {
    let mut tally = GateTally::default();
    let e = circuit_route(seq, circuit, Some(&mut tally))?;
    Ok((e, tally))
}

pub fn circuit_expectation<R: Real>(instance: &QsaInstance<R>) -> Result<R> {
    circuit_expectation_with(&instance.sequence, &instance.compile()?)
}

/// Per-branch quantities of the analytic route for step `j` (1-based).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchTerm<R> {
    /// `a_j = Σ_{i≤j} ⟨x̃_{j+1}|V|x_i⟩ ⟨x_j|W|x_i⟩` over normalized tokens.
    pub overlap: C<R>,
    /// `M_j = ‖Σ_{i≤j} |x_i⟩|x_i⟩‖²`.
    pub prefix_norm_sqr: R,
    /// Phase imprinted by the phase layer on branch `j`.
    pub phase: R,
    /// `‖z̃_j‖²` for `z̃_j = Σ_{i≤j} ⟨x_j|W|x_i⟩ V|x_i⟩`.
    pub prediction_norm_sqr: R,
}

impl<R: Real> BranchTerm<R> {
    /// `|a_j|² / M_j`: the branch probability with the circuit's own normalization.
    pub fn circuit_probability(&self) -> R {
        self.overlap.norm_sqr() / self.prefix_norm_sqr
    }

    /// `|a_j|² / ‖z̃_j‖²`: overlap of the target with the normalized prediction.
    pub fn prediction_probability(&self) -> R {
        self.overlap.norm_sqr() / self.prediction_norm_sqr
    }
}

pub fn branch_terms_with<R: Real>(seq: &QsaSequence<R>, circuit: &QsaCircuit<R>) -> Result<Vec<BranchTerm<R>>> {
    circuit.check(seq)?;
    let seq_len = seq.seq_len();
    let xs: Vec<&[C<R>]> = seq.tokens[..seq_len].iter().map(|t| t.amplitudes()).collect();
    let vx: Vec<Vec<C<R>>> = xs.iter().map(|x| circuit.v.matrix().mul_vec(x)).collect();
    let wx: Vec<Vec<C<R>>> = xs.iter().map(|x| circuit.w.matrix().mul_vec(x)).collect();
    let gram: Vec<Vec<C<R>>> = xs.iter().map(|a| xs.iter().map(|b| vdot(a, b)).collect()).collect();

    let mut terms = Vec::with_capacity(seq_len);
    let mut prefix = R::zero();
    for k in 0..seq_len {
        // M_j = Σ_{i,i'≤j} ⟨x_i|x_i'⟩², updated incrementally with the new row/column.
        let mut added = gram[k][k] * gram[k][k];
        for i in 0..k {
            added = added + gram[i][k] * gram[i][k] * R::lit(2.0);
        }
        prefix = prefix + added.re;

        let target = seq.targets[k].amplitudes();
        let mut overlap = Complex::zero();
        let mut z = vec![Complex::zero(); vx[0].len()];
        for i in 0..=k {
            let weight = vdot(xs[k], &wx[i]);
            overlap = overlap + vdot(target, &vx[i]) * weight;
            crate::linalg::axpy(&mut z, weight, &vx[i]);
        }
        terms.push(BranchTerm {
            overlap,
            prefix_norm_sqr: prefix,
            phase: circuit.phases.branch_phase(k),
            prediction_norm_sqr: norm_sqr(&z),
        });
    }
    Ok(terms)
}

/// `|(1/T) Σ_j e^{iφ_j} a_j / √M_j|²` computed from the branch overlaps.
pub fn analytic_expectation_with<R: Real>(seq: &QsaSequence<R>, circuit: &QsaCircuit<R>) -> Result<R> {
    let terms = branch_terms_with(seq, circuit)?;
    let inv_t = R::one() / R::lit(seq.seq_len() as f64);
    let amp = terms.iter().fold(Complex::zero(), |acc: C<R>, b| {
        acc + Complex::from_polar(R::one(), b.phase) * b.overlap / b.prefix_norm_sqr.sqrt()
    }) * inv_t;
    Ok(amp.norm_sqr())
}

pub fn analytic_expectation<R: Real>(instance: &QsaInstance<R>) -> Result<R> {
    analytic_expectation_with(&instance.sequence, &instance.compile()?)
}

/// Loss `−log E + log T` with the expectation that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QsaLoss<R> {
    pub loss: R,
    pub expectation: R,
    pub clamped: bool,
}

pub fn loss_from_expectation<R: Real>(expectation: R, seq_len: usize) -> QsaLoss<R> {
    let LossValue { value, clamped } = renyi_half_from_expectation(expectation, seq_len);
    QsaLoss { loss: value, expectation, clamped }
}

pub fn qsa_loss<R: Real>(instance: &QsaInstance<R>) -> Result<QsaLoss<R>> {
    let e = circuit_expectation(instance)?;
    Ok(loss_from_expectation(e, instance.sequence.seq_len()))
}

/// Inference-time readout for step `j` (1-based): the circuit without the
/// target projection and final Hadamards, post-selected on `|0⟩_B |j⟩_C`.
/// Returns the normalized predicted token on A and `‖z̃_j‖²`.
pub fn predict_token_state_with<R: Real>(
    seq: &QsaSequence<R>,
    circuit: &QsaCircuit<R>,
    j: usize,
) -> Result<(StateVector<R>, R)> {
    let seq_len = seq.seq_len();
    if j == 0 || j > seq_len {
        return config(format!("prediction step {j} outside 1..={seq_len}"));
    }
    let state = run_to_projection(seq, circuit, false, None)?;
    let layout = &seq.layout;
    let mut post = layout.b_qubits();
    post.extend(layout.c_qubits());
    let value = (j - 1) << layout.n();
    let a_state = state.project(&post, value)?;
    let prob = a_state.norm_sqr();
    if !(prob.value() > 1e-24) {
        return Err(QsaError::DegeneratePrediction(format!("step {j} has zero post-selection weight")));
    }
    let (_, m) = crate::encodings::entangled_prefix_encoding(&seq.tokens, j)?;
    let weight = prob * R::lit(seq_len as f64) * m;
    Ok((StateVector::normalized(a_state.into_amplitudes())?, weight))
}

pub fn predict_token_state<R: Real>(instance: &QsaInstance<R>, j: usize) -> Result<(StateVector<R>, R)> {
    predict_token_state_with(&instance.sequence, &instance.compile()?, j)
}

/// `|⟨candidate|prediction⟩|²` for each candidate token.
pub fn decode_scores<R: Real>(prediction: &StateVector<R>, candidates: &[EncodedToken<R>]) -> Result<Vec<R>> {
    candidates
        .iter()
        .map(|c| Ok(c.state().inner_product(prediction)?.norm_sqr()))
        .collect()
}

/// Indices of the `k` highest scores, ties broken by the lower index.
pub fn top_k<R: Real>(scores: &[R], k: usize) -> Vec<(usize, R)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (i, scores[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::{amplitude_encode, encode_all};
    use crate::scalar::c;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis_token(k: usize, d: usize) -> EncodedToken<f64> {
        let mut v = vec![c(0., 0.); d];
        v[k] = c(1., 0.);
        amplitude_encode(&v, d.trailing_zeros() as usize).unwrap()
    }

    fn identity_circuit(n: usize, t: usize) -> QsaCircuit<f64> {
        QsaCircuit::from_blocks(
            UnitaryBlock::identity((0..n).collect()),
            UnitaryBlock::identity((0..n).collect()),
            PhaseLayerParams::zeros(t),
        )
        .unwrap()
    }

    fn random_vectors(count: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C<f64>>> {
        (0..count)
            .map(|_| (0..d).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
            .collect()
    }

    fn random_instance(d: usize, seq_len: usize, seed: u64) -> QsaInstance<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens = encode_all(&random_vectors(seq_len + 1, d, &mut rng)).unwrap();
        let targets = encode_all(&random_vectors(seq_len, d, &mut rng)).unwrap();
        let n = d.trailing_zeros() as usize;
        let t = seq_len.trailing_zeros() as usize;
        let scale = |mut p: AnsatzParams<f64>| {
            for a in p.angles_mut() {
                *a *= 20.0;
            }
            p
        };
        QsaInstance::new(
            QsaSequence::new(tokens, targets).unwrap(),
            scale(AnsatzParams::random(n, 2, seed ^ 1)),
            scale(AnsatzParams::random(n, 2, seed ^ 2)),
            PhaseLayerParams::new((0..t).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap(),
        )
        .unwrap()
    }

    /// Worked example: d = 2, T = 2, V = W = I, x_1 = |0⟩, x_2 = |1⟩, x̃_2 = |0⟩, x̃_3 = |1⟩.
    fn worked_example() -> (QsaSequence<f64>, QsaCircuit<f64>) {
        let tokens = vec![basis_token(0, 2), basis_token(1, 2), basis_token(0, 2)];
        let targets = vec![basis_token(0, 2), basis_token(1, 2)];
        (QsaSequence::new(tokens, targets).unwrap(), identity_circuit(1, 1))
    }

    /// Brute-force oracle for the worked example: write the input state,
    /// apply the projections by hand and sum the surviving amplitudes.
    #[test]
    fn worked_example_matches_dense_oracle() {
        // Input: (|0⟩_A|0⟩_B|0⟩_C + (|00⟩+|11⟩)/√2 |1⟩_C)/√2.
        // Branch 1 projects A on x̃_2=|0⟩, B on x_1=|0⟩: amplitude 1/√2.
        // Branch 2 projects A on x̃_3=|1⟩, B on x_2=|1⟩: amplitude (1/√2)(1/√2).
        // Hadamard projection on C: (b1 + b2)/√2.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let amp = (h + 0.5) * h;
        let oracle = amp * amp;
        assert!((oracle - ((1.0 + h) / 2.0).powi(2)).abs() < 1e-15);

        let (seq, circuit) = worked_example();
        let e = circuit_expectation_with(&seq, &circuit).unwrap();
        assert!((e - oracle).abs() < 1e-12, "{e} vs {oracle}");
        assert!((e - 0.7285533905932737).abs() < 1e-12);
        let a = analytic_expectation_with(&seq, &circuit).unwrap();
        assert!((a - e).abs() < 1e-10);
        let terms = branch_terms_with(&seq, &circuit).unwrap();
        assert!((terms[0].overlap.re - 1.0).abs() < 1e-15 && (terms[1].overlap.re - 1.0).abs() < 1e-15);
        assert!((terms[1].prefix_norm_sqr - 2.0).abs() < 1e-15);

        let loss = loss_from_expectation(e, 2).loss;
        assert!((loss - (-oracle.ln() + 2f64.ln())).abs() < 1e-12);
        assert!((loss - 1.009842).abs() < 1e-6);
    }

    #[test]
    fn one_branch_reduction() {
        // x̃_3 ⊥ everything reachable in branch 2 -> a_2 = 0.
        let tokens = vec![basis_token(0, 2), basis_token(0, 2), basis_token(0, 2)];
        let targets = vec![basis_token(0, 2), basis_token(1, 2)];
        let seq = QsaSequence::new(tokens, targets).unwrap();
        let circuit = identity_circuit(1, 1);
        let terms = branch_terms_with(&seq, &circuit).unwrap();
        assert!(terms[1].overlap.norm() < 1e-15);
        let want = terms[0].overlap.norm_sqr() / (4.0 * terms[0].prefix_norm_sqr);
        let e = analytic_expectation_with(&seq, &circuit).unwrap();
        assert!((e - want).abs() < 1e-15);
        assert!((circuit_expectation_with(&seq, &circuit).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_targets_give_zero() {
        let tokens = vec![basis_token(0, 2), basis_token(0, 2), basis_token(0, 2)];
        let targets = vec![basis_token(1, 2), basis_token(1, 2)];
        let seq = QsaSequence::new(tokens, targets).unwrap();
        let e = circuit_expectation_with(&seq, &identity_circuit(1, 1)).unwrap();
        assert!(e.abs() < 1e-12);
        let l = loss_from_expectation(e, 2);
        assert!(l.clamped);
    }

    #[test]
    fn routes_agree_on_random_instances() {
        for seed in 0..40u64 {
            let d = if seed % 2 == 0 { 2 } else { 4 };
            let t = if seed % 4 < 2 { 2 } else { 4 };
            let inst = random_instance(d, t, seed);
            let e = circuit_expectation(&inst).unwrap();
            let a = analytic_expectation(&inst).unwrap();
            assert!((e - a).abs() < 1e-10, "seed {seed}: {e} vs {a}");
            assert!((-1e-12..=1.0 + 1e-12).contains(&e));
            assert!(qsa_loss(&inst).unwrap().loss >= (t as f64).ln() - 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        assert!((loss_from_expectation(0.25, 4).loss - 2.0 * 4f64.ln()).abs() < 1e-14);
        assert!((loss_from_expectation(1.0, 4).loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn phase_alignment_is_optimal() {
        let inst = random_instance(4, 4, 77);
        let circuit = inst.compile().unwrap();
        let terms = branch_terms_with(&inst.sequence, &circuit).unwrap();
        let bound: f64 = terms.iter().map(|b| b.overlap.norm() / b.prefix_norm_sqr.sqrt()).sum::<f64>() / 4.0;
        let e = analytic_expectation(&inst).unwrap();
        assert!(e <= bound * bound + 1e-12);
        // Coordinate ascent on the phase angles alone never lowers the expectation.
        let mut r = inst.params_r.clone();
        let mut best = e;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k = rng.random_range(0..r.len());
            let old = r.angles()[k];
            r.angles_mut()[k] = old + rng.random_range(-0.5..0.5);
            let c2 = QsaCircuit::compile(&inst.params_v, &inst.params_w, &r).unwrap();
            let e2 = analytic_expectation_with(&inst.sequence, &c2).unwrap();
            if e2 >= best {
                best = e2;
            } else {
                r.angles_mut()[k] = old;
            }
        }
        assert!(best >= e);
        assert!(best <= bound * bound + 1e-12);
    }

    #[test]
    fn prediction_examples() {
        // V = W = I with orthonormal tokens: prediction for step j is x_j.
        let tokens: Vec<_> = (0..5).map(|k| basis_token(k % 4, 4)).collect();
        let targets: Vec<_> = (0..4).map(|k| basis_token(k, 4)).collect();
        let seq = QsaSequence::new(tokens.clone(), targets).unwrap();
        let circuit = identity_circuit(2, 2);
        for j in 1..=4 {
            let (s, w) = predict_token_state_with(&seq, &circuit, j).unwrap();
            let overlap = s.inner_product(tokens[j - 1].state()).unwrap().norm_sqr();
            assert!((overlap - 1.0).abs() < 1e-12);
            assert!((w - 1.0).abs() < 1e-12);
            let scores = decode_scores(&s, &tokens[..4]).unwrap();
            assert_eq!(top_k(&scores, 1)[0].0, j - 1);
        }
        assert!(predict_token_state_with(&seq, &circuit, 0).is_err());
        assert!(predict_token_state_with(&seq, &circuit, 5).is_err());
    }

    #[test]
    fn prediction_matches_explicit_sum() {
        for seed in 0..10 {
            let inst = random_instance(4, 4, 100 + seed);
            let circuit = inst.compile().unwrap();
            let xs: Vec<_> = inst.sequence.tokens().iter().map(|t| t.amplitudes().to_vec()).collect();
            for j in 1..=4 {
                let mut z = vec![c(0., 0.); 4];
                for x in &xs[..j] {
                    let w = vdot(&xs[j - 1], &circuit.w().matrix().mul_vec(x));
                    crate::linalg::axpy(&mut z, w, &circuit.v().matrix().mul_vec(x));
                }
                let nz = norm_sqr(&z);
                let (s, weight) = predict_token_state(&inst, j).unwrap();
                assert!((weight - nz).abs() < 1e-10 * nz.max(1.0));
                // Same ray: |⟨s|z/‖z‖⟩| = 1.
                assert!((vdot(s.amplitudes(), &z).norm() / nz.sqrt() - 1.0).abs() < 1e-10);
                if j == 1 {
                    let v1 = circuit.v().matrix().mul_vec(&xs[0]);
                    assert!((vdot(s.amplitudes(), &v1).norm() - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn top_k_breaks_ties_by_lowest_index() {
        let picks = top_k(&[0.2, 0.5, 0.5, 0.1], 3);
        assert_eq!(picks.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2, 0]);
    }

    #[test]
    fn real_ansatz_with_real_data_gives_real_overlaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let real = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<C<f64>>> {
            (0..count).map(|_| (0..4).map(|_| c(rng.random_range(-1.0..1.0), 0.0)).collect()).collect()
        };
        let seq = QsaSequence::new(encode_all(&real(5, &mut rng)).unwrap(), encode_all(&real(4, &mut rng)).unwrap()).unwrap();
        let circuit = QsaCircuit::compile(
            &AnsatzParams::random(2, 3, 1).into_real(),
            &AnsatzParams::random(2, 3, 2).into_real(),
            &PhaseLayerParams::zeros(2),
        )
        .unwrap();
        for b in branch_terms_with(&seq, &circuit).unwrap() {
            assert!(b.overlap.im.abs() < 1e-10);
        }
    }

    #[test]
    fn tally_counts_controlled_blocks() {
        let inst = random_instance(4, 4, 5);
        let (_, tally) = circuit_expectation_traced(&inst.sequence, &inst.compile().unwrap()).unwrap();
        // 4 preparation + 4 projection blocks on 4 qubits (dimension 16 each).
        assert_eq!(tally.controlled_weighted, 2 * 4 * 16);
    }

    #[test]
    fn instance_validation() {
        let tokens = vec![basis_token(0, 2), basis_token(1, 2), basis_token(0, 2)];
        let targets = vec![basis_token(0, 2)];
        assert!(QsaSequence::new(tokens.clone(), targets).is_err());
        let four: Vec<_> = (0..4).map(|k| basis_token(k % 2, 2)).collect();
        assert!(QsaSequence::new(four, vec![basis_token(0, 2); 3]).is_err());
        let seq = QsaSequence::new(tokens, vec![basis_token(0, 2); 2]).unwrap();
        assert!(QsaInstance::new(seq, AnsatzParams::zeros(1, 1), AnsatzParams::zeros(1, 1), PhaseLayerParams::zeros(2)).is_err());
    }
}
