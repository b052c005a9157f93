//! Vocabularies, embeddings and the two synthetic data sources: sparse Markov
//! chains over a word vocabulary and exact transverse-field Ising trajectories.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use num_traits::Zero;
use rand::seq::index::sample;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{config, QsaError, Result};
use crate::linalg::{norm_sqr, vdot, CMatrix};
use crate::scalar::{Real, C};

/// Default scale of the positional shifts.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Mixes a dataset seed with a record index.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn record_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64 + 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    size: usize,
}

impl Vocabulary {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return config(format!("vocabulary size must be at least 2, got {size}"));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// One-hot vector of word `index` (0-based).
    pub fn one_hot<R: Real>(&self, index: usize) -> Result<Vec<C<R>>> {
        if index >= self.size {
            return config(format!("word {index} outside vocabulary of {}", self.size));
        }
        let mut v = vec![Complex::zero(); self.size];
        v[index] = Complex::new(R::one(), R::zero());
        Ok(v)
    }
}

/// Sinusoidal positional shifts for positions `1..=count`: component `2k` is
/// `sin(i·ω_k)`, component `2k+1` is `cos(i·ω_k)` with `ω_k = 10000^{−2k/d}`.
pub fn sinusoidal_shifts(count: usize, d: usize) -> Vec<Vec<f64>> {
    (1..=count)
        .map(|i| {
            (0..d)
                .map(|m| {
                    let omega = 10000f64.powf(-((m / 2 * 2) as f64) / d as f64);
                    let arg = i as f64 * omega;
                    if m % 2 == 0 {
                        arg.sin()
                    } else {
                        arg.cos()
                    }
                })
                .collect()
        })
        .collect()
}

/// `x_i = E·w_i + γ·c_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMap<R> {
    matrix: CMatrix<R>,
    shifts: Vec<Vec<C<R>>>,
    gamma: R,
}

impl<R: Real> EmbeddingMap<R> {
    /// Embedding with sinusoidal shifts for `positions` tokens.
    pub fn new(matrix: CMatrix<R>, positions: usize, gamma: R) -> Result<Self> {
        let d = matrix.rows();
        if d == 0 || d >= matrix.cols() {
            return config(format!("embedding must map D={} words to d<D dimensions, got d={d}", matrix.cols()));
        }
        if !matrix.is_finite() {
            return Err(QsaError::Numeric("embedding contains non-finite entries".into()));
        }
        let shifts = sinusoidal_shifts(positions, d)
            .into_iter()
            .map(|c| c.into_iter().map(|v| Complex::new(R::lit(v), R::zero())).collect())
            .collect();
        Ok(Self { matrix, shifts, gamma })
    }

    /// Embedding whose matrix is the row-orthonormalization of `raw`, so that
    /// `E E† = I_d`.
    pub fn co_isometry(raw: &CMatrix<R>, positions: usize, gamma: R) -> Result<Self> {
        Self::new(orthonormalize_rows(raw)?, positions, gamma)
    }

    pub fn matrix(&self) -> &CMatrix<R> {
        &self.matrix
    }

    pub fn shifts(&self) -> &[Vec<C<R>>] {
        &self.shifts
    }

    pub fn gamma(&self) -> R {
        self.gamma
    }

    pub fn token_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn vocab(&self) -> usize {
        self.matrix.cols()
    }
}

/// Modified Gram–Schmidt over the rows of a `d×D` matrix.
pub fn orthonormalize_rows<R: Real>(raw: &CMatrix<R>) -> Result<CMatrix<R>> {
    let mut rows: Vec<Vec<C<R>>> = Vec::with_capacity(raw.rows());
    for r in 0..raw.rows() {
        let mut v = raw.row(r).to_vec();
        for _ in 0..2 {
            for q in &rows {
                let p = vdot(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x = *x - p * *y;
                }
            }
        }
        let n = norm_sqr(&v);
        if !(n.value() > 1e-20) {
            return Err(QsaError::DegenerateInput(format!("embedding row {r} is linearly dependent")));
        }
        let inv = R::one() / n.sqrt();
        rows.push(v.into_iter().map(|z| z * inv).collect());
    }
    let cols = raw.cols();
    Ok(CMatrix::from_fn(raw.rows(), cols, |r, c| rows[r][c]))
}

/// Embedded tokens `x_i` and shift-free targets `x̃_i = E·w_i` for every input.
pub fn embed_sequence<R: Real>(inputs: &[Vec<C<R>>], map: &EmbeddingMap<R>) -> Result<(Vec<Vec<C<R>>>, Vec<Vec<C<R>>>)> {
    if inputs.len() > map.shifts.len() {
        return config(format!("sequence of {} tokens exceeds {} positional shifts", inputs.len(), map.shifts.len()));
    }
    let mut tokens = Vec::with_capacity(inputs.len());
    let mut targets = Vec::with_capacity(inputs.len());
    for (i, w) in inputs.iter().enumerate() {
        if w.len() != map.vocab() {
            return config(format!("input of length {} does not match vocabulary {}", w.len(), map.vocab()));
        }
        let tilde = map.matrix.mul_vec(w);
        let x: Vec<C<R>> = tilde.iter().zip(&map.shifts[i]).map(|(a, c)| *a + *c * map.gamma).collect();
        if !(norm_sqr(&x).value() > 1e-24) || !(norm_sqr(&tilde).value() > 1e-24) {
            return Err(QsaError::DegenerateInput(format!("embedded token {} is zero", i + 1)));
        }
        tokens.push(x);
        targets.push(tilde);
    }
    Ok((tokens, targets))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Classical,
    Quantum,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Classical => "classical",
            DatasetKind::Quantum => "quantum",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Records {
    /// Word indices (0-based), `T+1` per record.
    Classical(Vec<Vec<usize>>),
    /// `T+1` unit-norm amplitude vectors of length `D` per record.
    Quantum(Vec<Vec<Vec<C<f64>>>>),
}

/// A set of equal-length sequences. `seq_len` is `T`, the number of
/// prediction steps; every record has `T+1` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub vocab: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub generator: Value,
    pub records: Records,
}

impl SequenceDataset {
    pub fn new(vocab: usize, seq_len: usize, seed: u64, generator: Value, records: Records) -> Result<Self> {
        let ds = Self { vocab, seq_len, seed, generator, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn kind(&self) -> DatasetKind {
        match self.records {
            Records::Classical(_) => DatasetKind::Classical,
            Records::Quantum(_) => DatasetKind::Quantum,
        }
    }

    pub fn len(&self) -> usize {
        match &self.records {
            Records::Classical(r) => r.len(),
            Records::Quantum(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inputs of record `index` as `D`-dimensional vectors.
    pub fn inputs<R: Real>(&self, index: usize) -> Result<Vec<Vec<C<R>>>> {
        match &self.records {
            Records::Classical(r) => {
                let vocab = Vocabulary::new(self.vocab)?;
                r[index].iter().map(|&w| vocab.one_hot(w)).collect()
            }
            Records::Quantum(r) => Ok(r[index]
                .iter()
                .map(|v| v.iter().map(|z| Complex::new(R::lit(z.re), R::lit(z.im))).collect())
                .collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return config("vocabulary size must be at least 2");
        }
        if self.seq_len < 1 {
            return config("sequences need at least one prediction step");
        }
        let len = self.seq_len + 1;
        match &self.records {
            Records::Classical(rs) => {
                for (i, r) in rs.iter().enumerate() {
                    if r.len() != len {
                        return config(format!("record {i} has {} words, expected {len}", r.len()));
                    }
                    if let Some(w) = r.iter().find(|&&w| w >= self.vocab) {
                        return config(format!("record {i} contains word {w} outside vocabulary {}", self.vocab));
                    }
                }
            }
            Records::Quantum(rs) => {
                for (i, r) in rs.iter().enumerate() {
                    if r.len() != len {
                        return config(format!("record {i} has {} steps, expected {len}", r.len()));
                    }
                    for v in r {
                        if v.len() != self.vocab {
                            return config(format!("record {i} has a step of dimension {}", v.len()));
                        }
                        if (norm_sqr(v) - 1.0).abs() > 1e-10 {
                            return config(format!("record {i} has a step that is not unit norm"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn header(&self) -> Value {
        json!({
            "kind": self.kind().as_str(),
            "D": self.vocab,
            "T": self.seq_len,
            "seed": self.seed,
            "generator": self.generator,
        })
    }

    /// Writes the header line and one line per record.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = |v: &Value| -> Result<()> {
            serde_json::to_writer(&mut out, v).map_err(|e| QsaError::Parse(e.to_string()))?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&self.header())?;
        match &self.records {
            Records::Classical(rs) => {
                for (i, r) in rs.iter().enumerate() {
                    line(&json!({"id": i, "words": r}))?;
                }
            }
            Records::Quantum(rs) => {
                for (i, r) in rs.iter().enumerate() {
                    let steps: Vec<Vec<[f64; 2]>> = r.iter().map(|v| v.iter().map(|z| [z.re, z.im]).collect()).collect();
                    line(&json!({"id": i, "steps": steps}))?;
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("JSON output is UTF-8")
    }

    pub fn read_jsonl<B: BufRead>(input: B) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            kind: DatasetKind,
            #[serde(rename = "D")]
            vocab: usize,
            #[serde(rename = "T")]
            seq_len: usize,
            seed: u64,
            #[serde(default)]
            generator: Value,
        }
        #[derive(Deserialize)]
        struct ClassicalRecord {
            id: usize,
            words: Vec<usize>,
        }
        #[derive(Deserialize)]
        struct QuantumRecord {
            id: usize,
            steps: Vec<Vec<[f64; 2]>>,
        }
        let parse_err = |line: usize, e: serde_json::Error| QsaError::Parse(format!("line {line}: {e}"));

        let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let (n, first) = lines.next().ok_or_else(|| QsaError::Parse("empty dataset file".into()))?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| parse_err(n, e))?;
        let records = match header.kind {
            DatasetKind::Classical => {
                let mut rs = Vec::new();
                for (n, l) in lines {
                    let rec: ClassicalRecord = serde_json::from_str(&l?).map_err(|e| parse_err(n, e))?;
                    if rec.id != rs.len() {
                        return Err(QsaError::Parse(format!("line {n}: record id {} out of order", rec.id)));
                    }
                    rs.push(rec.words);
                }
                Records::Classical(rs)
            }
            DatasetKind::Quantum => {
                let mut rs = Vec::new();
                for (n, l) in lines {
                    let rec: QuantumRecord = serde_json::from_str(&l?).map_err(|e| parse_err(n, e))?;
                    if rec.id != rs.len() {
                        return Err(QsaError::Parse(format!("line {n}: record id {} out of order", rec.id)));
                    }
                    rs.push(rec.steps.into_iter().map(|v| v.into_iter().map(|[re, im]| Complex::new(re, im)).collect()).collect());
                }
                Records::Quantum(rs)
            }
        };
        Self::new(header.vocab, header.seq_len, header.seed, header.generator, records)
    }
}

/// Row-stochastic transition matrix with `order` nonzero entries per row.
pub fn sparse_transition_matrix(vocab: usize, order: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if order == 0 || order > vocab {
        return config(format!("order must lie in 1..={vocab}, got {order}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..vocab)
        .map(|_| {
            let mut row = vec![0.0; vocab];
            let cols = sample(&mut rng, vocab, order);
            let weights: Vec<f64> = (0..order).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for (c, w) in cols.iter().zip(weights) {
                row[c] = w / total;
            }
            row
        })
        .collect())
}

fn sample_categorical(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Markov-chain word sequences of length `T+1` with a uniformly drawn first word.
pub fn generate_classical_dataset(vocab: usize, seq_len: usize, count: usize, seed: u64, order: usize) -> Result<SequenceDataset> {
    generate_classical_dataset_with(vocab, seq_len, count, seed, order, seed)
}

/// Like [`generate_classical_dataset`], with the transition matrix drawn from
/// `process_seed` so that several datasets can share one chain.
pub fn generate_classical_dataset_with(
    vocab: usize,
    seq_len: usize,
    count: usize,
    seed: u64,
    order: usize,
    process_seed: u64,
) -> Result<SequenceDataset> {
    Vocabulary::new(vocab)?;
    if count == 0 {
        return config("count must be at least 1");
    }
    let transition = sparse_transition_matrix(vocab, order, process_seed)?;
    let records = (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(seed, i));
            let mut w = rng.random_range(0..vocab);
            let mut seq = vec![w];
            for _ in 0..seq_len {
                w = sample_categorical(&transition[w], &mut rng);
                seq.push(w);
            }
            seq
        })
        .collect();
    let generator = json!({
        "name": "sparse-markov",
        "order": order,
        "process_seed": process_seed,
        "transition": transition,
    });
    SequenceDataset::new(vocab, seq_len, seed, generator, Records::Classical(records))
}

/// `H = Σ_i X_i + Σ_{i<j} J_ij Z_i Z_j` on `q` qubits, with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct IsingModel {
    q: usize,
    couplings: DMatrix<f64>,
    hamiltonian: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

pub const MAX_ISING_QUBITS: usize = 10;

impl IsingModel {
    pub fn from_couplings(couplings: DMatrix<f64>) -> Result<Self> {
        let q = couplings.nrows();
        if q == 0 || q > MAX_ISING_QUBITS || !couplings.is_square() {
            return config(format!("Ising model needs 1..={MAX_ISING_QUBITS} qubits and a square coupling matrix"));
        }
        for i in 0..q {
            for j in 0..q {
                let v = couplings[(i, j)];
                if (i == j && v != 0.0) || v != couplings[(j, i)] || !(0.0..=1.0).contains(&v) {
                    return config("couplings must be symmetric, zero on the diagonal and in [0, 1]");
                }
            }
        }
        let dim = 1usize << q;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for s in 0..dim {
            for i in 0..q {
                h[(s ^ (1 << i), s)] += 1.0;
            }
            let mut diag = 0.0;
            for i in 0..q {
                for j in i + 1..q {
                    let zi = if s >> i & 1 == 0 { 1.0 } else { -1.0 };
                    let zj = if s >> j & 1 == 0 { 1.0 } else { -1.0 };
                    diag += couplings[(i, j)] * zi * zj;
                }
            }
            h[(s, s)] += diag;
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(Self {
            q,
            couplings,
            hamiltonian: h,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.q
    }

    pub fn dimension(&self) -> usize {
        1 << self.q
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.couplings
    }

    pub fn hamiltonian(&self) -> &DMatrix<f64> {
        &self.hamiltonian
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `e^{−iHt}|ψ⟩` through the eigendecomposition.
    pub fn evolve(&self, psi: &[C<f64>], time: f64) -> Vec<C<f64>> {
        let dim = self.dimension();
        let u = &self.eigenvectors;
        let coeffs: Vec<C<f64>> = (0..dim)
            .map(|k| {
                let proj = (0..dim).fold(Complex::zero(), |acc: C<f64>, s| acc + psi[s] * u[(s, k)]);
                proj * Complex::from_polar(1.0, -self.eigenvalues[k] * time)
            })
            .collect();
        (0..dim).map(|s| (0..dim).fold(Complex::zero(), |acc: C<f64>, k| acc + coeffs[k] * u[(s, k)])).collect()
    }

    /// `⟨ψ|H|ψ⟩`.
    pub fn energy(&self, psi: &[C<f64>]) -> f64 {
        let dim = self.dimension();
        let mut e = Complex::zero();
        for r in 0..dim {
            let mut hpsi = Complex::zero();
            for c in 0..dim {
                hpsi += psi[c] * self.hamiltonian[(r, c)];
            }
            e += psi[r].conj() * hpsi;
        }
        e.re
    }
}

pub fn build_ising(q: usize, seed: u64) -> Result<IsingModel> {
    if q == 0 || q > MAX_ISING_QUBITS {
        return config(format!("Ising qubit count must lie in 1..={MAX_ISING_QUBITS}, got {q}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = DMatrix::<f64>::zeros(q, q);
    for a in 0..q {
        for b in a + 1..q {
            let v: f64 = rng.random();
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    IsingModel::from_couplings(j)
}

/// Haar-random pure state from normalized complex Gaussians.
pub fn haar_random_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C<f64>> {
    let v: Vec<C<f64>> = (0..dim)
        .map(|_| Complex::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)))
        .collect();
    let n = norm_sqr(&v).sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// `|ψ_j⟩ = e^{−iH(j−1)}|ψ_1⟩` for `j = 1..T+1` from Haar-random `|ψ_1⟩`.
pub fn generate_quantum_dataset(model: &IsingModel, seq_len: usize, count: usize, seed: u64) -> Result<SequenceDataset> {
    if count == 0 {
        return config("count must be at least 1");
    }
    let records = (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(record_seed(seed, i));
            let psi1 = haar_random_state(model.dimension(), &mut rng);
            (0..=seq_len).map(|j| model.evolve(&psi1, j as f64)).collect()
        })
        .collect();
    let couplings: Vec<Vec<f64>> = model.couplings.row_iter().map(|r| r.iter().copied().collect()).collect();
    let generator = json!({"name": "tfim", "qubits": model.q, "couplings": couplings, "evolution": "exact"});
    SequenceDataset::new(model.dimension(), seq_len, seed, generator, Records::Quantum(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;

    #[test]
    fn identity_padded_embedding_truncates() {
        let e = CMatrix::<f64>::from_fn(2, 4, |r, c| if r == c { c64(1.0) } else { c64(0.0) });
        let map = EmbeddingMap::new(e, 3, 0.0).unwrap();
        let inputs = vec![vec![c(1., 0.), c(2., 0.), c(3., 0.), c(4., 0.)]; 3];
        let (x, xt) = embed_sequence(&inputs, &map).unwrap();
        assert_eq!(x[0], vec![c(1., 0.), c(2., 0.)]);
        assert_eq!(xt, x);
    }

    fn c64(v: f64) -> C<f64> {
        c(v, 0.0)
    }

    #[test]
    fn one_hot_selects_column() {
        let raw = CMatrix::<f64>::from_fn(4, 10, |r, c| c64(((r * 10 + c) as f64 * 0.37).sin() + ((r * c) as f64).powi(2).cos()));
        let map = EmbeddingMap::co_isometry(&raw, 5, DEFAULT_GAMMA).unwrap();
        let vocab = Vocabulary::new(10).unwrap();
        let inputs: Vec<_> = [3, 7, 0].iter().map(|&w| vocab.one_hot(w).unwrap()).collect();
        let (x, xt) = embed_sequence(&inputs, &map).unwrap();
        assert_eq!(xt[1], map.matrix().column(7));
        let shift = &map.shifts()[1];
        for k in 0..4 {
            assert!((x[1][k] - xt[1][k] - shift[k] * 0.1).norm() < 1e-15);
        }
        let eet = map.matrix().matmul(&map.matrix().adjoint());
        assert!(eet.max_abs_diff(&CMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn embedding_rejects_zero_tokens_and_bad_shapes() {
        let map = EmbeddingMap::new(CMatrix::<f64>::zeros(2, 4), 3, 0.0).unwrap();
        let inputs = vec![vec![c64(1.0); 4]];
        assert!(matches!(embed_sequence(&inputs, &map), Err(QsaError::DegenerateInput(_))));
        assert!(EmbeddingMap::new(CMatrix::<f64>::zeros(4, 4), 3, 0.0).is_err());
        assert!(orthonormalize_rows(&CMatrix::<f64>::zeros(2, 4)).is_err());
    }

    #[test]
    fn shifts_are_distinct() {
        for d in [2, 4, 8] {
            let s = sinusoidal_shifts(64, d);
            for a in 0..s.len() {
                for b in a + 1..s.len() {
                    let diff: f64 = s[a].iter().zip(&s[b]).map(|(x, y)| (x - y).powi(2)).sum();
                    assert!(diff > 1e-6, "positions {a} and {b} collide for d={d}");
                }
            }
        }
    }

    #[test]
    fn target_path_is_linear() {
        let raw = CMatrix::<f64>::from_fn(4, 10, |r, k| c(((r + 2 * k) as f64).cos(), ((r * k) as f64).sin()));
        let map = EmbeddingMap::co_isometry(&raw, 3, DEFAULT_GAMMA).unwrap();
        let w1: Vec<C<f64>> = (0..10).map(|k| c((k as f64).sin(), 0.3)).collect();
        let w2: Vec<C<f64>> = (0..10).map(|k| c(0.1, (k as f64).cos())).collect();
        let (a, b): (C<f64>, C<f64>) = (c(0.7, -0.2), c(-1.3, 0.5));
        let mix: Vec<C<f64>> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let (_, t): (_, Vec<Vec<C<f64>>>) = embed_sequence(&[w1, w2, mix], &map).unwrap();
        for k in 0..4 {
            assert!((t[2][k] - (a * t[0][k] + b * t[1][k])).norm() < 1e-13);
        }
    }

    #[test]
    fn classical_generation_is_deterministic() {
        let a = generate_classical_dataset(10, 4, 50, 7, 2).unwrap();
        let b = generate_classical_dataset(10, 4, 50, 7, 2).unwrap();
        assert_eq!(a.to_jsonl_string(), b.to_jsonl_string());
        let c = generate_classical_dataset(10, 4, 50, 8, 2).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn order_one_chain_is_eventually_periodic() {
        let ds = generate_classical_dataset(10, 30, 20, 3, 1).unwrap();
        let Records::Classical(rs) = &ds.records else { panic!() };
        for r in rs {
            // Deterministic successor: each word is always followed by the same word.
            for w in r.windows(2) {
                let next: Vec<_> = r.windows(2).filter(|v| v[0] == w[0]).map(|v| v[1]).collect();
                assert!(next.iter().all(|&n| n == w[1]));
            }
            let tail = &r[10..];
            let period = (1..=10).find(|&p| tail.iter().zip(&tail[p..]).all(|(a, b)| a == b));
            assert!(period.is_some());
        }
    }

    #[test]
    fn ising_small_cases() {
        let x = build_ising(1, 0).unwrap();
        assert_eq!(x.hamiltonian(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let free = IsingModel::from_couplings(DMatrix::zeros(2, 2)).unwrap();
        let mut eig = free.eigenvalues().to_vec();
        eig.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = build_ising(2, 9).unwrap();
        let h = m.hamiltonian();
        assert!((h - h.transpose()).amax() < 1e-12);
        assert!(h.trace().abs() < 1e-12);
        assert!(build_ising(11, 0).is_err());
    }

    #[test]
    fn single_qubit_closed_form() {
        let m = build_ising(1, 0).unwrap();
        let psi = [c(1., 0.), c(0., 0.)];
        for j in 1..=5 {
            let t = (j - 1) as f64;
            let out = m.evolve(&psi, t);
            assert!((out[0] - c(t.cos(), 0.)).norm() < 1e-12);
            assert!((out[1] - c(0., -t.sin())).norm() < 1e-12);
        }
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let ds = generate_quantum_dataset(&build_ising(2, 1).unwrap(), 4, 5, 11).unwrap();
        let text = ds.to_jsonl_string();
        let back = SequenceDataset::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_jsonl_string(), text);
        let cl = generate_classical_dataset(10, 4, 5, 2, 2).unwrap();
        assert_eq!(SequenceDataset::read_jsonl(cl.to_jsonl_string().as_bytes()).unwrap(), cl);
        let header = text.lines().next().unwrap();
        let v: Value = serde_json::from_str(header).unwrap();
        assert_eq!(v["kind"], "quantum");
        assert_eq!(v["D"], 4);
        assert_eq!(v["T"], 4);
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        let text = generate_classical_dataset(10, 4, 3, 2, 2).unwrap().to_jsonl_string();
        let truncated = &text[..text.len() - 7];
        assert!(matches!(SequenceDataset::read_jsonl(truncated.as_bytes()), Err(QsaError::Parse(_))));
        assert!(SequenceDataset::read_jsonl("".as_bytes()).is_err());
        let bad_word = text.replacen("\"words\":[", "\"words\":[99,", 1);
        assert!(matches!(SequenceDataset::read_jsonl(bad_word.as_bytes()), Err(QsaError::Config(_))));
    }
}
