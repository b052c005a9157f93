//! Classical self-attention baselines.
//!
//! S-CSA is one softmax attention layer followed by a residual connection, a
//! feed-forward block and an anti-embedding with softmax over the vocabulary.
//! L-CSA drops the softmax and the nonlinearities: the prediction
//! `z̃_j = Σ_{i≤j} (x_j† W x_i) V x_i` is compared to the target directly in
//! token space, which is exactly what the quantum circuit computes.

use num_complex::Complex;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config, QsaError, Result};
use crate::linalg::{axpy, norm_sqr, vdot, CMatrix};
use crate::scalar::{Real, C};

/// Weights of the softmax baseline. All tensors are stored as matrices;
/// biases are single-column matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ScsaParams<R> {
    pub w_q: CMatrix<R>,
    pub w_k: CMatrix<R>,
    pub w_v: CMatrix<R>,
    pub ffn_w1: CMatrix<R>,
    pub ffn_b1: CMatrix<R>,
    pub ffn_w2: CMatrix<R>,
    pub ffn_b2: CMatrix<R>,
    pub anti_embed: CMatrix<R>,
}

pub const SCSA_TENSORS: [&str; 8] = ["w_q", "w_k", "w_v", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2", "anti_embed"];

fn gaussian_matrix<R: Real>(rows: usize, cols: usize, std: f64, complex: bool, rng: &mut ChaCha8Rng) -> CMatrix<R> {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = if complex { StandardNormal.sample(rng) } else { 0.0 };
        Complex::new(R::lit(re * std), R::lit(im * std))
    })
}

impl<R: Real> ScsaParams<R> {
    /// Random initialization with `1/√fan_in` scaling, `d_K = d`, hidden width `4d`.
    pub fn random(d: usize, vocab: usize, complex: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 4 * d;
        let s_d = 1.0 / (d as f64).sqrt();
        let s_h = 1.0 / (h as f64).sqrt();
        Self {
            w_q: gaussian_matrix(d, d, s_d, complex, &mut rng),
            w_k: gaussian_matrix(d, d, s_d, complex, &mut rng),
            w_v: gaussian_matrix(d, d, s_d, complex, &mut rng),
            ffn_w1: gaussian_matrix(h, d, s_d, complex, &mut rng),
            ffn_b1: CMatrix::zeros(h, 1),
            ffn_w2: gaussian_matrix(d, h, s_h, complex, &mut rng),
            ffn_b2: CMatrix::zeros(d, 1),
            anti_embed: gaussian_matrix(vocab, d, s_d, complex, &mut rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.w_v.rows();
        let dk = self.w_q.rows();
        let h = self.ffn_w1.rows();
        let ok = dk >= 1
            && h >= 1
            && self.w_v.is_square()
            && self.w_q.cols() == d
            && (self.w_k.rows(), self.w_k.cols()) == (dk, d)
            && self.ffn_w1.cols() == d
            && (self.ffn_b1.rows(), self.ffn_b1.cols()) == (h, 1)
            && (self.ffn_w2.rows(), self.ffn_w2.cols()) == (d, h)
            && (self.ffn_b2.rows(), self.ffn_b2.cols()) == (d, 1)
            && self.anti_embed.cols() == d
            && self.anti_embed.rows() >= 1;
        if !ok {
            return config("inconsistent S-CSA tensor shapes");
        }
        Ok(())
    }

    pub fn token_dim(&self) -> usize {
        self.w_v.rows()
    }

    pub fn key_dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn vocab(&self) -> usize {
        self.anti_embed.rows()
    }

    pub fn tensors(&self) -> [&CMatrix<R>; 8] {
        [&self.w_q, &self.w_k, &self.w_v, &self.ffn_w1, &self.ffn_b1, &self.ffn_w2, &self.ffn_b2, &self.anti_embed]
    }

    pub fn tensors_mut(&mut self) -> [&mut CMatrix<R>; 8] {
        [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.anti_embed,
        ]
    }

    pub fn map<S: Real>(&self, f: impl Fn(C<R>) -> C<S> + Copy) -> ScsaParams<S> {
        ScsaParams {
            w_q: self.w_q.map(f),
            w_k: self.w_k.map(f),
            w_v: self.w_v.map(f),
            ffn_w1: self.ffn_w1.map(f),
            ffn_b1: self.ffn_b1.map(f),
            ffn_w2: self.ffn_w2.map(f),
            ffn_b2: self.ffn_b2.map(f),
            anti_embed: self.anti_embed.map(f),
        }
    }
}

/// Softmax weights of step `j` (1-based) over `i = 1..j`.
pub fn attention_weights<R: Real>(tokens: &[Vec<C<R>>], params: &ScsaParams<R>, j: usize) -> Result<Vec<R>> {
    if j == 0 || j > tokens.len() {
        return config(format!("attention step {j} outside 1..={}", tokens.len()));
    }
    let q = params.w_q.mul_vec(&tokens[j - 1]);
    let scale = R::one() / R::lit(params.key_dim() as f64).sqrt();
    let scores: Vec<R> = tokens[..j].iter().map(|x| vdot(&q, &params.w_k.mul_vec(x)).re * scale).collect();
    let max = scores.iter().copied().fold(R::neg_infinity(), R::max);
    let exps: Vec<R> = scores.iter().map(|s| (*s - max).exp()).collect();
    let total: R = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `z_j = Σ_{i≤j} softmax_i(Re(q_j†k_i)/√d_K) v_i`.
pub fn softmax_attention_layer<R: Real>(tokens: &[Vec<C<R>>], params: &ScsaParams<R>, j: usize) -> Result<Vec<C<R>>> {
    let weights = attention_weights(tokens, params, j)?;
    let mut z = vec![Complex::zero(); params.token_dim()];
    for (x, w) in tokens.iter().zip(weights) {
        axpy(&mut z, Complex::new(w, R::zero()), &params.w_v.mul_vec(x));
    }
    Ok(z)
}

fn relu<R: Real>(z: C<R>) -> C<R> {
    Complex::new(z.re.max(R::zero()), z.im.max(R::zero()))
}

fn add_column<R: Real>(v: &mut [C<R>], bias: &CMatrix<R>) {
    for (k, x) in v.iter_mut().enumerate() {
        *x = *x + bias[(k, 0)];
    }
}

/// Vocabulary distribution predicted after step `j`.
pub fn scsa_step_distribution<R: Real>(tokens: &[Vec<C<R>>], params: &ScsaParams<R>, j: usize) -> Result<Vec<R>> {
    let mut z = softmax_attention_layer(tokens, params, j)?;
    axpy(&mut z, Complex::new(R::one(), R::zero()), &tokens[j - 1]);
    let mut hidden = params.ffn_w1.mul_vec(&z);
    add_column(&mut hidden, &params.ffn_b1);
    let hidden: Vec<C<R>> = hidden.into_iter().map(relu).collect();
    let mut out = params.ffn_w2.mul_vec(&hidden);
    add_column(&mut out, &params.ffn_b2);
    let logits: Vec<R> = params.anti_embed.mul_vec(&out).into_iter().map(|z| z.re).collect();
    let max = logits.iter().copied().fold(R::neg_infinity(), R::max);
    let exps: Vec<R> = logits.iter().map(|l| (*l - max).exp()).collect();
    let total: R = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Distributions for all steps `j = 1..T` of a sequence of `T+1` tokens.
pub fn scsa_distributions<R: Real>(tokens: &[Vec<C<R>>], params: &ScsaParams<R>) -> Result<Vec<Vec<R>>> {
    params.validate()?;
    if tokens.len() < 2 {
        return config("a sequence needs at least two tokens");
    }
    if tokens.iter().any(|x| x.len() != params.token_dim()) {
        return config("token dimension does not match S-CSA weights");
    }
    (1..tokens.len()).map(|j| scsa_step_distribution(tokens, params, j)).collect()
}

/// Probability of the true next word under each predicted distribution.
pub fn scsa_word_probabilities<R: Real>(distributions: &[Vec<R>], next_words: &[usize]) -> Result<Vec<R>> {
    distributions
        .iter()
        .zip(next_words)
        .map(|(dist, &w)| {
            dist.get(w).copied().ok_or_else(|| QsaError::Config(format!("word {w} outside vocabulary of {}", dist.len())))
        })
        .collect()
}

/// Fidelity `(Σ_ℓ √p_ℓ |w_ℓ|)²` between a predicted distribution and a target
/// amplitude vector. For one-hot targets this is the probability of that word.
pub fn scsa_amplitude_fidelity<R: Real>(distribution: &[R], target: &[C<R>]) -> R {
    let s: R = distribution.iter().zip(target).map(|(p, w)| p.max(R::zero()).sqrt() * w.norm()).sum();
    s * s
}

/// Bilinear-attention weights of the linearized baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct LcsaParams<R> {
    pub v_mat: CMatrix<R>,
    pub w_mat: CMatrix<R>,
}

impl<R: Real> LcsaParams<R> {
    pub fn new(v_mat: CMatrix<R>, w_mat: CMatrix<R>) -> Result<Self> {
        let p = Self { v_mat, w_mat };
        p.validate()?;
        Ok(p)
    }

    pub fn identity(d: usize) -> Self {
        Self { v_mat: CMatrix::identity(d), w_mat: CMatrix::identity(d) }
    }

    /// Identity plus Gaussian noise of the given scale.
    pub fn random(d: usize, noise: f64, complex: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = gaussian_matrix::<R>(d, d, noise, complex, &mut rng);
        let mut w = gaussian_matrix::<R>(d, d, noise, complex, &mut rng);
        for k in 0..d {
            v[(k, k)] = v[(k, k)] + R::one();
            w[(k, k)] = w[(k, k)] + R::one();
        }
        Self { v_mat: v, w_mat: w }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.v_mat.rows();
        if d == 0 || !self.v_mat.is_square() || (self.w_mat.rows(), self.w_mat.cols()) != (d, d) {
            return config("L-CSA matrices must both be d×d");
        }
        Ok(())
    }

    pub fn token_dim(&self) -> usize {
        self.v_mat.rows()
    }

    pub fn map<S: Real>(&self, f: impl Fn(C<R>) -> C<S> + Copy) -> LcsaParams<S> {
        LcsaParams { v_mat: self.v_mat.map(f), w_mat: self.w_mat.map(f) }
    }
}

/// `z̃_j = Σ_{i≤j} (x_j† W x_i) V x_i`, unnormalized.
pub fn linear_attention_layer<R: Real>(tokens: &[Vec<C<R>>], params: &LcsaParams<R>, j: usize) -> Result<Vec<C<R>>> {
    if j == 0 || j > tokens.len() {
        return config(format!("attention step {j} outside 1..={}", tokens.len()));
    }
    let mut z = vec![Complex::zero(); params.token_dim()];
    for x in &tokens[..j] {
        let weight = vdot(&tokens[j - 1], &params.w_mat.mul_vec(x));
        axpy(&mut z, weight, &params.v_mat.mul_vec(x));
    }
    Ok(z)
}

/// `|⟨x̃_{j+1}/‖x̃_{j+1}‖ | z̃_j/‖z̃_j‖⟩|²`.
pub fn lcsa_step_probability<R: Real>(
    tokens: &[Vec<C<R>>],
    shifted_targets: &[Vec<C<R>>],
    params: &LcsaParams<R>,
    j: usize,
) -> Result<R> {
    let target = shifted_targets
        .get(j.wrapping_sub(1))
        .ok_or_else(|| QsaError::Config(format!("no target for step {j}")))?;
    let z = linear_attention_layer(tokens, params, j)?;
    let nz = norm_sqr(&z);
    let nt = norm_sqr(target);
    if !(nz.value() > 1e-24) {
        return Err(QsaError::DegeneratePrediction(format!("linear attention output of step {j} vanishes")));
    }
    if !(nt.value() > 1e-24) {
        return Err(QsaError::DegenerateInput(format!("target of step {j} vanishes")));
    }
    Ok((vdot(target, &z).norm_sqr() / (nz * nt)).min(R::one()))
}
