//! Gate-count cost models and log-log scaling fits.
//!
//! Counts are in units of elementary two-level operations with all constant
//! factors set to one. Amplitude encoding a `2^k`-dimensional vector costs
//! `2^k`, so a controlled dense block on `k` qubits applied once per branch
//! costs `T·2^k`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzParams, PhaseLayerParams};
use crate::encodings::encode_all;
use crate::error::{config, Result};
use crate::qsa::{circuit_expectation_traced, QsaCircuit, QsaSequence};
use crate::scalar::C;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "qsa-amplitude")]
    QsaAmplitude,
    #[serde(rename = "qsa-basis")]
    QsaBasis,
    #[serde(rename = "csa")]
    Csa,
}

pub const VARIANTS: [Variant; 3] = [Variant::QsaAmplitude, Variant::QsaBasis, Variant::Csa];

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::QsaAmplitude => "qsa-amplitude",
            Variant::QsaBasis => "qsa-basis",
            Variant::Csa => "csa",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = crate::QsaError;
    fn from_str(s: &str) -> Result<Self> {
        VARIANTS.into_iter().find(|v| v.as_str() == s).ok_or_else(|| crate::QsaError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    T,
    #[serde(rename = "d")]
    D,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::T => "T",
            Axis::D => "d",
        }
    }
}

/// Problem sizes: sequence length `T`, token dimension `d`, vocabulary `D`,
/// ansatz layers `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub seq_len: u64,
    pub token_dim: u64,
    pub vocab: u64,
    pub layers: u64,
}

impl Sizes {
    pub fn new(seq_len: u64, token_dim: u64, vocab: u64, layers: u64) -> Self {
        Self { seq_len, token_dim, vocab, layers }
    }

    fn with_axis(self, axis: Axis, value: u64) -> Self {
        match axis {
            Axis::T => Self { seq_len: value, ..self },
            Axis::D => Self { token_dim: value, ..self },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCount {
    pub variant: Variant,
    pub sizes: Sizes,
    pub terms: Vec<(String, u64)>,
    pub total: u64,
}

impl GateCount {
    pub fn term(&self, name: &str) -> Option<u64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }
}

fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - u64::from((x - 1).leading_zeros())
    }
}

fn mul(factors: &[u64]) -> Result<u64> {
    factors.iter().try_fold(1u64, |acc, f| acc.checked_mul(*f)).map_or_else(|| config("gate count overflows u64"), Ok)
}

pub fn count_gates(variant: Variant, sizes: Sizes) -> Result<GateCount> {
    let Sizes { seq_len: t, token_dim: d, vocab, layers } = sizes;
    if t == 0 || d == 0 || vocab == 0 || layers == 0 {
        return config("all sizes must be at least 1");
    }
    let terms: Vec<(&str, u64)> = match variant {
        Variant::QsaAmplitude => {
            if !t.is_power_of_two() || !d.is_power_of_two() {
                return config(format!("qsa-amplitude needs power-of-two T and d, got T={t}, d={d}"));
            }
            vec![
                ("state_prep", mul(&[t, d, d])?),
                ("controlled_ops", mul(&[2, t, d, d])?),
                ("variational", mul(&[2, layers, ceil_log2(d)])?),
                ("embedding", mul(&[t, d, vocab])?),
            ]
        }
        Variant::QsaBasis => {
            let q = ceil_log2(vocab);
            vec![("state_prep", mul(&[t, q])?), ("controlled_ops", mul(&[t, t, q])?)]
        }
        Variant::Csa => vec![
            ("attention", mul(&[t, t, d])?),
            ("qkv", mul(&[t, d, d])?),
            ("anti_embedding", mul(&[t, d, vocab])?),
        ],
    };
    let total = terms.iter().try_fold(0u64, |acc, (_, c)| acc.checked_add(*c));
    let Some(total) = total else { return config("gate count overflows u64") };
    Ok(GateCount { variant, sizes, terms: terms.into_iter().map(|(n, c)| (n.to_string(), c)).collect(), total })
}

/// Least-squares slope of `log(total)` against `log(axis value)`.
pub fn fit_scaling(variant: Variant, axis: Axis, grid: &[u64], fixed: Sizes) -> Result<f64> {
    if grid.len() < 4 {
        return config(format!("a scaling fit needs at least 4 grid points, got {}", grid.len()));
    }
    if grid[0] == 0 {
        return config("grid values must be positive");
    }
    let ratio = grid[1] as f64 / grid[0] as f64;
    let geometric = ratio > 1.0 && grid.windows(2).all(|w| ((w[1] as f64 / w[0] as f64) - ratio).abs() < 1e-9 * ratio);
    if !geometric {
        return config("grid must be geometrically spaced and increasing");
    }
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for &g in grid {
        let count = count_gates(variant, fixed.with_axis(axis, g))?;
        xs.push((g as f64).ln());
        ys.push((count.total as f64).ln());
    }
    Ok(least_squares_slope(&xs, &ys))
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `[first, first·ratio, …]` with `count` entries.
pub fn geometric_grid(first: u64, ratio: u64, count: usize) -> Vec<u64> {
    std::iter::successors(Some(first), |x| x.checked_mul(ratio)).take(count).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub seq_len: u64,
    pub token_dim: u64,
    /// Totals per variant in [`VARIANTS`] order; `None` where sizes are invalid.
    pub totals: Vec<Option<u64>>,
    /// All variants attaining the minimum, in [`VARIANTS`] order.
    pub winners: Vec<Variant>,
}

pub fn crossover_report(seq_lens: &[u64], token_dims: &[u64], vocab: u64, layers: u64) -> Result<Vec<CrossoverRow>> {
    let mut rows = Vec::new();
    for &t in seq_lens {
        for &d in token_dims {
            let sizes = Sizes::new(t, d, vocab, layers);
            let totals: Vec<Option<u64>> = VARIANTS.iter().map(|v| count_gates(*v, sizes).ok().map(|c| c.total)).collect();
            let Some(best) = totals.iter().flatten().min().copied() else {
                return config(format!("no variant accepts T={t}, d={d}"));
            };
            let winners = VARIANTS.iter().zip(&totals).filter(|(_, c)| **c == Some(best)).map(|(v, _)| *v).collect();
            rows.push(CrossoverRow { seq_len: t, token_dim: d, totals, winners });
        }
    }
    Ok(rows)
}

pub const TERMS_CSV_HEADER: &str = "variant,T,d,D,L,term,count";
pub const CROSSOVER_CSV_HEADER: &str = "T,d,D,L,qsa_amplitude,qsa_basis,csa,winner";
pub const SLOPES_CSV_HEADER: &str = "variant,axis,grid,T,d,D,L,slope,expected,tolerance,pass";

/// One row per term plus a `total` row per count.
pub fn terms_csv(counts: &[GateCount]) -> String {
    let mut out = format!("{TERMS_CSV_HEADER}\n");
    for c in counts {
        let s = c.sizes;
        let prefix = format!("{},{},{},{},{}", c.variant.as_str(), s.seq_len, s.token_dim, s.vocab, s.layers);
        for (name, count) in c.terms.iter().map(|(n, v)| (n.as_str(), *v)).chain(std::iter::once(("total", c.total))) {
            let _ = writeln!(out, "{prefix},{name},{count}");
        }
    }
    out
}

pub fn crossover_csv(rows: &[CrossoverRow], vocab: u64, layers: u64) -> String {
    let mut out = format!("{CROSSOVER_CSV_HEADER}\n");
    for r in rows {
        let cell = |c: &Option<u64>| c.map_or_else(String::new, |v| v.to_string());
        let winners: Vec<&str> = r.winners.iter().map(|v| v.as_str()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.seq_len,
            r.token_dim,
            vocab,
            layers,
            cell(&r.totals[0]),
            cell(&r.totals[1]),
            cell(&r.totals[2]),
            winners.join("|")
        );
    }
    out
}

/// A slope check: fitted exponent against the claimed dominant exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub variant: Variant,
    pub axis: Axis,
    pub grid: Vec<u64>,
    pub fixed: Sizes,
    pub slope: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl SlopeCheck {
    pub fn run(variant: Variant, axis: Axis, grid: Vec<u64>, fixed: Sizes, expected: f64) -> Result<Self> {
        let slope = fit_scaling(variant, axis, &grid, fixed)?;
        Ok(Self { variant, axis, grid, fixed, slope, expected, tolerance: 0.15 })
    }

    pub fn passes(&self) -> bool {
        (self.slope - self.expected).abs() <= self.tolerance
    }
}

/// The default audit: dominant exponents along large geometric grids.
pub fn default_slope_checks() -> Result<Vec<SlopeCheck>> {
    Ok(vec![
        SlopeCheck::run(Variant::QsaAmplitude, Axis::T, geometric_grid(1024, 2, 5), Sizes::new(0, 4, 16, 5), 1.0)?,
        SlopeCheck::run(Variant::QsaAmplitude, Axis::D, geometric_grid(256, 2, 5), Sizes::new(1024, 0, 16, 5), 2.0)?,
        SlopeCheck::run(Variant::Csa, Axis::T, geometric_grid(1024, 2, 5), Sizes::new(0, 4, 16, 5), 2.0)?,
        SlopeCheck::run(Variant::Csa, Axis::D, geometric_grid(4, 2, 5), Sizes::new(1 << 20, 0, 16, 5), 1.0)?,
        SlopeCheck::run(Variant::QsaBasis, Axis::T, geometric_grid(1024, 2, 5), Sizes::new(0, 4, 16, 5), 2.0)?,
    ])
}

pub fn slopes_csv(checks: &[SlopeCheck]) -> String {
    let mut out = format!("{SLOPES_CSV_HEADER}\n");
    for c in checks {
        let grid: Vec<String> = c.grid.iter().map(u64::to_string).collect();
        let f = c.fixed;
        let fixed = |axis: Axis, v: u64| if c.axis == axis { "*".to_string() } else { v.to_string() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.variant.as_str(),
            c.axis.as_str(),
            grid.join(" "),
            fixed(Axis::T, f.seq_len),
            fixed(Axis::D, f.token_dim),
            f.vocab,
            f.layers,
            c.slope,
            c.expected,
            c.tolerance,
            c.passes()
        );
    }
    out
}

/// Runs the simulated circuit on a fixed instance and returns the weighted
/// count of its controlled blocks next to the model's `state_prep +
/// controlled_ops` terms.
pub fn simulator_cross_check(token_dim: usize, seq_len: usize) -> Result<(u64, u64)> {
    if !token_dim.is_power_of_two() || token_dim < 2 {
        return config("token dimension must be a power of two >= 2");
    }
    let n = token_dim.trailing_zeros() as usize;
    let t = seq_len.trailing_zeros() as usize;
    let vector = |k: usize| -> Vec<C<f64>> {
        (0..token_dim).map(|i| C::new(1.0 + ((i * 7 + k * 3) % 5) as f64, ((i + k) % 3) as f64 - 1.0)).collect()
    };
    let tokens = encode_all(&(0..=seq_len).map(vector).collect::<Vec<_>>())?;
    let targets = encode_all(&(1..=seq_len).map(|k| vector(k + 11)).collect::<Vec<_>>())?;
    let seq = QsaSequence::new(tokens, targets)?;
    let circuit = QsaCircuit::compile(&AnsatzParams::random(n, 1, 1), &AnsatzParams::random(n, 1, 2), &PhaseLayerParams::zeros(t))?;
    let (_, tally) = circuit_expectation_traced(&seq, &circuit)?;
    let model = count_gates(Variant::QsaAmplitude, Sizes::new(seq_len as u64, token_dim as u64, 2 * token_dim as u64, 1))?;
    let modeled = model.term("state_prep").unwrap_or(0) + model.term("controlled_ops").unwrap_or(0);
    Ok((tally.controlled_weighted, modeled))
}
