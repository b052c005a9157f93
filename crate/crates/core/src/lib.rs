//! Variational quantum self-attention on a state-vector simulator, together
//! with the classical softmax and linear attention baselines, synthetic
//! datasets, a training loop and gate-count cost models.
//!
//! The numerical core is generic over the scalar type ([`Real`]); the
//! aliases below fix it to `f64` or `f32`.

pub mod ansatz;
pub mod classical;
pub mod complexity;
pub mod data;
pub mod encodings;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod qsa;
pub mod scalar;
pub mod statevector;
pub mod trainer;

pub use error::{QsaError, Result};
pub use scalar::{Dual, Real, C};

pub type StateVector64 = statevector::StateVector<f64>;
pub type StateVector32 = statevector::StateVector<f32>;
pub type UnitaryBlock64 = statevector::UnitaryBlock<f64>;
pub type UnitaryBlock32 = statevector::UnitaryBlock<f32>;
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type CMatrix32 = linalg::CMatrix<f32>;
pub type AnsatzParams64 = ansatz::AnsatzParams<f64>;
pub type AnsatzParams32 = ansatz::AnsatzParams<f32>;
pub type PhaseLayerParams64 = ansatz::PhaseLayerParams<f64>;
pub type PhaseLayerParams32 = ansatz::PhaseLayerParams<f32>;
pub type QsaInstance64 = qsa::QsaInstance<f64>;
pub type QsaInstance32 = qsa::QsaInstance<f32>;
pub type QsaSequence64 = qsa::QsaSequence<f64>;
pub type QsaSequence32 = qsa::QsaSequence<f32>;
pub type ScsaParams64 = classical::ScsaParams<f64>;
pub type ScsaParams32 = classical::ScsaParams<f32>;
pub type LcsaParams64 = classical::LcsaParams<f64>;
pub type LcsaParams32 = classical::LcsaParams<f32>;
pub type EmbeddingMap64 = data::EmbeddingMap<f64>;
pub type EmbeddingMap32 = data::EmbeddingMap<f32>;
