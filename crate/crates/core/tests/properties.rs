use num_complex::Complex;
use proptest::prelude::*;
use qsalab::ansatz::{build_ansatz_unitary, AnsatzParams, PhaseLayerParams};
use qsalab::complexity::{count_gates, Sizes, VARIANTS};
use qsalab::encodings::{amplitude_encode, encode_all};
use qsalab::objectives::{cross_entropy_loss, renyi_alpha_loss, StepProbabilities};
use qsalab::qsa::{analytic_expectation_with, circuit_expectation_with, QsaCircuit, QsaSequence};
use qsalab::statevector::StateVector;
use qsalab::C;

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<C<f64>>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        .prop_filter("nonzero", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex::new(a, b)).collect())
}

fn norm_sqr(v: &[C<f64>]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ansatz_unitaries_preserve_norm(seed in any::<u64>(), layers in 1usize..4, v in complex_vec(8)) {
        let u = build_ansatz_unitary(&AnsatzParams::<f64>::random(3, layers, seed));
        let mut s = StateVector::normalized(v).unwrap();
        s.apply_unitary_in_place(&u).unwrap();
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_encoding_is_normalized_and_proportional(v in complex_vec(4)) {
        let t = amplitude_encode(&v, 2).unwrap();
        prop_assert!((norm_sqr(t.amplitudes()) - 1.0).abs() < 1e-12);
        let n = norm_sqr(&v).sqrt();
        for (a, x) in t.amplitudes().iter().zip(&v) {
            prop_assert!((*a * n - *x).norm() < 1e-12);
        }
    }

    #[test]
    fn routes_agree(seed in any::<u64>(), vs in prop::collection::vec(complex_vec(4), 9), phases in prop::collection::vec(-3.0f64..3.0, 2)) {
        let seq = QsaSequence::new(encode_all(&vs[..5]).unwrap(), encode_all(&vs[5..]).unwrap()).unwrap();
        let v = build_ansatz_unitary(&AnsatzParams::<f64>::random(2, 2, seed));
        let w = build_ansatz_unitary(&AnsatzParams::<f64>::random(2, 2, seed.wrapping_add(1)));
        let circuit = QsaCircuit::from_blocks(v, w, PhaseLayerParams::new(phases).unwrap()).unwrap();
        let a = analytic_expectation_with(&seq, &circuit).unwrap();
        let c = circuit_expectation_with(&seq, &circuit).unwrap();
        prop_assert!((a - c).abs() < 1e-10);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn renyi_half_never_exceeds_cross_entropy(p in prop::collection::vec(1e-6f64..1.0, 1..12)) {
        let probs = StepProbabilities::normalized(p).unwrap();
        let half = renyi_alpha_loss(&probs, 0.5).unwrap().value;
        let ce = cross_entropy_loss(&probs).value;
        prop_assert!(half <= ce + 1e-12);
        prop_assert!(half >= 0.0);
    }

    #[test]
    fn gate_counts_grow_with_every_size(te in 1u32..10, de in 1u32..10, vocab in 2u64..512, l in 1u64..8) {
        let (t, d) = (1u64 << te, 1u64 << de);
        for variant in VARIANTS {
            let base = count_gates(variant, Sizes::new(t, d, vocab, l)).unwrap().total;
            for bigger in [Sizes::new(2 * t, d, vocab, l), Sizes::new(t, 2 * d, vocab, l), Sizes::new(t, d, 2 * vocab, l)] {
                prop_assert!(count_gates(variant, bigger).unwrap().total >= base);
            }
        }
    }
}
