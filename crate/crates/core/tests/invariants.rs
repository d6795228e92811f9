use proptest::prelude::*;
use qhmr_core::generators::{random_density, random_kraus, random_model, RandomSpec, Structure};
use qhmr_core::io::{from_json, to_json, CertificateFile, ModelFile};
use qhmr_core::reduction::{reduce_iterative, verify_equivalence};
use qhmr_core::{Config32, Config64, QhmModel32, QhmModel64, Superoperator64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn structure(k: u8) -> Structure {
    match k % 5 {
        0 => Structure::None,
        1 => Structure::Classical,
        2 => Structure::Block,
        3 => Structure::FixedPoint,
        _ => Structure::Product,
    }
}

fn spec(seed: u64, n: usize, k: u8, outputs: usize, states: usize) -> RandomSpec {
    let s = structure(k);
    RandomSpec {
        n: if s == Structure::Product { 4 } else { n },
        kraus: 2,
        outputs,
        states,
        seed,
        structure: s,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduction_is_exact_and_cptp(seed in 0u64..10_000, n in 2usize..5, k in 0u8..5, outs in 1usize..3, states in 1usize..3) {
        let m: QhmModel64 = random_model(&spec(seed, n, k, outs, states)).unwrap();
        let cfg = Config64 { seed, ..Config64::default() };
        let cert = reduce_iterative(&m, &cfg).unwrap();
        prop_assert!(cert.output_dim() <= m.operator_dim());
        prop_assert!(cert.output_dim() >= cert.eff_dim);
        prop_assert!(cert.r_star.validate_cptp(1e-8).is_cptp());
        prop_assert!(cert.j_star.validate_cptp(1e-8).is_cptp());
        prop_assert!(cert.projection_residual <= 1e-8);
        let report = verify_equivalence(&m, &cert, 48, 0, &cfg).unwrap();
        prop_assert!(report.passed(1e-8), "{:?}", report);
    }

    #[test]
    fn composition_preserves_cptp(seed in 0u64..10_000, n in 1usize..5, k1 in 1usize..4, k2 in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Superoperator64::from_kraus(random_kraus(n, k1, &mut rng)).unwrap();
        let b = Superoperator64::from_kraus(random_kraus(n, k2, &mut rng)).unwrap();
        let ab = Superoperator64::compose(&a, &b).unwrap();
        prop_assert!(ab.validate_cptp(1e-9).is_cptp());
        let rho = random_density::<f64, _>(n, &mut rng);
        let lhs = ab.apply(&rho).unwrap();
        let rhs = a.apply(&b.apply(&rho).unwrap()).unwrap();
        prop_assert!((lhs.matrix() - rhs.matrix()).norm() <= 1e-12);
        prop_assert!((lhs.trace().re - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn json_round_trip_is_stable(seed in 0u64..10_000, n in 2usize..4, k in 0u8..5) {
        let m: QhmModel64 = random_model(&spec(seed, n, k, 1, 1)).unwrap();
        let file = ModelFile::from_model(&m).unwrap();
        let text = to_json(&file).unwrap();
        let back: ModelFile = from_json(&text).unwrap();
        prop_assert_eq!(&to_json(&back).unwrap(), &text);
        let m2: QhmModel64 = back.to_model(1e-9).unwrap();
        prop_assert!((m2.map().transfer() - m.map().transfer()).norm() == 0.0);

        let cfg = Config64 { seed, ..Config64::default() };
        let cert = reduce_iterative(&m, &cfg).unwrap();
        let c = CertificateFile::from_certificate(&cert, &cfg).unwrap();
        let text = to_json(&c).unwrap();
        let back: CertificateFile = from_json(&text).unwrap();
        prop_assert_eq!(to_json(&back).unwrap(), text);
    }
}

#[test]
fn single_precision_pipeline() {
    let m: QhmModel32 = random_model(&RandomSpec {
        n: 4,
        kraus: 2,
        outputs: 1,
        states: 1,
        seed: 7,
        structure: Structure::Classical,
    })
    .unwrap();
    let cfg = Config32::with_tol(1e-4);
    let cert = reduce_iterative(&m, &cfg).unwrap();
    assert_eq!(cert.output_dim(), 4);
    assert!(cert.max_output_deviation <= 1e-4);
}
