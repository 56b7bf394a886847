//! Property tests over randomized structures: wire-format identity, the
//! lifting identity, and scalar-geometry invariances.

use affinepr::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn scalar() -> impl Strategy<Value = f64> {
    // Finite, moderately sized values; exponents wide enough to stress the
    // shortest-roundtrip formatting.
    prop_oneof![
        -1e6..1e6_f64,
        -1.0..1.0_f64,
        Just(0.0),
        Just(-0.0),
        Just(1.0),
    ]
}

fn ensemble(field: ScalarField) -> impl Strategy<Value = MeasurementEnsemble> {
    (1usize..5, 1usize..4).prop_flat_map(move |(m, d)| {
        let entries = proptest::collection::vec(scalar(), m * d * 2 + m * 2);
        entries.prop_map(move |vals| {
            let mut it = vals.into_iter();
            let mut next = || match field {
                ScalarField::Real => Complex64::new(it.next().unwrap(), {
                    let _ = it.next();
                    0.0
                }),
                ScalarField::Complex => Complex64::new(it.next().unwrap(), it.next().unwrap()),
            };
            let rows = DMatrix::from_fn(m, d, |_, _| next());
            let shifts = DVector::from_fn(m, |_, _| next());
            MeasurementEnsemble::new(field, rows, shifts).unwrap()
        })
    })
}

fn signal(field: ScalarField, d: usize) -> impl Strategy<Value = Signal> {
    proptest::collection::vec(scalar(), d * 2).prop_map(move |vals| {
        let entries = DVector::from_fn(d, |i, _| match field {
            ScalarField::Real => Complex64::new(vals[2 * i], 0.0),
            ScalarField::Complex => Complex64::new(vals[2 * i], vals[2 * i + 1]),
        });
        Signal::new(field, entries).unwrap()
    })
}

fn field_tag() -> impl Strategy<Value = ScalarField> {
    prop_oneof![Just(ScalarField::Real), Just(ScalarField::Complex)]
}

proptest! {
    #[test]
    fn json_write_read_write_is_identity(field in field_tag()) {
        let runner = ensemble(field);
        proptest!(|(e in runner)| {
            let first = serde_json::to_string(&e).unwrap();
            let back: MeasurementEnsemble = serde_json::from_str(&first).unwrap();
            prop_assert_eq!(&back, &e);
            let second = serde_json::to_string(&back).unwrap();
            prop_assert_eq!(first, second);
        });
    }

    #[test]
    fn lifting_preserves_magnitudes_exactly(field in field_tag()) {
        let runner = ensemble(field).prop_flat_map(move |e| {
            let d = e.d();
            (Just(e), signal(field, d))
        });
        proptest!(|((e, x) in runner)| {
            let direct = e.measure(&x).unwrap();
            let lifted = e.lift().classical_magnitudes(&lift_signal(&x)).unwrap();
            prop_assert_eq!(direct.values().as_slice(), lifted.values().as_slice());
            prop_assert!(direct.values().iter().all(|&v| v >= 0.0));
        });
    }

    #[test]
    fn squared_map_consistency(field in field_tag()) {
        let runner = ensemble(field).prop_flat_map(move |e| {
            let d = e.d();
            (Just(e), signal(field, d))
        });
        proptest!(|((e, x) in runner)| {
            let msq = e.measure_sq(&x).unwrap();
            let m = e.measure(&x).unwrap();
            for j in 0..e.m() {
                let a = msq[j];
                let b = m.values()[j] * m.values()[j];
                let scale = a.abs().max(b.abs());
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * scale);
            }
        });
    }

    #[test]
    fn collinearity_margin_is_permutation_invariant(
        re in proptest::collection::vec(-100.0..100.0_f64, 6)
    ) {
        let b = [
            Complex64::new(re[0], re[1]),
            Complex64::new(re[2], re[3]),
            Complex64::new(re[4], re[5]),
        ];
        let base = collinearity_margin(b[0], b[1], b[2]);
        let perms = [
            (0, 2, 1),
            (1, 0, 2),
            (1, 2, 0),
            (2, 0, 1),
            (2, 1, 0),
        ];
        for (i, j, k) in perms {
            let other = collinearity_margin(b[i], b[j], b[k]);
            // Twice the triangle area does not depend on vertex order.
            prop_assert!((base - other).abs() <= 1e-9 * (1.0 + base));
        }
    }

    #[test]
    fn witness_pairs_survive_json(field in field_tag()) {
        let runner = (1usize..4).prop_flat_map(move |d| (signal(field, d), signal(field, d)));
        proptest!(|((x, y) in runner)| {
            let pair = WitnessPair { x, y };
            let text = serde_json::to_string(&pair).unwrap();
            let back: WitnessPair = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, pair);
        });
    }
}
