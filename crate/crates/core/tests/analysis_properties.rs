use actsearch::analysis::{
    build_indicator, compile_piecewise, count_space, BinomialSum, CensusOptions, IndicatorKind, Piece, PiecewiseSpec,
    DEFAULT_ARRANGEMENTS,
};
use proptest::prelude::*;

const KINDS: [IndicatorKind; 4] = [
    IndicatorKind::Left,
    IndicatorKind::Right,
    IndicatorKind::OpenInterval,
    IndicatorKind::Point,
];

fn expected(kind: IndicatorKind, a: f64, b: f64, x: f64) -> f64 {
    if kind.contains(a, b, x) {
        1.0
    } else {
        0.0
    }
}

fn bounds() -> impl Strategy<Value = (f64, f64)> {
    (-50.0f64..50.0, 1e-3f64..20.0).prop_map(|(a, w)| (a, a + w))
}

/// Points inside, outside and exactly on the bounds.
fn probe(a: f64, b: f64) -> impl Strategy<Value = f64> {
    prop_oneof![
        -100.0f64..100.0,
        a - 1.0..b + 1.0,
        Just(a),
        Just(b),
        Just((a + b) / 2.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn indicators_are_exact(((a, b), x) in bounds().prop_flat_map(|(a, b)| (Just((a, b)), probe(a, b)))) {
        for kind in KINDS {
            let c = build_indicator(kind, a, b).unwrap();
            prop_assert_eq!(c.eval(x), expected(kind, a, b, x), "{:?} a={} b={} x={}", kind, a, b, x);
        }
    }
}

fn piece() -> impl Strategy<Value = Piece> {
    (
        prop_oneof![Just(0.0), -3.0f64..3.0],
        prop::collection::vec(-5.0f64..5.0, 1..5),
    )
        .prop_map(|(c, coef)| Piece::new(c, coef))
}

fn spec() -> impl Strategy<Value = PiecewiseSpec> {
    prop::collection::btree_set(-40i32..40, 0..5).prop_flat_map(|set| {
        let breakpoints: Vec<f64> = set.into_iter().map(|v| v as f64 / 4.0).collect();
        let n = breakpoints.len();
        (
            Just(breakpoints),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(piece(), n + 1),
        )
            .prop_map(|(breakpoints, values, pieces)| PiecewiseSpec {
                breakpoints,
                values,
                pieces,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn piecewise_graphs_match_direct_evaluation(s in spec(), xs in prop::collection::vec(-12.0f64..12.0, 16)) {
        let c = compile_piecewise(&s).unwrap();
        for x in xs {
            let (got, want) = (c.eval(x), s.eval(x));
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "x={} got {} want {}", x, got, want);
        }
        for &k in &s.breakpoints {
            prop_assert_eq!(c.eval(k), s.eval(k));
        }
    }
}

#[test]
fn uncapped_sum_departs_from_three_nodes() {
    let capped = count_space(&CensusOptions::default(), &DEFAULT_ARRANGEMENTS).unwrap();
    let uncapped = count_space(
        &CensusOptions {
            binomial_sum: BinomialSum::Uncapped,
            ..CensusOptions::default()
        },
        &DEFAULT_ARRANGEMENTS,
    )
    .unwrap();
    for n in 1..=7 {
        let (a, b) = (capped.group(n).unwrap().functions, uncapped.group(n).unwrap().functions);
        if n < 3 {
            assert_eq!(a, b);
        } else {
            assert!(b > a, "G{n}");
        }
    }
}
