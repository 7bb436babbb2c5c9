use proptest::prelude::*;
use tvdq::prox::{energy, rof_minimize, DenoiseParams};
use tvdq::{directional_variation, tv_iso, Direction, DomainKind, DomainSpec, GridFunction, InputField, Norm, Operator};

const SLACK: f64 = 1e-12;

fn field(kind: DomainKind, n: usize) -> impl Strategy<Value = GridFunction> {
    let d = DomainSpec::new(kind, n, n).unwrap();
    proptest::collection::vec(-3.0f64..3.0, d.node_count()).prop_map(move |v| GridFunction::new(d, v).unwrap())
}

fn cases() -> impl Strategy<Value = (DomainKind, Operator, usize, usize)> {
    (prop_oneof![Just(2usize), Just(3), Just(4)], 1usize..5).prop_flat_map(|(r, n)| {
        prop_oneof![
            Just((DomainKind::PeriodicTorus, Operator::Pi, n, r)),
            Just((DomainKind::UnitSquare, Operator::C, n, r)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_diminish_variation_and_norms(
        (kind, op, n, w) in cases().prop_flat_map(|(k, o, n, r)| (Just(k), Just(o), Just(n), field(k, n * r)))
    ) {
        let u = op.apply(&InputField::fine(w.clone()), &DomainSpec::new(kind, n, n).unwrap()).unwrap();
        for dir in [Direction::X1, Direction::X2] {
            let (a, b) = (directional_variation(&u, dir), directional_variation(&w, dir));
            prop_assert!(a <= b * (1.0 + SLACK) + 1e-14, "{dir:?}: {a} > {b}");
        }
        for p in Norm::ALL {
            prop_assert!(u.lp_norm(p) <= w.lp_norm(p) * (1.0 + SLACK) + 1e-14);
        }
        prop_assert!(tv_iso(&u, 4).unwrap() <= tv_iso(&w, 4).unwrap() + 1e-6);
    }

    #[test]
    fn operators_are_linear(
        (kind, op, n, a, b) in cases().prop_flat_map(|(k, o, n, r)| (Just(k), Just(o), Just(n), field(k, n * r), field(k, n * r))),
        s in -2.0f64..2.0,
    ) {
        let d = DomainSpec::new(kind, n, n).unwrap();
        let apply = |g: &GridFunction| op.apply(&InputField::fine(g.clone()), &d).unwrap();
        let combo = a.zip_map(&b, |x, y| x + s * y).unwrap();
        let lhs = apply(&combo);
        let rhs = apply(&a).zip_map(&apply(&b), |x, y| x + s * y).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().lp_norm(Norm::Linf) <= 1e-12);
        // sign flip leaves every norm ratio unchanged
        let neg = apply(&a.scaled(-1.0));
        prop_assert_eq!(neg.lp_norm(Norm::L1), apply(&a).lp_norm(Norm::L1));
    }

    #[test]
    fn rof_solution_beats_obvious_candidates(w in field(DomainKind::PeriodicTorus, 6), alpha in 1.0f64..50.0) {
        let p = DenoiseParams { alpha, tol: 1e-8, max_iters: 100_000, ..Default::default() };
        let (u, rep) = rof_minimize(&w, &p).unwrap();
        prop_assert!(rep.converged);
        let e = energy(&u, &w, alpha, p.quad).unwrap();
        let slack = rep.abs_gap.max(0.0) + 1e-12;
        prop_assert!(e <= energy(&w, &w, alpha, p.quad).unwrap() + slack);
        let mean = GridFunction::constant(*w.domain(), w.integral());
        prop_assert!(e <= energy(&mean, &w, alpha, p.quad).unwrap() + slack);
        // the mean is preserved on the torus
        prop_assert!((u.integral() - w.integral()).abs() <= 1e-6);
        // the minimizer stays within the range of the data
        prop_assert!(u.max_value() <= w.max_value() + 1e-6 && u.min_value() >= w.min_value() - 1e-6);
    }
}
