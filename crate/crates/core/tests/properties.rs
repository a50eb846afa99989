use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;

use barrier_core::poly::rational::{ratio, to_f64};
use barrier_core::poly::{vars, Monomial, Polynomial, Rational, Vars};
use barrier_core::system::{
    load_system, membership, render_system, HybridSystem, Mode, Reset, SemialgebraicSet, Transition,
};

fn xyz() -> Vars {
    vars(&["x1", "x2", "x3"])
}

fn coeff(max_num: i64) -> impl Strategy<Value = Rational> {
    (-max_num..=max_num, 1i64..=5).prop_map(|(n, d)| ratio(n, d))
}

fn monomial(max_deg: u32) -> impl Strategy<Value = Monomial> {
    prop::collection::vec(0..=max_deg, 3)
        .prop_filter("degree bound", move |e| e.iter().sum::<u32>() <= max_deg)
        .prop_map(|e| Monomial::from_dense(&e))
}

fn poly_with(max_deg: u32, max_num: i64, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((monomial(max_deg), coeff(max_num)), 0..=max_terms)
        .prop_map(|terms| Polynomial::from_terms(xyz(), terms))
}

fn poly() -> impl Strategy<Value = Polynomial> {
    poly_with(3, 9, 6)
}

fn field() -> impl Strategy<Value = Vec<Polynomial>> {
    prop::collection::vec(poly_with(3, 2, 4), 3)
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ring_axioms(a in poly(), b in poly(), c in poly()) {
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn degree_is_additive(a in poly(), b in poly()) {
        prop_assume!(!a.is_zero() && !b.is_zero());
        prop_assert_eq!(a.mul(&b).total_degree(), a.total_degree() + b.total_degree());
    }

    #[test]
    fn canonical_form_has_no_zero_terms(a in poly(), b in poly()) {
        let s = a.add(&b.neg()).add(&b);
        prop_assert_eq!(&s, &a);
        prop_assert!(s.terms().values().all(|c| *c != Rational::default()));
    }

    #[test]
    fn lie_derivative_is_linear(p in poly(), q in poly(), f in field(), a in coeff(9), b in coeff(9)) {
        let lhs = p.scale(&a).add(&q.scale(&b)).lie_derivative(&f).unwrap();
        let rhs = p.lie_derivative(&f).unwrap().scale(&a).add(&q.lie_derivative(&f).unwrap().scale(&b));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn leibniz_rule(p in poly(), q in poly(), f in field()) {
        let lhs = p.mul(&q).lie_derivative(&f).unwrap();
        let rhs = p.mul(&q.lie_derivative(&f).unwrap()).add(&q.mul(&p.lie_derivative(&f).unwrap()));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn lie_degree_bound(p in poly(), f in field()) {
        prop_assume!(!p.is_zero() && p.total_degree() > 0);
        let fmax = f.iter().map(|c| c.total_degree()).max().unwrap();
        prop_assert!(p.lie_derivative(&f).unwrap().total_degree() <= p.total_degree() - 1 + fmax);
    }

    #[test]
    fn lie_derivative_matches_finite_difference(p in poly(), f in field(), x in point()) {
        let h = 1e-6;
        let fx: Vec<f64> = f.iter().map(|c| c.eval_slice(&x)).collect();
        let shifted: Vec<f64> = x.iter().zip(&fx).map(|(xi, fi)| xi + h * fi).collect();
        let fd = (p.eval_slice(&shifted) - p.eval_slice(&x)) / h;
        let exact = p.lie_derivative(&f).unwrap().eval_slice(&x);
        prop_assert!((fd - exact).abs() <= 1e-3 * exact.abs().max(1.0), "fd {} vs {}", fd, exact);
    }

    #[test]
    fn display_round_trips(p in poly()) {
        prop_assert_eq!(barrier_core::poly::parse_poly(&p.to_string(), &xyz()).unwrap(), p);
    }

    #[test]
    fn exact_and_float_evaluation_agree(p in poly(), x in prop::collection::vec(-4i64..=4, 3)) {
        let xr: Vec<Rational> = x.iter().map(|&v| ratio(v, 2)).collect();
        let xf: Vec<f64> = x.iter().map(|&v| v as f64 / 2.0).collect();
        let exact = to_f64(&p.eval_exact(&xr));
        prop_assert!((exact - p.eval_slice(&xf)).abs() <= 1e-9 * exact.abs().max(1.0));
    }
}

fn region(min: usize) -> impl Strategy<Value = Vec<Polynomial>> {
    prop::collection::vec(poly_with(2, 9, 3).prop_filter("nonzero", |p| !p.is_zero()), min..=2)
}

fn optional_set() -> impl Strategy<Value = SemialgebraicSet> {
    prop_oneof![Just(SemialgebraicSet::Empty), region(1).prop_map(SemialgebraicSet::Region)]
}

fn small_system() -> impl Strategy<Value = HybridSystem> {
    let mode = (field(), region(0), optional_set(), optional_set());
    (prop::collection::vec(mode, 1..=2), prop::collection::vec((region(0), any::<bool>()), 0..=2)).prop_map(
        |(modes, edges)| {
            let v = xyz();
            let mut jump: Vec<String> = v.as_ref().clone();
            jump.extend(v.iter().map(|n| format!("{n}'")));
            let jump_vars: Vars = Arc::new(jump);
            let modes: Vec<Mode> = modes
                .into_iter()
                .enumerate()
                .map(|(i, (field, inv, init, unsafe_set))| Mode {
                    id: format!("m{i}"),
                    field,
                    invariant: SemialgebraicSet::Region(inv),
                    init,
                    unsafe_set,
                })
                .collect();
            let n = modes.len();
            let transitions = edges
                .into_iter()
                .enumerate()
                .map(|(k, (guard, identity))| Transition {
                    source: format!("m{}", k % n),
                    target: format!("m{}", (k + 1) % n),
                    guard: SemialgebraicSet::Region(guard),
                    reset: if identity {
                        Reset::Identity
                    } else {
                        let r = barrier_core::poly::parse_poly("x1' - x2 + 1/2", &jump_vars).unwrap();
                        Reset::Relation(vec![r])
                    },
                })
                .collect();
            HybridSystem { vars: v, jump_vars, modes, transitions }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn render_load_round_trips(h in small_system()) {
        let again = load_system(&render_system(&h)).unwrap();
        prop_assert_eq!(again, h);
    }

    #[test]
    fn membership_agrees_with_eval(polys in region(1), x in point()) {
        let set = SemialgebraicSet::Region(polys.clone());
        let named: HashMap<String, f64> = xyz().iter().cloned().zip(x.iter().copied()).collect();
        let direct = polys.iter().all(|p| p.eval_slice(&x) >= 0.0);
        prop_assert_eq!(membership(&set, &named), direct);
        prop_assert_eq!(set.contains(&x), direct);
        prop_assert!(!membership(&SemialgebraicSet::Empty, &named));
    }
}
