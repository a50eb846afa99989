use std::collections::{BTreeMap, HashMap};

use barrier_core::poly::rational::*;
use barrier_core::poly::*;

mod polynomial {
    use super::*;

    fn xy() -> Vars {
        vars(&["x1", "x2"])
    }

    fn p(s: &str) -> Polynomial {
        parse_poly(s, &xy()).unwrap()
    }

    #[test]
    fn difference_of_squares() {
        let a = p("x1 + x2");
        let b = p("x1 - x2");
        assert_eq!(a.mul(&b), p("x1^2 - x2^2"));
    }

    #[test]
    fn identities() {
        let q = p("3*x1^2*x2 - (1/7)*x2 + 2");
        assert_eq!(q.add(&Polynomial::zero(xy())), q);
        assert_eq!(q.mul(&Polynomial::constant(xy(), int(1))), q);
        assert!(q.sub(&q).is_zero());
    }

    #[test]
    fn cube_expansion_matches_binomial_oracle() {
        // Oracle: binomial theorem, term by term.
        let x = p("x1 + 1");
        let expanded = x.mul(&x).mul(&x);
        let binom = [1i64, 3, 3, 1];
        let oracle = Polynomial::from_terms(xy(), (0..=3).map(|k| (Monomial::var_pow(0, k as u32), int(binom[k]))));
        assert_eq!(expanded.terms(), oracle.terms());
        assert_eq!(x.pow(3), expanded);
    }

    #[test]
    fn unification_by_name() {
        let a = parse_poly_auto("x + y").unwrap();
        let b = parse_poly_auto("y + z").unwrap();
        let s = a.add(&b);
        assert_eq!(s.vars().as_ref(), &["x", "y", "z"]);
        assert_eq!(s, parse_poly_auto("x + 2*y + z").unwrap());
        // Equality is by name, independent of variable order.
        assert_eq!(parse_poly_auto("y + x").unwrap(), a);
    }

    #[test]
    fn evaluation() {
        let mut pt = HashMap::new();
        pt.insert("x1".to_string(), 0.0);
        pt.insert("x2".to_string(), 0.0);
        assert_eq!(p("x1^2 + x2^2").eval(&pt).unwrap(), 0.0);
        let phi = p("-0.86153 - 0.87278*x1 - 1.1358*x2 - 0.23944*x1^2 - 0.5866*x1*x2");
        assert!((phi.eval(&pt).unwrap() + 0.86153).abs() < 1e-15);
        pt.insert("x1".to_string(), 1.5);
        // -0.86153 - 0.87278*1.5 - 0.23944*2.25 = -2.70944
        let v = phi.eval(&pt).unwrap();
        assert!((v + 2.70944).abs() < 1e-12, "{v}");
        assert_eq!(phi.eval_exact(&[ratio(3, 2), int(0)]), ratio(-270944, 100000));
        let mut partial = HashMap::new();
        partial.insert("x1".to_string(), 1.0);
        assert_eq!(phi.eval(&partial), Err(PolyError::Unbound("x2".into())));
    }

    #[test]
    fn lie_derivative_examples() {
        let f = vec![p("x2"), p("-x1")];
        assert_eq!(p("x1^2").lie_derivative(&f).unwrap(), p("2*x1*x2"));
        let f1 = vec![p("x2"), p("-x1 + (1/3)*x1^3 - x2")];
        assert_eq!(p("x2").lie_derivative(&f1).unwrap(), p("-x1 + (1/3)*x1^3 - x2"));
        assert!(p("5").lie_derivative(&f1).unwrap().is_zero());
        assert!(matches!(p("x1").lie_derivative(&[p("x2")]), Err(PolyError::Dimension { expected: 2, got: 1 })));
    }

    #[test]
    fn degrees() {
        let v3 = vars(&["x1", "x2", "x3"]);
        assert_eq!(parse_poly("x1^2*x2 + x3", &v3).unwrap().total_degree(), 3);
        assert_eq!(p("5").total_degree(), 0);
        assert_eq!(Polynomial::zero(xy()).total_degree(), 0);
        let phi = p("-0.86153 - 0.87278*x1 - 1.1358*x2 - 0.23944*x1^2 - 0.5866*x1*x2");
        assert_eq!(phi.total_degree(), 2);
    }

    #[test]
    fn display_round_trips() {
        for s in ["x1^2 - x2^2", "-(1/3)*x1^3 + 0.25*x2 - 7", "0", "x1*x2 + 1"] {
            let q = p(s);
            assert_eq!(p(&q.to_string()), q, "{s} -> {q}");
        }
        assert_eq!(p("x1^2 - 2*x1*x2 + 1").to_string(), "x1^2 - 2*x1*x2 + 1");
    }

    #[test]
    fn compose_substitutes() {
        let q = p("x1^2 + x2");
        let shifted = q.compose(&[p("x1 + 1"), p("2*x2")]);
        assert_eq!(shifted, p("x1^2 + 2*x1 + 1 + 2*x2"));
    }
}

mod rational {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse_decimal("0.99").unwrap(), ratio(99, 100));
        assert_eq!(parse_decimal("-0.125").unwrap(), ratio(-1, 8));
        assert_eq!(parse_decimal("1e-3").unwrap(), ratio(1, 1000));
        assert_eq!(parse_decimal("2.5E2").unwrap(), int(250));
        assert_eq!(parse_decimal(".5").unwrap(), ratio(1, 2));
        assert!(parse_decimal("1.2.3").is_none());
        assert!(parse_decimal("").is_none());
        assert_eq!(parse_rational("1/3").unwrap(), ratio(1, 3));
        assert!(parse_rational("1/0").is_none());
    }

    #[test]
    fn formatting_round_trips() {
        for r in [ratio(-86153, 100000), ratio(1, 3), int(-7), ratio(1, 1000), ratio(5, 2)] {
            let text = format_rational(&r);
            assert_eq!(parse_rational(&text).unwrap(), r, "{text}");
        }
        assert_eq!(format_rational(&ratio(1, 1000)), "0.001");
    }

    #[test]
    fn float_conversion_round_trips() {
        for x in [0.1, -2.70944, 1e-300, 3.0e12, 0.0] {
            assert_eq!(to_f64(&from_f64(x)), x);
        }
    }
}

mod monomial {
    use super::*;

    #[test]
    fn multiplication_merges_exponents() {
        let a = Monomial::from_pairs([(0, 2), (2, 1)]);
        let b = Monomial::from_pairs([(1, 1), (2, 3)]);
        let c = a.mul(&b);
        assert_eq!(c.to_dense(3), vec![2, 1, 4]);
        assert_eq!(c.degree(), 7);
    }

    #[test]
    fn derivative_drops_exhausted_variable() {
        let m = Monomial::from_pairs([(0, 1), (1, 2)]);
        let (k, d) = m.derivative(0).unwrap();
        assert_eq!(k, 1);
        assert_eq!(d, Monomial::var_pow(1, 2));
        assert!(m.derivative(2).is_none());
    }

    #[test]
    fn graded_order() {
        let x = Monomial::var(0);
        let y = Monomial::var(1);
        let one = Monomial::one();
        let xx = Monomial::var_pow(0, 2);
        assert!(one < y && y < x && x < xx);
        assert!(x.mul(&y) < xx);
    }

    #[test]
    fn basis_counts() {
        // C(n + d, d)
        assert_eq!(monomials_up_to(2, 2).len(), 6);
        assert_eq!(monomials_up_to(3, 3).len(), 20);
        assert_eq!(monomials_up_to(2, 6).len(), 28);
        assert_eq!(monomials_up_to(1, 0), vec![Monomial::one()]);
    }
}

mod parse {
    use super::*;

    #[test]
    fn precedence_and_unary_minus() {
        let v = vars(&["x1", "x2"]);
        let p = parse_poly("-x1 + (1/3)*x1^3 - x2", &v).unwrap();
        assert_eq!(p.coefficient(&Monomial::var_pow(0, 3)), ratio(1, 3));
        assert_eq!(p.coefficient(&Monomial::var(0)), ratio(-1, 1));
        let q = parse_poly("-x1^2", &v).unwrap();
        assert_eq!(q.coefficient(&Monomial::var_pow(0, 2)), ratio(-1, 1));
        let r = parse_poly("(x1 - 1.5)^2 + x2^2", &v).unwrap();
        assert_eq!(r.coefficient(&Monomial::one()), ratio(9, 4));
        let s = parse_poly("x1/4 - 2*3", &v).unwrap();
        assert_eq!(s.coefficient(&Monomial::var(0)), ratio(1, 4));
        assert_eq!(s.coefficient(&Monomial::one()), ratio(-6, 1));
    }

    #[test]
    fn primed_identifiers() {
        let p = parse_poly_auto("x1' - x1").unwrap();
        assert_eq!(p.vars().as_ref(), &["x1'", "x1"]);
    }

    #[test]
    fn errors_report_columns() {
        let v = vars(&["x"]);
        match parse_poly("x + y", &v) {
            Err(PolyError::Parse { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        assert!(parse_poly("x / x", &v).is_err());
        assert!(parse_poly("x / 0", &v).is_err());
        assert!(parse_poly("x ^ 1.5", &v).is_err());
        assert!(parse_poly("(x + 1", &v).is_err());
        assert!(parse_poly("", &v).is_err());
        assert!(parse_poly("x $ 2", &v).is_err());
        assert!(parse_poly("x 2", &v).is_err());
    }

    #[test]
    fn scientific_literals() {
        let v = vars(&["x"]);
        let p = parse_poly("1e-2*x + 2.5E1", &v).unwrap();
        assert_eq!(p.coefficient(&Monomial::var(0)), ratio(1, 100));
        assert_eq!(p.coefficient(&Monomial::one()), ratio(25, 1));
    }
}

mod linexpr {
    use super::*;

    #[test]
    fn cancellation_removes_terms() {
        let mut a = LinExpr::unknown(3);
        a.add_assign_ref(&LinExpr::unknown(3).scale(&int(-1)));
        assert!(a.vanishes());
    }

    #[test]
    fn substitution_folds_into_constant() {
        let mut e = LinExpr::unknown(0).scale(&int(2));
        e.add_assign_ref(&LinExpr::unknown(1));
        e.add_assign_ref(&LinExpr::constant(ratio(1, 2)));
        let mut fixed = BTreeMap::new();
        fixed.insert(0, int(3));
        let s = e.substitute(&fixed);
        assert_eq!(s.constant, ratio(13, 2));
        assert_eq!(s.terms.len(), 1);
        assert_eq!(e.eval(&[3.0, 1.0]), 7.5);
    }
}
