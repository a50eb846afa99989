use std::path::PathBuf;

use barrier_core::poly::rational::{int, ratio};
use barrier_core::poly::{parse_poly, vars, AffinePoly, Coeff, LinExpr, Monomial, Polynomial};
use barrier_core::sdp::{min_eigenvalue, solve, SdpStatus, SolveOptions};
use barrier_core::sos::{
    build_program, coefficient_residual, eliminate_odd_top, gram_lift, BuildError, ConstraintKind, LiftOptions,
    SosProgram, SynthParams, UnknownRegistry,
};
use barrier_core::system::{load_system_file, HybridSystem, SemialgebraicSet};

fn example(name: &str) -> HybridSystem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../examples").join(name);
    load_system_file(&path).unwrap()
}

fn count(p: &SosProgram, kind: ConstraintKind) -> usize {
    p.constraints.iter().filter(|c| c.kind == kind).count()
}

fn standalone(src: &str, names: &[&str]) -> SosProgram {
    let v = vars(names);
    let p = parse_poly(src, &v).unwrap();
    SosProgram::standalone(v, vec![AffinePoly::from_poly(&p)], UnknownRegistry::default())
}

#[test]
fn example1_has_three_conditions_and_two_multipliers() {
    let h = example("ex1.json");
    let params = SynthParams::uniform(&h, 2, int(-1), ratio(1, 100));
    let p = build_program(&h, &params).unwrap();
    assert_eq!(p.main_constraints().count(), 3);
    assert_eq!(count(&p, ConstraintKind::Multiplier), 2);
    for c in &p.constraints {
        assert_eq!(c.expr.total_degree() % 2, 0, "{}", c.tag);
    }
    // mu and eta are scalars for quadratic sets
    assert_eq!(p.multiplier("init:1:0").unwrap().degree, 0);
    assert_eq!(p.multiplier("unsafe:1:0").unwrap().degree, 0);
}

#[test]
fn example2_emits_six_main_constraints() {
    let h = example("ex2.json");
    let params = SynthParams::uniform(&h, 4, ratio(-1, 5), ratio(1, 100));
    let p = build_program(&h, &params).unwrap();
    assert_eq!(count(&p, ConstraintKind::Init), 1);
    assert_eq!(count(&p, ConstraintKind::Flow), 2);
    assert_eq!(count(&p, ConstraintKind::Jump), 2);
    assert_eq!(count(&p, ConstraintKind::Unsafe), 1);
    assert_eq!(p.main_constraints().count(), 6);
}

#[test]
fn zero_gamma_drops_source_barrier_from_jump() {
    let h = example("ex2.json");
    let mut params = SynthParams::uniform(&h, 2, ratio(-1, 5), ratio(1, 100));
    params.gamma[0] = int(0);
    let p = build_program(&h, &params).unwrap();
    let jump = p.constraints.iter().find(|c| c.tag == "jump:e0").unwrap();
    let used = jump.expr.unknowns();
    assert!(p.barriers[0].unknowns.iter().all(|u| !used.contains(u)));
    assert!(p.barriers[1].unknowns.iter().any(|u| used.contains(u)));
}

#[test]
fn default_gamma_zero_only_for_state_independent_resets() {
    let h = example("constant_reset.json");
    let g = barrier_core::sos::default_gamma(&h);
    assert_eq!(g, vec![int(1), int(0)]);
    let h2 = example("ex2.json");
    assert_eq!(barrier_core::sos::default_gamma(&h2), vec![int(1), int(1)]);
}

#[test]
fn general_reset_jump_ranges_over_primed_variables() {
    let h = example("constant_reset.json");
    let mut params = SynthParams::uniform(&h, 2, int(0), ratio(1, 100));
    params.gamma = vec![int(1), int(1)];
    let p = build_program(&h, &params).unwrap();
    let jump = p.constraints.iter().find(|c| c.tag == "jump:e1").unwrap();
    assert_eq!(jump.expr.vars().as_slice(), ["x", "x'"]);
    let sigma = p.multiplier("reset:e1:0").unwrap();
    assert_eq!(sigma.vars().as_slice(), ["x'"]);
}

#[test]
fn zero_lambda_flow_is_negated_lie_derivative() {
    let h = example("ex1.json");
    let params = SynthParams::uniform(&h, 3, int(0), ratio(1, 100));
    let p = build_program(&h, &params).unwrap();
    let flow = p.constraints.iter().find(|c| c.kind == ConstraintKind::Flow).unwrap();
    let lie = p.barriers[0].poly.lie_derivative(&h.modes[0].field).unwrap();
    assert_eq!(flow.expr, lie.neg());
}

#[test]
fn empty_unsafe_adds_nothing() {
    let h = example("ex2.json");
    let params = SynthParams::uniform(&h, 2, ratio(-1, 5), ratio(1, 100));
    let a = gram_lift(&eliminate_odd_top(build_program(&h, &params).unwrap()), &LiftOptions::default()).unwrap();
    let mut h2 = h.clone();
    h2.modes[0].unsafe_set = SemialgebraicSet::Empty;
    h2.modes[1].init = SemialgebraicSet::Empty;
    let b = gram_lift(&eliminate_odd_top(build_program(&h2, &params).unwrap()), &LiftOptions::default()).unwrap();
    assert_eq!(a.problem.block_dims, b.problem.block_dims);
    assert_eq!(a.problem.rows.len(), b.problem.rows.len());
}

#[test]
fn odd_degree_elimination_on_cubic_template() {
    // L_f phi has degree 2 + 3 = 5 for a cubic phi and the cubic field
    let h = example("ex1.json");
    let params = SynthParams::uniform(&h, 3, int(-1), ratio(1, 100));
    let p = eliminate_odd_top(build_program(&h, &params).unwrap());
    let flow = p.constraints.iter().find(|c| c.kind == ConstraintKind::Flow).unwrap();
    assert_eq!(flow.expr.total_degree(), 5);
    assert_eq!(flow.target_degree, 4);
    assert!(flow.eliminated.iter().all(|m| m.degree() == 5));
    // x1^3 * x1^2 (from dphi/dx2 * x1^3 / 3) and friends: the degree-5 part
    // is (1/3) x1^3 * d(phi_3)/dx2 with phi_3 the cubic part.
    assert_eq!(flow.eliminated.len(), 3);
    assert_eq!(p.linear.len(), 3);
    for eq in &p.linear {
        assert!(eq.expr.constant == int(0));
        assert!(!eq.expr.terms.is_empty());
    }
    let lifted = gram_lift(&p, &LiftOptions::default()).unwrap();
    let idx = p.constraints.iter().position(|c| c.kind == ConstraintKind::Flow).unwrap();
    let block = lifted.blocks.iter().find(|b| b.constraint == idx).unwrap();
    assert!(block.basis.iter().all(|m| m.degree() <= 2));
}

#[test]
fn all_even_program_is_unchanged() {
    let h = example("ex1.json");
    let params = SynthParams::uniform(&h, 2, int(-1), ratio(1, 100));
    let p = build_program(&h, &params).unwrap();
    let before: Vec<u32> = p.constraints.iter().map(|c| c.target_degree).collect();
    let q = eliminate_odd_top(p);
    assert!(q.linear.is_empty());
    assert_eq!(q.constraints.iter().map(|c| c.target_degree).collect::<Vec<_>>(), before);
}

#[test]
fn vanishing_constraint_is_degenerate() {
    let v = vars(&["x"]);
    let mut reg = UnknownRegistry::default();
    let u = reg.add("c", Monomial::var_pow(0, 3));
    let e = AffinePoly::monomial(v.clone(), Monomial::var_pow(0, 3), LinExpr::unknown(u));
    let p = eliminate_odd_top(SosProgram::standalone(v, vec![e], reg));
    assert!(p.constraints[0].degenerate);
}

#[test]
fn odd_sets_are_absorbed_by_multipliers_and_bad_params_fail() {
    let h = example("ex1.json");
    let mut h = h;
    h.modes[0].unsafe_set = SemialgebraicSet::Empty;
    let v = h.vars.clone();
    // an odd defining polynomial only ever enters through a multiplier product
    h.modes[0].init = SemialgebraicSet::Region(vec![parse_poly("x1^3", &v).unwrap()]);
    let params = SynthParams::uniform(&h, 1, int(-1), ratio(1, 100));
    let p = build_program(&h, &params);
    assert!(p.is_ok(), "multiplier products carry unknowns, so elimination applies");
    let bad = SynthParams { epsilon: int(0), ..params };
    assert!(matches!(build_program(&h, &bad), Err(BuildError::Params(_))));
}

#[test]
fn square_of_sum_has_all_ones_gram() {
    let p = standalone("x1^2 + 2*x1*x2 + x2^2", &["x1", "x2"]);
    let lifted = gram_lift(&p, &LiftOptions::default()).unwrap();
    let basis = &lifted.blocks[0].basis;
    assert_eq!(basis.len(), 2);
    assert!(basis.contains(&Monomial::var(0)) && basis.contains(&Monomial::var(1)));
    let sol = solve(&lifted.problem, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Feasible);
    let m = &sol.blocks[0];
    for i in 0..2 {
        for j in 0..2 {
            assert!((m[(i, j)] - 1.0).abs() < 1e-7, "{m}");
        }
    }
}

#[test]
fn scaled_square_is_one_by_one() {
    let p = standalone("2*x1^2", &["x1"]);
    let lifted = gram_lift(&p, &LiftOptions::default()).unwrap();
    assert_eq!(lifted.problem.block_dims, vec![1]);
    let sol = solve(&lifted.problem, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Feasible);
    assert!((sol.blocks[0][(0, 0)] - 2.0).abs() < 1e-8);
}

#[test]
fn motzkin_is_not_sos() {
    let p = standalone("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", &["x1", "x2"]);
    let lifted = gram_lift(&p, &LiftOptions::default()).unwrap();
    let sol = solve(&lifted.problem, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Infeasible, "{}", sol.message);
    assert!(sol.witness.is_some());
}

#[test]
fn example1_lift_solves_and_reconstructs() {
    let h = example("ex1.json");
    let params = SynthParams::uniform(&h, 2, int(-1), ratio(1, 100));
    let p = eliminate_odd_top(build_program(&h, &params).unwrap());
    let lifted = gram_lift(&p, &LiftOptions::default()).unwrap();
    let sol = solve(&lifted.problem, &SolveOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Feasible, "{}", sol.message);
    let values = lifted.unknown_values(p.unknowns.len(), &sol.free);
    for (k, b) in lifted.blocks.iter().enumerate() {
        let c = &p.constraints[b.constraint];
        let r = coefficient_residual(&c.expr, &values, &b.basis, &sol.blocks[k]);
        assert!(r <= 1e-8, "{}: {r}", c.tag);
        assert!(min_eigenvalue(&sol.blocks[k]) >= -1e-8);
    }
    let phi = p.barriers[0].poly.map_coeffs(|e| barrier_core::poly::rational::from_f64(e.eval(&values)));
    let phi: Polynomial = phi;
    assert!(phi.eval_slice(&[1.5, 0.0]) <= 1e-8);
    assert!(phi.eval_slice(&[-1.0, -1.0]) >= 1e-2 - 1e-8);
    assert!(!phi.coefficient(&Monomial::one()).vanishes());
}
