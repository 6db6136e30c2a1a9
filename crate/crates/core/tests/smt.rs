use std::time::Duration;

use deployopt::encode::{build_ir, lower_h_terms, ConstraintIr};
use deployopt::fixtures::{offers, CaseStudy};
use deployopt::io::{parse_offers, parse_spec};
use deployopt::pipeline::{prepare, PlanOptions};
use deployopt::smtlib::{constraint_assertions, emit_smtlib, emit_smtlib_bounded, parse_model, solve_external, SmtError};
use deployopt::solver::{solve, SolveOptions, SolveStatus};
use deployopt::symbreak::{BreakerSet, Strategy};
use deployopt::validate_spec;

const GOLDEN: &str = "\
; N=1 M=1 H=1 O=1
(set-option :produce-models true)
(set-logic QF_LIA)
(declare-fun a_1_1 () Int)
(declare-fun t_1 () Int)
(declare-fun v_1 () Int)
(declare-fun p_1 () Int)
(declare-fun r_1_1 () Int)
(declare-fun n_1 () Int)
; bounds
(assert (and (<= 0 a_1_1) (<= a_1_1 1)))
(assert (and (<= 0 t_1) (<= t_1 1)))
(assert (and (<= 0 v_1) (<= v_1 1)))
(assert (and (<= 0 p_1) (<= p_1 5)))
(assert (and (<= 0 r_1_1) (<= r_1_1 4)))
(assert (and (<= 0 n_1) (<= n_1 1)))
; constraints
(assert (= (+ n_1 (- a_1_1)) 0))
(assert (>= n_1 1))
(assert (=> (>= a_1_1 1) (= v_1 1)))
(assert (=> (= v_1 1) (>= a_1_1 1)))
(assert (<= (+ (* 2 a_1_1) (- r_1_1)) 0))
(assert (=> (and (= t_1 1) (= v_1 1)) (and (= r_1_1 4) (= p_1 5))))
(assert (=> (= t_1 0) (and (= p_1 0) (= r_1_1 0))))
(assert (=> (= a_1_1 0) (= t_1 0)))
; objective
(minimize p_1)
(check-sat)
(get-objectives)
(get-model)
";

fn tiny_ir() -> ConstraintIr {
    let spec = parse_spec(
        r#"{"name":"tiny","dimensions":["cpu"],"components":[{"id":1,"name":"A","requirements":{"cpu":2}}]}"#,
        "tiny",
    )
    .unwrap();
    let cat = parse_offers(r#"[{"id":1,"name":"s","capacity":{"cpu":4},"price_micro":5}]"#, "tiny").unwrap();
    let v = validate_spec(&spec, &cat).unwrap();
    build_ir(&v, &cat, 1, &BreakerSet::empty()).unwrap()
}

fn fixture_ir(cs: CaseStudy, s: Strategy) -> ConstraintIr {
    let p = prepare(&cs.spec(), &offers(20).unwrap(), &PlanOptions { strategy: s, ..Default::default() }).unwrap();
    lower_h_terms(&p.ir)
}

fn z3_available() -> bool {
    std::process::Command::new("z3").arg("-version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn golden_single_component() {
    assert_eq!(emit_smtlib(&tiny_ir()).unwrap(), GOLDEN);
}

#[test]
fn bounded_variant_replaces_minimize() {
    let text = emit_smtlib_bounded(&tiny_ir(), Some(4)).unwrap();
    assert!(text.contains("(assert (<= p_1 4))"));
    assert!(!text.contains("minimize"));
    assert!(text.ends_with("(check-sat)\n(get-model)\n"));
}

#[test]
fn emission_is_deterministic() {
    for cs in CaseStudy::ALL {
        for s in Strategy::ALL {
            let a = emit_smtlib(&fixture_ir(cs, s)).unwrap();
            let b = emit_smtlib(&fixture_ir(cs, s)).unwrap();
            assert_eq!(a, b, "{} {s}", cs.name());
        }
    }
}

#[test]
fn one_assertion_per_constraint() {
    for cs in CaseStudy::ALL {
        for s in Strategy::ALL {
            let ir = fixture_ir(cs, s);
            let text = emit_smtlib(&ir).unwrap();
            assert_eq!(constraint_assertions(&text), ir.constraints.len(), "{} {s}", cs.name());
            assert_eq!(text.matches("(declare-fun ").count(), ir.vars.len());
        }
    }
}

#[test]
fn fixed_cells_become_equalities() {
    let text = emit_smtlib(&fixture_ir(CaseStudy::SecureWeb, Strategy::Fv)).unwrap();
    assert!(text.contains("(assert (= a_2_3 1))"));
    assert!(text.contains("(assert (= a_1_1 1))"));
    assert!(text.contains("(assert (= a_4_2 1))"));
}

#[test]
fn unlowered_indicators_are_rejected() {
    let p = prepare(&CaseStudy::Wordpress(3).spec(), &offers(20).unwrap(), &PlanOptions::default()).unwrap();
    assert!(matches!(emit_smtlib(&p.ir), Err(SmtError::UnloweredIndicator)));
}

#[test]
fn model_parsing_rejects_inconsistent_values() {
    let ir = tiny_ir();
    let good = "sat\n(objectives (p_1 5))\n((define-fun a_1_1 () Int 1) (define-fun t_1 () Int 1) (define-fun v_1 () Int 1)\
                (define-fun p_1 () Int 5) (define-fun r_1_1 () Int 4) (define-fun n_1 () Int 1))";
    let (plan, _) = parse_model(good, &ir).unwrap();
    assert_eq!(plan.total_price, 5);
    let bad = good.replace("(define-fun v_1 () Int 1)", "(define-fun v_1 () Int 0)");
    assert!(matches!(parse_model(&bad, &ir), Err(SmtError::ModelInconsistent(_))));
    let missing = good.replace("(define-fun t_1 () Int 1)", "");
    assert!(parse_model(&missing, &ir).is_err());
}

#[test]
fn z3_round_trip_matches_builtin() {
    if !z3_available() {
        eprintln!("z3 not installed, skipping");
        return;
    }
    for (cs, s) in [(CaseStudy::SecureBilling, Strategy::Fvpr), (CaseStudy::SecureWeb, Strategy::Fv), (CaseStudy::Wordpress(3), Strategy::Fvlx)] {
        let ir = fixture_ir(cs, s);
        let ours = solve(&ir, &SolveOptions::default()).unwrap();
        for bisect in [false, true] {
            let ext = solve_external(&ir, "z3 {file}", Some(Duration::from_secs(300)), bisect).unwrap();
            assert_eq!(ext.status, SolveStatus::Optimal, "{} {s}", cs.name());
            assert_eq!(ext.objective, ours.objective, "{} {s} bisect={bisect}", cs.name());
        }
    }
}

#[test]
fn external_timeout_is_reported() {
    if !z3_available() {
        return;
    }
    let ir = fixture_ir(CaseStudy::Oryx2, Strategy::None);
    let r = solve_external(&ir, "z3 {file}", Some(Duration::from_millis(1)), false).unwrap();
    assert_eq!(r.status, SolveStatus::Timeout);
}
