mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deployopt::encode::{lower_h_terms, ConstraintIr};
use deployopt::pipeline::{prepare, PlanOptions, Prepared};
use deployopt::solver::symmetry::machine_classes;
use deployopt::solver::{brute_force, lower_bound, solve, BruteForceCaps, PartialState, SolveOptions, SolveStatus};
use deployopt::symbreak::Strategy;
use deployopt::check_plan;

use common::{plan_space_optimum, random_instance, Instance};

/// A random instance that passes validation and fits in four machines.
fn instance(seed: u64, strategy: Strategy) -> Option<(Instance, Prepared)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng, 4, 3);
    let prepared = prepare(&inst.spec, &inst.catalog, &PlanOptions { strategy, ..Default::default() }).ok()?;
    (prepared.machines <= 4).then_some((inst, prepared))
}

fn objective_of(ir: &ConstraintIr) -> Option<u64> {
    let r = solve(ir, &SolveOptions::default()).unwrap();
    assert!(r.proven);
    r.objective
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn branch_and_bound_matches_both_oracles(seed in any::<u64>()) {
        let Some((inst, prepared)) = instance(seed, Strategy::None) else { return Ok(()) };
        let ours = solve(&prepared.ir, &SolveOptions::default()).unwrap();
        prop_assert!(ours.proven);
        let brute = brute_force(&prepared.ir, &BruteForceCaps::default()).unwrap();
        prop_assert_eq!(ours.objective, brute.objective);
        let plans = plan_space_optimum(&inst.spec, &inst.catalog, prepared.machines).map(|p| p.0);
        prop_assert_eq!(ours.objective, plans);
        if ours.status == SolveStatus::Optimal {
            let out = prepared.clone().finish(ours, &inst.catalog).unwrap();
            prop_assert!(out.report.unwrap().passed());
        }
    }

    #[test]
    fn every_strategy_keeps_the_optimum(seed in any::<u64>()) {
        let Some((inst, base)) = instance(seed, Strategy::None) else { return Ok(()) };
        let expected = plan_space_optimum(&inst.spec, &inst.catalog, base.machines).map(|p| p.0);
        for s in Strategy::ALL {
            let prepared = prepare(&inst.spec, &inst.catalog, &PlanOptions { strategy: s, ..Default::default() }).unwrap();
            prop_assert_eq!(objective_of(&prepared.ir), expected, "strategy {}", s);
        }
    }

    #[test]
    fn lower_bound_never_exceeds_a_completion(seed in any::<u64>(), pick in any::<u64>()) {
        let Some((_, prepared)) = instance(seed, Strategy::None) else { return Ok(()) };
        let ir = lower_h_terms(&prepared.ir);
        let r = solve(&ir, &SolveOptions::default()).unwrap();
        let (Some(obj), Some(values)) = (r.objective, r.values) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(pick);
        let mut state = PartialState::root(&ir).unwrap().expect("feasible root");
        prop_assert!(lower_bound(&ir, &state) <= obj as i64);
        let d = ir.dims;
        let mut decision: Vec<_> = (0..d.m).flat_map(|k| (0..d.n).map(move |i| (i, k))).map(|(i, k)| ir.a(i, k)).collect();
        decision.extend((0..d.m).map(|k| ir.t(k)));
        for v in decision {
            if rng.gen_bool(0.4) {
                prop_assert!(state.fix(&ir, v, values[v.0 as usize]).unwrap());
                prop_assert!(lower_bound(&ir, &state) <= obj as i64);
            }
        }
    }

    #[test]
    fn swapping_interchangeable_machines_preserves_solutions(seed in any::<u64>()) {
        let Some((_, prepared)) = instance(seed, Strategy::None) else { return Ok(()) };
        let ir = lower_h_terms(&prepared.ir);
        let r = solve(&ir, &SolveOptions::default()).unwrap();
        let Some(values) = r.values else { return Ok(()) };
        let d = ir.dims;
        for class in machine_classes(&ir) {
            for w in class.windows(2) {
                let (k1, k2) = (w[0], w[1]);
                let mut swapped = values.clone();
                let mut pairs = vec![(ir.t(k1), ir.t(k2)), (ir.v(k1), ir.v(k2)), (ir.p(k1), ir.p(k2))];
                pairs.extend((0..d.n).map(|i| (ir.a(i, k1), ir.a(i, k2))));
                pairs.extend((0..d.h).map(|h| (ir.r(k1, h), ir.r(k2, h))));
                for (x, y) in pairs {
                    swapped.swap(x.0 as usize, y.0 as usize);
                }
                for (aux, sum) in &ir.indicators {
                    swapped[aux.0 as usize] = i64::from(sum.eval(&swapped) > 0);
                }
                prop_assert!(ir.satisfied(&swapped), "swap {k1}<->{k2} broke a constraint");
                prop_assert_eq!(ir.objective.eval(&swapped), ir.objective.eval(&values));
            }
        }
    }
}

#[test]
fn plan_oracle_agrees_with_check_plan_on_case_study() {
    use deployopt::fixtures::{offers, CaseStudy};
    let spec = CaseStudy::SecureBilling.spec();
    let catalog = offers(20).unwrap();
    let (price, plan) = plan_space_optimum(&spec, &catalog, 5).unwrap();
    let validated = deployopt::validate_spec(&spec, &catalog).unwrap();
    assert!(check_plan(&validated, &catalog, &plan).unwrap().passed());
    let out = deployopt::pipeline::plan(&spec, &catalog, &PlanOptions::default()).unwrap();
    assert_eq!(out.result.objective, Some(price));
}
