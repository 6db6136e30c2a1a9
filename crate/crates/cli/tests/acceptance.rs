//! Acceptance criteria. Each test prints one line per criterion:
//! `[Cn] PASS|FAIL|SKIP|REPORT <detail>`. Run with `--nocapture` to see them.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deployopt::confgraph::FvMode;
use deployopt::encode::Family;
use deployopt::estimator::{solve_surrogate_bruteforce, SurrogatePolicy};
use deployopt::pipeline::{prepare, PlanOptions};
use deployopt::solver::{brute_force, solve, BruteForceCaps, SolveOptions, SolveStatus};
use deployopt::symbreak::Strategy;
use deployopt::ValidatedSpec;
use deployopt_cli::bench::{load_matrix, objective_mismatches, run_matrix, BenchMatrix, BenchOffers, BenchOptions, BenchProblem};
use deployopt_cli::{analyze, estimate, read_offers, read_spec, run_plan, Backend, PlanRequest};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

const CASES: [(&str, &str); 4] = [
    ("secure-web", "secure-web.json"),
    ("secure-billing", "secure-billing.json"),
    ("oryx2", "oryx2.json"),
    ("wordpress", "wordpress.json"),
];

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn c1_estimator_reproduction() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (file, expected) in [("oryx2.json", 11), ("secure-web.json", 6), ("secure-billing.json", 5)] {
        let start = Instant::now();
        let out = estimate(read_spec(&fixture(file), None).unwrap(), SurrogatePolicy::AllDeployed).unwrap();
        let elapsed = start.elapsed();
        ok &= out.m_upper == expected && elapsed < Duration::from_secs(1);
        detail.push(format!("{file}: {} (expected {expected}) in {} ms", out.m_upper, elapsed.as_millis()));
    }
    println!("[C1] {} estimates {}", verdict(ok), detail.join("; "));

    let reported = [8u64, 10, 12, 13, 15, 17, 18, 20, 22, 23];
    let mut lines = Vec::new();
    let mut agree = 0;
    let mut brute_ok = true;
    for (k, &reported_m) in (3..=12).zip(&reported) {
        let spec = read_spec(&fixture("wordpress.json"), Some(k)).unwrap();
        let out = estimate(spec.clone(), SurrogatePolicy::AllDeployed).unwrap();
        let bf = solve_surrogate_bruteforce(&ValidatedSpec::structural(spec).unwrap(), k + 1).unwrap();
        brute_ok &= bf.m_upper == out.m_upper;
        agree += usize::from(out.m_upper == reported_m);
        lines.push(format!("k={k}: {}/{reported_m}", out.m_upper));
    }
    println!(
        "[C1] REPORT wordpress estimates vs reported ({agree}/10 agree, brute force {}): {}",
        if brute_ok { "agrees" } else { "DISAGREES" },
        lines.join(", ")
    );
    assert!(ok, "estimator reproduction failed");
    assert!(brute_ok, "surrogate disagrees with brute force");
}

#[test]
fn c2_fixed_variable_accounting() {
    let expected = [
        ("secure-web.json", None, 18, 30),
        ("secure-billing.json", None, 12, 25),
        ("oryx2.json", None, 6, 110),
        ("wordpress.json", Some(3), 9, 40),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (file, k, fixed, total) in expected {
        let out = analyze(read_spec(&fixture(file), k).unwrap(), FvMode::Full, SurrogatePolicy::AllDeployed).unwrap();
        let cells = out.components.len() * out.machines;
        ok &= out.fixed_cells == fixed && cells == total;
        detail.push(format!(
            "{file}: {}/{cells} (expected {fixed}/{total}, conservative {})",
            out.fixed_cells, out.fixed_cells_conservative
        ));
    }
    println!("[C2] {} fixed cells {}", verdict(ok), detail.join("; "));
    assert!(ok);
}

#[test]
fn c3_clique_analysis() {
    let out = analyze(read_spec(&fixture("secure-web.json"), None).unwrap(), FvMode::Full, SurrogatePolicy::AllDeployed).unwrap();
    let sorted = |v: &[String]| {
        let mut v = v.to_vec();
        v.sort();
        v
    };
    let mut cliques: Vec<Vec<String>> = out.cliques.iter().map(|c| sorted(&c.members)).collect();
    cliques.sort();
    let mut expected: Vec<Vec<String>> = [
        vec!["Apache", "Balancer", "IDSServer", "Nginx"],
        vec!["Balancer", "IDSAgent", "IDSServer"],
    ]
    .iter()
    .map(|c| c.iter().map(|s| s.to_string()).collect())
    .collect();
    expected.sort();
    let selected = out.selected.as_ref().map(|c| sorted(&c.members));
    let ok = cliques == expected && selected.as_ref() == Some(&expected[0]);
    println!("[C3] {} cliques {:?}, selected {:?}", verdict(ok), cliques, selected);
    assert!(ok);
}

#[test]
fn c4_c5_random_suite() {
    const WANT: usize = 500;
    let start = Instant::now();
    let mut accepted = 0;
    let mut strategy_violations = Vec::new();
    let mut oracle_violations = Vec::new();
    let mut feasible = 0;
    let mut seed = 0u64;
    while accepted < WANT {
        seed += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_instance(&mut rng, 4, 3);
        let Ok(base) = prepare(&inst.spec, &inst.catalog, &PlanOptions::default()) else { continue };
        if base.machines > 4 {
            continue;
        }
        accepted += 1;
        let brute = brute_force(&base.ir, &BruteForceCaps::default()).unwrap();
        let plans = common::plan_space_optimum(&inst.spec, &inst.catalog, base.machines).map(|p| p.0);

        let ours = solve(&base.ir, &SolveOptions::default()).unwrap();
        if ours.objective != brute.objective || brute.objective != plans || !ours.proven {
            oracle_violations.push(format!("seed {seed}: bb {:?} brute {:?} plans {plans:?}", ours.objective, brute.objective));
        }
        if ours.status == SolveStatus::Optimal {
            feasible += 1;
            let out = base.clone().finish(ours, &inst.catalog).unwrap();
            if !out.report.as_ref().is_some_and(|r| r.passed()) {
                oracle_violations.push(format!("seed {seed}: plan fails check"));
            }
        }
        for s in Strategy::ALL {
            let p = prepare(&inst.spec, &inst.catalog, &PlanOptions { strategy: s, ..Default::default() }).unwrap();
            let r = solve(&p.ir, &SolveOptions::default()).unwrap();
            if r.objective != brute.objective || !r.proven {
                strategy_violations.push(format!("seed {seed} {s}: {:?} vs {:?}", r.objective, brute.objective));
            }
        }
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(300);
    println!(
        "[C4] {} {accepted} instances ({feasible} feasible), {} strategies each, {} violations, {:.1} s",
        verdict(strategy_violations.is_empty() && fast),
        Strategy::ALL.len(),
        strategy_violations.len(),
        elapsed.as_secs_f64()
    );
    println!(
        "[C5] {} branch and bound vs brute force and plan oracle on {accepted} instances, {} violations",
        verdict(oracle_violations.is_empty()),
        oracle_violations.len()
    );
    assert!(strategy_violations.is_empty(), "{strategy_violations:?}");
    assert!(oracle_violations.is_empty(), "{oracle_violations:?}");
    assert!(fast, "suite took {elapsed:?}");
}

#[test]
fn c6_cross_strategy_agreement() {
    let path = fixture("bench-matrix.json");
    let matrix = load_matrix(&path).unwrap();
    assert_eq!(matrix.strategies, Strategy::BENCHMARKED.to_vec());
    let rows = run_matrix(
        &matrix,
        path.parent().unwrap(),
        &BenchOptions { jobs: 1, timeout: Some(Duration::from_secs(2400)) },
    );
    let mut ok = rows.len() == CASES.len() * Strategy::BENCHMARKED.len();
    let mut detail = Vec::new();
    for (name, _) in CASES {
        let mine: Vec<_> = rows.iter().filter(|r| r.problem == name).collect();
        let objectives: Vec<Option<u64>> = mine.iter().map(|r| r.objective).collect();
        let all_optimal = mine.iter().all(|r| r.status == "optimal");
        let same = objectives.windows(2).all(|w| w[0] == w[1]) && objectives[0].is_some();
        ok &= all_optimal && same;
        let slowest = mine.iter().map(|r| r.time_ms).max().unwrap_or(0);
        detail.push(format!("{name}: {:?} (slowest {slowest} ms)", objectives[0]));
    }
    ok &= objective_mismatches(&rows).is_empty();
    println!("[C6] {} 7 strategies agree: {}", verdict(ok), detail.join("; "));
    assert!(ok, "{rows:?}");
}

#[test]
fn c7_encoding_sizes() {
    let catalog = read_offers(&fixture("offers-20.json")).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, file) in CASES {
        let spec = read_spec(&fixture(file), None).unwrap();
        let p = prepare(&spec, &catalog, &PlanOptions::default()).unwrap();
        let d = p.ir.dims;
        let (link, cap) = (p.ir.count(Family::Link), p.ir.count(Family::Capacity));
        ok &= link == d.m * d.o && cap == d.h * d.m;
        detail.push(format!("{name}: link {link} = {}·{}, capacity {cap} = {}·{}", d.m, d.o, d.h, d.m));
    }
    println!("[C7] {} {}", verdict(ok), detail.join("; "));
    assert!(ok);
}

fn z3_available() -> bool {
    std::process::Command::new("z3").arg("-version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c8_smt_round_trip() {
    if !z3_available() {
        println!("[C8] SKIP z3 not found on PATH");
        return;
    }
    let catalog = read_offers(&fixture("offers-20.json")).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, file) in CASES {
        let spec = read_spec(&fixture(file), None).unwrap();
        let options = PlanOptions { strategy: Strategy::Fv, timeout: Some(Duration::from_secs(2400)), ..Default::default() };
        let builtin = run_plan(&spec, &catalog, &PlanRequest { options: options.clone(), ..Default::default() }).unwrap();
        let start = Instant::now();
        let smt = run_plan(
            &spec,
            &catalog,
            &PlanRequest { options, backend: Backend::Smt, external: Some("z3 {file}".into()), no_opt: false },
        )
        .unwrap();
        let same = smt.result.status == SolveStatus::Optimal
            && smt.result.objective == builtin.result.objective
            && smt.report.as_ref().is_some_and(|r| r.passed());
        ok &= same;
        detail.push(format!(
            "{name}: z3 {:?} builtin {:?} ({} ms)",
            smt.result.objective,
            builtin.result.objective,
            start.elapsed().as_millis()
        ));
    }
    println!("[C8] {} {}", verdict(ok), detail.join("; "));
    assert!(ok);
}

#[test]
fn c9_timing_structure() {
    let matrix = BenchMatrix {
        timeout_s: 60,
        threads: 1,
        problems: (3..=6)
            .map(|k| BenchProblem {
                name: format!("wordpress-{k}"),
                spec: fixture("wordpress.json"),
                min_wordpress_instances: Some(k),
            })
            .collect(),
        offers: vec![BenchOffers { count: 40, file: fixture("offers-40.json") }],
        strategies: vec![Strategy::Fv, Strategy::Fvpr],
        fv_modes: vec![FvMode::Full],
    };
    let rows = run_matrix(&matrix, &fixture(""), &BenchOptions { jobs: 1, timeout: None });
    let mut never_slower = true;
    let mut detail = Vec::new();
    for p in &matrix.problems {
        let time = |s: Strategy| rows.iter().find(|r| r.problem == p.name && r.strategy == s).map(|r| (r.time_ms, r.status.clone()));
        let (fv, fvpr) = (time(Strategy::Fv).unwrap(), time(Strategy::Fvpr).unwrap());
        never_slower &= fvpr.0 <= fv.0;
        detail.push(format!("{}: fv {} ms {}, fvpr {} ms {}", p.name, fv.0, fv.1, fvpr.0, fvpr.1));
    }
    println!(
        "[C9] REPORT FVPR never slower than FV on wordpress/40 offers: {} ({})",
        if never_slower { "holds" } else { "does not hold" },
        detail.join("; ")
    );
    assert_eq!(rows.len(), 8);
}
