//! SMT-LIB2 (QF_LIA) emission, model parsing, and external solver driving.

use std::fmt::Write as _;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::encode::{lower_h_terms, ConstraintBody, ConstraintIr, LinExpr, LinPred};
use crate::model::DeploymentPlan;
use crate::solver::{plan_from_values, SolveResult, SolveStats, SolveStatus};

#[derive(Debug, Error)]
pub enum SmtError {
    #[error("IR still contains indicator terms; lower them before emission")]
    UnloweredIndicator,
    #[error("cannot parse solver output: {0}")]
    ModelParse(String),
    #[error("solver model violates the encoding: {0}")]
    ModelInconsistent(String),
    #[error("external solver unavailable: {0}")]
    ExternalUnavailable(String),
    #[error("external solver exceeded {0:?}")]
    ExternalTimeout(Duration),
    #[error("external solver failed with status {code:?}: {stderr}")]
    ExternalFailed { code: Option<i32>, stderr: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn term(out: &mut String, name: &str, c: i64) {
    match c {
        1 => out.push_str(name),
        -1 => {
            let _ = write!(out, "(- {name})");
        }
        c if c < 0 => {
            let _ = write!(out, "(* (- {}) {name})", -c);
        }
        c => {
            let _ = write!(out, "(* {c} {name})");
        }
    }
}

fn int(v: i64) -> String {
    if v < 0 {
        format!("(- {})", -v)
    } else {
        v.to_string()
    }
}

fn expr(ir: &ConstraintIr, e: &LinExpr) -> String {
    let mut parts: Vec<String> = e
        .terms
        .iter()
        .filter(|t| t.1 != 0)
        .map(|&(v, c)| {
            let mut s = String::new();
            term(&mut s, &ir.vars[v.0 as usize].name, c);
            s
        })
        .collect();
    match parts.len() {
        0 => "0".into(),
        1 => parts.pop().unwrap(),
        _ => format!("(+ {})", parts.join(" ")),
    }
}

fn pred(ir: &ConstraintIr, p: &LinPred) -> String {
    format!("({} {} {})", p.cmp.symbol(), expr(ir, &p.expr), int(p.rhs))
}

fn conj(ir: &ConstraintIr, ps: &[LinPred]) -> String {
    match ps.len() {
        0 => "true".into(),
        1 => pred(ir, &ps[0]),
        _ => format!("(and {})", ps.iter().map(|p| pred(ir, p)).collect::<Vec<_>>().join(" ")),
    }
}

fn objective(ir: &ConstraintIr) -> String {
    expr(ir, &ir.objective)
}

fn header_and_body(ir: &ConstraintIr) -> Result<String, SmtError> {
    if ir.constraints.iter().any(|c| matches!(c.body, ConstraintBody::IndicatorSum { .. })) {
        return Err(SmtError::UnloweredIndicator);
    }
    let d = ir.dims;
    let mut out = String::new();
    let _ = writeln!(out, "; N={} M={} H={} O={}", d.n, d.m, d.h, d.o);
    out.push_str("(set-option :produce-models true)\n(set-logic QF_LIA)\n");
    for v in &ir.vars {
        let _ = writeln!(out, "(declare-fun {} () Int)", v.name);
    }
    out.push_str("; bounds\n");
    for v in &ir.vars {
        let _ = writeln!(out, "(assert (and (<= {} {}) (<= {} {})))", int(v.lo), v.name, v.name, int(v.hi));
    }
    out.push_str("; constraints\n");
    for c in &ir.constraints {
        let body = match &c.body {
            ConstraintBody::Linear(p) => pred(ir, p),
            ConstraintBody::Implication { guard, body } if guard.is_empty() => conj(ir, body),
            ConstraintBody::Implication { guard, body } => format!("(=> {} {})", conj(ir, guard), conj(ir, body)),
            ConstraintBody::IndicatorSum { .. } => unreachable!(),
        };
        let _ = writeln!(out, "(assert {body})");
    }
    Ok(out)
}

/// OMT encoding with a `(minimize ...)` objective.
pub fn emit_smtlib(ir: &ConstraintIr) -> Result<String, SmtError> {
    let mut out = header_and_body(ir)?;
    let _ = writeln!(out, "; objective\n(minimize {})\n(check-sat)\n(get-objectives)\n(get-model)", objective(ir));
    Ok(out)
}

/// Pure SMT encoding asserting `cost <= bound`, for solvers without optimization.
pub fn emit_smtlib_bounded(ir: &ConstraintIr, bound: Option<i64>) -> Result<String, SmtError> {
    let mut out = header_and_body(ir)?;
    out.push_str("; objective\n");
    if let Some(k) = bound {
        let _ = writeln!(out, "(assert (<= {} {}))", objective(ir), int(k));
    }
    out.push_str("(check-sat)\n(get-model)\n");
    Ok(out)
}

/// Number of `(assert ...)` lines emitted for IR constraints.
pub fn constraint_assertions(text: &str) -> usize {
    let Some(start) = text.find("; constraints\n") else { return 0 };
    let end = text.find("; objective\n").unwrap_or(text.len());
    text[start..end].lines().filter(|l| l.starts_with("(assert ")).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Parses every top-level s-expression and bare atom in `text`.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, SmtError> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' => {
                chars.next();
                stack.push(Vec::new());
            }
            ')' => {
                chars.next();
                let done = stack.pop().filter(|_| !stack.is_empty()).ok_or_else(|| SmtError::ModelParse("unbalanced ')'".into()))?;
                stack.last_mut().unwrap().push(Sexp::List(done));
            }
            ';' => {
                while chars.next().is_some_and(|c| c != '\n') {}
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            s.push('"');
                        }
                        Some('"') => break,
                        Some(c) => s.push(c),
                        None => return Err(SmtError::ModelParse("unterminated string".into())),
                    }
                }
                stack.last_mut().unwrap().push(Sexp::Atom(s));
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                stack.last_mut().unwrap().push(Sexp::Atom(s));
            }
        }
    }
    if stack.len() != 1 {
        return Err(SmtError::ModelParse("unbalanced '('".into()));
    }
    Ok(stack.pop().unwrap())
}

fn value_of(e: &Sexp) -> Option<i64> {
    match e {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(l) => match l.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => value_of(x).map(|v| -v),
            _ => None,
        },
    }
}

fn collect_defs(e: &Sexp, out: &mut Vec<(String, i64)>) {
    if let Sexp::List(l) = e {
        if let [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(args), _ty, val] = l.as_slice() {
            if kw == "define-fun" && args.is_empty() {
                if let Some(v) = value_of(val) {
                    out.push((name.clone(), v));
                }
                return;
            }
        }
        for x in l {
            collect_defs(x, out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatAnswer {
    Sat,
    Unsat,
    Unknown,
}

/// First `sat` / `unsat` / `unknown` answer in the output.
pub fn sat_answer(output: &str) -> Option<SatAnswer> {
    output.lines().map(str::trim).find_map(|l| match l {
        "sat" => Some(SatAnswer::Sat),
        "unsat" => Some(SatAnswer::Unsat),
        "unknown" => Some(SatAnswer::Unknown),
        _ => None,
    })
}

/// Rebuilds a plan from a solver model and checks it against every IR constraint.
pub fn parse_model(output: &str, ir: &ConstraintIr) -> Result<(DeploymentPlan, Vec<i64>), SmtError> {
    let mut defs = Vec::new();
    for e in parse_sexps(output)? {
        collect_defs(&e, &mut defs);
    }
    if defs.is_empty() {
        return Err(SmtError::ModelParse("no (define-fun ...) model found".into()));
    }
    let index: std::collections::HashMap<&str, usize> =
        ir.vars.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
    let mut values: Vec<Option<i64>> = vec![None; ir.vars.len()];
    for (name, v) in defs {
        if let Some(&i) = index.get(name.as_str()) {
            values[i] = Some(v);
        }
    }
    let d = ir.dims;
    for k in 0..d.m {
        for id in (0..d.n).map(|i| ir.a(i, k)).chain([ir.t(k)]) {
            if values[id.0 as usize].is_none() {
                return Err(SmtError::ModelParse(format!("model lacks {}", ir.vars[id.0 as usize].name)));
            }
        }
    }
    let values: Vec<i64> = values.iter().zip(&ir.vars).map(|(v, decl)| v.unwrap_or(decl.lo)).collect();
    for (k, ty) in (0..d.m).map(|k| (k, values[ir.t(k).0 as usize])) {
        if ty < 0 || ty as usize > d.o {
            return Err(SmtError::ModelInconsistent(format!("t_{} = {ty} is not an offer", k + 1)));
        }
    }
    if let Some(c) = ir.constraints.iter().find(|c| !c.holds(&values)) {
        return Err(SmtError::ModelInconsistent(format!("{:?} constraint violated", c.family)));
    }
    let mut plan = plan_from_values(ir, &values);
    for k in 0..d.m {
        let used = plan.assignment.iter().any(|row| row[k] == 1);
        if used != (plan.occupancy[k] == 1) {
            return Err(SmtError::ModelInconsistent(format!("v_{} disagrees with its column", k + 1)));
        }
    }
    plan.total_price = (0..d.m)
        .filter(|&k| plan.occupancy[k] == 1 && plan.types[k] > 0)
        .map(|k| ir.offers[plan.types[k] as usize - 1].price)
        .sum();
    let reported: i64 = ir.objective.eval(&values);
    if reported != plan.total_price as i64 {
        return Err(SmtError::ModelInconsistent(format!(
            "objective {reported} differs from recomputed price {}",
            plan.total_price
        )));
    }
    Ok((plan, values))
}

/// Runs `template` with `{file}` replaced by `file` (appended when absent).
pub fn run_external(template: &str, file: &Path, timeout: Option<Duration>) -> Result<String, SmtError> {
    let file_str = file.display().to_string();
    let mut parts: Vec<String> = template.split_whitespace().map(|p| p.replace("{file}", &file_str)).collect();
    if parts.is_empty() {
        return Err(SmtError::ExternalUnavailable("empty command template".into()));
    }
    if !template.contains("{file}") {
        parts.push(file_str);
    }
    let mut child = Command::new(&parts[0])
        .args(&parts[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| SmtError::ExternalUnavailable(format!("{}: {e}", parts[0])))?;
    let mut stdout = child.stdout.take().unwrap();
    let mut stderr = child.stderr.take().unwrap();
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let start = Instant::now();
    let status = loop {
        if let Some(st) = child.try_wait()? {
            break st;
        }
        if let Some(t) = timeout {
            if start.elapsed() >= t {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SmtError::ExternalTimeout(t));
            }
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    if !status.success() && sat_answer(&out).is_none() {
        return Err(SmtError::ExternalFailed { code: status.code(), stderr: format!("{}{}", err.trim(), out.trim()) });
    }
    Ok(out)
}

static COUNTER: AtomicU64 = AtomicU64::new(0);

fn temp_path() -> PathBuf {
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("deployopt-{}-{n}.smt2", std::process::id()))
}

fn run_text(text: &str, template: &str, timeout: Option<Duration>) -> Result<String, SmtError> {
    let path = temp_path();
    std::fs::write(&path, text)?;
    let out = run_external(template, &path, timeout);
    let _ = std::fs::remove_file(&path);
    out
}

/// Solves `ir` with an external solver. With `bisect`, uses only satisfiability
/// queries and tightens the cost bound by binary search.
pub fn solve_external(
    ir: &ConstraintIr,
    template: &str,
    timeout: Option<Duration>,
    bisect: bool,
) -> Result<SolveResult, SmtError> {
    let ir = if ir.lowered { ir.clone() } else { lower_h_terms(ir) };
    let start = Instant::now();
    let remaining = |start: Instant| timeout.map(|t| t.saturating_sub(start.elapsed()));
    let mut queries = 0u64;
    let mut run = |text: String| -> Result<Option<(DeploymentPlan, Vec<i64>)>, SmtError> {
        queries += 1;
        let out = run_text(&text, template, remaining(start))?;
        match sat_answer(&out) {
            Some(SatAnswer::Sat) => parse_model(&out, &ir).map(Some),
            Some(SatAnswer::Unsat) => Ok(None),
            _ => Err(SmtError::ModelParse(format!("no sat/unsat answer in: {}", out.trim()))),
        }
    };
    let stats = |queries: u64, updates: u64| SolveStats {
        nodes_explored: queries,
        time_ms: start.elapsed().as_millis() as u64,
        incumbent_updates: updates,
    };
    let timeout_result = |best: Option<(DeploymentPlan, Vec<i64>)>, queries: u64, updates: u64| SolveResult {
        status: SolveStatus::Timeout,
        objective: best.as_ref().map(|b| b.0.total_price),
        plan: best.as_ref().map(|b| b.0.clone()),
        values: best.map(|b| b.1),
        proven: false,
        stats: stats(queries, updates),
    };
    if !bisect {
        return match run(emit_smtlib(&ir)?) {
            Ok(Some((plan, values))) => Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective: Some(plan.total_price),
                plan: Some(plan),
                values: Some(values),
                proven: true,
                stats: stats(queries, 1),
            }),
            Ok(None) => Ok(SolveResult {
                status: SolveStatus::Infeasible,
                plan: None,
                objective: None,
                values: None,
                proven: true,
                stats: stats(queries, 0),
            }),
            Err(SmtError::ExternalTimeout(_)) => Ok(timeout_result(None, queries, 0)),
            Err(e) => Err(e),
        };
    }
    let mut best = match run(emit_smtlib_bounded(&ir, None)?) {
        Ok(Some(b)) => b,
        Ok(None) => {
            return Ok(SolveResult {
                status: SolveStatus::Infeasible,
                plan: None,
                objective: None,
                values: None,
                proven: true,
                stats: stats(queries, 0),
            })
        }
        Err(SmtError::ExternalTimeout(_)) => return Ok(timeout_result(None, queries, 0)),
        Err(e) => return Err(e),
    };
    let mut updates = 1;
    let mut lo = 0i64;
    while lo < best.0.total_price as i64 {
        let mid = lo + (best.0.total_price as i64 - 1 - lo) / 2;
        match run(emit_smtlib_bounded(&ir, Some(mid))?) {
            Ok(Some(b)) => {
                best = b;
                updates += 1;
            }
            Ok(None) => lo = mid + 1,
            Err(SmtError::ExternalTimeout(_)) => return Ok(timeout_result(Some(best), queries, updates)),
            Err(e) => return Err(e),
        }
    }
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        objective: Some(best.0.total_price),
        plan: Some(best.0),
        values: Some(best.1),
        proven: true,
        stats: stats(queries, updates),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sexp_nested_and_negative() {
        let e = parse_sexps("sat\n(model (define-fun x () Int (- 3)) (define-fun y () Int 4))").unwrap();
        let mut defs = Vec::new();
        for x in &e {
            collect_defs(x, &mut defs);
        }
        assert_eq!(defs, vec![("x".to_string(), -3), ("y".to_string(), 4)]);
    }

    #[test]
    fn unbalanced_is_error() {
        assert!(parse_sexps("(a (b)").is_err());
        assert!(parse_sexps("a)").is_err());
    }

    #[test]
    fn answers() {
        assert_eq!(sat_answer("unsat\n(error \"no model\")"), Some(SatAnswer::Unsat));
        assert_eq!(sat_answer("garbage"), None);
    }

    #[test]
    fn missing_binary_is_unavailable() {
        let err = run_external("definitely-not-a-solver-xyz {file}", Path::new("/tmp/none.smt2"), None).unwrap_err();
        assert!(matches!(err, SmtError::ExternalUnavailable(_)));
    }
}
