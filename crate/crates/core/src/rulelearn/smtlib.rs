use std::fmt::Write as _;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::rulelang::Cmp;

use super::{GroundFormula, GroundRhs, HardTerm, LearnError, MaxSmtBackend, MaxSmtProblem};

/// Runs an external SMT-LIB2 solver that understands `assert-soft`
/// (e.g. `z3 -in -smt2`) on the encoded problem.
#[derive(Debug, Clone)]
pub struct SmtLibBackend {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl Default for SmtLibBackend {
    fn default() -> Self {
        Self {
            program: "z3".into(),
            // a memory cap turns solver blow-ups into an error instead of
            // an OOM kill
            args: vec!["-in".into(), "-smt2".into(), "-memory:2048".into()],
            timeout: Duration::from_secs(300),
        }
    }
}

impl SmtLibBackend {
    /// True when the solver binary can be started.
    pub fn available(&self) -> bool {
        Command::new(&self.program)
            .arg("-version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok()
    }
}

impl MaxSmtBackend for SmtLibBackend {
    fn minimize(&self, problem: &MaxSmtProblem) -> Result<Vec<f64>, LearnError> {
        let script = to_smtlib2(problem);
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| LearnError::Backend(format!("cannot start {}: {e}", self.program)))?;

        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = std::thread::spawn(move || {
            let mut out = String::new();
            stdout.read_to_string(&mut out).map(|_| out)
        });
        {
            let mut stdin = child.stdin.take().expect("stdin is piped");
            stdin
                .write_all(script.as_bytes())
                .map_err(|e| LearnError::Backend(format!("writing to solver: {e}")))?;
        }

        let started = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if started.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(LearnError::Timeout);
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(LearnError::Backend(e.to_string())),
            }
        };
        let output = reader
            .join()
            .map_err(|_| LearnError::Backend("solver reader panicked".into()))?
            .map_err(|e| LearnError::Backend(format!("reading solver output: {e}")))?;
        if !status.success() && !output.trim_start().starts_with("unsat") {
            let first = output.lines().next().unwrap_or("no output");
            return Err(LearnError::Backend(format!(
                "{} exited with {status}: {first}",
                self.program
            )));
        }
        parse_model(&output, &problem.variables)
    }
}

fn num(x: f64) -> String {
    let mut s = format!("{:.20}", x.abs());
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    if x < 0.0 {
        format!("(- {s})")
    } else {
        s
    }
}

fn formula(f: &GroundFormula, vars: &[String]) -> String {
    let mut body = String::from("(or");
    for conj in &f.disjuncts {
        body.push_str(" (and");
        for a in conj {
            let rhs = match a.rhs {
                GroundRhs::Var(v) => format!("|{}|", vars[v]),
                GroundRhs::Const(c) => num(c),
            };
            let op = match a.cmp {
                Cmp::Lt => "<",
                Cmp::Le => "<=",
                Cmp::Gt => ">",
                Cmp::Ge => ">=",
            };
            let _ = write!(body, " ({op} {} {rhs})", num(a.value));
        }
        body.push(')');
    }
    body.push(')');
    if f.negated {
        format!("(not {body})")
    } else {
        body
    }
}

/// SMT-LIB2 script: reals for the thresholds, one Boolean dummy per clause,
/// hard assertions, guarded clauses and unit-weight soft assertions
/// `(not l_k)`, followed by `check-sat` and `get-model`.
pub fn to_smtlib2(problem: &MaxSmtProblem) -> String {
    let vars = &problem.variables;
    let mut out = String::from("(set-option :produce-models true)\n");
    for v in vars {
        let _ = writeln!(out, "(declare-const |{v}| Real)");
    }
    for c in &problem.clauses {
        let _ = writeln!(out, "(declare-const l_{} Bool)", c.dummy);
    }
    let term = |t: HardTerm| match t {
        HardTerm::Var(v) => format!("|{}|", vars[v]),
        HardTerm::Const(c) => num(c),
    };
    for h in &problem.hard {
        let _ = writeln!(
            out,
            "(assert ({} {} {}))",
            h.cmp.symbol(),
            term(h.lhs),
            term(h.rhs)
        );
    }
    for c in &problem.clauses {
        let _ = writeln!(
            out,
            "(assert (or l_{} {}))",
            c.dummy,
            formula(&c.formula, vars)
        );
        let _ = writeln!(out, "(assert-soft (not l_{}) :id cost)", c.dummy);
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>, LearnError> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        match ch {
            '(' => stack.push(Vec::new()),
            ')' => {
                let list = stack.pop().filter(|_| !stack.is_empty()).ok_or_else(|| {
                    LearnError::Backend("unbalanced parenthesis in solver output".into())
                })?;
                stack.last_mut().expect("checked").push(Sexp::List(list));
            }
            '|' => {
                let mut s = String::new();
                for c in chars.by_ref() {
                    if c == '|' {
                        break;
                    }
                    s.push(c);
                }
                stack.last_mut().expect("non-empty").push(Sexp::Atom(s));
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {}
            c => {
                let mut s = String::from(c);
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' {
                        break;
                    }
                    s.push(n);
                    chars.next();
                }
                stack.last_mut().expect("non-empty").push(Sexp::Atom(s));
            }
        }
    }
    if stack.len() != 1 {
        return Err(LearnError::Backend(
            "unbalanced parenthesis in solver output".into(),
        ));
    }
    Ok(stack.pop().expect("one level"))
}

fn real_value(e: &Sexp) -> Option<f64> {
    match e {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => real_value(x).map(|v| -v),
            [Sexp::Atom(op), a, b] if op == "/" => Some(real_value(a)? / real_value(b)?),
            [Sexp::Atom(op), a, b] if op == "-" => Some(real_value(a)? - real_value(b)?),
            [Sexp::Atom(op), rest @ ..] if op == "+" => {
                rest.iter().map(real_value).sum::<Option<f64>>()
            }
            _ => None,
        },
    }
}

fn collect_defs<'a>(e: &'a Sexp, out: &mut Vec<(&'a str, &'a Sexp)>) {
    if let Sexp::List(items) = e {
        if let [Sexp::Atom(head), Sexp::Atom(name), _, _, body] = items.as_slice() {
            if head == "define-fun" {
                out.push((name, body));
                return;
            }
        }
        for i in items {
            collect_defs(i, out);
        }
    }
}

/// Reads a `check-sat` answer followed by a `get-model` response and
/// returns the values of `variables` in order.
pub fn parse_model(output: &str, variables: &[String]) -> Result<Vec<f64>, LearnError> {
    let sexps = parse_sexps(output)?;
    match sexps.first() {
        Some(Sexp::Atom(a)) if a == "sat" => {}
        Some(Sexp::Atom(a)) if a == "unsat" => return Err(LearnError::Unsat),
        Some(Sexp::Atom(a)) if a == "unknown" || a == "timeout" => {
            return Err(LearnError::Timeout)
        }
        _ => {
            return Err(LearnError::Backend(format!(
                "unexpected solver output: {}",
                output.lines().next().unwrap_or("")
            )))
        }
    }
    let mut defs = Vec::new();
    for e in &sexps[1..] {
        collect_defs(e, &mut defs);
    }
    variables
        .iter()
        .map(|v| {
            let (_, body) = defs
                .iter()
                .find(|(name, _)| name == v)
                .ok_or_else(|| LearnError::Backend(format!("model has no value for {v}")))?;
            real_value(body)
                .ok_or_else(|| LearnError::Backend(format!("cannot read value of {v}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_plain_decimals() {
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(1.0), "1.0");
        assert_eq!(num(-0.25), "(- 0.25)");
        assert_eq!(num(1e-7), "0.0000001");
    }

    #[test]
    fn parses_rationals_and_negation() {
        let out = "sat\n(\n  (define-fun x1 () Real\n    (/ 97.0 100.0))\n  (define-fun l_0 () Bool false)\n  (define-fun |x 2| () Real (- 0.5))\n)\n";
        let vals = parse_model(out, &["x1".into(), "x 2".into()]).unwrap();
        assert!((vals[0] - 0.97).abs() < 1e-15);
        assert_eq!(vals[1], -0.5);
    }

    #[test]
    fn unsat_and_missing_values() {
        assert!(matches!(parse_model("unsat\n", &[]), Err(LearnError::Unsat)));
        assert!(matches!(
            parse_model("sat\n()", &["x".into()]),
            Err(LearnError::Backend(_))
        ));
    }
}
