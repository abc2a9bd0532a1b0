//! Rule templates: action rules over belief-probability threshold atoms.
//!
//! ```text
//! template    := rule+ where?
//! rule        := ID ":" "select" ACTION "when" disj ";"
//! disj        := conj ("or" conj)*
//! conj        := factor ("and" factor)*
//! factor      := atom | "(" disj ")"
//! atom        := selector CMP (VAR | NUM)
//! selector    := "p_" ID | "diff" "(" "distr" "," "seg" "," NUM ")"
//! where       := "where" requirement ("and" requirement)* ";"
//! requirement := (VAR | NUM) ("=" | CMP) (VAR | NUM)
//! ```
//!
//! `CMP` is one of `<`, `<=`, `>`, `>=` (also `≤`, `≥`). Bodies are kept in
//! disjunctive normal form; a parenthesised disjunction inside a conjunction is
//! distributed. `#` starts a line comment.
//!
//! A [`Rule`] is a template together with a total assignment of its free
//! variables. Learned rules are written in the same grammar with numerals in
//! place of the variables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::belief::ProbVector;
use crate::model::ActionId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{line}:{column}: unknown action `{label}`")]
    UnknownAction {
        line: usize,
        column: usize,
        label: String,
    },
    #[error("{line}:{column}: unknown state label `p_{label}`")]
    UnknownSelector {
        line: usize,
        column: usize,
        label: String,
    },
    #[error("action `{0}` has more than one rule")]
    DuplicateAction(String),
    #[error("requirement references `{0}`, which no atom uses")]
    UnusedVariable(String),
    #[error("{line}:{column}: {message}")]
    InvalidRequirement {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rule has unbound free variables: {0}")]
    UnboundVariables(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("belief has no value for selector {0}")]
    MissingSelector(String),
    #[error("free variable `{0}` has no value")]
    UnboundVariable(String),
}

/// Action and category labels a template may reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub actions: Vec<String>,
    pub categories: Vec<String>,
}

impl Vocabulary {
    pub fn new(actions: Vec<String>, categories: Vec<String>) -> Self {
        Self { actions, categories }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Gt => lhs > rhs,
            Cmp::Ge => lhs >= rhs,
        }
    }

    /// `p > x` / `p >= x`: the atom is a lower bound on the probability.
    pub fn is_lower_bound(self) -> bool {
        matches!(self, Cmp::Gt | Cmp::Ge)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }
}

/// Reference to one category of the focus marginal.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    /// `p_<label>`
    State { label: String, category: usize },
    /// `diff(distr, seg, i)`
    Diff { category: usize },
}

impl Selector {
    pub fn category(&self) -> usize {
        match self {
            Selector::State { category, .. } | Selector::Diff { category } => *category,
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::State { label, .. } => write!(f, "p_{label}"),
            Selector::Diff { category } => write!(f, "diff(distr, seg, {category})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Var(String),
    Const(f64),
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Var(v) => f.write_str(v),
            Threshold::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub selector: Selector,
    pub cmp: Cmp,
    pub rhs: Threshold,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.selector, self.cmp.symbol(), self.rhs)
    }
}

/// Disjunction of conjunctions of atoms.
pub type Body = Vec<Vec<Atom>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRuleTemplate {
    pub name: String,
    pub action: ActionId,
    pub action_label: String,
    pub body: Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReqCmp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl ReqCmp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            ReqCmp::Eq => lhs == rhs,
            ReqCmp::Lt => lhs < rhs,
            ReqCmp::Le => lhs <= rhs,
            ReqCmp::Gt => lhs > rhs,
            ReqCmp::Ge => lhs >= rhs,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ReqCmp::Eq => ReqCmp::Eq,
            ReqCmp::Lt => ReqCmp::Gt,
            ReqCmp::Le => ReqCmp::Ge,
            ReqCmp::Gt => ReqCmp::Lt,
            ReqCmp::Ge => ReqCmp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ReqCmp::Eq => "=",
            ReqCmp::Lt => "<",
            ReqCmp::Le => "<=",
            ReqCmp::Gt => ">",
            ReqCmp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(String),
    Const(f64),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// Hard constraint of the `where` clause. At least one side is a variable and
/// two variables may only be related by `=`.
#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub lhs: Term,
    pub cmp: ReqCmp,
    pub rhs: Term,
}

impl Requirement {
    pub fn holds(&self, assignment: &BTreeMap<String, f64>) -> Result<bool, EvalError> {
        let value = |t: &Term| match t {
            Term::Const(c) => Ok(*c),
            Term::Var(v) => assignment
                .get(v)
                .copied()
                .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
        };
        Ok(self.cmp.holds(value(&self.lhs)?, value(&self.rhs)?))
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.cmp.symbol(), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleTemplate {
    pub rules: Vec<ActionRuleTemplate>,
    pub requirements: Vec<Requirement>,
}

impl RuleTemplate {
    /// Free variables in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for rule in &self.rules {
            for atom in rule.body.iter().flatten() {
                if let Threshold::Var(v) = &atom.rhs {
                    if seen.insert(v.clone()) {
                        out.push(v.clone());
                    }
                }
            }
        }
        out
    }

    pub fn rule_for(&self, action: ActionId) -> Option<&ActionRuleTemplate> {
        self.rules.iter().find(|r| r.action == action)
    }

    /// Largest category index any atom references.
    pub fn max_category(&self) -> Option<usize> {
        self.rules
            .iter()
            .flat_map(|r| r.body.iter().flatten())
            .map(|a| a.selector.category())
            .max()
    }
}

impl fmt::Display for RuleTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            write!(f, "{}: select {} when ", rule.name, rule.action_label)?;
            write_body(f, &rule.body)?;
            writeln!(f, ";")?;
        }
        if !self.requirements.is_empty() {
            let reqs: Vec<String> = self.requirements.iter().map(|r| r.to_string()).collect();
            writeln!(f, "where {};", reqs.join(" and "))?;
        }
        Ok(())
    }
}

fn write_body(f: &mut fmt::Formatter<'_>, body: &Body) -> fmt::Result {
    let multi = body.len() > 1;
    for (i, conj) in body.iter().enumerate() {
        if i > 0 {
            f.write_str(" or ")?;
        }
        let paren = multi && conj.len() > 1;
        if paren {
            f.write_str("(")?;
        }
        for (j, atom) in conj.iter().enumerate() {
            if j > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{atom}")?;
        }
        if paren {
            f.write_str(")")?;
        }
    }
    Ok(())
}

/// A template whose free variables are all bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub template: RuleTemplate,
    pub assignment: BTreeMap<String, f64>,
}

impl Rule {
    /// Checks totality and the `where` requirements.
    pub fn new(template: RuleTemplate, assignment: BTreeMap<String, f64>) -> Result<Self, ParseError> {
        let missing: Vec<String> = template
            .variables()
            .into_iter()
            .filter(|v| !assignment.contains_key(v))
            .collect();
        if !missing.is_empty() {
            return Err(ParseError::UnboundVariables(missing.join(", ")));
        }
        for req in &template.requirements {
            if !req.holds(&assignment).unwrap_or(false) {
                return Err(ParseError::InvalidRequirement {
                    line: 0,
                    column: 0,
                    message: format!("assignment violates `{req}`"),
                });
            }
        }
        Ok(Self {
            template,
            assignment,
        })
    }

    /// Parses a learned rule file: a template without free variables.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self, ParseError> {
        let template = parse_template(text, vocab)?;
        Self::new(template, BTreeMap::new())
    }

    /// The template with every variable replaced by its value.
    pub fn instantiated(&self) -> RuleTemplate {
        let subst = |t: &Threshold| match t {
            Threshold::Var(v) => Threshold::Const(self.assignment[v]),
            c => c.clone(),
        };
        RuleTemplate {
            rules: self
                .template
                .rules
                .iter()
                .map(|r| ActionRuleTemplate {
                    body: r
                        .body
                        .iter()
                        .map(|conj| {
                            conj.iter()
                                .map(|a| Atom {
                                    rhs: subst(&a.rhs),
                                    ..a.clone()
                                })
                                .collect()
                        })
                        .collect(),
                    ..r.clone()
                })
                .collect(),
            requirements: Vec::new(),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.instantiated())
    }
}

/// Truth value of `body` with thresholds from `assignment` and selectors read
/// from `probs`.
pub fn evaluate(body: &Body, assignment: &BTreeMap<String, f64>, probs: &ProbVector) -> Result<bool, EvalError> {
    // report missing inputs even when an earlier disjunct would decide
    if let Some(atom) = body.iter().flatten().find(|a| a.selector.category() >= probs.len()) {
        return Err(EvalError::MissingSelector(atom.selector.to_string()));
    }
    for conj in body {
        let mut all = true;
        for atom in conj {
            let p = probs
                .get(atom.selector.category())
                .ok_or_else(|| EvalError::MissingSelector(atom.selector.to_string()))?;
            let x = match &atom.rhs {
                Threshold::Const(c) => *c,
                Threshold::Var(v) => *assignment
                    .get(v)
                    .ok_or_else(|| EvalError::UnboundVariable(v.clone()))?,
            };
            if !atom.cmp.holds(p, x) {
                all = false;
                break;
            }
        }
        if all {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Colon,
    Semi,
    Comma,
    LParen,
    RParen,
    Eq,
    Cmp(Cmp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Cmp(c) => write!(f, "`{}`", c.symbol()),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let next_is_eq = chars.get(i + 1) == Some(&'=');
        let (tok, len) = match c {
            ':' => (Tok::Colon, 1),
            ';' => (Tok::Semi, 1),
            ',' => (Tok::Comma, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '=' => (Tok::Eq, if next_is_eq { 2 } else { 1 }),
            '≤' => (Tok::Cmp(Cmp::Le), 1),
            '≥' => (Tok::Cmp(Cmp::Ge), 1),
            '<' if next_is_eq => (Tok::Cmp(Cmp::Le), 2),
            '<' => (Tok::Cmp(Cmp::Lt), 1),
            '>' if next_is_eq => (Tok::Cmp(Cmp::Ge), 2),
            '>' => (Tok::Cmp(Cmp::Gt), 1),
            c if c.is_ascii_digit() || c == '.' || c == '-' => {
                let mut j = i + 1;
                while j < chars.len()
                    && (chars[j].is_ascii_digit()
                        || matches!(chars[j], '.' | 'e' | 'E')
                        || (matches!(chars[j], '-' | '+') && matches!(chars[j - 1], 'e' | 'E')))
                {
                    j += 1;
                }
                let s: String = chars[i..j].iter().collect();
                let n: f64 = s.parse().map_err(|_| ParseError::Syntax {
                    line,
                    column,
                    message: format!("invalid number `{s}`"),
                })?;
                (Tok::Num(n), j - i)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                (Tok::Ident(chars[i..j].iter().collect()), j - i)
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    column,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push(Spanned { tok, line, column });
        i += len;
        column += len;
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'v> {
    toks: Vec<Spanned>,
    pos: usize,
    vocab: &'v Vocabulary,
}

const KEYWORDS: [&str; 5] = ["select", "when", "and", "or", "where"];

impl Parser<'_> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, at: &Spanned, message: String) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            line: at.line,
            column: at.column,
            message,
        })
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            self.syntax(&t, format!("expected {want}, found {}", t.tok))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(()),
            other => self.syntax(&t, format!("expected `{kw}`, found {other}")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Spanned), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok((s.clone(), t.clone())),
            other => self.syntax(&t, format!("expected {what}, found {other}")),
        }
    }

    fn template(&mut self) -> Result<RuleTemplate, ParseError> {
        let mut rules: Vec<ActionRuleTemplate> = Vec::new();
        while !self.is_keyword("where") && self.peek().tok != Tok::Eof {
            let rule = self.rule()?;
            if rules.iter().any(|r| r.action == rule.action) {
                return Err(ParseError::DuplicateAction(rule.action_label));
            }
            rules.push(rule);
        }
        if rules.is_empty() {
            let t = self.peek().clone();
            return self.syntax(&t, "expected at least one rule".into());
        }
        let mut requirements = Vec::new();
        if self.is_keyword("where") {
            self.next();
            loop {
                requirements.push(self.requirement()?);
                if self.is_keyword("and") {
                    self.next();
                } else {
                    break;
                }
            }
            self.expect(Tok::Semi)?;
        }
        let t = self.peek().clone();
        if t.tok != Tok::Eof {
            return self.syntax(&t, format!("unexpected {} after where clause", t.tok));
        }
        let template = RuleTemplate {
            rules,
            requirements,
        };
        let used: BTreeSet<String> = template.variables().into_iter().collect();
        for req in &template.requirements {
            for term in [&req.lhs, &req.rhs] {
                if let Term::Var(v) = term {
                    if !used.contains(v) {
                        return Err(ParseError::UnusedVariable(v.clone()));
                    }
                }
            }
        }
        Ok(template)
    }

    fn rule(&mut self) -> Result<ActionRuleTemplate, ParseError> {
        let (name, _) = self.ident("rule name")?;
        self.expect(Tok::Colon)?;
        self.keyword("select")?;
        let (label, at) = self.ident("action")?;
        let action = self
            .vocab
            .actions
            .iter()
            .position(|a| *a == label)
            .map(ActionId)
            .ok_or_else(|| ParseError::UnknownAction {
                line: at.line,
                column: at.column,
                label: label.clone(),
            })?;
        self.keyword("when")?;
        let body = self.disj()?;
        self.expect(Tok::Semi)?;
        Ok(ActionRuleTemplate {
            name,
            action,
            action_label: label,
            body,
        })
    }

    fn disj(&mut self) -> Result<Body, ParseError> {
        let mut out = self.conj()?;
        while self.is_keyword("or") {
            self.next();
            out.extend(self.conj()?);
        }
        Ok(out)
    }

    fn conj(&mut self) -> Result<Body, ParseError> {
        let mut acc: Body = vec![Vec::new()];
        loop {
            let factor = self.factor()?;
            // (a or b) and c  =>  (a and c) or (b and c)
            acc = acc
                .iter()
                .flat_map(|left| {
                    factor.iter().map(move |right| {
                        let mut c = left.clone();
                        c.extend(right.iter().cloned());
                        c
                    })
                })
                .collect();
            if self.is_keyword("and") {
                self.next();
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Body, ParseError> {
        if self.peek().tok == Tok::LParen {
            self.next();
            let inner = self.disj()?;
            self.expect(Tok::RParen)?;
            Ok(inner)
        } else {
            Ok(vec![vec![self.atom()?]])
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let selector = self.selector()?;
        let t = self.next();
        let cmp = match t.tok {
            Tok::Cmp(c) => c,
            ref other => return self.syntax(&t, format!("expected comparison, found {other}")),
        };
        let t = self.next();
        let rhs = match &t.tok {
            Tok::Num(n) if (0.0..=1.0).contains(n) => Threshold::Const(*n),
            Tok::Num(n) => return self.syntax(&t, format!("constant {n} outside [0, 1]")),
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Threshold::Var(s.clone()),
            other => return self.syntax(&t, format!("expected variable or number, found {other}")),
        };
        Ok(Atom { selector, cmp, rhs })
    }

    fn selector(&mut self) -> Result<Selector, ParseError> {
        let (name, at) = self.ident("selector")?;
        if name == "diff" {
            self.expect(Tok::LParen)?;
            self.keyword("distr")?;
            self.expect(Tok::Comma)?;
            self.keyword("seg")?;
            self.expect(Tok::Comma)?;
            let t = self.next();
            let category = match t.tok {
                Tok::Num(n) if n >= 0.0 && n.fract() == 0.0 => n as usize,
                ref other => return self.syntax(&t, format!("expected category index, found {other}")),
            };
            if category >= self.vocab.categories.len() {
                return self.syntax(&t, format!("category {category} out of range"));
            }
            self.expect(Tok::RParen)?;
            return Ok(Selector::Diff { category });
        }
        let Some(label) = name.strip_prefix("p_") else {
            return self.syntax(&at, format!("expected `p_<state>` or `diff(...)`, found `{name}`"));
        };
        let category = self
            .vocab
            .categories
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| ParseError::UnknownSelector {
                line: at.line,
                column: at.column,
                label: label.to_string(),
            })?;
        Ok(Selector::State {
            label: label.to_string(),
            category,
        })
    }

    fn term(&mut self) -> Result<(Term, Spanned), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Num(n) => Ok((Term::Const(*n), t.clone())),
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok((Term::Var(s.clone()), t.clone())),
            other => self.syntax(&t, format!("expected variable or number, found {other}")),
        }
    }

    fn requirement(&mut self) -> Result<Requirement, ParseError> {
        let (lhs, at) = self.term()?;
        let t = self.next();
        let cmp = match t.tok {
            Tok::Eq => ReqCmp::Eq,
            Tok::Cmp(Cmp::Lt) => ReqCmp::Lt,
            Tok::Cmp(Cmp::Le) => ReqCmp::Le,
            Tok::Cmp(Cmp::Gt) => ReqCmp::Gt,
            Tok::Cmp(Cmp::Ge) => ReqCmp::Ge,
            ref other => return self.syntax(&t, format!("expected `=` or comparison, found {other}")),
        };
        let (rhs, _) = self.term()?;
        let invalid = |message: &str| ParseError::InvalidRequirement {
            line: at.line,
            column: at.column,
            message: message.to_string(),
        };
        match (&lhs, &rhs) {
            (Term::Const(_), Term::Const(_)) => Err(invalid("requirement relates two constants")),
            (Term::Var(_), Term::Var(_)) if cmp != ReqCmp::Eq => {
                Err(invalid("two variables can only be related by `=`"))
            }
            _ => Ok(Requirement { lhs, cmp, rhs }),
        }
    }
}

/// Parses a rule template against the labels of a domain.
pub fn parse_template(text: &str, vocab: &Vocabulary) -> Result<RuleTemplate, ParseError> {
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        vocab,
    };
    parser.template()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const TIGER_TEMPLATE: &str = "\
r_L: select Listen when (p_right <= x1 and p_left <= x2);
r_OR: select OpenR when p_right >= x3;
r_OL: select OpenL when p_left >= x4;
where x1 = x2 and x3 = x4 and x3 > 0.9;
";

    pub(crate) const VR_TEMPLATE: &str = "\
r_2: select S2 when diff(distr, seg, 0) >= x1 or diff(distr, seg, 2) <= x2
    or (diff(distr, seg, 0) >= x3 and diff(distr, seg, 1) >= x4);
where x1 >= 0.9;
";

    fn tiger() -> Vocabulary {
        Vocabulary::new(
            vec!["Listen".into(), "OpenL".into(), "OpenR".into()],
            vec!["right".into(), "left".into()],
        )
    }

    fn vr() -> Vocabulary {
        Vocabulary::new(
            vec!["S0".into(), "S1".into(), "S2".into()],
            vec!["clear".into(), "light".into(), "heavy".into()],
        )
    }

    #[test]
    fn parses_tiger_template() {
        let t = parse_template(TIGER_TEMPLATE, &tiger()).unwrap();
        assert_eq!(t.rules.len(), 3);
        assert_eq!(t.requirements.len(), 3);
        assert_eq!(t.variables(), vec!["x1", "x2", "x3", "x4"]);
        assert_eq!(t.rules[0].action, ActionId(0));
        assert_eq!(t.rules[0].body.len(), 1);
        assert_eq!(t.rules[0].body[0].len(), 2);
        assert_eq!(t.rules[1].action, ActionId(2));
        assert_eq!(t.rules[1].body[0][0].selector.category(), 0);
        assert_eq!(
            t.requirements[2],
            Requirement {
                lhs: Term::Var("x3".into()),
                cmp: ReqCmp::Gt,
                rhs: Term::Const(0.9)
            }
        );
    }

    #[test]
    fn parses_vr_template() {
        let t = parse_template(VR_TEMPLATE, &vr()).unwrap();
        assert_eq!(t.rules.len(), 1);
        assert_eq!(t.rules[0].action, ActionId(2));
        assert_eq!(t.rules[0].body.len(), 3);
        assert_eq!(t.rules[0].body[2].len(), 2);
        assert_eq!(t.requirements.len(), 1);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(parse_template("", &tiger()), Err(ParseError::Syntax { line: 1, column: 1, .. })));
        assert!(matches!(
            parse_template("r: select Jump when p_left >= x;", &tiger()),
            Err(ParseError::UnknownAction { column: 11, .. })
        ));
        assert!(matches!(
            parse_template("r: select Listen when p_up >= x;", &tiger()),
            Err(ParseError::UnknownSelector { .. })
        ));
        assert!(matches!(
            parse_template("a: select Listen when p_left >= x;\nb: select Listen when p_right >= y;", &tiger()),
            Err(ParseError::DuplicateAction(_))
        ));
        assert!(matches!(
            parse_template("a: select Listen when p_left >= x;\nwhere y > 0.5;", &tiger()),
            Err(ParseError::UnusedVariable(v)) if v == "y"
        ));
        assert!(matches!(
            parse_template("a: select Listen when p_left >= x\n", &tiger()),
            Err(ParseError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            parse_template("a: select Listen when p_left >= 1.5;", &tiger()),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            parse_template("a: select Listen when p_left >= x and p_right >= y;\nwhere x < y;", &tiger()),
            Err(ParseError::InvalidRequirement { .. })
        ));
    }

    #[test]
    fn distributes_parenthesised_disjunctions() {
        let t = parse_template("a: select Listen when (p_left >= x or p_right >= y) and p_left <= z;", &tiger()).unwrap();
        assert_eq!(t.rules[0].body.len(), 2);
        assert!(t.rules[0].body.iter().all(|c| c.len() == 2));
    }

    #[test]
    fn evaluate_examples() {
        let t = parse_template("a: select OpenR when p_right >= x;", &tiger()).unwrap();
        let body = &t.rules[0].body;
        let asg = BTreeMap::from([("x".to_string(), 0.95)]);
        let b = |p: f64| ProbVector::new(vec![p, 1.0 - p]).unwrap();
        assert!(evaluate(body, &asg, &b(0.97)).unwrap());
        assert!(!evaluate(body, &asg, &b(0.90)).unwrap());

        let v = parse_template(VR_TEMPLATE, &vr()).unwrap();
        let asg: BTreeMap<String, f64> = [("x1", 0.9), ("x2", 0.0), ("x3", 1.0), ("x4", 1.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let probs = ProbVector::new(vec![0.92, 0.05, 0.03]).unwrap();
        assert!(evaluate(&v.rules[0].body, &asg, &probs).unwrap());
    }

    #[test]
    fn evaluate_reports_missing_inputs() {
        let t = parse_template(VR_TEMPLATE, &vr()).unwrap();
        let short = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let asg: BTreeMap<String, f64> = ["x1", "x2", "x3", "x4"].iter().map(|k| (k.to_string(), 0.5)).collect();
        assert!(matches!(
            evaluate(&t.rules[0].body, &asg, &short),
            Err(EvalError::MissingSelector(_))
        ));
        let probs = ProbVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!(matches!(
            evaluate(&t.rules[0].body, &BTreeMap::new(), &probs),
            Err(EvalError::UnboundVariable(_))
        ));
    }

    #[test]
    fn rule_round_trips_through_text() {
        let t = parse_template(TIGER_TEMPLATE, &tiger()).unwrap();
        let asg: BTreeMap<String, f64> = [("x1", 0.85), ("x2", 0.85), ("x3", 0.9698), ("x4", 0.9698)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let rule = Rule::new(t, asg).unwrap();
        let text = rule.to_string();
        assert!(text.contains("p_right >= 0.9698"));
        let back = Rule::parse(&text, &tiger()).unwrap();
        assert_eq!(back.template, rule.instantiated());
    }

    #[test]
    fn rule_rejects_violated_requirements() {
        let t = parse_template(TIGER_TEMPLATE, &tiger()).unwrap();
        let asg: BTreeMap<String, f64> = [("x1", 0.85), ("x2", 0.8), ("x3", 0.95), ("x4", 0.95)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        assert!(Rule::new(t, asg).is_err());
    }

    fn arb_atom() -> impl Strategy<Value = Atom> {
        (
            prop_oneof![
                (0usize..2).prop_map(|c| Selector::State {
                    label: ["right", "left"][c].to_string(),
                    category: c
                }),
                (0usize..2).prop_map(|c| Selector::Diff { category: c }),
            ],
            prop_oneof![Just(Cmp::Lt), Just(Cmp::Le), Just(Cmp::Gt), Just(Cmp::Ge)],
            prop_oneof![
                (0usize..4).prop_map(|i| Threshold::Var(format!("x{i}"))),
                (0u32..=1000).prop_map(|k| Threshold::Const(k as f64 / 1000.0)),
            ],
        )
            .prop_map(|(selector, cmp, rhs)| Atom { selector, cmp, rhs })
    }

    proptest! {
        #[test]
        fn parse_inverts_display(
            bodies in prop::collection::vec(
                prop::collection::vec(prop::collection::vec(arb_atom(), 1..4), 1..4), 1..4)
        ) {
            let vocab = tiger();
            let rules: Vec<ActionRuleTemplate> = bodies
                .into_iter()
                .enumerate()
                .map(|(i, body)| ActionRuleTemplate {
                    name: format!("r{i}"),
                    action: ActionId(i),
                    action_label: vocab.actions[i].clone(),
                    body,
                })
                .collect();
            let template = RuleTemplate { rules, requirements: Vec::new() };
            let text = template.to_string();
            prop_assert_eq!(parse_template(&text, &vocab).unwrap(), template);
        }

        #[test]
        fn raising_a_lower_bound_never_enables(p in 0.0f64..=1.0, x in 0.0f64..=1.0, dx in 0.0f64..0.5) {
            let t = parse_template("a: select OpenR when p_right >= x;", &tiger()).unwrap();
            let probs = ProbVector::new(vec![p, 1.0 - p]).unwrap();
            let lo = evaluate(&t.rules[0].body, &BTreeMap::from([("x".into(), x)]), &probs).unwrap();
            let hi = evaluate(&t.rules[0].body, &BTreeMap::from([("x".into(), x + dx)]), &probs).unwrap();
            prop_assert!(!hi || lo);
        }
    }
}
