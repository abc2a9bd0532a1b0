//! Runtime shield: filters the actions POMCP may pick at the root.
//!
//! An action is legal when it has no rule, when its rule body holds on the
//! current belief, or when the belief lies within Hellinger distance `tau`
//! of one of the rule's representative beliefs. If nothing is legal the safe
//! action is used.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

use crate::belief::{hellinger2_unchecked, BeliefError, ProbVector};
use crate::domains::DomainKind;
use crate::model::ActionId;
use crate::rulelang::{evaluate, Body, EvalError, ParseError, Rule, Vocabulary};

/// Simplex draws allowed per requested representative.
pub const DRAWS_PER_REPRESENTATIVE: usize = 100_000;

#[derive(Debug, Error)]
pub enum ShieldError {
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("infeasible or near-infeasible rule region for {action}: {accepted} of {requested} representatives after {draws} draws")]
    InfeasibleRegion {
        action: String,
        accepted: usize,
        requested: usize,
        draws: usize,
    },
    #[error("no legal action and no safe action configured")]
    NoLegalAction,
    #[error("action {0} has no rule")]
    NoRule(ActionId),
    #[error("action {0} has no representatives")]
    NoRepresentatives(ActionId),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("rule references category {needed} but beliefs have {available} categories")]
    CategoryMismatch { needed: usize, available: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("invalid rule: {0}")]
    Rule(#[from] ParseError),
    #[error("shield file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegalActionSet {
    pub actions: Vec<ActionId>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShieldConfig {
    pub tau: f64,
    pub representatives: usize,
    pub seed: u64,
    pub safe_action: Option<ActionId>,
}

impl Default for ShieldConfig {
    fn default() -> Self {
        Self {
            tau: 0.10,
            representatives: 1000,
            seed: 0,
            safe_action: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shield {
    pub domain: DomainKind,
    pub rule: Rule,
    pub representatives: BTreeMap<ActionId, Vec<ProbVector>>,
    pub tau: f64,
    pub safe_action: Option<ActionId>,
    pub d: usize,
    pub seed: u64,
    vocab: Vocabulary,
}

fn mix(seed: u64, action: ActionId) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ (action.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `d` points drawn uniformly from the `k`-simplex, keeping only those on
/// which `body` holds.
pub fn generate_representatives(
    body: &Body,
    assignment: &BTreeMap<String, f64>,
    k: usize,
    d: usize,
    seed: u64,
) -> Result<Vec<ProbVector>, ShieldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = d.saturating_mul(DRAWS_PER_REPRESENTATIVE);
    let mut out = Vec::with_capacity(d);
    let mut draws = 0;
    let mut point = vec![0.0; k];
    while out.len() < d {
        if draws == budget {
            return Err(ShieldError::InfeasibleRegion {
                action: String::new(),
                accepted: out.len(),
                requested: d,
                draws,
            });
        }
        draws += 1;
        let mut total = 0.0;
        for p in point.iter_mut() {
            *p = Exp1.sample(&mut rng);
            total += *p;
        }
        for p in point.iter_mut() {
            *p /= total;
        }
        let v = ProbVector::new(point.clone())?;
        if evaluate(body, assignment, &v)? {
            out.push(v);
        }
    }
    Ok(out)
}

impl Shield {
    /// Samples `config.representatives` beliefs for every action rule.
    pub fn build(domain: DomainKind, rule: Rule, config: &ShieldConfig) -> Result<Self, ShieldError> {
        if !(0.0..=1.0).contains(&config.tau) {
            return Err(ShieldError::InvalidTau(config.tau));
        }
        let vocab = domain.vocabulary();
        let k = vocab.categories.len();
        // shields store the rule with its thresholds substituted
        let rule = Rule::new(rule.instantiated(), BTreeMap::new())?;
        if let Some(max) = rule.template.max_category() {
            if max >= k {
                return Err(ShieldError::CategoryMismatch {
                    needed: max + 1,
                    available: k,
                });
            }
        }
        let mut representatives = BTreeMap::new();
        for r in &rule.template.rules {
            let reps = generate_representatives(
                &r.body,
                &rule.assignment,
                k,
                config.representatives,
                mix(config.seed, r.action),
            )
            .map_err(|e| match e {
                ShieldError::InfeasibleRegion {
                    accepted,
                    requested,
                    draws,
                    ..
                } => ShieldError::InfeasibleRegion {
                    action: r.action_label.clone(),
                    accepted,
                    requested,
                    draws,
                },
                other => other,
            })?;
            representatives.insert(r.action, reps);
        }
        Ok(Self {
            domain,
            rule,
            representatives,
            tau: config.tau,
            safe_action: config.safe_action,
            d: config.representatives,
            seed: config.seed,
            vocab,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_actions(&self) -> usize {
        self.vocab.actions.len()
    }

    /// Smallest Hellinger distance between `probs` and a representative of
    /// `action`'s rule.
    pub fn hellinger_margin(&self, action: ActionId, probs: &ProbVector) -> Result<f64, ShieldError> {
        if self.rule.template.rule_for(action).is_none() {
            return Err(ShieldError::NoRule(action));
        }
        let reps = self
            .representatives
            .get(&action)
            .filter(|r| !r.is_empty())
            .ok_or(ShieldError::NoRepresentatives(action))?;
        let mut best = f64::INFINITY;
        for r in reps {
            if r.len() != probs.len() {
                return Err(BeliefError::LengthMismatch(r.len(), probs.len()).into());
            }
            best = best.min(hellinger2_unchecked(r.as_slice(), probs.as_slice()));
        }
        Ok(best)
    }

    fn is_legal(&self, action: ActionId, probs: &ProbVector) -> Result<bool, ShieldError> {
        let Some(r) = self.rule.template.rule_for(action) else {
            return Ok(true);
        };
        if evaluate(&r.body, &self.rule.assignment, probs)? {
            return Ok(true);
        }
        match self.hellinger_margin(action, probs) {
            Ok(m) => Ok(m < self.tau),
            Err(ShieldError::NoRepresentatives(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Actions allowed on a belief whose rule-relevant marginal is `probs`.
    pub fn legal_actions(&self, probs: &ProbVector) -> Result<LegalActionSet, ShieldError> {
        let mut actions = Vec::new();
        for a in 0..self.num_actions() {
            if self.is_legal(ActionId(a), probs)? {
                actions.push(ActionId(a));
            }
        }
        if !actions.is_empty() {
            return Ok(LegalActionSet {
                actions,
                fallback_used: false,
            });
        }
        let safe = self.safe_action.ok_or(ShieldError::NoLegalAction)?;
        Ok(LegalActionSet {
            actions: vec![safe],
            fallback_used: true,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "domain = {}", self.domain);
        let _ = writeln!(s, "tau = {:?}", self.tau);
        if let Some(a) = self.safe_action {
            let _ = writeln!(s, "safe_action = {}", self.vocab.actions[a.0]);
        }
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "seed = {}", self.seed);
        s.push_str("rule:\n");
        let _ = write!(s, "{}", self.rule);
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s.push_str("end\n");
        for (a, reps) in &self.representatives {
            let _ = writeln!(s, "representatives {}:", self.vocab.actions[a.0]);
            for r in reps {
                let row: Vec<String> = r.as_slice().iter().map(|p| format!("{p:?}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
            s.push_str("end\n");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ShieldError> {
        let fmt_err = |line: usize, message: String| ShieldError::Format { line, message };
        let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut rule_text: Option<String> = None;
        let mut reps_raw: Vec<(usize, String, Vec<(usize, String)>)> = Vec::new();

        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        while let Some((n, line)) = lines.next() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if t == "rule:" {
                let mut body = String::new();
                loop {
                    let (_, l) = lines
                        .next()
                        .ok_or_else(|| fmt_err(n, "rule block is not closed by `end`".into()))?;
                    if l.trim() == "end" {
                        break;
                    }
                    body.push_str(l);
                    body.push('\n');
                }
                rule_text = Some(body);
            } else if let Some(rest) = t.strip_prefix("representatives ") {
                let label = rest
                    .strip_suffix(':')
                    .ok_or_else(|| fmt_err(n, "expected `representatives <Action>:`".into()))?
                    .trim()
                    .to_string();
                let mut rows = Vec::new();
                loop {
                    let (m, l) = lines.next().ok_or_else(|| {
                        fmt_err(n, "representatives block is not closed by `end`".into())
                    })?;
                    let l = l.trim();
                    if l == "end" {
                        break;
                    }
                    if !l.is_empty() {
                        rows.push((m, l.to_string()));
                    }
                }
                reps_raw.push((n, label, rows));
            } else if let Some((k, v)) = t.split_once('=') {
                header.insert(k.trim().to_string(), (n, v.trim().to_string()));
            } else {
                return Err(fmt_err(n, format!("unexpected line `{t}`")));
            }
        }

        let get = |key: &str| {
            header
                .get(key)
                .ok_or_else(|| fmt_err(0, format!("missing header key `{key}`")))
        };
        let parse_key = |key: &str| -> Result<(usize, String), ShieldError> { get(key).cloned() };

        let (n, domain) = parse_key("domain")?;
        let domain: DomainKind = domain.parse().map_err(|e| fmt_err(n, e))?;
        let vocab = domain.vocabulary();
        let (n, tau) = parse_key("tau")?;
        let tau: f64 = tau
            .parse()
            .map_err(|_| fmt_err(n, format!("invalid tau `{tau}`")))?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(ShieldError::InvalidTau(tau));
        }
        let (n, d) = parse_key("d")?;
        let d: usize = d.parse().map_err(|_| fmt_err(n, format!("invalid d `{d}`")))?;
        let (n, seed) = parse_key("seed")?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| fmt_err(n, format!("invalid seed `{seed}`")))?;
        let safe_action = match header.get("safe_action") {
            None => None,
            Some((n, label)) => Some(ActionId(
                vocab
                    .actions
                    .iter()
                    .position(|a| a == label)
                    .ok_or_else(|| fmt_err(*n, format!("unknown safe action `{label}`")))?,
            )),
        };

        let rule_text = rule_text.ok_or_else(|| fmt_err(0, "missing `rule:` block".into()))?;
        let rule = Rule::parse(&rule_text, &vocab)?;

        let k = vocab.categories.len();
        let mut representatives = BTreeMap::new();
        for (n, label, rows) in reps_raw {
            let a = vocab
                .actions
                .iter()
                .position(|x| *x == label)
                .map(ActionId)
                .ok_or_else(|| fmt_err(n, format!("unknown action `{label}`")))?;
            let mut reps = Vec::with_capacity(rows.len());
            for (m, row) in rows {
                let v: Vec<f64> = row
                    .split_whitespace()
                    .map(|x| x.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| fmt_err(m, format!("invalid probability row `{row}`")))?;
                if v.len() != k {
                    return Err(fmt_err(m, format!("expected {k} probabilities, got {}", v.len())));
                }
                reps.push(ProbVector::new(v).map_err(|e| fmt_err(m, e.to_string()))?);
            }
            representatives.insert(a, reps);
        }

        Ok(Self {
            domain,
            rule,
            representatives,
            tau,
            safe_action,
            d,
            seed,
            vocab,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ShieldError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ShieldError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiger_rule(listen: f64, open: f64) -> Rule {
        let text = format!(
            "r_L: select Listen when p_right <= {listen} and p_left <= {listen};\n\
             r_OR: select OpenR when p_right >= {open};\n\
             r_OL: select OpenL when p_left >= {open};\n"
        );
        Rule::parse(&text, &DomainKind::Tiger.vocabulary()).unwrap()
    }

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn representatives_satisfy_rule() {
        let rule = Rule::parse("r: select OpenL when p_left >= 0.9;", &DomainKind::Tiger.vocabulary()).unwrap();
        let body = &rule.template.rules[0].body;
        let reps = generate_representatives(body, &rule.assignment, 2, 1000, 3).unwrap();
        assert_eq!(reps.len(), 1000);
        assert!(reps.iter().all(|r| r.get(1).unwrap() >= 0.9));
        assert!(generate_representatives(body, &rule.assignment, 2, 0, 3).unwrap().is_empty());
        let again = generate_representatives(body, &rule.assignment, 2, 1000, 3).unwrap();
        assert_eq!(reps, again);
    }

    #[test]
    fn empty_region_is_infeasible() {
        let rule = Rule::parse(
            "r: select OpenL when p_left >= 0.9 and p_left <= 0.1;",
            &DomainKind::Tiger.vocabulary(),
        )
        .unwrap();
        let err = generate_representatives(&rule.template.rules[0].body, &rule.assignment, 2, 2, 0);
        assert!(matches!(err, Err(ShieldError::InfeasibleRegion { .. })));
    }

    #[test]
    fn no_rules_means_everything_is_legal() {
        let mut shield = Shield::build(DomainKind::Tiger, tiger_rule(0.85, 0.97), &ShieldConfig {
            representatives: 0,
            ..ShieldConfig::default()
        })
        .unwrap();
        shield.rule.template.rules.clear();
        let legal = shield.legal_actions(&pv(&[0.3, 0.7])).unwrap();
        assert_eq!(legal.actions, vec![ActionId(0), ActionId(1), ActionId(2)]);
        assert!(!legal.fallback_used);
    }

    #[test]
    fn tiger_legal_set() {
        let mut shield = Shield::build(DomainKind::Tiger, tiger_rule(0.85, 0.97), &ShieldConfig {
            representatives: 0,
            safe_action: Some(ActionId(0)),
            ..ShieldConfig::default()
        })
        .unwrap();
        shield
            .representatives
            .insert(ActionId(0), vec![pv(&[0.85, 0.15])]);
        let legal = shield.legal_actions(&pv(&[0.97, 0.03])).unwrap();
        assert_eq!(legal.actions, vec![ActionId(2)]);
        let m = shield.hellinger_margin(ActionId(0), &pv(&[0.97, 0.03])).unwrap();
        assert!(m > 0.10);

        // nothing holds and every margin is too large: fall back to Listen
        shield.rule = tiger_rule(0.85, 1.0);
        let legal = shield.legal_actions(&pv(&[0.999, 0.001])).unwrap();
        assert_eq!(legal.actions, vec![ActionId(0)]);
        assert!(legal.fallback_used);
        shield.safe_action = None;
        assert!(matches!(
            shield.legal_actions(&pv(&[0.999, 0.001])),
            Err(ShieldError::NoLegalAction)
        ));
    }

    #[test]
    fn margin_examples() {
        let mut shield = Shield::build(DomainKind::Tiger, tiger_rule(0.85, 0.97), &ShieldConfig {
            representatives: 0,
            ..ShieldConfig::default()
        })
        .unwrap();
        assert!(matches!(
            shield.hellinger_margin(ActionId(1), &pv(&[0.5, 0.5])),
            Err(ShieldError::NoRepresentatives(_))
        ));
        shield.representatives.insert(ActionId(1), vec![pv(&[1.0, 0.0])]);
        let m = shield.hellinger_margin(ActionId(1), &pv(&[0.5, 0.5])).unwrap();
        assert!((m - 0.541196).abs() < 1e-6);
        assert_eq!(shield.hellinger_margin(ActionId(1), &pv(&[1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn file_round_trip() {
        let shield = Shield::build(DomainKind::Tiger, tiger_rule(0.85, 0.97), &ShieldConfig {
            representatives: 20,
            safe_action: Some(ActionId(0)),
            seed: 9,
            ..ShieldConfig::default()
        })
        .unwrap();
        let back = Shield::from_text(&shield.to_text()).unwrap();
        assert_eq!(back, shield);
    }

    #[test]
    fn malformed_file_reports_line() {
        let err = Shield::from_text("domain = tiger\ntau = 0.1\nd = 1\nseed = 0\nwhat\n").unwrap_err();
        assert!(matches!(err, ShieldError::Format { line: 5, .. }), "{err}");
    }
}
