//! Evaluation harness: unshielded versus shielded POMCP over a sweep of
//! exploration constants.
//!
//! For every `c` the unshielded planner produces a trace, a rule is learned
//! from that trace, a shield is built from the rule, and the shielded planner
//! is run again with the same per-run seeds so that the two samples are
//! paired.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, InterventionCount};
use crate::belief::BeliefError;
use crate::domains::{vocabulary_of, DomainKind, TigerModel, VelocityRegulationModel, VrMap};
use crate::model::Simulator;
use crate::planner::PlannerConfig;
use crate::rulelang::parse_template;
use crate::rulelearn::{learn, EnumerativeBackend, LearnedRule, TightenMode};
use crate::shield::{Shield, ShieldConfig};
use crate::stats::{mean, paired_t_test, relative_increase, std_dev};
use crate::tracelog::{Run, Step, Trace, TraceMeta};
use crate::Error;

pub const TIGER_TEMPLATE: &str = "\
r_L: select Listen when (p_right <= x1 and p_left <= x2);
r_OR: select OpenR when p_right >= x3;
r_OL: select OpenL when p_left >= x4;
where x1 = x2 and x3 = x4 and x3 > 0.9;
";

pub const VR_TEMPLATE: &str = "\
r_2: select S2 when diff(distr, seg, 0) >= x1 or diff(distr, seg, 2) <= x2
    or (diff(distr, seg, 0) >= x3 and diff(distr, seg, 1) >= x4);
where x1 >= 0.9;
";

pub fn default_template(domain: DomainKind) -> &'static str {
    match domain {
        DomainKind::Tiger => TIGER_TEMPLATE,
        DomainKind::Vr => VR_TEMPLATE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainKind,
    pub particles: usize,
    /// Simulations per search; defaults to the particle count.
    pub simulations: Option<usize>,
    pub runs: usize,
    /// Steps per run; defaults to the domain horizon.
    pub max_steps: Option<usize>,
    pub c_values: Vec<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub representatives: usize,
    pub seed: u64,
    /// Fixed shield used for every `c` instead of learning one per trace.
    pub shield: Option<PathBuf>,
    /// Rule template file; the domain's built-in template otherwise.
    pub template: Option<PathBuf>,
    pub safe_action: Option<String>,
    /// Velocity Regulation map (JSON); the built-in map otherwise.
    pub map: Option<PathBuf>,
    pub intervention_count: InterventionCount,
    pub permissive: bool,
    pub log_particles: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_domain(DomainKind::Tiger)
    }
}

impl ExperimentConfig {
    pub fn for_domain(domain: DomainKind) -> Self {
        let (runs, c_values, safe_action) = match domain {
            DomainKind::Tiger => (1000, vec![110.0, 80.0, 60.0, 40.0], Some("Listen".to_string())),
            DomainKind::Vr => (100, vec![103.0, 90.0, 70.0, 50.0], None),
        };
        Self {
            domain,
            particles: 1 << 15,
            simulations: None,
            runs,
            max_steps: None,
            c_values,
            gamma: 0.95,
            tau: 0.10,
            representatives: 1000,
            seed: 0,
            shield: None,
            template: None,
            safe_action,
            map: None,
            intervention_count: InterventionCount::Shadow,
            permissive: false,
            log_particles: false,
        }
    }

    /// Parses a JSON config. Keys that are absent take the defaults of the
    /// configured domain.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let given: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(given) = given else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let domain = match given.get("domain") {
            Some(d) => serde_json::from_value(d.clone())?,
            None => DomainKind::Tiger,
        };
        let mut merged = serde_json::to_value(Self::for_domain(domain))?;
        let fields = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in given {
            fields.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.particles == 0 {
            return bad("particles must be at least 1");
        }
        if self.simulations == Some(0) {
            return bad("simulations must be at least 1");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be at least 1");
        }
        if self.c_values.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return bad("every c must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        Ok(())
    }

    fn planner_config<M: Simulator>(&self, model: &M, c: f64) -> PlannerConfig {
        PlannerConfig {
            num_simulations: self.simulations.unwrap_or(self.particles),
            exploration: c,
            gamma: self.gamma,
            max_depth: model.horizon(),
        }
    }

    fn template_text(&self) -> Result<String, Error> {
        match &self.template {
            Some(p) => Ok(std::fs::read_to_string(p)?),
            None => Ok(default_template(self.domain).to_string()),
        }
    }

    pub fn tighten_mode(&self) -> TightenMode {
        if self.permissive {
            TightenMode::Permissive
        } else {
            TightenMode::Restrictive
        }
    }
}

/// Result of one run. `discounted_return` is `None` when the run was aborted
/// by particle deprivation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub discounted_return: Option<f64>,
    pub seconds: f64,
    pub steps: usize,
    pub interventions: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub runs: Vec<RunOutcome>,
    pub trace: Option<Trace>,
}

impl EpisodeBatch {
    pub fn returns(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.discounted_return).collect()
    }

    pub fn seconds(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.seconds).collect()
    }

    pub fn interventions(&self) -> usize {
        self.runs.iter().map(|r| r.interventions).sum()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.discounted_return.is_none()).count()
    }

    pub fn total_steps(&self) -> usize {
        self.runs.iter().map(|r| r.steps).sum()
    }
}

/// Runs `cfg.runs` episodes; run `i` uses seed `cfg.seed + i` for both the
/// planner and (on a separate stream) the environment.
pub fn run_episodes<M: Simulator + Clone>(
    model: &M,
    cfg: &ExperimentConfig,
    c: f64,
    shield: Option<Arc<Shield>>,
    record_trace: bool,
) -> Result<EpisodeBatch, Error> {
    cfg.validate()?;
    let planner_cfg = cfg.planner_config(model, c);
    let max_steps = cfg.max_steps.unwrap_or(model.horizon());
    let mut trace = record_trace.then(|| {
        Trace::new(TraceMeta {
            domain: model.name().to_string(),
            particles: cfg.particles,
            c,
            seed: cfg.seed,
        })
    });
    let labels = model.action_labels();
    let mut runs = Vec::with_capacity(cfg.runs);

    for i in 0..cfg.runs {
        let seed = cfg.seed.wrapping_add(i as u64);
        let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
        env_rng.set_stream(1);
        let mut agent = Agent::new(model.clone(), planner_cfg.clone(), cfg.particles, shield.clone(), seed)?
            .with_intervention_count(cfg.intervention_count);
        let mut state = model.sample_environment_initial(&mut env_rng);
        let mut outcome = RunOutcome {
            discounted_return: Some(0.0),
            seconds: 0.0,
            steps: 0,
            interventions: 0,
            fallbacks: 0,
        };
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut steps = Vec::new();

        for t in 0..max_steps {
            let decision = agent.decide()?;
            let result = model.step(&state, decision.action, &mut env_rng);
            ret += discount * result.reward;
            discount *= cfg.gamma;
            outcome.steps += 1;
            outcome.interventions += decision.intervened as usize;
            outcome.fallbacks += decision.fallback_used as usize;
            if record_trace {
                let particles = cfg.log_particles.then(|| {
                    agent
                        .belief()
                        .particles()
                        .iter()
                        .map(|s| model.state_code(s))
                        .collect()
                });
                steps.push(Step {
                    run_index: i,
                    step_index: t,
                    summary: decision.summary,
                    action: decision.action,
                    action_label: labels[decision.action.0].clone(),
                    observation: result.observation,
                    particles,
                });
            }
            if result.terminal || t + 1 == max_steps {
                break;
            }
            match agent.observe(decision.action, result.observation) {
                Ok(()) => {}
                Err(Error::Belief(BeliefError::ParticleDeprivation(_))) => {
                    outcome.discounted_return = None;
                    break;
                }
                Err(e) => return Err(e),
            }
            state = result.next_state;
        }
        if outcome.discounted_return.is_some() {
            outcome.discounted_return = Some(ret);
        }
        outcome.seconds = agent.busy_time().as_secs_f64();
        if let Some(trace) = trace.as_mut() {
            trace.runs.push(Run { steps });
        }
        runs.push(outcome);
    }
    Ok(EpisodeBatch { runs, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub c: f64,
    pub return_mean: f64,
    pub return_sd: f64,
    pub time_mean: f64,
    pub time_sd: f64,
    pub shielded_return_mean: f64,
    pub shielded_return_sd: f64,
    pub shielded_time_mean: f64,
    pub shielded_time_sd: f64,
    pub relative_increase: Option<f64>,
    pub interventions: usize,
    pub steps: usize,
    pub t: f64,
    pub significant: bool,
    pub failures: usize,
    pub rule: Option<String>,
}

impl EvalRow {
    /// Statistics over the runs that completed in both batches.
    pub fn from_batches(
        c: f64,
        unshielded: &EpisodeBatch,
        shielded: &EpisodeBatch,
        rule: Option<String>,
    ) -> Result<Self, Error> {
        let (a, b): (Vec<f64>, Vec<f64>) = unshielded
            .runs
            .iter()
            .zip(&shielded.runs)
            .filter_map(|(u, s)| Some((u.discounted_return?, s.discounted_return?)))
            .unzip();
        let test = paired_t_test(&a, &b, 0.05)?;
        let (ut, st) = (unshielded.seconds(), shielded.seconds());
        Ok(Self {
            c,
            return_mean: mean(&a),
            return_sd: std_dev(&a),
            time_mean: mean(&ut),
            time_sd: std_dev(&ut),
            shielded_return_mean: mean(&b),
            shielded_return_sd: std_dev(&b),
            shielded_time_mean: mean(&st),
            shielded_time_sd: std_dev(&st),
            relative_increase: relative_increase(mean(&a), mean(&b)),
            interventions: shielded.interventions(),
            steps: shielded.total_steps(),
            t: test.t,
            significant: test.significant,
            failures: unshielded.failures() + shielded.failures(),
            rule,
        })
    }
}

fn ri_text(ri: Option<f64>) -> String {
    ri.map_or_else(|| "—".to_string(), |v| format!("{v:.2}%"))
}

/// Human-readable table and a CSV with the deterministic columns.
///
/// Wall-clock times appear only in the text table so that the CSV is
/// reproducible byte for byte.
pub fn emit_table(rows: &[EvalRow]) -> (String, String) {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:>8}  {:>18}  {:>16}  {:>18}  {:>9}  {:>16}  {:>6}  {:>4}",
        "c", "return", "time (s)", "shielded return", "RI", "time (s)", "#SA", "sig"
    );
    for r in rows {
        let _ = writeln!(
            text,
            "{:>8}  {:>18}  {:>16}  {:>18}  {:>9}  {:>16}  {:>6}  {:>4}",
            r.c,
            format!("{:.3} (± {:.3})", r.return_mean, r.return_sd),
            format!("{:.3} (± {:.3})", r.time_mean, r.time_sd),
            format!("{:.3} (± {:.3})", r.shielded_return_mean, r.shielded_return_sd),
            ri_text(r.relative_increase),
            format!("{:.3} (± {:.3})", r.shielded_time_mean, r.shielded_time_sd),
            r.interventions,
            if r.significant { "*" } else { "" },
        );
    }

    let mut csv = String::from(
        "c,return_mean,return_sd,shielded_return_mean,shielded_return_sd,ri_percent,interventions,steps,t,significant,failures\n",
    );
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{:.6},{},{}",
            r.c,
            r.return_mean,
            r.return_sd,
            r.shielded_return_mean,
            r.shielded_return_sd,
            r.relative_increase.map_or_else(|| "—".to_string(), |v| format!("{v:.2}")),
            r.interventions,
            r.steps,
            r.t,
            r.significant,
            r.failures,
        );
    }
    (text, csv)
}

/// The configured simulator.
#[derive(Debug, Clone)]
pub enum DomainModel {
    Tiger(TigerModel),
    Vr(VelocityRegulationModel),
}

impl DomainModel {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, Error> {
        Ok(match cfg.domain {
            DomainKind::Tiger => DomainModel::Tiger(TigerModel::default()),
            DomainKind::Vr => {
                let map = match &cfg.map {
                    Some(p) => VrMap::load(p)?,
                    None => VrMap::default(),
                };
                DomainModel::Vr(VelocityRegulationModel::new(map)?)
            }
        })
    }
}

/// Calls `$body` with `$m` bound to the concrete simulator.
macro_rules! with_model {
    ($dm:expr, $m:ident => $body:expr) => {
        match $dm {
            DomainModel::Tiger($m) => $body,
            DomainModel::Vr($m) => $body,
        }
    };
}

/// Generates a trace with the unshielded planner.
pub fn generate_trace(cfg: &ExperimentConfig, c: f64) -> Result<(Trace, EpisodeBatch), Error> {
    let dm = DomainModel::from_config(cfg)?;
    let mut batch = with_model!(&dm, m => run_episodes(m, cfg, c, None, true))?;
    let trace = batch.trace.take().expect("trace was recorded");
    Ok((trace, batch))
}

/// Learns a rule from `trace` with the configured template.
pub fn learn_rule(cfg: &ExperimentConfig, trace: &Trace) -> Result<LearnedRule, Error> {
    let vocab = cfg.domain.vocabulary();
    let template = parse_template(&cfg.template_text()?, &vocab)?;
    Ok(learn(trace, &template, &EnumerativeBackend, cfg.tighten_mode())?)
}

pub fn shield_config(cfg: &ExperimentConfig) -> Result<ShieldConfig, Error> {
    let vocab = cfg.domain.vocabulary();
    let safe_action = match &cfg.safe_action {
        None => None,
        Some(label) => Some(
            vocab
                .actions
                .iter()
                .position(|a| a == label)
                .map(crate::model::ActionId)
                .ok_or_else(|| Error::Config(format!("unknown safe action `{label}`")))?,
        ),
    };
    Ok(ShieldConfig {
        tau: cfg.tau,
        representatives: cfg.representatives,
        seed: cfg.seed,
        safe_action,
    })
}

/// Full sweep over `cfg.c_values`.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Vec<EvalRow>, Error> {
    cfg.validate()?;
    let dm = DomainModel::from_config(cfg)?;
    let fixed = match &cfg.shield {
        Some(p) => Some(Arc::new(Shield::load(p)?)),
        None => None,
    };
    let mut rows = Vec::with_capacity(cfg.c_values.len());
    for &c in &cfg.c_values {
        let mut unshielded = with_model!(&dm, m => run_episodes(m, cfg, c, None, fixed.is_none()))?;
        let shield = match &fixed {
            Some(s) => s.clone(),
            None => {
                let trace = unshielded.trace.take().expect("trace was recorded");
                let learned = learn_rule(cfg, &trace)?;
                Arc::new(Shield::build(cfg.domain, learned.rule, &shield_config(cfg)?)?)
            }
        };
        let shielded = with_model!(&dm, m => run_episodes(m, cfg, c, Some(shield.clone()), false))?;
        rows.push(EvalRow::from_batches(
            c,
            &unshielded,
            &shielded,
            Some(shield.rule.to_string()),
        )?);
    }
    Ok(rows)
}

/// Labels and categories of the configured domain.
pub fn vocabulary(cfg: &ExperimentConfig) -> Result<crate::rulelang::Vocabulary, Error> {
    let dm = DomainModel::from_config(cfg)?;
    Ok(with_model!(&dm, m => vocabulary_of(m)))
}
