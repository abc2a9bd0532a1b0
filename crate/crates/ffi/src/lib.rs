//! C ABI over `pomcp-shield`.
//!
//! Every function returns a [`PomcpStatus`]; on failure the message is kept
//! per thread and can be read with [`pomcp_last_error_message`]. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use pomcp_shield::agent::Agent;
use pomcp_shield::belief::{hellinger2, ProbVector};
use pomcp_shield::domains::tiger::TigerModel;
use pomcp_shield::domains::vr::VelocityRegulationModel;
use pomcp_shield::domains::DomainKind;
use pomcp_shield::experiment::default_template;
use pomcp_shield::model::{ActionId, ObservationId, Simulator};
use pomcp_shield::planner::PlannerConfig;
use pomcp_shield::rulelang::parse_template;
use pomcp_shield::rulelearn::{self, EnumerativeBackend, TightenMode};
use pomcp_shield::shield::Shield;
use pomcp_shield::tracelog::read_xes;
use pomcp_shield::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PomcpStatus {
    Ok = 0,
    Null = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Learn = 5,
    Shield = 6,
    Plan = 7,
    Belief = 8,
    Panic = 9,
    BufferTooSmall = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PomcpDomain {
    Tiger = 0,
    Vr = 1,
}

impl From<PomcpDomain> for DomainKind {
    fn from(d: PomcpDomain) -> Self {
        match d {
            PomcpDomain::Tiger => DomainKind::Tiger,
            PomcpDomain::Vr => DomainKind::Vr,
        }
    }
}

/// A loaded shield.
pub struct PomcpShield {
    inner: Arc<Shield>,
}

enum AgentKind {
    Tiger(Agent<TigerModel>),
    Vr(Agent<VelocityRegulationModel>),
}

macro_rules! with_agent {
    ($a:expr, $g:ident => $body:expr) => {
        match $a {
            AgentKind::Tiger($g) => $body,
            AgentKind::Vr($g) => $body,
        }
    };
}

/// A planning session for one episode.
pub struct PomcpAgent {
    inner: AgentKind,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(PomcpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Belief(_) => PomcpStatus::Belief,
            Error::Plan(_) => PomcpStatus::Plan,
            Error::Parse(_) | Error::Xes(_) | Error::Json(_) | Error::Map(_) => PomcpStatus::Parse,
            Error::Eval(_) | Error::Shield(_) => PomcpStatus::Shield,
            Error::Learn(_) => PomcpStatus::Learn,
            Error::Io(_) => PomcpStatus::Io,
            _ => PomcpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: PomcpStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PomcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PomcpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PomcpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(PomcpStatus::Null, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(PomcpStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn probs_arg(p: *const f64, len: usize, name: &str) -> Result<ProbVector, Failure> {
    if p.is_null() {
        return fail(PomcpStatus::Null, format!("{name} is null"));
    }
    let v = std::slice::from_raw_parts(p, len).to_vec();
    ProbVector::new(v).map_err(|e| Failure(PomcpStatus::Belief, e.to_string()))
}

fn shield_err(e: impl Into<Error>) -> Failure {
    Failure::from(e.into())
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pomcp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Squared Hellinger distance between two distributions of length `len`.
///
/// # Safety
/// `p` and `q` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_hellinger2(
    p: *const f64,
    q: *const f64,
    len: usize,
    out: *mut f64,
) -> PomcpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PomcpStatus::Null, "out is null");
        }
        let p = probs_arg(p, len, "p")?;
        let q = probs_arg(q, len, "q")?;
        *out = hellinger2(&p, &q).map_err(|e| Failure(PomcpStatus::Belief, e.to_string()))?;
        Ok(())
    })
}

/// Reads a shield file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_shield_load(
    path: *const c_char,
    out: *mut *mut PomcpShield,
) -> PomcpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PomcpStatus::Null, "out is null");
        }
        let path = str_arg(path, "path")?;
        let shield = Shield::load(Path::new(path)).map_err(shield_err)?;
        *out = Box::into_raw(Box::new(PomcpShield { inner: Arc::new(shield) }));
        Ok(())
    })
}

/// Parses a shield from its text form.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_shield_from_text(
    text: *const c_char,
    out: *mut *mut PomcpShield,
) -> PomcpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PomcpStatus::Null, "out is null");
        }
        let text = str_arg(text, "text")?;
        let shield = Shield::from_text(text).map_err(shield_err)?;
        *out = Box::into_raw(Box::new(PomcpShield { inner: Arc::new(shield) }));
        Ok(())
    })
}

/// Number of actions the shield knows about.
///
/// # Safety
/// `shield` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_shield_num_actions(
    shield: *const PomcpShield,
    out: *mut usize,
) -> PomcpStatus {
    guard(|| {
        if shield.is_null() || out.is_null() {
            return fail(PomcpStatus::Null, "null argument");
        }
        *out = (*shield).inner.num_actions();
        Ok(())
    })
}

/// Writes the legal actions for the focus marginal `probs` into `actions`.
///
/// `*count` is set to the number of legal actions; when it exceeds
/// `capacity`, nothing is written and `BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `probs` must hold `len` doubles, `actions` `capacity` writable slots (may
/// be null when `capacity` is 0); `count` and `fallback_used` must be
/// writable, `fallback_used` may be null.
#[no_mangle]
pub unsafe extern "C" fn pomcp_shield_legal_actions(
    shield: *const PomcpShield,
    probs: *const f64,
    len: usize,
    actions: *mut u32,
    capacity: usize,
    count: *mut usize,
    fallback_used: *mut bool,
) -> PomcpStatus {
    guard(|| {
        if shield.is_null() || count.is_null() {
            return fail(PomcpStatus::Null, "null argument");
        }
        let probs = probs_arg(probs, len, "probs")?;
        let set = (*shield).inner.legal_actions(&probs).map_err(shield_err)?;
        *count = set.actions.len();
        if !fallback_used.is_null() {
            *fallback_used = set.fallback_used;
        }
        if set.actions.len() > capacity {
            return fail(
                PomcpStatus::BufferTooSmall,
                format!("{} actions do not fit in {capacity}", set.actions.len()),
            );
        }
        if !set.actions.is_empty() && actions.is_null() {
            return fail(PomcpStatus::Null, "actions is null");
        }
        for (i, a) in set.actions.iter().enumerate() {
            *actions.add(i) = a.0 as u32;
        }
        Ok(())
    })
}

/// Smallest squared Hellinger distance from `probs` to a representative of
/// `action`.
///
/// # Safety
/// `probs` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_shield_margin(
    shield: *const PomcpShield,
    action: u32,
    probs: *const f64,
    len: usize,
    out: *mut f64,
) -> PomcpStatus {
    guard(|| {
        if shield.is_null() || out.is_null() {
            return fail(PomcpStatus::Null, "null argument");
        }
        let probs = probs_arg(probs, len, "probs")?;
        *out = (*shield)
            .inner
            .hellinger_margin(ActionId(action as usize), &probs)
            .map_err(shield_err)?;
        Ok(())
    })
}

/// # Safety
/// `shield` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pomcp_shield_free(shield: *mut PomcpShield) {
    if !shield.is_null() {
        drop(Box::from_raw(shield));
    }
}

fn make_agent<M: Simulator>(
    model: M,
    particles: usize,
    simulations: usize,
    c: f64,
    gamma: f64,
    shield: Option<Arc<Shield>>,
    seed: u64,
) -> Result<Agent<M>, Failure> {
    let mut config = PlannerConfig::for_model(&model, if simulations == 0 { particles } else { simulations });
    if c > 0.0 {
        config.exploration = c;
    }
    if gamma > 0.0 {
        config.gamma = gamma;
    }
    Ok(Agent::new(model, config, particles, shield, seed)?)
}

/// Creates an agent with the domain's default model.
///
/// `simulations == 0` uses the particle count, `c <= 0` the reward range and
/// `gamma <= 0` the default discount. `shield` may be null.
///
/// # Safety
/// `shield` must be null or come from this library; `out` must be writable.
/// The agent keeps its own reference to the shield.
#[no_mangle]
pub unsafe extern "C" fn pomcp_agent_new(
    domain: PomcpDomain,
    particles: usize,
    simulations: usize,
    c: f64,
    gamma: f64,
    seed: u64,
    shield: *const PomcpShield,
    out: *mut *mut PomcpAgent,
) -> PomcpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PomcpStatus::Null, "out is null");
        }
        if gamma > 1.0 || !c.is_finite() || !gamma.is_finite() {
            return fail(PomcpStatus::InvalidArgument, "c and gamma must be finite, gamma <= 1");
        }
        let kind = DomainKind::from(domain);
        let shield = if shield.is_null() {
            None
        } else {
            let s = &(*shield).inner;
            if s.domain != kind {
                return fail(
                    PomcpStatus::InvalidArgument,
                    format!("shield is for {}, agent for {kind}", s.domain),
                );
            }
            Some(Arc::clone(s))
        };
        let inner = match kind {
            DomainKind::Tiger => AgentKind::Tiger(make_agent(
                TigerModel::default(),
                particles,
                simulations,
                c,
                gamma,
                shield,
                seed,
            )?),
            DomainKind::Vr => AgentKind::Vr(make_agent(
                VelocityRegulationModel::default(),
                particles,
                simulations,
                c,
                gamma,
                shield,
                seed,
            )?),
        };
        *out = Box::into_raw(Box::new(PomcpAgent { inner }));
        Ok(())
    })
}

/// Searches from the current belief and returns the chosen action.
///
/// # Safety
/// `agent` must come from this library; `action` must be writable and
/// `intervened` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_agent_select_action(
    agent: *mut PomcpAgent,
    action: *mut u32,
    intervened: *mut bool,
) -> PomcpStatus {
    guard(|| {
        if agent.is_null() || action.is_null() {
            return fail(PomcpStatus::Null, "null argument");
        }
        let decision = with_agent!(&mut (*agent).inner, a => a.decide())?;
        *action = decision.action.0 as u32;
        if !intervened.is_null() {
            *intervened = decision.intervened;
        }
        Ok(())
    })
}

/// Updates the belief with the executed action and the real observation.
///
/// # Safety
/// `agent` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn pomcp_agent_observe(
    agent: *mut PomcpAgent,
    action: u32,
    observation: u32,
) -> PomcpStatus {
    guard(|| {
        if agent.is_null() {
            return fail(PomcpStatus::Null, "agent is null");
        }
        let inner = &mut (*agent).inner;
        let (na, no) = with_agent!(&*inner, a => (a.model().num_actions(), a.model().num_observations()));
        if action as usize >= na || observation as usize >= no {
            return fail(PomcpStatus::InvalidArgument, "action or observation out of range");
        }
        with_agent!(inner, a => a.observe(ActionId(action as usize), ObservationId(observation as usize)))?;
        Ok(())
    })
}

/// Writes the focus marginal of the current belief into `probs`.
///
/// `*len` is set to the number of categories; `BUFFER_TOO_SMALL` is returned
/// when it exceeds `capacity`.
///
/// # Safety
/// `probs` must have `capacity` writable slots and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_agent_belief(
    agent: *const PomcpAgent,
    probs: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> PomcpStatus {
    guard(|| {
        if agent.is_null() || len.is_null() {
            return fail(PomcpStatus::Null, "null argument");
        }
        let summary = with_agent!(&(*agent).inner, a => a.summary())?;
        let focus = summary.focused().as_slice();
        *len = focus.len();
        if focus.len() > capacity {
            return fail(
                PomcpStatus::BufferTooSmall,
                format!("{} categories do not fit in {capacity}", focus.len()),
            );
        }
        if probs.is_null() {
            return fail(PomcpStatus::Null, "probs is null");
        }
        ptr::copy_nonoverlapping(focus.as_ptr(), probs, focus.len());
        Ok(())
    })
}

/// # Safety
/// `agent` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pomcp_agent_free(agent: *mut PomcpAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Learns rule thresholds from an XES trace and returns the rule text.
///
/// `template_path` may be null to use the domain's built-in template. The
/// returned string must be released with [`pomcp_string_free`].
///
/// # Safety
/// Paths must be NUL-terminated strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pomcp_learn_rule_file(
    xes_path: *const c_char,
    template_path: *const c_char,
    out: *mut *mut c_char,
) -> PomcpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PomcpStatus::Null, "out is null");
        }
        let xes_path = str_arg(xes_path, "xes_path")?;
        let file = std::fs::File::open(xes_path).map_err(Error::from)?;
        let trace = read_xes(file).map_err(Error::from)?;
        let domain: DomainKind = match trace.meta.domain.parse() {
            Ok(d) => d,
            Err(e) => return fail(PomcpStatus::Parse, e),
        };
        let text = if template_path.is_null() {
            default_template(domain).to_string()
        } else {
            std::fs::read_to_string(str_arg(template_path, "template_path")?).map_err(Error::from)?
        };
        let template = parse_template(&text, &domain.vocabulary()).map_err(Error::from)?;
        let learned = rulelearn::learn(&trace, &template, &EnumerativeBackend, TightenMode::Restrictive)
            .map_err(Error::from)?;
        let s = CString::new(learned.rule.to_string())
            .or_else(|_| fail(PomcpStatus::InvalidArgument, "rule text contains NUL"))?;
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pomcp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
