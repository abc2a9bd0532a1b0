use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use pomcp_shield::domains::DomainKind;
use pomcp_shield::model::ActionId;
use pomcp_shield::rulelang::Rule;
use pomcp_shield::shield::{Shield, ShieldConfig};
use pomcp_shield_ffi::*;

fn tiger_shield_text(listen: f64, open: f64) -> CString {
    let text = format!(
        "r_L: select Listen when p_right <= {listen} and p_left <= {listen};\n\
         r_OR: select OpenR when p_right >= {open};\n\
         r_OL: select OpenL when p_left >= {open};\n"
    );
    let rule = Rule::parse(&text, &DomainKind::Tiger.vocabulary()).unwrap();
    let shield = Shield::build(DomainKind::Tiger, rule, &ShieldConfig {
        representatives: 50,
        safe_action: Some(ActionId(0)),
        seed: 3,
        ..ShieldConfig::default()
    })
    .unwrap();
    CString::new(shield.to_text()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pomcp_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn hellinger_matches_direct_formula() {
    let p = [0.5, 0.5];
    let q = [1.0, 0.0];
    let mut out = -1.0;
    let st = unsafe { pomcp_hellinger2(p.as_ptr(), q.as_ptr(), 2, &mut out) };
    assert_eq!(st, PomcpStatus::Ok);
    let bc: f64 = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum();
    assert!((out - (1.0 - bc).sqrt()).abs() < 1e-12);
}

#[test]
fn invalid_distribution_sets_error() {
    let p = [0.5, 0.7];
    let mut out = 0.0;
    let st = unsafe { pomcp_hellinger2(p.as_ptr(), p.as_ptr(), 2, &mut out) };
    assert_eq!(st, PomcpStatus::Belief);
    assert!(!last_error().is_empty());

    let st = unsafe { pomcp_hellinger2(ptr::null(), p.as_ptr(), 2, &mut out) };
    assert_eq!(st, PomcpStatus::Null);
}

#[test]
fn shield_legal_actions() {
    let text = tiger_shield_text(0.85, 0.97);
    let mut shield = ptr::null_mut();
    assert_eq!(unsafe { pomcp_shield_from_text(text.as_ptr(), &mut shield) }, PomcpStatus::Ok);

    let mut n = 0;
    assert_eq!(unsafe { pomcp_shield_num_actions(shield, &mut n) }, PomcpStatus::Ok);
    assert_eq!(n, 3);

    // confident the tiger is on the right: only OpenR is legal
    let probs = [0.999, 0.001];
    let mut actions = [u32::MAX; 3];
    let mut count = 0;
    let mut fallback = true;
    let st = unsafe {
        pomcp_shield_legal_actions(shield, probs.as_ptr(), 2, actions.as_mut_ptr(), 3, &mut count, &mut fallback)
    };
    assert_eq!(st, PomcpStatus::Ok, "{}", last_error());
    assert_eq!(&actions[..count], &[2]);
    assert!(!fallback);

    // uniform belief: Listen holds directly
    let probs = [0.5, 0.5];
    let st = unsafe {
        pomcp_shield_legal_actions(shield, probs.as_ptr(), 2, actions.as_mut_ptr(), 3, &mut count, ptr::null_mut())
    };
    assert_eq!(st, PomcpStatus::Ok);
    assert!(actions[..count].contains(&0));

    let st = unsafe {
        pomcp_shield_legal_actions(shield, probs.as_ptr(), 2, ptr::null_mut(), 0, &mut count, ptr::null_mut())
    };
    assert_eq!(st, PomcpStatus::BufferTooSmall);
    assert!(count >= 1);

    let mut m = -1.0;
    let st = unsafe { pomcp_shield_margin(shield, 0, probs.as_ptr(), 2, &mut m) };
    assert_eq!(st, PomcpStatus::Ok);
    assert!((0.0..=1.0).contains(&m));

    unsafe { pomcp_shield_free(shield) };
}

#[test]
fn shield_load_reports_missing_file() {
    let path = CString::new("/nonexistent/shield.txt").unwrap();
    let mut shield = ptr::null_mut();
    let st = unsafe { pomcp_shield_load(path.as_ptr(), &mut shield) };
    assert_ne!(st, PomcpStatus::Ok);
    assert!(shield.is_null());
    assert!(!last_error().is_empty());

    let bad = CString::new("domain = tiger\nwhat\n").unwrap();
    let st = unsafe { pomcp_shield_from_text(bad.as_ptr(), &mut shield) };
    assert_eq!(st, PomcpStatus::Shield);
}

#[test]
fn agent_plays_tiger() {
    let text = tiger_shield_text(0.85, 0.97);
    let mut shield = ptr::null_mut();
    assert_eq!(unsafe { pomcp_shield_from_text(text.as_ptr(), &mut shield) }, PomcpStatus::Ok);

    let mut agent = ptr::null_mut();
    let st = unsafe { pomcp_agent_new(PomcpDomain::Tiger, 256, 0, 0.0, 0.0, 7, shield, &mut agent) };
    assert_eq!(st, PomcpStatus::Ok, "{}", last_error());
    // the agent holds its own reference
    unsafe { pomcp_shield_free(shield) };

    let mut belief = [0.0; 2];
    let mut len = 0;
    assert_eq!(
        unsafe { pomcp_agent_belief(agent, belief.as_mut_ptr(), 2, &mut len) },
        PomcpStatus::Ok
    );
    assert_eq!(len, 2);
    assert!((belief[0] + belief[1] - 1.0).abs() < 1e-9);

    // a uniform belief never justifies opening a door
    let mut action = u32::MAX;
    assert_eq!(
        unsafe { pomcp_agent_select_action(agent, &mut action, ptr::null_mut()) },
        PomcpStatus::Ok
    );
    assert_eq!(action, 0);

    // repeatedly hear the tiger on the right
    for _ in 0..4 {
        assert_eq!(unsafe { pomcp_agent_observe(agent, 0, 0) }, PomcpStatus::Ok, "{}", last_error());
    }
    assert_eq!(
        unsafe { pomcp_agent_belief(agent, belief.as_mut_ptr(), 2, &mut len) },
        PomcpStatus::Ok
    );
    assert!(belief[0] > 0.9, "{belief:?}");

    assert_eq!(unsafe { pomcp_agent_observe(agent, 9, 0) }, PomcpStatus::InvalidArgument);
    assert_eq!(
        unsafe { pomcp_agent_belief(agent, belief.as_mut_ptr(), 1, &mut len) },
        PomcpStatus::BufferTooSmall
    );
    unsafe { pomcp_agent_free(agent) };
}

#[test]
fn agent_rejects_shield_of_other_domain() {
    let text = tiger_shield_text(0.85, 0.97);
    let mut shield = ptr::null_mut();
    assert_eq!(unsafe { pomcp_shield_from_text(text.as_ptr(), &mut shield) }, PomcpStatus::Ok);
    let mut agent = ptr::null_mut();
    let st = unsafe { pomcp_agent_new(PomcpDomain::Vr, 64, 0, 0.0, 0.0, 1, shield, &mut agent) };
    assert_eq!(st, PomcpStatus::InvalidArgument);
    assert!(agent.is_null());
    unsafe { pomcp_shield_free(shield) };
}

#[test]
fn learn_rule_from_trace_file() {
    use pomcp_shield::experiment::{generate_trace, ExperimentConfig};
    use pomcp_shield::tracelog::write_xes;

    let cfg = ExperimentConfig {
        particles: 256,
        runs: 10,
        ..ExperimentConfig::for_domain(DomainKind::Tiger)
    };
    let (trace, _) = generate_trace(&cfg, 110.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiger.xes");
    write_xes(&trace, std::fs::File::create(&path).unwrap()).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { pomcp_learn_rule_file(c_path.as_ptr(), ptr::null(), &mut out) };
    assert_eq!(st, PomcpStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { pomcp_string_free(out) };
    let rule = Rule::parse(&text, &DomainKind::Tiger.vocabulary()).unwrap();
    assert_eq!(rule.template.rules.len(), 3);

    let missing = CString::new(dir.path().join("none.xes").to_str().unwrap()).unwrap();
    let st = unsafe { pomcp_learn_rule_file(missing.as_ptr(), ptr::null(), &mut out) };
    assert_eq!(st, PomcpStatus::Io);
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pomcp_shield.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "pomcp_last_error_message",
        "pomcp_hellinger2",
        "pomcp_shield_load",
        "pomcp_shield_legal_actions",
        "pomcp_agent_new",
        "pomcp_agent_select_action",
        "pomcp_learn_rule_file",
        "POMCP_STATUS_BUFFER_TOO_SMALL",
        "typedef struct PomcpShield PomcpShield",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("cc not found; skipping syntax check");
        return;
    };
    assert!(status.success());
}
