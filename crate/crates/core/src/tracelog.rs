//! Execution traces and their XES serialization.
//!
//! Schema: log-level attributes `meta:domain`, `meta:particles`, `meta:c`
//! and `meta:seed`; one `<trace>` per run carrying `shield:run`; one
//! `<event>` per step with `concept:name` (action label), `shield:step`,
//! `shield:action`, `shield:observation`, `belief:focus` and a float
//! `belief:p<i>_<j>` for entry `j` of marginal `i`. Raw particles, when
//! logged, go into the string attribute `belief:particles` as
//! space-separated state codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Read, Write};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::belief::{BeliefSummary, ProbVector};
use crate::model::{ActionId, ObservationId};

#[derive(Debug, Error)]
pub enum XesError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed XES at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("XES schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub domain: String,
    pub particles: usize,
    pub c: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub run_index: usize,
    pub step_index: usize,
    pub summary: BeliefSummary,
    pub action: ActionId,
    pub action_label: String,
    pub observation: ObservationId,
    pub particles: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub runs: Vec<Run>,
}

impl Trace {
    pub fn new(meta: TraceMeta) -> Self {
        Self {
            meta,
            runs: Vec::new(),
        }
    }

    /// Every step together with the position of its run.
    pub fn steps(&self) -> impl Iterator<Item = (usize, &Step)> {
        self.runs
            .iter()
            .enumerate()
            .flat_map(|(r, run)| run.steps.iter().map(move |s| (r, s)))
    }

    pub fn num_steps(&self) -> usize {
        self.runs.iter().map(|r| r.steps.len()).sum()
    }
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Floats are written in shortest round-trip form, so reading them back is
/// exact.
pub fn write_xes<W: Write>(trace: &Trace, mut out: W) -> Result<(), XesError> {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<log xes.version=\"2.0\" xmlns=\"http://www.xes-standard.org/\">\n");
    let m = &trace.meta;
    let _ = writeln!(s, "  <string key=\"meta:domain\" value=\"{}\"/>", escape(&m.domain));
    let _ = writeln!(s, "  <int key=\"meta:particles\" value=\"{}\"/>", m.particles);
    let _ = writeln!(s, "  <float key=\"meta:c\" value=\"{:?}\"/>", m.c);
    let _ = writeln!(s, "  <int key=\"meta:seed\" value=\"{}\"/>", m.seed);
    out.write_all(s.as_bytes())?;

    for (r, run) in trace.runs.iter().enumerate() {
        s.clear();
        s.push_str("  <trace>\n");
        let _ = writeln!(s, "    <string key=\"concept:name\" value=\"run-{r}\"/>");
        let _ = writeln!(s, "    <int key=\"shield:run\" value=\"{r}\"/>");
        for step in &run.steps {
            s.push_str("    <event>\n");
            let _ = writeln!(
                s,
                "      <string key=\"concept:name\" value=\"{}\"/>",
                escape(&step.action_label)
            );
            let _ = writeln!(s, "      <int key=\"shield:step\" value=\"{}\"/>", step.step_index);
            let _ = writeln!(s, "      <int key=\"shield:action\" value=\"{}\"/>", step.action.0);
            let _ = writeln!(
                s,
                "      <int key=\"shield:observation\" value=\"{}\"/>",
                step.observation.0
            );
            let _ = writeln!(s, "      <int key=\"belief:focus\" value=\"{}\"/>", step.summary.focus);
            for (i, marginal) in step.summary.marginals.iter().enumerate() {
                for (j, p) in marginal.as_slice().iter().enumerate() {
                    let _ = writeln!(s, "      <float key=\"belief:p{i}_{j}\" value=\"{p:?}\"/>");
                }
            }
            if let Some(particles) = &step.particles {
                let codes: Vec<String> = particles.iter().map(u64::to_string).collect();
                let _ = writeln!(
                    s,
                    "      <string key=\"belief:particles\" value=\"{}\"/>",
                    codes.join(" ")
                );
            }
            s.push_str("    </event>\n");
        }
        s.push_str("  </trace>\n");
        out.write_all(s.as_bytes())?;
    }
    out.write_all(b"</log>\n")?;
    Ok(())
}

pub fn write_xes_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_xes(trace, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("XES output is UTF-8")
}

fn location(text: &str, offset: usize) -> (usize, usize) {
    let before = &text.as_bytes()[..offset.min(text.len())];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
    (line, column)
}

type Attrs = BTreeMap<String, String>;

#[derive(PartialEq)]
enum Scope {
    Log,
    Trace,
    Event,
}

pub fn read_xes<R: Read>(mut source: R) -> Result<Trace, XesError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    read_xes_str(&text)
}

pub fn read_xes_str(text: &str) -> Result<Trace, XesError> {
    let mut reader = Reader::from_str(text);
    let parse_err = |reader: &Reader<&[u8]>, message: String| {
        let (line, column) = location(text, reader.buffer_position() as usize);
        XesError::Parse {
            line,
            column,
            message,
        }
    };

    let mut seen_log = false;
    let mut scope: Option<Scope> = None;
    let mut log_attrs = Attrs::new();
    let mut trace_attrs = Attrs::new();
    let mut event_attrs = Attrs::new();
    let mut runs: Vec<(Attrs, Vec<Attrs>)> = Vec::new();

    loop {
        let event = reader
            .read_event()
            .map_err(|e| parse_err(&reader, e.to_string()))?;
        match event {
            Event::Start(e) | Event::Empty(e) if e.local_name().as_ref() == b"log" => {
                seen_log = true;
                scope = Some(Scope::Log);
            }
            Event::Start(e) if e.local_name().as_ref() == b"trace" => {
                trace_attrs.clear();
                runs.push((Attrs::new(), Vec::new()));
                scope = Some(Scope::Trace);
            }
            Event::Start(e) if e.local_name().as_ref() == b"event" => {
                event_attrs.clear();
                scope = Some(Scope::Event);
            }
            Event::End(e) if e.local_name().as_ref() == b"event" => {
                if let Some(run) = runs.last_mut() {
                    run.1.push(std::mem::take(&mut event_attrs));
                }
                scope = Some(Scope::Trace);
            }
            Event::End(e) if e.local_name().as_ref() == b"trace" => {
                if let Some(run) = runs.last_mut() {
                    run.0 = std::mem::take(&mut trace_attrs);
                }
                scope = Some(Scope::Log);
            }
            Event::Start(e) | Event::Empty(e) => {
                let name = e.local_name();
                if matches!(name.as_ref(), b"string" | b"int" | b"float" | b"boolean" | b"date" | b"id") {
                    let (key, value) = key_value(&e).map_err(|m| parse_err(&reader, m))?;
                    let target = match scope {
                        Some(Scope::Log) => &mut log_attrs,
                        Some(Scope::Trace) => &mut trace_attrs,
                        Some(Scope::Event) => &mut event_attrs,
                        None => continue,
                    };
                    target.insert(key, value);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !seen_log {
        return Err(XesError::Schema("document has no <log> element".into()));
    }

    let meta = TraceMeta {
        domain: required(&log_attrs, "meta:domain")?.to_string(),
        particles: parse_num(&log_attrs, "meta:particles")?,
        c: parse_num(&log_attrs, "meta:c")?,
        seed: parse_num(&log_attrs, "meta:seed")?,
    };
    let mut trace = Trace::new(meta);
    for (r, (_, events)) in runs.into_iter().enumerate() {
        let mut run = Run::default();
        for attrs in events {
            run.steps.push(parse_step(r, &attrs)?);
        }
        trace.runs.push(run);
    }
    Ok(trace)
}

fn key_value(e: &BytesStart<'_>) -> Result<(String, String), String> {
    let mut key = None;
    let mut value = None;
    for a in e.attributes() {
        let a = a.map_err(|err| err.to_string())?;
        let v = a.unescape_value().map_err(|err| err.to_string())?.into_owned();
        match a.key.as_ref() {
            b"key" => key = Some(v),
            b"value" => value = Some(v),
            _ => {}
        }
    }
    match (key, value) {
        (Some(k), Some(v)) => Ok((k, v)),
        _ => Err("attribute element needs both key and value".into()),
    }
}

fn required<'a>(attrs: &'a Attrs, key: &str) -> Result<&'a str, XesError> {
    attrs
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| XesError::Schema(format!("missing required attribute `{key}`")))
}

fn parse_num<T: std::str::FromStr>(attrs: &Attrs, key: &str) -> Result<T, XesError> {
    let raw = required(attrs, key)?;
    raw.parse()
        .map_err(|_| XesError::Schema(format!("attribute `{key}` has invalid value `{raw}`")))
}

fn parse_step(run_index: usize, attrs: &Attrs) -> Result<Step, XesError> {
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (k, v) in attrs.range("belief:p".to_string()..) {
        let Some(rest) = k.strip_prefix("belief:p") else {
            break;
        };
        if k == "belief:particles" {
            continue;
        }
        let bad = || XesError::Schema(format!("malformed belief attribute `{k}`"));
        let (i, j) = rest.split_once('_').ok_or_else(bad)?;
        let idx = (i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?);
        let p: f64 = v
            .parse()
            .map_err(|_| XesError::Schema(format!("attribute `{k}` has invalid value `{v}`")))?;
        entries.insert(idx, p);
    }
    let mut marginals: Vec<Vec<f64>> = Vec::new();
    for ((i, j), p) in entries {
        if i == marginals.len() && j == 0 {
            marginals.push(vec![p]);
        } else if i + 1 == marginals.len() && j == marginals[i].len() {
            marginals[i].push(p);
        } else {
            let (ei, ej) = if i + 1 == marginals.len() {
                (i, marginals[i].len())
            } else {
                (marginals.len(), 0)
            };
            return Err(XesError::Schema(format!(
                "missing required attribute `belief:p{ei}_{ej}`"
            )));
        }
    }
    if marginals.is_empty() {
        return Err(XesError::Schema("missing required attribute `belief:p0_0`".into()));
    }
    let marginals = marginals
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            ProbVector::new(m).map_err(|e| XesError::Schema(format!("marginal {i}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let focus: usize = parse_num(attrs, "belief:focus")?;
    if focus >= marginals.len() {
        return Err(XesError::Schema(format!(
            "belief:focus {focus} exceeds the {} logged marginals",
            marginals.len()
        )));
    }
    let particles = match attrs.get("belief:particles") {
        None => None,
        Some(s) => Some(
            s.split_whitespace()
                .map(|t| {
                    t.parse().map_err(|_| {
                        XesError::Schema(format!("invalid particle code `{t}` in belief:particles"))
                    })
                })
                .collect::<Result<Vec<u64>, _>>()?,
        ),
    };
    Ok(Step {
        run_index,
        step_index: parse_num(attrs, "shield:step")?,
        summary: BeliefSummary { marginals, focus },
        action: ActionId(parse_num(attrs, "shield:action")?),
        action_label: required(attrs, "concept:name")?.to_string(),
        observation: ObservationId(parse_num(attrs, "shield:observation")?),
        particles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Trace {
        let mut t = Trace::new(TraceMeta {
            domain: "tiger".into(),
            particles: 32768,
            c: 110.0,
            seed: 7,
        });
        t.runs.push(Run {
            steps: vec![Step {
                run_index: 0,
                step_index: 0,
                summary: BeliefSummary::single(ProbVector::new(vec![0.5, 0.5]).unwrap()),
                action: ActionId(0),
                action_label: "Listen".into(),
                observation: ObservationId(0),
                particles: None,
            }],
        });
        t
    }

    #[test]
    fn one_step_document() {
        let xml = write_xes_string(&tiny());
        assert_eq!(xml.matches("<trace>").count(), 1);
        assert_eq!(xml.matches("<event>").count(), 1);
        assert!(xml.contains("key=\"belief:p0_0\" value=\"0.5\""));
        assert!(xml.contains("key=\"belief:p0_1\" value=\"0.5\""));
        assert!(xml.contains("key=\"concept:name\" value=\"Listen\""));
        assert!(xml.contains("key=\"shield:observation\" value=\"0\""));
        assert_eq!(read_xes_str(&xml).unwrap(), tiny());
    }

    #[test]
    fn empty_trace() {
        let mut t = tiny();
        t.runs.clear();
        let xml = write_xes_string(&t);
        assert!(!xml.contains("<trace>"));
        assert_eq!(read_xes_str(&xml).unwrap(), t);
    }

    #[test]
    fn particles_round_trip() {
        let mut t = tiny();
        t.runs[0].steps[0].particles = Some(vec![0, 1, 1, 0]);
        assert_eq!(read_xes_str(&write_xes_string(&t)).unwrap(), t);
    }

    #[test]
    fn missing_key_is_named() {
        let xml = write_xes_string(&tiny()).replace("shield:observation", "shield:obs");
        let err = read_xes_str(&xml).unwrap_err().to_string();
        assert!(err.contains("shield:observation"), "{err}");
        let xml = write_xes_string(&tiny()).replace("meta:seed", "meta:sd");
        assert!(read_xes_str(&xml).unwrap_err().to_string().contains("meta:seed"));
    }

    #[test]
    fn malformed_xml_has_location() {
        let xml = write_xes_string(&tiny()).replace("</event>", "</evnt>");
        match read_xes_str(&xml) {
            Err(XesError::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
