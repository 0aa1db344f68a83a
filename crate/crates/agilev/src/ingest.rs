//! Test-report readers: JSON lines and JUnit XML.
//!
//! JUnit carries the requirement links and cycle as `<property>` entries
//! named `requirements` (comma separated) and `cycle`, either on the
//! testcase or inherited from its testsuite.

use std::path::Path;

use agilev_core::traceability::Outcome;
use agilev_core::verification::RawTestRecord;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Result, StoreError};

fn parse_err(source_name: &str, reason: impl ToString) -> StoreError {
    StoreError::Parse { source_name: source_name.into(), reason: reason.to_string() }
}

/// One JSON object per non-blank line.
pub fn parse_jsonl(text: &str, source_name: &str) -> Result<Vec<RawTestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(source_name, format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Default, Clone)]
struct Props {
    requirements: Option<String>,
    cycle: Option<String>,
}

struct Case {
    id: String,
    duration: Option<f64>,
    failed: bool,
    skipped: bool,
    props: Props,
}

fn attr(e: &BytesStart<'_>, name: &str, source_name: &str) -> Result<Option<String>> {
    match e.try_get_attribute(name).map_err(|x| parse_err(source_name, x))? {
        Some(a) => Ok(Some(a.unescape_value().map_err(|x| parse_err(source_name, x))?.into_owned())),
        None => Ok(None),
    }
}

/// Skipped testcases are dropped: they produced no outcome.
pub fn parse_junit(text: &str, source_name: &str) -> Result<Vec<RawTestRecord>> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut suites: Vec<Props> = Vec::new();
    let mut case: Option<Case> = None;
    let mut out = Vec::new();

    let finish = |c: Case, suite: Option<&Props>, out: &mut Vec<RawTestRecord>| {
        if c.skipped {
            return;
        }
        let reqs = c.props.requirements.or_else(|| suite.and_then(|s| s.requirements.clone()));
        out.push(RawTestRecord {
            test_id: c.id,
            req_ids: reqs
                .map(|r| r.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default(),
            outcome: if c.failed { Outcome::Fail } else { Outcome::Pass },
            cycle: c.props.cycle.or_else(|| suite.and_then(|s| s.cycle.clone())),
            duration: c.duration,
            timestamp: None,
        });
    };

    loop {
        let ev = reader.read_event().map_err(|e| parse_err(source_name, e))?;
        let (e, empty) = match &ev {
            Event::Start(e) => (e, false),
            Event::Empty(e) => (e, true),
            Event::End(e) => {
                match e.name().as_ref() {
                    b"testcase" => {
                        if let Some(c) = case.take() {
                            finish(c, suites.last(), &mut out);
                        }
                    }
                    b"testsuite" => {
                        suites.pop();
                    }
                    _ => {}
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        match e.name().as_ref() {
            b"testsuite" => {
                if !empty {
                    suites.push(suites.last().cloned().unwrap_or_default());
                }
            }
            b"testcase" => {
                let name = attr(e, "name", source_name)?.ok_or_else(|| parse_err(source_name, "testcase without name"))?;
                let id = match attr(e, "classname", source_name)? {
                    Some(c) if !c.is_empty() => format!("{c}::{name}"),
                    _ => name,
                };
                let duration = attr(e, "time", source_name)?.and_then(|t| t.parse().ok());
                let c = Case { id, duration, failed: false, skipped: false, props: Props::default() };
                if empty {
                    finish(c, suites.last(), &mut out);
                } else {
                    case = Some(c);
                }
            }
            b"failure" | b"error" => {
                if let Some(c) = case.as_mut() {
                    c.failed = true;
                }
            }
            b"skipped" => {
                if let Some(c) = case.as_mut() {
                    c.skipped = true;
                }
            }
            b"property" => {
                let name = attr(e, "name", source_name)?;
                let value = attr(e, "value", source_name)?;
                let target = match case.as_mut() {
                    Some(c) => &mut c.props,
                    None => match suites.last_mut() {
                        Some(s) => s,
                        None => continue,
                    },
                };
                match name.as_deref() {
                    Some("requirements") => target.requirements = value,
                    Some("cycle") => target.cycle = value,
                    _ => {}
                }
            }
            _ => {}
        }
    }
    if case.is_some() {
        return Err(parse_err(source_name, "unterminated testcase"));
    }
    Ok(out)
}

/// Picks the reader by extension: `.xml` is JUnit, anything else JSON lines.
pub fn read_report(path: &Path) -> Result<Vec<RawTestRecord>> {
    let text = std::fs::read_to_string(path).map_err(StoreError::io(path))?;
    let name = path.display().to_string();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
        parse_junit(&text, &name)
    } else {
        parse_jsonl(&text, &name)
    }
}
