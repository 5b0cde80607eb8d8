//! Reading and writing the line-delimited JSON log format.
//!
//! Line 1 is the run header (`"type":"run"`); each following non-blank line
//! is one trajectory record (`"type":"trajectory"`). Blank lines are skipped
//! but still counted, so reported line numbers always match the file.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::Serialize;
use serde_json::{Map, Value};

use super::validate::{check_metadata, check_trajectory};
use super::{RunLog, RunMetadata, StateIdentityConfig, StateRepr, Trajectory};
use crate::error::{FindingCategory, ParseError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParseOptions {
    /// When set to cosine mode, every state must be a vector of one shared dimension.
    pub state_identity: Option<StateIdentityConfig>,
}

/// A problem located on a specific line of a log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineFinding {
    pub line: usize,
    pub category: FindingCategory,
    pub task_id: Option<String>,
    pub rollout_idx: Option<u32>,
    pub field: Option<String>,
    pub message: String,
}

impl LineFinding {
    fn new(line: usize, category: FindingCategory, message: impl Into<String>) -> Self {
        LineFinding {
            line,
            category,
            task_id: None,
            rollout_idx: None,
            field: None,
            message: message.into(),
        }
    }

    fn on(mut self, traj: &Trajectory, field: String) -> Self {
        self.task_id = Some(traj.task_id.clone());
        self.rollout_idx = Some(traj.rollout_idx);
        self.field = Some(field);
        self
    }
}

impl From<LineFinding> for ParseError {
    fn from(f: LineFinding) -> Self {
        let message = match f.field {
            Some(field) => format!("{field}: {}", f.message),
            None => f.message,
        };
        ParseError {
            line: f.line,
            category: f.category,
            message,
        }
    }
}

/// Everything found in one pass over a log. `run` is present only when
/// there are no findings.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub run: Option<RunLog>,
    pub findings: Vec<LineFinding>,
}

#[derive(Default)]
struct Scanner {
    options: ParseOptions,
    header: Option<RunMetadata>,
    header_seen: bool,
    trajectories: Vec<Trajectory>,
    first_line_of: HashMap<(String, u32), usize>,
    vector_dim: Option<usize>,
    findings: Vec<LineFinding>,
}

impl Scanner {
    fn malformed(&mut self, line: usize, message: impl Into<String>) {
        self.findings
            .push(LineFinding::new(line, FindingCategory::MalformedRecord, message));
    }

    fn record(&mut self, line: usize, text: &str) {
        let value: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return self.malformed(line, format!("invalid JSON: {e}")),
        };
        let Value::Object(mut map) = value else {
            return self.malformed(line, "record is not a JSON object");
        };
        let kind = match map.remove("type") {
            Some(Value::String(kind)) => kind,
            Some(_) => return self.malformed(line, "record `type` is not a string"),
            None => return self.malformed(line, "record has no `type`"),
        };
        match kind.as_str() {
            "run" if self.header_seen => self.malformed(line, "duplicate run header"),
            "run" => {
                self.header_seen = true;
                self.header_record(line, map);
            }
            "trajectory" => {
                if !self.header_seen {
                    self.header_seen = true;
                    self.malformed(line, "first record must be the run header (type \"run\")");
                }
                self.trajectory_record(line, map);
            }
            other => self.malformed(line, format!("unknown record type `{other}`")),
        }
    }

    fn header_record(&mut self, line: usize, map: Map<String, Value>) {
        let meta: RunMetadata = match serde_json::from_value(Value::Object(map)) {
            Ok(m) => m,
            Err(e) => {
                return self.findings.push(LineFinding::new(
                    line,
                    FindingCategory::SchemaViolation,
                    format!("run header: {e}"),
                ))
            }
        };
        let issues = check_metadata(&meta);
        if issues.is_empty() {
            self.header = Some(meta);
        }
        for (field, message) in issues {
            let mut f = LineFinding::new(line, FindingCategory::InvariantViolation, message);
            f.field = Some(field);
            self.findings.push(f);
        }
    }

    fn trajectory_record(&mut self, line: usize, map: Map<String, Value>) {
        let traj: Trajectory = match serde_json::from_value(Value::Object(map)) {
            Ok(t) => t,
            Err(e) => {
                return self.findings.push(LineFinding::new(
                    line,
                    FindingCategory::SchemaViolation,
                    format!("trajectory: {e}"),
                ))
            }
        };

        if let Some(StateIdentityConfig::Cosine { .. }) = self.options.state_identity {
            if let Some(problem) = self.cosine_schema_problem(&traj) {
                let f = LineFinding::new(line, FindingCategory::SchemaViolation, problem.1);
                return self.findings.push(f.on(&traj, problem.0));
            }
        }

        let issues = check_trajectory(&traj);
        for (field, message) in &issues {
            let f = LineFinding::new(line, FindingCategory::InvariantViolation, message.clone());
            self.findings.push(f.on(&traj, field.clone()));
        }

        let key = (traj.task_id.clone(), traj.rollout_idx);
        if let Some(&first) = self.first_line_of.get(&key) {
            let f = LineFinding::new(
                line,
                FindingCategory::InvariantViolation,
                format!("duplicate (task_id, rollout_idx); first seen on line {first}"),
            );
            self.findings.push(f.on(&traj, "rollout_idx".into()));
            return;
        }
        self.first_line_of.insert(key, line);
        if issues.is_empty() {
            self.trajectories.push(traj);
        }
    }

    fn cosine_schema_problem(&mut self, traj: &Trajectory) -> Option<(String, String)> {
        let named = traj
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("steps[{i}].state"), &s.state))
            .chain(std::iter::once(("final_state".to_string(), &traj.final_state)));
        for (field, state) in named {
            match state {
                StateRepr::Text { .. } => return Some((field, "text state under cosine state identity".into())),
                StateRepr::Vector { values } => match self.vector_dim {
                    None => self.vector_dim = Some(values.len()),
                    Some(dim) if dim != values.len() => {
                        return Some((
                            field,
                            format!("vector dimension {} differs from run dimension {dim}", values.len()),
                        ))
                    }
                    Some(_) => {}
                },
            }
        }
        None
    }

    fn finish(mut self, last_line: usize) -> ScanOutcome {
        if !self.header_seen {
            self.malformed(last_line.max(1), "missing run header");
        }
        let run = match (self.findings.is_empty(), self.header) {
            (true, Some(metadata)) => {
                let mut run = RunLog {
                    metadata,
                    trajectories: self.trajectories,
                };
                run.canonicalize();
                Some(run)
            }
            _ => None,
        };
        ScanOutcome {
            run,
            findings: self.findings,
        }
    }
}

/// Reads a whole log and reports every finding instead of stopping at the first.
pub fn scan_run_log<R: BufRead>(mut reader: R, options: &ParseOptions) -> std::io::Result<ScanOutcome> {
    let mut scanner = Scanner {
        options: *options,
        ..Scanner::default()
    };
    let mut buf = Vec::new();
    let mut line = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line += 1;
        let Ok(text) = std::str::from_utf8(&buf) else {
            scanner.malformed(line, "line is not valid UTF-8");
            continue;
        };
        let text = text.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            continue;
        }
        scanner.record(line, text);
    }
    Ok(scanner.finish(1))
}

pub fn parse_run_log_with<R: Read>(source: R, options: &ParseOptions) -> Result<RunLog> {
    let outcome = scan_run_log(BufReader::new(source), options)?;
    match (outcome.run, outcome.findings.into_iter().next()) {
        (Some(run), None) => Ok(run),
        (_, Some(first)) => Err(ParseError::from(first).into()),
        (None, None) => unreachable!("scan without findings always yields a run"),
    }
}

/// Parses and fully validates a log. Trajectories come back ordered by
/// `(task_id, rollout_idx)`.
pub fn parse_run_log<R: Read>(source: R) -> Result<RunLog> {
    parse_run_log_with(source, &ParseOptions::default())
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes a run in canonical form: header first, trajectories sorted.
pub fn write_run_log<W: Write>(run: &RunLog, mut out: W) -> Result<()> {
    serde_json::to_writer(
        &mut out,
        &Tagged {
            kind: "run",
            body: &run.metadata,
        },
    )?;
    out.write_all(b"\n")?;
    let mut order: Vec<&Trajectory> = run.trajectories.iter().collect();
    order.sort_by(|a, b| a.key().cmp(&b.key()));
    for traj in order {
        serde_json::to_writer(
            &mut out,
            &Tagged {
                kind: "trajectory",
                body: traj,
            },
        )?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::TideError;
    use crate::model::MemoryMode;

    const HEADER: &str = r#"{"type":"run","run_id":"r1","model":"m","environment":"env","memory_mode":"full","t_max":4,"extra":{"task_class":"mdp"}}"#;

    fn traj_line(task: &str, success_turn: Option<usize>) -> String {
        let st = success_turn.map_or("null".to_string(), |t| t.to_string());
        format!(
            r#"{{"type":"trajectory","task_id":"{task}","rollout_idx":0,"success":{},"success_turn":{st},"target_entities":null,"final_state":{{"kind":"text","value":"end"}},"steps":[{{"turn":0,"state":{{"kind":"text","value":"a"}},"action":"go","action_class":null,"entropy":0.5,"observed_entities":null,"interacted_entities":null}}]}}"#,
            success_turn.is_some()
        )
    }

    fn parse_err(text: &str) -> ParseError {
        match parse_run_log(text.as_bytes()) {
            Err(TideError::Parse(e)) => e,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_file() {
        let text = format!("{HEADER}\n{}\n{}\n", traj_line("b", None), traj_line("a", Some(1)));
        let run = parse_run_log(text.as_bytes()).unwrap();
        assert_eq!(run.trajectories.len(), 2);
        assert_eq!(run.trajectories[0].task_id, "a");
        assert_eq!(run.metadata.memory_mode, MemoryMode::Full);
        assert_eq!(run.metadata.extra["task_class"], "mdp");
    }

    #[test]
    fn windowed_memory_mode() {
        let text = HEADER.replace(r#""full""#, r#"{"windowed":5}"#);
        let run = parse_run_log(text.as_bytes()).unwrap();
        assert_eq!(run.metadata.memory_mode, MemoryMode::Windowed(5));
    }

    #[test]
    fn success_without_turn() {
        let line = traj_line("a", Some(1)).replace(r#""success_turn":1"#, r#""success_turn":null"#);
        let e = parse_err(&format!("{HEADER}\n{line}\n"));
        assert_eq!(e.line, 2);
        assert_eq!(e.category, FindingCategory::InvariantViolation);
    }

    #[test]
    fn garbage_and_schema_errors_carry_line_numbers() {
        let e = parse_err(&format!("{HEADER}\n\n{{not json\n"));
        assert_eq!((e.line, e.category), (3, FindingCategory::MalformedRecord));

        let line = traj_line("a", None).replace(r#""rollout_idx":0"#, r#""rollout_idx":"zero""#);
        let e = parse_err(&format!("{HEADER}\n{line}\n"));
        assert_eq!((e.line, e.category), (2, FindingCategory::SchemaViolation));
    }

    #[test]
    fn mixed_kinds_under_cosine_mode() {
        let vec_line = traj_line("a", None).replace(
            r#"{"kind":"text","value":"end"}"#,
            r#"{"kind":"vector","values":[1.0,0.0]}"#,
        );
        let text = format!("{HEADER}\n{vec_line}\n");
        let opts = ParseOptions {
            state_identity: Some(StateIdentityConfig::cosine(0.999).unwrap()),
        };
        let e = match parse_run_log_with(text.as_bytes(), &opts) {
            Err(TideError::Parse(e)) => e,
            other => panic!("{other:?}"),
        };
        assert_eq!((e.line, e.category), (2, FindingCategory::SchemaViolation));
        // exact mode accepts the same file
        assert!(parse_run_log(text.as_bytes()).is_ok());
    }

    #[test]
    fn empty_file_lacks_header() {
        let e = parse_err("");
        assert_eq!((e.line, e.category), (1, FindingCategory::MalformedRecord));
    }

    #[test]
    fn unknown_top_level_keys_survive_round_trip() {
        let header = HEADER.replace(r#""t_max":4"#, r#""t_max":4,"harness":{"v":2}"#);
        let line = traj_line("a", Some(1)).replace(r#""rollout_idx":0"#, r#""rollout_idx":0,"seed":17"#);
        let run = parse_run_log(format!("{header}\n{line}\n").as_bytes()).unwrap();
        assert_eq!(run.metadata.unknown_fields["harness"]["v"], 2);
        assert_eq!(run.trajectories[0].unknown_fields["seed"], 17);

        let mut out = Vec::new();
        write_run_log(&run, &mut out).unwrap();
        assert!(out.starts_with(br#"{"type":"run","run_id":"r1""#));
        let back = parse_run_log(out.as_slice()).unwrap();
        assert_eq!(back, run);
    }
}
