//! Whitespace-separated trajectory record parser.
//!
//! Column order: frame_id object_id object_type x y z length width height
//! heading. The first five are required, the rest are optional.

use std::io::BufRead;

use super::{AgentRecord, AgentType, LineError, ParseOutcome};
use crate::error::{Error, Result};

fn parse_field(fields: &[f64], idx: usize) -> Option<f64> {
    fields.get(idx).copied()
}

fn integral(v: f64, what: &str) -> std::result::Result<i64, String> {
    if v.fract() != 0.0 || v.abs() > i64::MAX as f64 {
        return Err(format!("{what} must be an integer, got {v}"));
    }
    Ok(v as i64)
}

fn parse_line(line: &str) -> std::result::Result<AgentRecord, String> {
    let mut fields = Vec::with_capacity(10);
    for tok in line.split_whitespace() {
        let v: f64 = tok
            .parse()
            .map_err(|_| format!("non-numeric field {tok:?}"))?;
        fields.push(v);
    }
    if fields.len() < 5 {
        return Err(format!("expected at least 5 fields, got {}", fields.len()));
    }
    if fields.len() > 10 {
        return Err(format!("expected at most 10 fields, got {}", fields.len()));
    }
    let frame_id = integral(fields[0], "frame_id")?;
    let agent_id = integral(fields[1], "object_id")?;
    let type_code = integral(fields[2], "object_type")?;
    let agent_type = AgentType::from_code(type_code)
        .ok_or_else(|| format!("unknown object_type {type_code}"))?;
    let (x, y) = (fields[3], fields[4]);
    if !x.is_finite() || !y.is_finite() {
        return Err("non-finite position".into());
    }
    Ok(AgentRecord {
        frame_id,
        agent_id,
        agent_type,
        x,
        y,
        z: parse_field(&fields, 5),
        length: parse_field(&fields, 6),
        width: parse_field(&fields, 7),
        height: parse_field(&fields, 8),
        heading: parse_field(&fields, 9),
    })
}

/// Parse a record stream. In strict mode the first malformed line aborts;
/// otherwise malformed lines are collected into the outcome's error report.
pub fn parse_apolloscape<R: BufRead>(reader: R, strict: bool) -> Result<ParseOutcome> {
    let mut outcome = ParseOutcome::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(rec) => outcome.records.push(rec),
            Err(msg) => {
                if strict {
                    return Err(Error::Parse { line: line_no, msg });
                }
                outcome.errors.push(LineError { line: line_no, msg });
            }
        }
    }
    Ok(outcome)
}
