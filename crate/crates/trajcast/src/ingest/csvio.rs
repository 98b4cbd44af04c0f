//! Generic CSV trajectory input with a header row.

use std::io::Read;

use super::{AgentRecord, AgentType, LineError, ParseOutcome};
use crate::error::{Error, Result};

fn required_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data(format!("csv input is missing required column {name:?}")))
}

fn parse_type(raw: &str) -> std::result::Result<AgentType, String> {
    let raw = raw.trim();
    if let Some(t) = AgentType::from_name(raw) {
        return Ok(t);
    }
    if let Ok(code) = raw.parse::<i64>() {
        if let Some(t) = AgentType::from_code(code) {
            return Ok(t);
        }
    }
    Err(format!("unknown agent_type {raw:?}"))
}

/// Read records from CSV with columns frame_id, agent_id, agent_type, x, y.
/// `agent_type` accepts either numeric codes 1..=5 or canonical names.
pub fn parse_generic_csv<R: Read>(reader: R, strict: bool) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("csv header: {e}")))?
        .clone();
    let col_frame = required_column(&headers, "frame_id")?;
    let col_agent = required_column(&headers, "agent_id")?;
    let col_type = required_column(&headers, "agent_type")?;
    let col_x = required_column(&headers, "x")?;
    let col_y = required_column(&headers, "y")?;

    let mut outcome = ParseOutcome::default();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            let get = |c: usize| row.get(c).unwrap_or("").to_string();
            let frame_id: i64 = get(col_frame)
                .parse()
                .map_err(|_| format!("bad frame_id {:?}", get(col_frame)))?;
            let agent_id: i64 = get(col_agent)
                .parse()
                .map_err(|_| format!("bad agent_id {:?}", get(col_agent)))?;
            let agent_type = parse_type(&get(col_type))?;
            let x: f64 = get(col_x)
                .parse()
                .map_err(|_| format!("bad x {:?}", get(col_x)))?;
            let y: f64 = get(col_y)
                .parse()
                .map_err(|_| format!("bad y {:?}", get(col_y)))?;
            Ok(AgentRecord {
                frame_id,
                agent_id,
                agent_type,
                x,
                y,
                z: None,
                length: None,
                width: None,
                height: None,
                heading: None,
            })
        });
        match parsed {
            Ok(rec) => outcome.records.push(rec),
            Err(msg) => {
                if strict {
                    return Err(Error::Parse { line, msg });
                }
                outcome.errors.push(LineError { line, msg });
            }
        }
    }
    Ok(outcome)
}
