//! Canonical clip file: JSON lines, one clip per line, schema versioned.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneClip;
use crate::error::{Error, Result};

pub const CLIP_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ClipLine {
    schema: u32,
    #[serde(flatten)]
    clip: SceneClip,
}

pub fn write_clips_to<W: Write>(writer: &mut W, clips: &[SceneClip]) -> Result<()> {
    for clip in clips {
        let line = ClipLine {
            schema: CLIP_SCHEMA_VERSION,
            clip: clip.clone(),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::Data(format!("clip serialization: {e}")))?;
        writeln!(writer, "{json}")?;
    }
    Ok(())
}

pub fn write_clips(path: &Path, clips: &[SceneClip]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_clips_to(&mut writer, clips)?;
    writer.flush()?;
    Ok(())
}

pub fn read_clips_from<R: Read>(reader: R) -> Result<Vec<SceneClip>> {
    let mut clips = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ClipLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("clip json: {e}"),
        })?;
        if parsed.schema != CLIP_SCHEMA_VERSION {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "unsupported clip schema {} (expected {})",
                    parsed.schema, CLIP_SCHEMA_VERSION
                ),
            });
        }
        parsed.clip.validate().map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        clips.push(parsed.clip);
    }
    Ok(clips)
}

pub fn read_clips(path: &Path) -> Result<Vec<SceneClip>> {
    read_clips_from(File::open(path)?)
}
