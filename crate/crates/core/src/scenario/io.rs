//! Line-delimited scenario and episode files: a header object, then one record
//! per line.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use super::{Episode, Scenario};
use crate::error::{Error, Result};

pub const SCENARIO_FORMAT: &str = "askhelp-scenarios";
pub const SCENARIO_FORMAT_VERSION: u32 = 1;
pub const EPISODE_FORMAT: &str = "askhelp-episodes";
pub const EPISODE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn write_scenarios<W: Write>(mut out: W, scenarios: &[Scenario]) -> Result<()> {
    let header = Header { format: SCENARIO_FORMAT.to_string(), version: SCENARIO_FORMAT_VERSION };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for s in scenarios {
        writeln!(out, "{}", serde_json::to_string(s)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads and validates a scenario file. Blank lines are ignored.
pub fn read_scenarios<R: BufRead>(input: R) -> Result<Vec<Scenario>> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
        Ok(l) => !l.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines.next().ok_or_else(|| Error::data("scenario file is empty"))?;
    let header: Header = serde_json::from_str(&first?)
        .map_err(|e| Error::data(format!("line 1: bad scenario header: {e}")))?;
    if header.format != SCENARIO_FORMAT {
        return Err(Error::data(format!("line 1: unexpected format {:?}", header.format)));
    }
    if header.version != SCENARIO_FORMAT_VERSION {
        return Err(Error::data(format!(
            "line 1: scenario format version {} is not supported (expected {SCENARIO_FORMAT_VERSION})",
            header.version
        )));
    }
    let mut scenarios = Vec::new();
    for (i, line) in lines {
        let scenario: Scenario = serde_json::from_str(&line?)
            .map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        scenario
            .validate()
            .map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        scenarios.push(scenario);
    }
    Ok(scenarios)
}

pub fn write_episodes<W: Write>(mut out: W, episodes: &[Episode]) -> Result<()> {
    let header = Header { format: EPISODE_FORMAT.to_string(), version: EPISODE_FORMAT_VERSION };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for e in episodes {
        writeln!(out, "{}", serde_json::to_string(e)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episodes<R: BufRead>(input: R) -> Result<Vec<Episode>> {
    let mut episodes = Vec::new();
    let mut header_seen = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let header: Header = serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("line {}: bad episode header: {e}", i + 1)))?;
            if header.format != EPISODE_FORMAT || header.version != EPISODE_FORMAT_VERSION {
                return Err(Error::data(format!(
                    "line {}: expected {EPISODE_FORMAT} version {EPISODE_FORMAT_VERSION}, found {:?} version {}",
                    i + 1,
                    header.format,
                    header.version
                )));
            }
            header_seen = true;
            continue;
        }
        episodes.push(serde_json::from_str(&line).map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?);
    }
    if !header_seen {
        return Err(Error::data("episode file is empty"));
    }
    Ok(episodes)
}
