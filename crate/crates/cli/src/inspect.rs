//! Recognizes every file the CLI writes and prints a short key=value summary.

use std::io::Write;
use std::path::Path;

use askhelp::harness::{parse_curve_csv, CoverageFile, ResultsFile, CURVE_HEADER};
use askhelp::scenario::{read_episodes, read_scenarios, Outcome, EPISODE_FORMAT, SCENARIO_FORMAT};
use askhelp::{CalibratedModel, Error, Result};
use serde_json::Value;

pub fn inspect<W: Write>(path: &Path, out: &mut W) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.trim() == CURVE_HEADER {
        let rows = parse_curve_csv(&text)?;
        writeln!(out, "kind=curve")?;
        writeln!(out, "rows={}", rows.len())?;
        for r in rows {
            writeln!(
                out,
                "epsilon={} success={} help_step={} set_size={} coverage={}",
                r.epsilon, r.success, r.help_step, r.set_size, r.coverage
            )?;
        }
        return Ok(());
    }
    // Line-delimited files announce themselves on the first line.
    if let Ok(Value::Object(header)) = serde_json::from_str::<Value>(first) {
        match header.get("format").and_then(Value::as_str) {
            Some(SCENARIO_FORMAT) => return scenarios(&text, out),
            Some(EPISODE_FORMAT) => return episodes(&text, out),
            _ => {}
        }
    }
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{} is not a recognized askhelp file: {e}", path.display())))?;
    match value.get("format").and_then(Value::as_str) {
        Some(_) if value.get("summaries").is_some() => results(&text, out),
        Some(_) if value.get("distribution").is_some() => coverage(&text, out),
        None if value.get("q_hat").is_some() => {
            let m = CalibratedModel::from_json(&text)?;
            writeln!(out, "kind=model")?;
            writeln!(out, "mode={}", serde_json::to_value(m.mode)?.as_str().unwrap_or("?"))?;
            writeln!(out, "epsilon={}", m.epsilon)?;
            writeln!(out, "delta={}", m.delta)?;
            writeln!(out, "epsilon_hat={}", m.epsilon_hat)?;
            writeln!(out, "q_hat={}", m.q_hat)?;
            writeln!(out, "threshold={}", m.threshold())?;
            writeln!(out, "n={}", m.n)?;
            Ok(())
        }
        _ => Err(Error::Data(format!("{} is not a recognized askhelp file", path.display()))),
    }
}

fn scenarios<W: Write>(text: &str, out: &mut W) -> Result<()> {
    let all = read_scenarios(text.as_bytes())?;
    writeln!(out, "kind=scenarios")?;
    writeln!(out, "count={}", all.len())?;
    let mut settings: Vec<String> = all.iter().map(|s| s.setting.to_string()).collect();
    settings.sort();
    settings.dedup();
    writeln!(out, "settings={}", settings.join(","))?;
    if let Some(h) = all.iter().map(|s| s.horizon).max() {
        writeln!(out, "max_horizon={h}")?;
    }
    Ok(())
}

fn episodes<W: Write>(text: &str, out: &mut W) -> Result<()> {
    let all = read_episodes(text.as_bytes())?;
    let count = |o: Outcome| all.iter().filter(|e| e.outcome == o).count();
    writeln!(out, "kind=episodes")?;
    writeln!(out, "count={}", all.len())?;
    writeln!(out, "success={}", count(Outcome::Success))?;
    writeln!(out, "failure={}", count(Outcome::Failure))?;
    writeln!(out, "halted={}", count(Outcome::Halted))?;
    writeln!(out, "help_steps={}", all.iter().map(|e| e.help_steps()).sum::<usize>())?;
    Ok(())
}

fn results<W: Write>(text: &str, out: &mut W) -> Result<()> {
    let file = ResultsFile::from_json(text)?;
    writeln!(out, "kind=results")?;
    writeln!(out, "version={}", file.version)?;
    writeln!(out, "root_seed={}", file.root_seed)?;
    writeln!(out, "setting={}", file.config.setting)?;
    for s in &file.summaries {
        writeln!(
            out,
            "method={} epsilon={} success={} help_step={} help_trial={} set_size={} coverage={} repeats={}",
            s.method.name(),
            s.epsilon,
            s.plan_success_rate,
            s.help_rate_step,
            s.help_rate_trial,
            s.avg_set_size,
            s.coverage,
            s.repeats.len()
        )?;
    }
    Ok(())
}

fn coverage<W: Write>(text: &str, out: &mut W) -> Result<()> {
    let file = CoverageFile::from_json(text)?;
    let d = &file.distribution;
    writeln!(out, "kind=coverage")?;
    writeln!(out, "version={}", file.version)?;
    writeln!(out, "root_seed={}", file.root_seed)?;
    writeln!(out, "target={}", d.target)?;
    writeln!(out, "repeats={}", d.per_repeat.len())?;
    writeln!(out, "fraction_meeting_target={}", d.fraction_meeting_target)?;
    for bin in &d.histogram {
        writeln!(out, "bin=[{},{}) count={}", bin.low, bin.high, bin.count)?;
    }
    Ok(())
}
