//! Interactive episodes: the person at the terminal answers help requests.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::PathBuf;

use askhelp::cp::PredictionSet;
use askhelp::harness::RepeatSeeds;
use askhelp::scenario::{
    run_episode, sample_scenarios, write_episodes, HelpProvider, HelpResponse, Node, Outcome, Policy,
};
use askhelp::{CalibratedModel, Error, Label, Result, Scenario};
use clap::{ArgMatches, Args};

use crate::config::ExperimentArgs;

pub const DEFAULT_QUESTION: &str = "Which do you mean: {options}?";

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    /// Calibrated model written by `calibrate` (required).
    #[arg(long)]
    pub model: PathBuf,
    /// Scenario file to step through [default: sample `--count` scenarios].
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Scenarios to sample when no file is given.
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    /// Question shown on a help request; `{options}` expands to the ranked set.
    #[arg(long, default_value = DEFAULT_QUESTION)]
    pub question: String,
    /// Invalid answers accepted before the episode halts.
    #[arg(long, default_value_t = 3)]
    pub max_retries: usize,
    /// Episode file recording the session.
    #[arg(long, default_value = "episodes.jsonl")]
    pub out: PathBuf,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

/// Renders the question for a help request: set members in ranked order with their texts.
pub fn question(template: &str, node: &Node, set: &PredictionSet) -> String {
    let options: Vec<String> =
        set.ranking.iter().map(|l| format!("{l}) {}", node.options[l.index()])).collect();
    template.replace("{options}", &options.join(", "))
}

/// Reads answers from `input` and echoes prompts and executed actions to `output`.
pub struct TerminalHelper<'a, R, W> {
    input: &'a mut R,
    output: &'a mut W,
    template: &'a str,
    max_retries: usize,
    /// Executed steps already reported for the current episode.
    reported: usize,
}

impl<'a, R: BufRead, W: Write> TerminalHelper<'a, R, W> {
    pub fn new(input: &'a mut R, output: &'a mut W, template: &'a str, max_retries: usize) -> Self {
        Self { input, output, template, max_retries, reported: 0 }
    }

    fn report_executed(&mut self, scenario: &Scenario, executed: &[Label]) -> Result<()> {
        while self.reported < executed.len() {
            let step = self.reported;
            let label = executed[step];
            let node = scenario.node(step, &executed[..step])?;
            writeln!(self.output, "  step {}: executing {label}) {}", step + 1, node.options[label.index()])?;
            self.reported += 1;
        }
        Ok(())
    }

    fn read_answer(&mut self) -> Result<Option<String>> {
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(line.trim().to_string()))
    }
}

impl<R: BufRead, W: Write> HelpProvider for TerminalHelper<'_, R, W> {
    fn help(
        &mut self,
        scenario: &Scenario,
        node: &Node,
        step: usize,
        prefix: &[Label],
        set: &PredictionSet,
    ) -> Result<HelpResponse> {
        self.report_executed(scenario, prefix)?;
        if set.is_empty() {
            writeln!(self.output, "  step {}: no option is plausible enough to offer; halting", step + 1)?;
            return Ok(HelpResponse::Halt);
        }
        writeln!(self.output, "  {}", question(self.template, node, set))?;
        for attempt in 0..=self.max_retries {
            write!(self.output, "  answer (letter, or h to halt): ")?;
            self.output.flush()?;
            let Some(answer) = self.read_answer()? else {
                writeln!(self.output)?;
                return Ok(HelpResponse::Halt);
            };
            if answer.eq_ignore_ascii_case("h") {
                return Ok(HelpResponse::Halt);
            }
            match answer.parse::<Label>() {
                Ok(label) if set.contains(label) => {
                    self.reported += 1;
                    writeln!(self.output, "  step {}: executing {label}) {}", step + 1, node.options[label.index()])?;
                    return Ok(HelpResponse::Choose(label));
                }
                _ if attempt < self.max_retries => {
                    writeln!(self.output, "  {answer:?} is not one of the offered options")?;
                }
                _ => {}
            }
        }
        writeln!(self.output, "  too many invalid answers; halting")?;
        Ok(HelpResponse::Halt)
    }
}

pub fn run<R: BufRead, W: Write>(args: &DemoArgs, matches: &ArgMatches, input: &mut R, output: &mut W) -> Result<()> {
    let model = CalibratedModel::from_json(&std::fs::read_to_string(&args.model)?)?;
    let config = args.experiment.resolve(matches)?;
    let seeds = RepeatSeeds::new(config.seed, 0);
    let scenarios = match &args.scenarios {
        Some(path) => crate::load_scenarios(path)?,
        None => sample_scenarios(config.setting, args.count, seeds.test)?,
    };
    if scenarios.is_empty() {
        return Err(Error::Argument("no scenarios to run".into()));
    }
    let scorer = config.scorer.build()?;
    let mut episodes = Vec::with_capacity(scenarios.len());
    for scenario in &scenarios {
        writeln!(output, "scenario {} ({}): {}", scenario.id, scenario.setting, scenario.scene)?;
        writeln!(output, "  instruction: {}", scenario.instruction)?;
        let mut helper = TerminalHelper::new(input, output, &args.question, args.max_retries);
        let episode = run_episode(scenario, &scorer, Policy::Conformal(&model), &mut helper, seeds.scorer)?;
        let executed: Vec<Label> = episode.steps.iter().filter_map(|s| s.executed).collect();
        helper.report_executed(scenario, &executed)?;
        let outcome = match episode.outcome {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
            Outcome::Halted => "halted",
        };
        writeln!(output, "  outcome: {outcome}")?;
        episodes.push(episode);
    }
    write_episodes(BufWriter::new(File::create(&args.out)?), &episodes)?;
    let successes = episodes.iter().filter(|e| e.outcome == Outcome::Success).count();
    writeln!(output, "episodes={} success={successes}", episodes.len())?;
    Ok(())
}
