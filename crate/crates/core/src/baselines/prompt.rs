//! Prompt layouts and response parsers for the prompt-only baselines, which
//! exist only against a live model.

use crate::error::{Error, Result};
use crate::label::{Label, LabelSet};
use crate::scorer::McqaPrompt;

const PROMPT_SET_EXAMPLES: &str = "\
We: On the counter, there is an orange soda, a Pepsi, and an apple.
We: Put that drink in the top drawer.
You:
A) open the top drawer and put the orange soda in it
B) open the bottom drawer and put the Pepsi in it
C) open the bottom drawer and put the orange soda in it
D) open the top drawer and put the Pepsi in it
E) an option not listed here
We: Which options are possibly correct?
You: A, D

We: On the counter, there is an energy bar, a banana, and a microwave.
We: Put the energy bar next to the microwave.
You:
A) pick up the banana and put it next to the microwave
B) pick up the energy bar and put it next to the microwave
C) pick up the energy bar and put it next to the banana
D) pick up the banana and put it next to the energy bar
E) an option not listed here
We: Which options are possibly correct?
You: B
";

const BINARY_EXAMPLES: &str = "\
We: On the counter, there is an orange soda, a Pepsi, and an apple.
We: Put that drink in the top drawer.
You: I will open the top drawer and put the orange soda in it.
Certain/Uncertain: Uncertain

We: On the counter, there is an energy bar, a banana, and a microwave.
We: Put the energy bar next to the microwave.
You: I will pick up the energy bar and put it next to the microwave.
Certain/Uncertain: Certain
";

/// Asks the model to list every option that could be correct.
pub fn prompt_set_prompt(mcqa: &McqaPrompt) -> String {
    let options = mcqa
        .text
        .strip_prefix(mcqa.context_text.as_str())
        .and_then(|rest| rest.split("We: Which option is correct?").next())
        .unwrap_or("");
    format!(
        "{PROMPT_SET_EXAMPLES}\n{}{options}We: Which options are possibly correct?\nYou:",
        mcqa.context_text
    )
}

/// Parses a letter list such as `" A, C"` into canonical labels.
pub fn parse_prompt_set(response: &str, mcqa: &McqaPrompt) -> Result<LabelSet> {
    let line = response.lines().next().unwrap_or("");
    let mut set = LabelSet::EMPTY;
    for token in line.split([',', ' ']).filter(|t| !t.is_empty()) {
        let t = token.trim_end_matches(')').trim_end_matches('.');
        let position = match t {
            "A" | "B" | "C" | "D" | "E" => t.parse::<Label>()?,
            _ => return Err(Error::Protocol(format!("unexpected token {token:?} in prediction set"))),
        };
        set.insert(mcqa.canonical_label(position));
    }
    if set.is_empty() {
        return Err(Error::DegenerateResponse);
    }
    Ok(set)
}

/// First stage of the binary baseline: the model names its next action.
pub fn binary_action_prompt(context: &str) -> String {
    format!("{context}\nYou: I will")
}

/// Second stage: the model labels its own action as certain or not.
pub fn binary_certainty_prompt(context: &str, action: &str) -> String {
    let action = action.trim().trim_end_matches('.');
    format!("{BINARY_EXAMPLES}\n{context}\nYou: I will {action}.\nCertain/Uncertain:")
}

/// `true` for "Certain", `false` for "Uncertain".
pub fn parse_certainty(response: &str) -> Result<bool> {
    match response.split_whitespace().next().map(|w| w.trim_end_matches('.')) {
        Some("Certain") => Ok(true),
        Some("Uncertain") => Ok(false),
        _ => Err(Error::Protocol(format!("expected Certain or Uncertain, got {response:?}"))),
    }
}
