use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::label::{Label, NOT_LISTED};
use crate::seed;

/// Physical layout of the five options in a rendered prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionOrder {
    /// Generation order with `E` last.
    Identity,
    Shuffled(u64),
}

/// A rendered multiple-choice prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McqaPrompt {
    pub context_text: String,
    /// Options in canonical order; index 4 is the catch-all.
    pub options: [String; 5],
    /// `permutation[position]` is the canonical index shown at that position.
    pub permutation: [usize; 5],
    pub text: String,
}

impl McqaPrompt {
    /// Maps per-position values back to canonical label order.
    pub fn unpermute(&self, physical: [f64; 5]) -> [f64; 5] {
        let mut canonical = [0.0; 5];
        for (pos, value) in physical.into_iter().enumerate() {
            canonical[self.permutation[pos]] = value;
        }
        canonical
    }

    /// Canonical label shown under the letter at `position`.
    pub fn canonical_label(&self, position: Label) -> Label {
        Label::from_index(self.permutation[position.index()]).expect("permutation holds indices below five")
    }

    pub fn option_at(&self, position: Label) -> &str {
        &self.options[self.permutation[position.index()]]
    }
}

/// Appends the catch-all option, permutes, and renders the answer prompt.
pub fn build_mcqa_prompt(context: &str, generated: [String; 4], order: OptionOrder) -> McqaPrompt {
    let [a, b, c, d] = generated;
    let options = [a, b, c, d, NOT_LISTED.to_string()];
    let mut permutation = [0, 1, 2, 3, 4];
    if let OptionOrder::Shuffled(s) = order {
        permutation.shuffle(&mut seed::rng(s, &[seed::tag("mcqa-order")]));
    }
    let mut text = format!("{context}\nYou:\n");
    for (pos, &canonical) in permutation.iter().enumerate() {
        let letter = Label::from_index(pos).expect("five positions");
        text.push_str(&format!("{letter}) {}\n", options[canonical]));
    }
    text.push_str("We: Which option is correct? Answer with a single letter.\nYou:");
    McqaPrompt { context_text: context.to_string(), options, permutation, text }
}

const GENERATION_EXAMPLES: &str = "\
We: You are a robot operating in an office kitchen. You are in front of a counter with two closed drawers, a top one and a bottom one. There is also a landfill bin, a recycling bin, and a compost bin.

We: On the counter, there is an orange soda, a Pepsi, and an apple.
We: Put that drink in the top drawer.
You:
A) open the top drawer and put the orange soda in it
B) open the bottom drawer and put the Pepsi in it
C) open the bottom drawer and put the orange soda in it
D) open the top drawer and put the Pepsi in it

We: On the counter, there is an energy bar, a banana, and a microwave.
We: Put the snack next to the microwave.
You:
A) pick up the energy bar and put it next to the microwave
B) pick up the banana and put it next to the energy bar
C) pick up the banana and put it next to the microwave
D) pick up the energy bar and put it next to the banana

We: On the counter, there is a Coke, a Sprite, and a sponge.
We: Can you dispose of the can? It should have expired.
You:
A) pick up the sponge and put it in the landfill bin
B) pick up the Coke and put it in the recycling bin
C) pick up the Sprite and put it in the recycling bin
D) pick up the Coke and put it in the landfill bin
";

/// Few-shot prompt asking for four semantically different next steps.
pub fn option_generation_prompt(context: &str) -> String {
    format!("{GENERATION_EXAMPLES}\n{context}\nYou:\n")
}

/// Reads the four `A)`-`D)` lines of a generation response.
pub fn parse_generated_options(response: &str) -> Result<[String; 4]> {
    let mut found: [Option<String>; 4] = Default::default();
    for line in response.lines() {
        let line = line.trim();
        let mut chars = line.chars();
        let (Some(letter), Some(')')) = (chars.next(), chars.next()) else {
            continue;
        };
        let Some(slot) = "ABCD".find(letter) else {
            continue;
        };
        let text = chars.as_str().trim();
        if found[slot].is_none() && !text.is_empty() {
            found[slot] = Some(text.to_string());
        }
    }
    let missing: Vec<char> = found
        .iter()
        .zip("ABCD".chars())
        .filter(|(f, _)| f.is_none())
        .map(|(_, c)| c)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Protocol(format!("generated options missing {missing:?}")));
    }
    Ok(found.map(|f| f.expect("checked above")))
}
