//! Single-step tabletop rearrangement: blocks and bowls in three colors, with
//! instructions that are ambiguous about an attribute, a quantity, or a spatial
//! relation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::{prior_from_weights, Scenario, Setting, Truth};
use crate::label::{Label, NOT_LISTED};
use crate::seed::Rng;

const COLORS: [&str; 3] = ["blue", "green", "yellow"];

/// Color words that mostly mean the first color but could be read as the second.
const COLOR_SYNONYMS: [(&str, &str, &str); 6] = [
    ("navy", "blue", "green"),
    ("cyan", "blue", "green"),
    ("lime", "green", "yellow"),
    ("olive", "green", "yellow"),
    ("golden", "yellow", "green"),
    ("lemon-colored", "yellow", "green"),
];

const VAGUE_QUANTITIES: [&str; 4] = ["a few", "a couple of", "some", "a handful of"];
const EXACT_QUANTITIES: [(&str, usize); 7] = [
    ("a", 1),
    ("one", 1),
    ("a single", 1),
    ("two", 2),
    ("a pair of", 2),
    ("three", 3),
    ("all the", 3),
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Front,
    Behind,
    Left,
    Right,
}

impl Direction {
    const ALL: [Direction; 4] = [Direction::Front, Direction::Behind, Direction::Left, Direction::Right];

    fn phrase(self) -> &'static str {
        match self {
            Direction::Front => "in front of",
            Direction::Behind => "behind",
            Direction::Left => "to the left of",
            Direction::Right => "to the right of",
        }
    }
}

fn two_colors(rng: &mut Rng) -> (&'static str, &'static str) {
    let mut c = COLORS;
    c.shuffle(rng);
    (c[0], c[1])
}

fn tabletop_scene(rng: &mut Rng) -> String {
    let mut objects: Vec<String> = COLORS
        .iter()
        .flat_map(|c| [format!("a {c} block"), format!("a {c} bowl")])
        .collect();
    objects.shuffle(rng);
    let last = objects.pop().expect("six objects");
    format!("On the table there are {}, and {last}.", objects.join(", "))
}

fn move_text(object_color: &str, object: &str, target: &str) -> String {
    format!("put the {object_color} {object} in the {target} bowl")
}

/// Lays candidates and distractors out over `A`-`D`, then draws the truth from
/// the resulting prior.
fn assemble(
    id: u64,
    setting: Setting,
    scene: String,
    instruction: String,
    candidates: Vec<(String, f64)>,
    mut fillers: Vec<String>,
    ambiguity: f64,
    rng: &mut Rng,
) -> Scenario {
    fillers.retain(|f| candidates.iter().all(|(c, _)| c != f));
    fillers.sort();
    fillers.dedup();
    fillers.shuffle(rng);
    let mut options: Vec<(String, f64)> = candidates;
    options.extend(fillers.into_iter().map(|f| (f, 0.0)));
    options.truncate(4);
    assert_eq!(options.len(), 4, "not enough distinct options");
    options.shuffle(rng);

    let mut weights = [0.0; 5];
    let mut option_texts: [String; 5] = Default::default();
    for (i, (text, w)) in options.into_iter().enumerate() {
        option_texts[i] = text;
        weights[i] = w;
    }
    option_texts[4] = NOT_LISTED.to_string();
    let prior = prior_from_weights(&weights);

    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut truth = Label::E;
    for l in Label::ALL {
        acc += prior[l.index()];
        if u < acc {
            truth = l;
            break;
        }
    }

    Scenario {
        id,
        setting,
        scene,
        instruction,
        option_texts,
        truth: Truth::Single(truth),
        ambiguity,
        horizon: 1,
        intent_prior: prior,
        items: None,
    }
}

fn attribute_fillers(block: &str, target: &str) -> Vec<String> {
    let mut fillers = Vec::new();
    for c in COLORS {
        for t in COLORS {
            if c != block || t != target {
                fillers.push(move_text(c, "block", t));
            }
            if c != t {
                fillers.push(move_text(c, "bowl", t));
            }
        }
    }
    fillers
}

pub(super) fn attribute(id: u64, rng: &mut Rng) -> Scenario {
    let scene = tabletop_scene(rng);
    let (block, target) = two_colors(rng);
    let canonical = move_text(block, "block", target);
    let kind: f64 = rng.random();
    let (instruction, candidates, ambiguity) = if kind < 0.4 {
        (canonical.clone(), vec![(canonical, 1.0)], 0.0)
    } else if kind < 0.6 {
        let shape = *["cube", "square block"].choose(rng).expect("nonempty");
        let container = *["container", "receptacle"].choose(rng).expect("nonempty");
        (
            format!("put the {block} {shape} in the {target} {container}"),
            vec![(canonical, 0.9), (move_text(block, "bowl", target), 0.1)],
            0.2,
        )
    } else if kind < 0.8 {
        let choices: Vec<_> = COLOR_SYNONYMS.iter().filter(|(_, c, _)| *c == block).collect();
        let (word, _, alternative) = **choices.choose(rng).expect("every color has synonyms");
        (
            format!("put the {word} block in the {target} bowl"),
            vec![(canonical, 0.8), (move_text(alternative, "block", target), 0.2)],
            0.3,
        )
    } else {
        (
            format!("put the {block} object in the {target} bowl"),
            vec![(canonical, 0.6), (move_text(block, "bowl", target), 0.4)],
            0.5,
        )
    };
    let fillers = attribute_fillers(block, target);
    assemble(id, Setting::Attribute, scene, instruction, candidates, fillers, ambiguity, rng)
}

fn quantity_text(n: usize, target: &str) -> String {
    match n {
        1 => format!("put one block in the {target} bowl"),
        2 => format!("put two blocks in the {target} bowl"),
        _ => format!("put three blocks in the {target} bowl"),
    }
}

pub(super) fn numeric(id: u64, rng: &mut Rng) -> Scenario {
    let block = *COLORS.choose(rng).expect("nonempty");
    let (target, other) = two_colors(rng);
    let scene = format!(
        "On the table there are three {block} blocks, a {target} bowl, and a {other} bowl."
    );
    let (instruction, candidates, ambiguity) = if rng.random::<f64>() < 0.4 {
        let (word, n) = *EXACT_QUANTITIES.choose(rng).expect("nonempty");
        let noun = if n == 1 && word != "all the" { "block" } else { "blocks" };
        (
            format!("put {word} {noun} in the {target} bowl"),
            vec![(quantity_text(n, target), 1.0)],
            0.0,
        )
    } else {
        let word = *VAGUE_QUANTITIES.choose(rng).expect("nonempty");
        (
            format!("put {word} blocks in the {target} bowl"),
            vec![(quantity_text(2, target), 0.5), (quantity_text(3, target), 0.5)],
            0.6,
        )
    };
    let fillers = vec![
        quantity_text(1, target),
        quantity_text(2, target),
        quantity_text(3, target),
        quantity_text(1, other),
        quantity_text(2, other),
    ];
    assemble(id, Setting::Numeric, scene, instruction, candidates, fillers, ambiguity, rng)
}

pub(super) fn spatial(id: u64, rng: &mut Rng) -> Scenario {
    let scene = tabletop_scene(rng);
    let (block, target) = two_colors(rng);
    let option = |d: Direction| format!("put the {block} block {} the {target} bowl", d.phrase());
    let kind: f64 = rng.random();
    let (phrase, readings, ambiguity): (&str, Vec<Direction>, f64) = if kind < 0.3 {
        let d = *Direction::ALL.choose(rng).expect("nonempty");
        (d.phrase(), vec![d], 0.0)
    } else if kind < 0.475 {
        ("lateral to", vec![Direction::Left, Direction::Right], 0.6)
    } else if kind < 0.65 {
        ("along the line of sight of", vec![Direction::Front, Direction::Behind], 0.6)
    } else {
        let word = *["near", "close to", "beside", "next to"].choose(rng).expect("nonempty");
        (word, Direction::ALL.to_vec(), 1.0)
    };
    let weight = 1.0 / readings.len() as f64;
    let candidates = readings.iter().map(|&d| (option(d), weight)).collect();
    let fillers = Direction::ALL.iter().map(|&d| option(d)).collect();
    let instruction = format!("put the {block} block {phrase} the {target} bowl");
    assemble(id, Setting::Spatial, scene, instruction, candidates, fillers, ambiguity, rng)
}
