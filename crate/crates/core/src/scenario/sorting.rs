//! Multi-step food sorting. Three items sit on the table; the person likes one
//! or two of them and has told the robot about only some. Liked food goes on
//! the blue plate before any disliked food is thrown in the bin, in any order
//! within each group.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{prefix_code, prior_from_weights, Node, Scenario, Setting, Truth};
use crate::error::{Error, Result};
use crate::label::{Label, LabelSet, NOT_LISTED};
use crate::seed::{self, Rng};
use crate::sequence::TruthTree;

pub(super) const HORIZON: usize = 3;

pub const LIKED_FOODS: [&str; 14] = [
    "corn",
    "avocado",
    "celery",
    "carrot",
    "tomato",
    "lettuce",
    "apple",
    "orange",
    "pear",
    "lemon",
    "peanut butter",
    "sunny-side-up egg",
    "egg",
    "pea",
];

pub const DISLIKED_FOODS: [&str; 14] = [
    "pretzel",
    "cracker",
    "waffle",
    "mustard",
    "ketchup",
    "pizza",
    "meat patty",
    "cheese",
    "chicken drumstick",
    "peach",
    "mango",
    "M&M",
    "Skittles",
    "donut",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    Liked,
    Disliked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoodItem {
    pub name: String,
    pub preference: Preference,
    /// Whether the instruction states this preference.
    pub revealed: bool,
}

impl FoodItem {
    pub fn new(name: impl Into<String>, preference: Preference, revealed: bool) -> Self {
        Self { name: name.into(), preference, revealed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Place(usize),
    Dispose(usize),
    Distract(usize, usize),
}

const DISTRACTIONS: [&str; 2] = ["move the {} to the edge of the table", "pick up the {} and hold it"];

impl Action {
    fn text(self, items: &[FoodItem]) -> String {
        match self {
            Action::Place(i) => format!("put the {} on the blue plate", items[i].name),
            Action::Dispose(i) => format!("put the {} in the bin", items[i].name),
            Action::Distract(i, k) => DISTRACTIONS[k].replace("{}", &items[i].name),
        }
    }

    fn item(self) -> usize {
        match self {
            Action::Place(i) | Action::Dispose(i) | Action::Distract(i, _) => i,
        }
    }
}

/// Actions that follow the plate-first rule given true preferences.
fn acceptable_actions(prefs: &[Preference], remaining: &[usize]) -> Vec<Action> {
    let liked: Vec<usize> = remaining
        .iter()
        .copied()
        .filter(|&i| prefs[i] == Preference::Liked)
        .collect();
    if liked.is_empty() {
        remaining.iter().map(|&i| Action::Dispose(i)).collect()
    } else {
        liked.into_iter().map(Action::Place).collect()
    }
}

/// Probability that each action is acceptable under a uniform belief over the
/// preference assignments consistent with what is known and with one or two
/// liked items in total.
fn belief(items: &[FoodItem], known: &[bool], remaining: &[usize], action: Action) -> f64 {
    let unknown: Vec<usize> = (0..items.len()).filter(|&i| !known[i]).collect();
    let mut consistent = 0usize;
    let mut hits = 0usize;
    for mask in 0u32..(1 << unknown.len()) {
        let mut prefs: Vec<Preference> = items.iter().map(|it| it.preference).collect();
        for (bit, &i) in unknown.iter().enumerate() {
            prefs[i] = if mask & (1 << bit) != 0 { Preference::Liked } else { Preference::Disliked };
        }
        let liked = prefs.iter().filter(|p| **p == Preference::Liked).count();
        if !(1..=2).contains(&liked) {
            continue;
        }
        consistent += 1;
        if acceptable_actions(&prefs, remaining).contains(&action) {
            hits += 1;
        }
    }
    hits as f64 / consistent as f64
}

struct Layout {
    actions: [Action; 4],
    acceptable: LabelSet,
    prior: [f64; 5],
    ambiguity: f64,
}

fn layout(id: u64, items: &[FoodItem], handled: &[bool], prefix: &[Label]) -> Layout {
    let remaining: Vec<usize> = (0..items.len()).filter(|&i| !handled[i]).collect();
    let prefs: Vec<Preference> = items.iter().map(|it| it.preference).collect();
    let acceptable = acceptable_actions(&prefs, &remaining);
    let mut rng = seed::rng(id, &[seed::tag("layout"), prefix_code(prefix)]);

    let mut others: Vec<Action> = remaining
        .iter()
        .flat_map(|&i| [Action::Place(i), Action::Dispose(i)])
        .filter(|a| !acceptable.contains(a))
        .collect();
    others.shuffle(&mut rng);
    let mut chosen = acceptable.clone();
    chosen.extend(others);
    let mut distractions: Vec<Action> = remaining
        .iter()
        .flat_map(|&i| (0..DISTRACTIONS.len()).map(move |k| Action::Distract(i, k)))
        .collect();
    distractions.shuffle(&mut rng);
    chosen.extend(distractions);
    chosen.truncate(4);
    chosen.shuffle(&mut rng);
    let actions: [Action; 4] = chosen.try_into().expect("at least four candidate actions");

    // Handled items were executed correctly, which pins their preference.
    let known: Vec<bool> = (0..items.len()).map(|i| items[i].revealed || handled[i]).collect();
    let mut weights = [0.0; 5];
    let mut set = LabelSet::EMPTY;
    for (k, a) in actions.iter().enumerate() {
        if !matches!(a, Action::Distract(..)) {
            weights[k] = belief(items, &known, &remaining, *a);
        }
        if acceptable.contains(a) {
            set.insert(Label::from_index(k).expect("index below four"));
        }
    }
    let unknown_remaining = remaining.iter().filter(|&&i| !known[i]).count();
    Layout {
        actions,
        acceptable: set,
        prior: prior_from_weights(&weights),
        ambiguity: unknown_remaining as f64 / remaining.len() as f64,
    }
}

fn replay(id: u64, items: &[FoodItem], prefix: &[Label]) -> Result<(Layout, Vec<String>)> {
    let mut handled = vec![false; items.len()];
    let mut history = Vec::new();
    for (t, &label) in prefix.iter().enumerate() {
        let lay = layout(id, items, &handled, &prefix[..t]);
        if !lay.acceptable.contains(label) {
            return Err(Error::data(format!("label {label} at step {t} is not acceptable")));
        }
        let action = lay.actions[label.index()];
        history.push(action.text(items));
        handled[action.item()] = true;
    }
    Ok((layout(id, items, &handled, prefix), history))
}

fn option_texts(items: &[FoodItem], actions: &[Action; 4]) -> [String; 5] {
    let mut texts: [String; 5] = Default::default();
    for (t, a) in texts.iter_mut().zip(actions) {
        *t = a.text(items);
    }
    texts[4] = NOT_LISTED.to_string();
    texts
}

pub(super) fn node(scenario: &Scenario, items: &[FoodItem], prefix: &[Label]) -> Result<Node> {
    let (lay, history) = replay(scenario.id, items, prefix)?;
    let mut context = scenario.context_text();
    for done in history {
        context.push_str(&format!("\nYou: {done}."));
    }
    Ok(Node {
        context,
        options: option_texts(items, &lay.actions),
        acceptable: lay.acceptable,
        prior: lay.prior,
        ambiguity: lay.ambiguity,
    })
}

fn list(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => one.to_string(),
        [a, b] => format!("{a} and {b}"),
        _ => format!("{}, and {}", names[..names.len() - 1].join(", "), names[names.len() - 1]),
    }
}

fn enumerate_tree(id: u64, items: &[FoodItem], prefix: &mut Vec<Label>, tree: &mut TruthTree) {
    let (lay, _) = replay(id, items, prefix).expect("prefix built from acceptable labels");
    tree.insert(prefix.clone(), lay.acceptable);
    if prefix.len() + 1 == HORIZON {
        return;
    }
    for label in lay.acceptable.iter() {
        prefix.push(label);
        enumerate_tree(id, items, prefix, tree);
        prefix.pop();
    }
}

impl Scenario {
    /// Builds a sorting scenario from explicit items.
    pub fn sorting(id: u64, items: Vec<FoodItem>) -> Result<Scenario> {
        if items.len() != HORIZON {
            return Err(Error::argument(format!("sorting needs exactly {HORIZON} items")));
        }
        let liked = items.iter().filter(|i| i.preference == Preference::Liked).count();
        if !(1..=2).contains(&liked) {
            return Err(Error::argument("sorting needs one or two liked items"));
        }
        let names: Vec<&str> = items.iter().map(|i| i.name.as_str()).collect();
        let scene = format!(
            "On the table there are {}. There is also a blue plate and a bin.",
            list(&names)
        );
        let said = |p: Preference| -> Vec<&str> {
            items
                .iter()
                .filter(|i| i.revealed && i.preference == p)
                .map(|i| i.name.as_str())
                .collect()
        };
        let mut instruction =
            String::from("Put the food I like on the blue plate first, then put the rest in the bin.");
        let (likes, dislikes) = (said(Preference::Liked), said(Preference::Disliked));
        if !likes.is_empty() {
            instruction.push_str(&format!(" I like {}.", list(&likes)));
        }
        if !dislikes.is_empty() {
            instruction.push_str(&format!(" I don't like {}.", list(&dislikes)));
        }

        let mut tree = TruthTree::new();
        enumerate_tree(id, &items, &mut Vec::new(), &mut tree);
        tree.validate(HORIZON)?;
        let (root, _) = replay(id, &items, &[])?;
        Ok(Scenario {
            id,
            setting: Setting::Sorting,
            scene,
            instruction,
            option_texts: option_texts(&items, &root.actions),
            truth: Truth::Tree(tree),
            ambiguity: root.ambiguity,
            horizon: HORIZON,
            intent_prior: root.prior,
            items: Some(items),
        })
    }
}

pub(super) fn sample(id: u64, rng: &mut Rng) -> Scenario {
    let liked = if rng.random::<bool>() { 1 } else { 2 };
    let mut items: Vec<FoodItem> = LIKED_FOODS
        .choose_multiple(rng, liked)
        .map(|n| FoodItem::new(*n, Preference::Liked, false))
        .chain(
            DISLIKED_FOODS
                .choose_multiple(rng, HORIZON - liked)
                .map(|n| FoodItem::new(*n, Preference::Disliked, false)),
        )
        .collect();
    items.shuffle(rng);
    // Uniform over the six nonempty proper subsets of three items.
    let mask = rng.random_range(1..(1u32 << HORIZON) - 1);
    for (k, item) in items.iter_mut().enumerate() {
        item.revealed = mask & (1 << k) != 0;
    }
    Scenario::sorting(id, items).expect("sampled items satisfy the sorting constraints")
}
