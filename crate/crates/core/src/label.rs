//! The fixed five-letter option alphabet and per-option confidence vectors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the total mass of a confidence vector.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Text of the catch-all option that is always appended as `E`.
pub const NOT_LISTED: &str = "an option not listed here";

/// One of the five multiple-choice labels. `E` always means "an option not listed here".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
    C,
    D,
    E,
}

impl Label {
    pub const COUNT: usize = 5;
    pub const ALL: [Label; 5] = [Label::A, Label::B, Label::C, Label::D, Label::E];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Label::A),
            "B" | "b" => Ok(Label::B),
            "C" | "c" => Ok(Label::C),
            "D" | "d" => Ok(Label::D),
            "E" | "e" => Ok(Label::E),
            other => Err(Error::argument(format!("not a label: {other:?}"))),
        }
    }
}

/// A subset of the label alphabet.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);
    pub const FULL: LabelSet = LabelSet(0b1_1111);

    pub fn singleton(label: Label) -> Self {
        LabelSet(1 << label.index())
    }

    pub fn contains(self, label: Label) -> bool {
        self.0 & (1 << label.index()) != 0
    }

    pub fn insert(&mut self, label: Label) {
        self.0 |= 1 << label.index();
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: LabelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    /// Members in alphabet order.
    pub fn iter(self) -> impl Iterator<Item = Label> {
        Label::ALL.into_iter().filter(move |l| self.contains(*l))
    }
}

impl FromIterator<Label> for LabelSet {
    fn from_iter<I: IntoIterator<Item = Label>>(iter: I) -> Self {
        let mut set = LabelSet::EMPTY;
        for l in iter {
            set.insert(l);
        }
        set
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<Label>::deserialize(d)?;
        Ok(labels.into_iter().collect())
    }
}

/// Per-label confidence scores. Entries lie in `[0, 1]` and sum to at most one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceVector([f64; 5]);

impl ConfidenceVector {
    pub fn new(scores: [f64; 5]) -> Result<Self> {
        let mut total = 0.0;
        for (i, &p) in scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::argument(format!(
                    "confidence for {} is {p}, outside [0, 1]",
                    Label::ALL[i]
                )));
            }
            total += p;
        }
        if total > 1.0 + MASS_TOLERANCE {
            return Err(Error::argument(format!("confidence mass {total} exceeds 1")));
        }
        Ok(ConfidenceVector(scores))
    }

    /// Puts all mass on one label.
    pub fn one_hot(label: Label) -> Self {
        let mut v = [0.0; 5];
        v[label.index()] = 1.0;
        ConfidenceVector(v)
    }

    /// Normalizes non-negative weights to unit mass.
    pub fn from_weights(weights: [f64; 5]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::argument("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::argument("weights sum to zero"));
        }
        Ok(ConfidenceVector(weights.map(|w| (w / total).min(1.0))))
    }

    #[inline]
    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    pub fn as_array(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Labels sorted by descending score, alphabet order on ties.
    pub fn ranked(&self) -> [Label; 5] {
        let mut labels = Label::ALL;
        labels.sort_by(|a, b| self.get(*b).total_cmp(&self.get(*a)).then(a.cmp(b)));
        labels
    }

    pub fn argmax(&self) -> Label {
        self.ranked()[0]
    }

    /// Highest-scoring member of `set`, alphabet order on ties.
    pub fn argmax_within(&self, set: LabelSet) -> Option<Label> {
        self.ranked().into_iter().find(|l| set.contains(*l))
    }
}

impl Serialize for ConfidenceVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<Label, f64> = Label::ALL.iter().map(|l| (*l, self.get(*l))).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConfidenceVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<Label, f64>::deserialize(d)?;
        if map.len() != Label::COUNT {
            return Err(serde::de::Error::custom(
                "confidence vector needs exactly one entry per label",
            ));
        }
        let mut scores = [0.0; 5];
        for (l, p) in map {
            scores[l.index()] = p;
        }
        ConfidenceVector::new(scores).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_breaks_ties_alphabetically() {
        let v = ConfidenceVector::new([0.2, 0.3, 0.3, 0.1, 0.1]).unwrap();
        assert_eq!(v.ranked(), [Label::B, Label::C, Label::A, Label::D, Label::E]);
        assert_eq!(v.argmax(), Label::B);
    }

    #[test]
    fn rejects_excess_mass_and_out_of_range() {
        assert!(ConfidenceVector::new([0.5, 0.5, 0.1, 0.0, 0.0]).is_err());
        assert!(ConfidenceVector::new([-0.1, 0.5, 0.1, 0.0, 0.0]).is_err());
        assert!(ConfidenceVector::new([0.6, 0.4, 0.0, 0.0, 1e-10]).is_ok());
    }

    #[test]
    fn json_shape_is_a_label_map() {
        let v = ConfidenceVector::new([0.7, 0.2, 0.05, 0.04, 0.01]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"A":0.7,"B":0.2,"C":0.05,"D":0.04,"E":0.01}"#);
        let back: ConfidenceVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<ConfidenceVector>(r#"{"A":1.0}"#).is_err());
    }

    #[test]
    fn label_set_ops() {
        let s: LabelSet = [Label::A, Label::C].into_iter().collect();
        assert_eq!(s.len(), 2);
        assert!(s.contains(Label::C) && !s.contains(Label::B));
        assert!(LabelSet::singleton(Label::A).is_subset(s));
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"["A","C"]"#);
    }
}
