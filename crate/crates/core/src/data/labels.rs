//! Basic expression classes, multi-label vectors and the compound catalog.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{NUM_BASIC, NUM_COMPOUND};

/// The six trainable basic expressions. Neutral is recognised at ingestion
/// and filtered out before training, so it has no variant here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasicClass {
    Anger = 0,
    Disgust = 1,
    Fear = 2,
    Happiness = 3,
    Sadness = 4,
    Surprise = 5,
}

impl BasicClass {
    pub const ALL: [BasicClass; NUM_BASIC] = [
        BasicClass::Anger,
        BasicClass::Disgust,
        BasicClass::Fear,
        BasicClass::Happiness,
        BasicClass::Sadness,
        BasicClass::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BasicClass::Anger => "anger",
            BasicClass::Disgust => "disgust",
            BasicClass::Fear => "fear",
            BasicClass::Happiness => "happiness",
            BasicClass::Sadness => "sadness",
            BasicClass::Surprise => "surprise",
        }
    }
}

impl fmt::Display for BasicClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Soft multi-label target over the basic classes. Entries lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelVector(pub [f64; NUM_BASIC]);

impl LabelVector {
    pub fn one_hot(class: BasicClass) -> Self {
        let mut v = [0.0; NUM_BASIC];
        v[class.index()] = 1.0;
        Self(v)
    }

    pub fn from_classes(classes: &[BasicClass]) -> Self {
        let mut v = [0.0; NUM_BASIC];
        for c in classes {
            v[c.index()] = 1.0;
        }
        Self(v)
    }

    pub fn get(&self, class: BasicClass) -> f64 {
        self.0[class.index()]
    }

    pub fn values(&self) -> &[f64; NUM_BASIC] {
        &self.0
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Classes with a nonzero entry, in index order.
    pub fn support(&self) -> Vec<BasicClass> {
        BasicClass::ALL
            .into_iter()
            .filter(|c| self.0[c.index()] > 0.0)
            .collect()
    }

    /// Class with the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> BasicClass {
        let mut best = 0;
        for i in 1..NUM_BASIC {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        BasicClass::ALL[best]
    }

    pub fn is_one_hot(&self) -> bool {
        self.0.iter().filter(|&&v| v == 1.0).count() == 1
            && self.0.iter().filter(|&&v| v == 0.0).count() == NUM_BASIC - 1
    }

    /// Entries `>= threshold` become 1, the rest 0.
    pub fn binarized(&self, threshold: f64) -> Self {
        Self(self.0.map(|v| if v >= threshold { 1.0 } else { 0.0 }))
    }
}

/// One compound expression: a named pair of basic classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CompoundEntry {
    pub name: &'static str,
    pub constituents: [BasicClass; 2],
}

impl CompoundEntry {
    pub fn contains(&self, class: BasicClass) -> bool {
        self.constituents.contains(&class)
    }

    /// Sum of this entry's constituent probabilities.
    pub fn score(&self, probs: &[f64]) -> f64 {
        probs[self.constituents[0].index()] + probs[self.constituents[1].index()]
    }
}

const STANDARD_ENTRIES: [CompoundEntry; NUM_COMPOUND] = {
    use BasicClass::*;
    [
        CompoundEntry {
            name: "Fearfully Surprised",
            constituents: [Fear, Surprise],
        },
        CompoundEntry {
            name: "Happily Surprised",
            constituents: [Happiness, Surprise],
        },
        CompoundEntry {
            name: "Sadly Surprised",
            constituents: [Sadness, Surprise],
        },
        CompoundEntry {
            name: "Disgustedly Surprised",
            constituents: [Disgust, Surprise],
        },
        CompoundEntry {
            name: "Angrily Surprised",
            constituents: [Anger, Surprise],
        },
        CompoundEntry {
            name: "Sadly Fearful",
            constituents: [Sadness, Fear],
        },
        CompoundEntry {
            name: "Sadly Angry",
            constituents: [Sadness, Anger],
        },
    ]
};

/// The seven compound classes scored at inference time, in fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompoundCatalog {
    entries: Vec<CompoundEntry>,
}

impl Default for CompoundCatalog {
    fn default() -> Self {
        Self::standard()
    }
}

impl CompoundCatalog {
    pub fn standard() -> Self {
        Self {
            entries: STANDARD_ENTRIES.to_vec(),
        }
    }

    pub fn entries(&self) -> &[CompoundEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&CompoundEntry> {
        self.entries.get(index)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    /// Index of the entry whose constituents are exactly `classes`.
    pub fn find(&self, classes: &[BasicClass]) -> Option<usize> {
        if classes.len() != 2 {
            return None;
        }
        self.entries
            .iter()
            .position(|e| e.contains(classes[0]) && e.contains(classes[1]) && classes[0] != classes[1])
    }

    /// Entry with the largest summed label mass; ties go to the lowest index.
    pub fn dominant_entry(&self, label: &LabelVector) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let s = e.score(label.values());
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        let cat = CompoundCatalog::standard();
        assert_eq!(cat.len(), 7);
        for e in cat.entries() {
            assert_ne!(e.constituents[0], e.constituents[1]);
        }
        let surprise = cat
            .entries()
            .iter()
            .filter(|e| e.contains(BasicClass::Surprise))
            .count();
        assert_eq!(surprise, 5);
        assert_eq!(cat.entries()[0].name, "Fearfully Surprised");
        assert_eq!(cat.entries()[6].name, "Sadly Angry");
    }

    #[test]
    fn find_is_order_insensitive() {
        let cat = CompoundCatalog::standard();
        use BasicClass::*;
        assert_eq!(cat.find(&[Surprise, Fear]), Some(0));
        assert_eq!(cat.find(&[Anger, Sadness]), Some(6));
        assert_eq!(cat.find(&[Happiness, Anger]), None);
        assert_eq!(cat.find(&[Fear]), None);
    }

    #[test]
    fn dominant_entry_breaks_ties_low() {
        let cat = CompoundCatalog::standard();
        let l = LabelVector::one_hot(BasicClass::Surprise);
        assert_eq!(cat.dominant_entry(&l), 0);
        let l = LabelVector::from_classes(&[BasicClass::Sadness, BasicClass::Anger]);
        assert_eq!(cat.dominant_entry(&l), 6);
    }

    #[test]
    fn label_helpers() {
        let l = LabelVector([0.0, 0.2, 0.7, 0.0, 0.0, 0.7]);
        assert_eq!(l.argmax(), BasicClass::Fear);
        assert_eq!(l.support(), vec![BasicClass::Disgust, BasicClass::Fear, BasicClass::Surprise]);
        assert!(!l.is_one_hot());
        assert_eq!(l.binarized(0.5).support(), vec![BasicClass::Fear, BasicClass::Surprise]);
        assert!(LabelVector::one_hot(BasicClass::Anger).is_one_hot());
    }
}
