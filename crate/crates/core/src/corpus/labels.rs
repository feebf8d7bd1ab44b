//! The 19-value label space and label-set arithmetic.
//!
//! The canonical order below is fixed for the whole harness: probability
//! vectors, presence bit vectors, metric tables, and prediction files all
//! index values by this order.

use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

/// Number of values in the refined taxonomy.
pub const LABEL_COUNT: usize = 19;

/// One of the 19 refined Schwartz values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValueLabel {
    #[serde(rename = "Self-direction: thought")]
    SelfDirectionThought,
    #[serde(rename = "Self-direction: action")]
    SelfDirectionAction,
    #[serde(rename = "Stimulation")]
    Stimulation,
    #[serde(rename = "Hedonism")]
    Hedonism,
    #[serde(rename = "Achievement")]
    Achievement,
    #[serde(rename = "Power: dominance")]
    PowerDominance,
    #[serde(rename = "Power: resources")]
    PowerResources,
    #[serde(rename = "Face")]
    Face,
    #[serde(rename = "Security: personal")]
    SecurityPersonal,
    #[serde(rename = "Security: societal")]
    SecuritySocietal,
    #[serde(rename = "Tradition")]
    Tradition,
    #[serde(rename = "Conformity: rules")]
    ConformityRules,
    #[serde(rename = "Conformity: interpersonal")]
    ConformityInterpersonal,
    #[serde(rename = "Humility")]
    Humility,
    #[serde(rename = "Benevolence: caring")]
    BenevolenceCaring,
    #[serde(rename = "Benevolence: dependability")]
    BenevolenceDependability,
    #[serde(rename = "Universalism: concern")]
    UniversalismConcern,
    #[serde(rename = "Universalism: nature")]
    UniversalismNature,
    #[serde(rename = "Universalism: tolerance")]
    UniversalismTolerance,
}

impl ValueLabel {
    /// All 19 values in canonical order.
    pub const ALL: [ValueLabel; LABEL_COUNT] = [
        ValueLabel::SelfDirectionThought,
        ValueLabel::SelfDirectionAction,
        ValueLabel::Stimulation,
        ValueLabel::Hedonism,
        ValueLabel::Achievement,
        ValueLabel::PowerDominance,
        ValueLabel::PowerResources,
        ValueLabel::Face,
        ValueLabel::SecurityPersonal,
        ValueLabel::SecuritySocietal,
        ValueLabel::Tradition,
        ValueLabel::ConformityRules,
        ValueLabel::ConformityInterpersonal,
        ValueLabel::Humility,
        ValueLabel::BenevolenceCaring,
        ValueLabel::BenevolenceDependability,
        ValueLabel::UniversalismConcern,
        ValueLabel::UniversalismNature,
        ValueLabel::UniversalismTolerance,
    ];

    /// Canonical display name, e.g. `"Security: societal"`.
    pub const fn name(self) -> &'static str {
        match self {
            ValueLabel::SelfDirectionThought => "Self-direction: thought",
            ValueLabel::SelfDirectionAction => "Self-direction: action",
            ValueLabel::Stimulation => "Stimulation",
            ValueLabel::Hedonism => "Hedonism",
            ValueLabel::Achievement => "Achievement",
            ValueLabel::PowerDominance => "Power: dominance",
            ValueLabel::PowerResources => "Power: resources",
            ValueLabel::Face => "Face",
            ValueLabel::SecurityPersonal => "Security: personal",
            ValueLabel::SecuritySocietal => "Security: societal",
            ValueLabel::Tradition => "Tradition",
            ValueLabel::ConformityRules => "Conformity: rules",
            ValueLabel::ConformityInterpersonal => "Conformity: interpersonal",
            ValueLabel::Humility => "Humility",
            ValueLabel::BenevolenceCaring => "Benevolence: caring",
            ValueLabel::BenevolenceDependability => "Benevolence: dependability",
            ValueLabel::UniversalismConcern => "Universalism: concern",
            ValueLabel::UniversalismNature => "Universalism: nature",
            ValueLabel::UniversalismTolerance => "Universalism: tolerance",
        }
    }

    /// One-line task-facing definition of the value.
    pub const fn definition(self) -> &'static str {
        match self {
            ValueLabel::SelfDirectionThought => {
                "Freedom to cultivate one's own ideas and abilities."
            }
            ValueLabel::SelfDirectionAction => "Freedom to determine one's own actions.",
            ValueLabel::Stimulation => "Excitement, novelty, and change.",
            ValueLabel::Hedonism => "Pleasure and sensuous gratification.",
            ValueLabel::Achievement => "Success according to social standards.",
            ValueLabel::PowerDominance => "Power through exercising control over people.",
            ValueLabel::PowerResources => {
                "Power through control of material and social resources."
            }
            ValueLabel::Face => "Maintaining one's public image and avoiding humiliation.",
            ValueLabel::SecurityPersonal => "Safety in one's immediate environment.",
            ValueLabel::SecuritySocietal => "Safety and stability in the wider society.",
            ValueLabel::Tradition => {
                "Maintaining and preserving cultural, family, or religious traditions."
            }
            ValueLabel::ConformityRules => {
                "Compliance with rules, laws, and formal obligations."
            }
            ValueLabel::ConformityInterpersonal => {
                "Avoidance of upsetting or harming other people."
            }
            ValueLabel::Humility => {
                "Recognizing one's insignificance in the larger scheme of things."
            }
            ValueLabel::BenevolenceCaring => "Devotion to the welfare of in-group members.",
            ValueLabel::BenevolenceDependability => {
                "Being a reliable and trustworthy member of the in-group."
            }
            ValueLabel::UniversalismConcern => {
                "Commitment to equality, justice, and protection for all people."
            }
            ValueLabel::UniversalismNature => "Preservation of the natural environment.",
            ValueLabel::UniversalismTolerance => {
                "Acceptance and understanding of those who are different from oneself."
            }
        }
    }

    /// Position in the canonical order, 0..=18.
    pub const fn index(self) -> usize {
        self as usize
    }

    /// Inverse of [`ValueLabel::index`].
    pub fn from_index(index: usize) -> Option<ValueLabel> {
        ValueLabel::ALL.get(index).copied()
    }

    /// Case-insensitive lookup by canonical name. Surrounding whitespace is
    /// ignored; everything else (including the colon-qualified form) must
    /// match exactly.
    pub fn from_name(name: &str) -> Option<ValueLabel> {
        let wanted = name.trim();
        ValueLabel::ALL
            .iter()
            .copied()
            .find(|label| label.name().eq_ignore_ascii_case(wanted))
    }
}

impl fmt::Display for ValueLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A subset of the 19 values, stored as a presence bit vector in canonical
/// order. Serialized as a list of canonical names.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LabelSet(u32);

const LABEL_MASK: u32 = (1 << LABEL_COUNT) - 1;

impl LabelSet {
    pub const fn empty() -> LabelSet {
        LabelSet(0)
    }

    /// Full 19-value set.
    pub const fn all() -> LabelSet {
        LabelSet(LABEL_MASK)
    }

    /// Build from a raw 19-bit presence vector; higher bits are rejected.
    pub fn from_bits(bits: u32) -> Option<LabelSet> {
        (bits & !LABEL_MASK == 0).then_some(LabelSet(bits))
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub fn insert(&mut self, label: ValueLabel) {
        self.0 |= 1 << label.index();
    }

    pub fn with(mut self, label: ValueLabel) -> LabelSet {
        self.insert(label);
        self
    }

    pub const fn contains(self, label: ValueLabel) -> bool {
        self.0 & (1 << label.index()) != 0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub const fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    /// Members in canonical order.
    pub fn iter(self) -> impl Iterator<Item = ValueLabel> {
        ValueLabel::ALL.into_iter().filter(move |l| self.contains(*l))
    }

    /// Canonical rendering: members joined by `", "` in canonical order;
    /// the empty set renders as `"NONE"`.
    pub fn canonical_list(self) -> String {
        if self.is_empty() {
            return "NONE".to_string();
        }
        self.iter().map(|l| l.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_list())
    }
}

impl FromIterator<ValueLabel> for LabelSet {
    fn from_iter<T: IntoIterator<Item = ValueLabel>>(iter: T) -> LabelSet {
        let mut set = LabelSet::empty();
        for label in iter {
            set.insert(label);
        }
        set
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for label in self.iter() {
            seq.serialize_element(label.name())?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<LabelSet, D::Error> {
        struct LabelSetVisitor;

        impl<'de> Visitor<'de> for LabelSetVisitor {
            type Value = LabelSet;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a list of canonical value names")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<LabelSet, A::Error> {
                let mut set = LabelSet::empty();
                while let Some(name) = seq.next_element::<String>()? {
                    let label = ValueLabel::from_name(&name)
                        .ok_or_else(|| de::Error::custom(format!("unknown value name: {name}")))?;
                    set.insert(label);
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(LabelSetVisitor)
    }
}
