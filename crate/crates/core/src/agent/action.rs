use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ltlf::Alphabet;

/// What the robot does after a story segment. The integer encoding is the
/// declaration order and is stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionId {
    #[serde(alias = "positive", alias = "p")]
    PositiveFeedback,
    #[serde(alias = "negative", alias = "n")]
    NegativeFeedback,
    #[serde(alias = "ask_question", alias = "q")]
    Question,
    #[serde(alias = "continue", alias = "c")]
    ContinueStory,
    #[serde(alias = "wave_hands", alias = "w")]
    MoveHeadArms,
}

pub const NUM_ACTIONS: usize = 5;

impl ActionId {
    pub const ALL: [ActionId; NUM_ACTIONS] = [
        ActionId::PositiveFeedback,
        ActionId::NegativeFeedback,
        ActionId::Question,
        ActionId::ContinueStory,
        ActionId::MoveHeadArms,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionId::PositiveFeedback => "positive_feedback",
            ActionId::NegativeFeedback => "negative_feedback",
            ActionId::Question => "question",
            ActionId::ContinueStory => "continue_story",
            ActionId::MoveHeadArms => "move_head_arms",
        }
    }

    /// The bolt alphabet: canonical action names plus the spellings used in
    /// formulas and short trace forms.
    pub fn alphabet() -> Alphabet {
        let mut a = Alphabet::new(Self::ALL.map(ActionId::name)).expect("static alphabet");
        for (alias, action) in ALIASES {
            a = a.with_alias(alias, action.name()).expect("static alias");
        }
        a
    }
}

const ALIASES: [(&str, ActionId); 10] = [
    ("ask_question", ActionId::Question),
    ("q", ActionId::Question),
    ("wave_hands", ActionId::MoveHeadArms),
    ("w", ActionId::MoveHeadArms),
    ("continue", ActionId::ContinueStory),
    ("c", ActionId::ContinueStory),
    ("positive", ActionId::PositiveFeedback),
    ("p", ActionId::PositiveFeedback),
    ("negative", ActionId::NegativeFeedback),
    ("n", ActionId::NegativeFeedback),
];

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(a) = Self::ALL.into_iter().find(|a| a.name() == s) {
            return Ok(a);
        }
        ALIASES
            .iter()
            .find(|(alias, _)| *alias == s)
            .map(|(_, a)| *a)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}
