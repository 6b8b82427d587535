use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Clip class label. Order (NF, NR, R) is the canonical class order used by
/// logits, confusion matrices and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// No fish visible.
    NF,
    /// Fish visible, no reaction to the lasers.
    NR,
    /// Fish visible and reacting.
    R,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::NF, Label::NR, Label::R];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Label::NF => 0,
            Label::NR => 1,
            Label::R => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NF => "NF",
            Label::NR => "NR",
            Label::R => "R",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NF" => Ok(Label::NF),
            "NR" => Ok(Label::NR),
            "R" => Ok(Label::R),
            other => Err(crate::error::Error::Data(format!(
                "unknown label {other:?}, expected NF|NR|R"
            ))),
        }
    }
}
