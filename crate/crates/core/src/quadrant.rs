use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Joint truth/support label of a statement.
///
/// | label | factually true | supported by context |
/// |-------|----------------|----------------------|
/// | Q1    | yes            | yes                  |
/// | Q2    | yes            | no                   |
/// | Q3    | no             | yes                  |
/// | Q4    | no             | no                   |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Q1, Quadrant::Q2, Quadrant::Q3, Quadrant::Q4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Quadrant::ALL.get(i).copied()
    }

    pub fn is_true(self) -> bool {
        matches!(self, Quadrant::Q1 | Quadrant::Q2)
    }

    pub fn is_supported(self) -> bool {
        matches!(self, Quadrant::Q1 | Quadrant::Q3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::Q1 => "Q1",
            Quadrant::Q2 => "Q2",
            Quadrant::Q3 => "Q3",
            Quadrant::Q4 => "Q4",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quadrant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Quadrant::ALL
            .into_iter()
            .find(|q| q.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown quadrant `{s}`")))
    }
}
