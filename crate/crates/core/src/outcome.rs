use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Event outcome. `Baseline` is the reference alternative whose utility is
/// pinned at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Baseline,
    NearCrash,
    Crash,
}

impl Outcome {
    /// Order used for every probability triple in the crate.
    pub const ALL: [Outcome; 3] = [Outcome::Baseline, Outcome::NearCrash, Outcome::Crash];

    pub fn index(self) -> usize {
        match self {
            Outcome::Baseline => 0,
            Outcome::NearCrash => 1,
            Outcome::Crash => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Baseline => "Baseline",
            Outcome::NearCrash => "NearCrash",
            Outcome::Crash => "Crash",
        }
    }

    pub fn is_safety_critical(self) -> bool {
        !matches!(self, Outcome::Baseline)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "baseline" | "b" | "0" => Ok(Outcome::Baseline),
            "nearcrash" | "nc" | "1" => Ok(Outcome::NearCrash),
            "crash" | "c" | "2" => Ok(Outcome::Crash),
            _ => Err(format!("unknown outcome `{s}` (expected Baseline, NearCrash or Crash)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_spellings() {
        assert_eq!("near-crash".parse::<Outcome>().unwrap(), Outcome::NearCrash);
        assert_eq!("Near_Crash".parse::<Outcome>().unwrap(), Outcome::NearCrash);
        assert_eq!("CRASH".parse::<Outcome>().unwrap(), Outcome::Crash);
        assert_eq!("baseline".parse::<Outcome>().unwrap(), Outcome::Baseline);
        assert!("collision".parse::<Outcome>().is_err());
    }

    #[test]
    fn index_round_trip() {
        for o in Outcome::ALL {
            assert_eq!(Outcome::from_index(o.index()), Some(o));
        }
    }
}
