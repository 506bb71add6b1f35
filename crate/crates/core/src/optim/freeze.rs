use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Network;

/// Which RBF parameter groups the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FreezeRegime {
    FixCenter,
    FixSize,
    FixBoth,
    #[default]
    OptimBoth,
}

impl FreezeRegime {
    pub const ALL: [FreezeRegime; 4] = [
        FreezeRegime::FixCenter,
        FreezeRegime::FixSize,
        FreezeRegime::FixBoth,
        FreezeRegime::OptimBoth,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FreezeRegime::FixCenter => "fix-center",
            FreezeRegime::FixSize => "fix-size",
            FreezeRegime::FixBoth => "fix-both",
            FreezeRegime::OptimBoth => "optim-both",
        }
    }

    /// `(centers trainable, sizes trainable)`.
    pub fn trainable(self) -> (bool, bool) {
        match self {
            FreezeRegime::FixCenter => (false, true),
            FreezeRegime::FixSize => (true, false),
            FreezeRegime::FixBoth => (false, false),
            FreezeRegime::OptimBoth => (true, true),
        }
    }

    pub fn apply(self, net: &mut Network) {
        let (c, s) = self.trainable();
        net.set_rbf_trainable(c, s);
    }
}

impl fmt::Display for FreezeRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FreezeRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FreezeRegime::ALL
            .into_iter()
            .find(|r| r.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown freeze regime `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for r in FreezeRegime::ALL {
            assert_eq!(r.tag().parse::<FreezeRegime>().unwrap(), r);
        }
        assert!("fix-all".parse::<FreezeRegime>().is_err());
    }

    #[test]
    fn regimes_cover_every_combination() {
        let mut seen: Vec<_> = FreezeRegime::ALL.iter().map(|r| r.trainable()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }
}
