use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// The three benchmark problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    /// Inviscid Burgers, no forcing.
    E1,
    /// Forced Burgers with sampled viscosity.
    E2,
    /// Two-speed linear advection system.
    MsWave,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::E1, Experiment::E2, Experiment::MsWave];

    pub fn id(self) -> u8 {
        match self {
            Experiment::E1 => 1,
            Experiment::E2 => 2,
            Experiment::MsWave => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::E1 => "e1",
            Experiment::E2 => "e2",
            Experiment::MsWave => "ms-wave",
        }
    }

    pub fn n_channels(self) -> usize {
        match self {
            Experiment::MsWave => 2,
            _ => 1,
        }
    }

    /// Number of PDE parameters fed to the model.
    pub fn eta_dim(self) -> usize {
        match self {
            Experiment::E1 => 0,
            Experiment::E2 => 1,
            Experiment::MsWave => 2,
        }
    }

    /// Default (train, valid, test) trajectory counts.
    pub fn default_sizes(self) -> SplitSizes {
        match self {
            Experiment::MsWave => SplitSizes { train: 1024, valid: 128, test: 128 },
            _ => SplitSizes { train: 2048, valid: 128, test: 128 },
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment '{s}' (expected e1, e2 or ms-wave)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}
