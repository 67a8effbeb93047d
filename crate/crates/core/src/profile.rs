//! Named parameter profiles for the experiment families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Linear,
    Fundamental,
    HomographyAlgebraic,
    HomographyGeometric,
    Affinity,
    Triangulation,
}

impl Profile {
    pub const ALL: [Profile; 6] = [
        Profile::Linear,
        Profile::Fundamental,
        Profile::HomographyAlgebraic,
        Profile::HomographyGeometric,
        Profile::Affinity,
        Profile::Triangulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Linear => "linear",
            Profile::Fundamental => "fundamental",
            Profile::HomographyAlgebraic => "homography-algebraic",
            Profile::HomographyGeometric => "homography-geometric",
            Profile::Affinity => "affinity",
            Profile::Triangulation => "triangulation",
        }
    }

    /// Inlier threshold used by the experiments of this family.
    ///
    /// The algebraic families measure residuals in Hartley-normalized
    /// coordinates with the last matrix entry fixed at 1. There a threshold
    /// of 1 admits the zero model for every fundamental-matrix datum.
    pub fn default_epsilon(self) -> f64 {
        match self {
            Profile::Linear => 0.1,
            Profile::Fundamental => 0.5,
            Profile::HomographyAlgebraic => 0.01,
            Profile::HomographyGeometric => 4.0,
            Profile::Affinity => 2.0,
            Profile::Triangulation => 1.0,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid("profile", format!("unknown profile `{s}`")))
    }
}
