use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Resolution level of the dataset pyramid.
///
/// Tiers are named after the full-size benchmark (4096×2048, 2048×1024,
/// 1024×512) but are defined relative to the generated canvas: a desk-scale
/// 512×256 canvas yields 512×256, 256×128 and 128×64 tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "1k")]
    Quarter,
    #[serde(rename = "2k")]
    Half,
    #[serde(rename = "4k")]
    Full,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Quarter, Tier::Half, Tier::Full];

    /// Downsampling factor relative to the full canvas.
    pub fn factor(self) -> usize {
        match self {
            Tier::Full => 1,
            Tier::Half => 2,
            Tier::Quarter => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Full => "4k",
            Tier::Half => "2k",
            Tier::Quarter => "1k",
        }
    }

    /// Tier dimensions for a canvas of the given size.
    pub fn dims(self, canvas_width: usize, canvas_height: usize) -> (usize, usize) {
        let f = self.factor();
        (canvas_width / f, canvas_height / f)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "1k" => Ok(Tier::Quarter),
            "2k" => Ok(Tier::Half),
            "4k" => Ok(Tier::Full),
            other => Err(format!("unknown tier '{other}' (expected 1k, 2k or 4k)")),
        }
    }
}
