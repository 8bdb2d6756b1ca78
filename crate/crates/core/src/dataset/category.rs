use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The twelve weld categories: good welds plus eleven defect types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeldCategory {
    Good,
    ExcessiveConvexity,
    Undercut,
    CraterCracks,
    Overlap,
    ExcessivePenetration,
    PorosityWithExcessivePenetration,
    Spatter,
    LackOfFusion,
    Warping,
    Porosity,
    Burnthrough,
}

/// How the synthetic generator renders a defect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefectFamily {
    /// Short broadband impulses.
    Bursts,
    /// A frequency band loses energy.
    BandAttenuation,
    /// The fundamental wanders away from its nominal value.
    PitchDrift,
    /// Broadband level step.
    LevelJump,
}

impl WeldCategory {
    pub const ALL: [WeldCategory; 12] = [
        WeldCategory::Good,
        WeldCategory::ExcessiveConvexity,
        WeldCategory::Undercut,
        WeldCategory::CraterCracks,
        WeldCategory::Overlap,
        WeldCategory::ExcessivePenetration,
        WeldCategory::PorosityWithExcessivePenetration,
        WeldCategory::Spatter,
        WeldCategory::LackOfFusion,
        WeldCategory::Warping,
        WeldCategory::Porosity,
        WeldCategory::Burnthrough,
    ];

    pub fn defects() -> impl Iterator<Item = WeldCategory> {
        Self::ALL.into_iter().skip(1)
    }

    pub fn is_good(self) -> bool {
        self == WeldCategory::Good
    }

    /// Sample count of the category in the reference corpus.
    pub fn reference_count(self) -> usize {
        match self {
            WeldCategory::Good => 819,
            WeldCategory::ExcessiveConvexity => 160,
            WeldCategory::Undercut => 160,
            WeldCategory::CraterCracks => 161,
            WeldCategory::Overlap => 160,
            WeldCategory::ExcessivePenetration => 480,
            WeldCategory::PorosityWithExcessivePenetration => 480,
            WeldCategory::Spatter => 320,
            WeldCategory::LackOfFusion => 320,
            WeldCategory::Warping => 320,
            WeldCategory::Porosity => 340,
            WeldCategory::Burnthrough => 320,
        }
    }

    pub fn family(self) -> Option<DefectFamily> {
        use WeldCategory::*;
        match self {
            Good => None,
            Spatter | CraterCracks | Porosity | PorosityWithExcessivePenetration => {
                Some(DefectFamily::Bursts)
            }
            LackOfFusion | Undercut | Overlap => Some(DefectFamily::BandAttenuation),
            Warping | ExcessiveConvexity => Some(DefectFamily::PitchDrift),
            Burnthrough | ExcessivePenetration => Some(DefectFamily::LevelJump),
        }
    }

    /// Machine identifier, as used in manifests and score files.
    pub fn id(self) -> &'static str {
        use WeldCategory::*;
        match self {
            Good => "good",
            ExcessiveConvexity => "excessive_convexity",
            Undercut => "undercut",
            CraterCracks => "crater_cracks",
            Overlap => "overlap",
            ExcessivePenetration => "excessive_penetration",
            PorosityWithExcessivePenetration => "porosity_with_excessive_penetration",
            Spatter => "spatter",
            LackOfFusion => "lack_of_fusion",
            Warping => "warping",
            Porosity => "porosity",
            Burnthrough => "burnthrough",
        }
    }

    /// Human-readable label for report tables.
    pub fn label(self) -> &'static str {
        use WeldCategory::*;
        match self {
            Good => "Good",
            ExcessiveConvexity => "Excessive Convexity",
            Undercut => "Undercut",
            CraterCracks => "Crater Cracks",
            Overlap => "Overlap",
            ExcessivePenetration => "Excessive Penetration",
            PorosityWithExcessivePenetration => "Porosity w/Excessive Penetration",
            Spatter => "Spatter",
            LackOfFusion => "Lack Of Fusion",
            Warping => "Warping",
            Porosity => "Porosity",
            Burnthrough => "Burnthrough",
        }
    }
}

impl fmt::Display for WeldCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for WeldCategory {
    type Err = Error;

    /// Accepts the machine id or the table label, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Error> {
        let needle = s.trim();
        WeldCategory::ALL
            .into_iter()
            .find(|c| c.id().eq_ignore_ascii_case(needle) || c.label().eq_ignore_ascii_case(needle))
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeldType {
    Fillet,
    NonFillet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Material {
    #[serde(rename = "7mm-FE410")]
    Fe410Thick,
    #[serde(rename = "3mm-FE410")]
    Fe410Thin,
    #[serde(rename = "7mm-BSK46")]
    Bsk46Thick,
    #[serde(rename = "3mm-BSK46")]
    Bsk46Thin,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts_sum_to_corpus_size() {
        let total: usize = WeldCategory::ALL.iter().map(|c| c.reference_count()).sum();
        assert_eq!(total, 4040);
        let defects: usize = WeldCategory::defects().map(|c| c.reference_count()).sum();
        assert_eq!(defects, 3221);
    }

    #[test]
    fn parsing_accepts_ids_and_labels() {
        for c in WeldCategory::ALL {
            assert_eq!(c.id().parse::<WeldCategory>().unwrap(), c);
            assert_eq!(c.label().to_uppercase().parse::<WeldCategory>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.id()));
        }
        assert!(matches!(
            "porosty".parse::<WeldCategory>(),
            Err(Error::UnknownCategory(_))
        ));
    }

    #[test]
    fn every_defect_has_a_family() {
        assert!(WeldCategory::Good.family().is_none());
        assert!(WeldCategory::defects().all(|c| c.family().is_some()));
    }
}
