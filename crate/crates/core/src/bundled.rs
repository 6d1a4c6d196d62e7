//! Example maps, families and observables shipped with the crate.

use crate::family::ExprFamily;
use crate::map_core::PiecewiseMap;
use crate::observable::Observable;

pub const DOUBLING: &str = include_str!("../maps/doubling.json");
pub const TENT: &str = include_str!("../maps/tent.json");
pub const SKEW_TENT_06: &str = include_str!("../maps/skew_tent_06.json");
pub const SWAP: &str = include_str!("../maps/swap.json");
pub const THREE_BRANCH: &str = include_str!("../maps/three_branch.json");
pub const THREE_BRANCH_MIRRORED: &str = include_str!("../maps/three_branch_mirrored.json");
pub const FOUR_ORBIT: &str = include_str!("../maps/four_orbit.json");

pub const SKEW_TENT_FAMILY: &str = include_str!("../maps/families/skew_tent.json");
pub const PERTURBED_DOUBLING_FAMILY: &str = include_str!("../maps/families/perturbed_doubling.json");
pub const LOWERED_TENT_FAMILY: &str = include_str!("../maps/families/lowered_tent.json");

pub const SIN_2PI: &str = include_str!("../maps/observables/sin2pi.json");
pub const COS_2PI: &str = include_str!("../maps/observables/cos2pi.json");
pub const IDENTITY: &str = include_str!("../maps/observables/identity.json");

/// Every bundled map by file stem.
pub const MAPS: [(&str, &str); 7] = [
    ("doubling", DOUBLING),
    ("tent", TENT),
    ("skew_tent_06", SKEW_TENT_06),
    ("swap", SWAP),
    ("three_branch", THREE_BRANCH),
    ("three_branch_mirrored", THREE_BRANCH_MIRRORED),
    ("four_orbit", FOUR_ORBIT),
];

pub fn map(text: &str) -> PiecewiseMap {
    PiecewiseMap::from_json(text).expect("bundled map is valid")
}

pub fn family(text: &str) -> ExprFamily {
    ExprFamily::from_json(text).expect("bundled family is valid")
}

pub fn observable(text: &str, f: &PiecewiseMap) -> Observable {
    Observable::from_json(text, f).expect("bundled observable is valid")
}

pub fn doubling() -> PiecewiseMap {
    map(DOUBLING)
}

pub fn tent() -> PiecewiseMap {
    map(TENT)
}

pub fn skew_tent_family() -> ExprFamily {
    family(SKEW_TENT_FAMILY)
}

pub fn perturbed_doubling_family() -> ExprFamily {
    family(PERTURBED_DOUBLING_FAMILY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_bundled_inputs_parse() {
        for (_, text) in MAPS {
            map(text);
        }
        for text in [SKEW_TENT_FAMILY, PERTURBED_DOUBLING_FAMILY, LOWERED_TENT_FAMILY] {
            family(text);
        }
        let f = doubling();
        for text in [SIN_2PI, COS_2PI, IDENTITY] {
            observable(text, &f);
        }
    }
}
