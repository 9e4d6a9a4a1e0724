use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Element;
use crate::error::{Error, Result};

const DEFAULT_TABLE: &str = include_str!("../../data/vdw_radii.json");

/// Key used for elements the table does not list.
pub const FALLBACK_KEY: &str = "other";

/// Per-element van der Waals radii in Å.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct VdwRadii {
    radii: BTreeMap<String, f64>,
}

impl VdwRadii {
    pub fn new(radii: BTreeMap<String, f64>) -> Result<Self> {
        if !radii.contains_key(FALLBACK_KEY) {
            return Err(Error::Schema(format!("radii table must define `{FALLBACK_KEY}`")));
        }
        if let Some((k, v)) = radii.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Validation(format!("radius for `{k}` must be positive, got {v}")));
        }
        Ok(Self { radii })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, f64> = serde_json::from_str(text).map_err(Error::from_json)?;
        Self::new(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn radius(&self, e: &Element) -> f64 {
        self.radii
            .get(e.as_str())
            .copied()
            .unwrap_or_else(|| self.radii[FALLBACK_KEY])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.radii.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl Default for VdwRadii {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("shipped radii table is valid")
    }
}

impl TryFrom<BTreeMap<String, f64>> for VdwRadii {
    type Error = Error;

    fn try_from(m: BTreeMap<String, f64>) -> Result<Self> {
        Self::new(m)
    }
}

impl From<VdwRadii> for BTreeMap<String, f64> {
    fn from(t: VdwRadii) -> Self {
        t.radii
    }
}

/// Ideal contact distance `r(e1) + r(e2)`.
pub fn vdw_radius_sum(e1: &Element, e2: &Element, table: &VdwRadii) -> f64 {
    table.radius(e1) + table.radius(e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(s: &str) -> Element {
        Element::new(s).unwrap()
    }

    #[test]
    fn doubling() {
        let t = VdwRadii::from_json(r#"{"X": 1.5, "other": 2.0}"#).unwrap();
        assert_eq!(vdw_radius_sum(&el("X"), &el("X"), &t), 3.0);
    }

    #[test]
    fn default_table_carbon_oxygen() {
        let t = VdwRadii::default();
        let shipped: BTreeMap<String, f64> = serde_json::from_str(DEFAULT_TABLE).unwrap();
        assert_eq!(vdw_radius_sum(&el("C"), &el("O"), &t), shipped["C"] + shipped["O"]);
        assert!((vdw_radius_sum(&el("C"), &el("O"), &t) - 3.6).abs() < 1e-12);
    }

    #[test]
    fn symmetric_over_vocabulary() {
        let t = VdwRadii::default();
        let vocab = ["C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "Se", "Zn"];
        for a in vocab {
            for b in vocab {
                assert_eq!(vdw_radius_sum(&el(a), &el(b), &t), vdw_radius_sum(&el(b), &el(a), &t));
            }
        }
    }

    #[test]
    fn fallback_and_required_key() {
        let t = VdwRadii::default();
        assert_eq!(t.radius(&el("Zn")), t.radius(&el("Xx")));
        assert!(matches!(VdwRadii::from_json(r#"{"C": 1.9}"#), Err(Error::Schema(_))));
        assert!(VdwRadii::from_json(r#"{"C": -1.0, "other": 1.0}"#).is_err());
    }
}
