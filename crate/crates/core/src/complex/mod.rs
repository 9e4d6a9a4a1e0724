//! Protein–ligand complexes: interchange parsing, atom featurization and
//! kNN graph construction.

mod features;
mod graph;
mod radii;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{
    featurize_ligand_atom, featurize_protein_atom, AMINO_ACIDS, LIGAND_ELEMENTS, LIGAND_FEATURE_DIM,
    PROTEIN_ELEMENTS, PROTEIN_FEATURE_DIM,
};
pub use graph::{build_complete_graph, build_knn_graph, ComplexGraph, Edge, EdgeKind, ResidueKey};
pub use radii::{vdw_radius_sum, VdwRadii};

/// Minimum separation between any two atoms of a complex, in Å.
pub const MIN_ATOM_SEPARATION: f64 = 1e-3;

/// Largest accepted heavy-atom degree of a ligand atom.
pub const MAX_LIGAND_DEGREE: u32 = 8;

pub type Vec3 = [f64; 3];

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Chemical element symbol, normalized to leading uppercase (`CL` → `Cl`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Element(String);

impl Element {
    pub fn new(symbol: &str) -> Result<Self> {
        let s = symbol.trim();
        let mut chars = s.chars();
        let first = chars
            .next()
            .ok_or_else(|| Error::Validation("empty element symbol".into()))?;
        if !s.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(Error::Validation(format!("invalid element symbol `{symbol}`")));
        }
        let mut norm = first.to_ascii_uppercase().to_string();
        norm.extend(chars.map(|c| c.to_ascii_lowercase()));
        Ok(Self(norm))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Element {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Element::new(&s)
    }
}

impl From<Element> for String {
    fn from(e: Element) -> String {
        e.0
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hybridization {
    Sp,
    Sp2,
    Sp3,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProteinAtom {
    pub element: Element,
    pub residue_name: String,
    pub residue_index: i64,
    pub chain_id: char,
    pub is_backbone: bool,
    #[serde(rename = "xyz")]
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LigandAtom {
    pub element: Element,
    pub hybridization: Hybridization,
    pub formal_charge: i32,
    pub degree: u32,
    pub is_aromatic: bool,
    #[serde(rename = "xyz")]
    pub position: Vec3,
}

/// A protein–ligand complex with an optional affinity label in pK units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Complex {
    pub id: String,
    pub affinity: Option<f64>,
    pub protein: Vec<ProteinAtom>,
    pub ligand: Vec<LigandAtom>,
}

impl Complex {
    pub fn n_protein(&self) -> usize {
        self.protein.len()
    }

    pub fn n_ligand(&self) -> usize {
        self.ligand.len()
    }

    /// All positions, protein atoms first.
    pub fn positions(&self) -> Vec<Vec3> {
        self.protein
            .iter()
            .map(|a| a.position)
            .chain(self.ligand.iter().map(|a| a.position))
            .collect()
    }

    /// Replaces every position, protein atoms first.
    pub fn with_positions(&self, positions: &[Vec3]) -> Complex {
        assert_eq!(positions.len(), self.n_protein() + self.n_ligand());
        let mut c = self.clone();
        let (p, l) = positions.split_at(self.n_protein());
        for (a, x) in c.protein.iter_mut().zip(p) {
            a.position = *x;
        }
        for (a, x) in c.ligand.iter_mut().zip(l) {
            a.position = *x;
        }
        c
    }

    /// Checks the structural invariants a parsed document must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.protein.is_empty() {
            return Err(Error::Schema(format!("complex `{}`: protein atom list is empty", self.id)));
        }
        if self.ligand.is_empty() {
            return Err(Error::Schema(format!("complex `{}`: ligand atom list is empty", self.id)));
        }
        if let Some(y) = self.affinity {
            if !y.is_finite() {
                return Err(Error::Validation(format!("complex `{}`: affinity is not finite", self.id)));
            }
        }
        for a in &self.ligand {
            if a.degree > MAX_LIGAND_DEGREE {
                return Err(Error::Validation(format!(
                    "complex `{}`: ligand atom degree {} exceeds {}",
                    self.id, a.degree, MAX_LIGAND_DEGREE
                )));
            }
        }
        let positions = self.positions();
        if let Some(p) = positions.iter().find(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Validation(format!(
                "complex `{}`: non-finite coordinate {p:?}",
                self.id
            )));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if distance(&positions[i], &positions[j]) <= MIN_ATOM_SEPARATION {
                    return Err(Error::Validation(format!(
                        "complex `{}`: atoms {i} and {j} share coordinates {:?}",
                        self.id, positions[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("complex serializes")
    }
}

/// Parses and validates a complex interchange document.
pub fn parse_complex(text: &str) -> Result<Complex> {
    let c: Complex = serde_json::from_str(text).map_err(Error::from_json)?;
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "id": "toy",
        "affinity": 5.0,
        "protein": [
            {"element": "C", "residue_name": "ALA", "residue_index": 1, "chain_id": "A",
             "is_backbone": true, "xyz": [0.0, 0.0, 0.0]}
        ],
        "ligand": [
            {"element": "O", "hybridization": "sp3", "formal_charge": 0, "degree": 1,
             "is_aromatic": false, "xyz": [3.0, 0.0, 0.0]}
        ]
    }"#;

    #[test]
    fn parses_minimal_document() {
        let c = parse_complex(MINIMAL).unwrap();
        assert_eq!(c.n_protein(), 1);
        assert_eq!(c.n_ligand(), 1);
        assert_eq!(c.affinity, Some(5.0));
        assert_eq!(c.ligand[0].element.as_str(), "O");
    }

    #[test]
    fn empty_ligand_is_schema_error() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["ligand"] = serde_json::json!([]);
        let err = parse_complex(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn duplicate_coordinates_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        let atom = serde_json::json!({"element": "N", "residue_name": "GLY", "residue_index": 2,
            "chain_id": "A", "is_backbone": true, "xyz": [1.0, 1.0, 1.0]});
        v["protein"] = serde_json::json!([atom.clone(), atom]);
        let err = parse_complex(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_and_unknown_fields() {
        assert!(matches!(parse_complex("{\"id\": "), Err(Error::Syntax(_))));
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(parse_complex(&v.to_string()), Err(Error::Schema(_))));
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["ligand"][0]["hybridization"] = serde_json::json!("sp4");
        assert!(matches!(parse_complex(&v.to_string()), Err(Error::Schema(_))));
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["protein"][0].as_object_mut().unwrap().remove("chain_id");
        assert!(matches!(parse_complex(&v.to_string()), Err(Error::Schema(_))));
    }

    #[test]
    fn degree_above_limit_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["ligand"][0]["degree"] = serde_json::json!(9);
        assert!(matches!(parse_complex(&v.to_string()), Err(Error::Validation(_))));
    }

    #[test]
    fn element_normalization() {
        assert_eq!(Element::new("CL").unwrap().as_str(), "Cl");
        assert_eq!(Element::new(" br").unwrap().as_str(), "Br");
        assert!(Element::new("").is_err());
        assert!(Element::new("C1").is_err());
    }

    #[test]
    fn json_roundtrip() {
        let c = parse_complex(MINIMAL).unwrap();
        assert_eq!(parse_complex(&c.to_json()).unwrap(), c);
    }
}
