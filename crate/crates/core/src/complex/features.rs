//! One-hot atom featurization. Unknown categories fall into an explicit
//! trailing bucket, so featurization never fails.

use super::{Hybridization, LigandAtom, ProteinAtom};

pub const PROTEIN_ELEMENTS: [&str; 4] = ["C", "N", "O", "S"];

pub const AMINO_ACIDS: [&str; 20] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET", "PHE",
    "PRO", "SER", "THR", "TRP", "TYR", "VAL",
];

pub const LIGAND_ELEMENTS: [&str; 9] = ["C", "N", "O", "S", "P", "F", "Cl", "Br", "I"];

const MAX_DEGREE_BUCKET: u32 = 5;
const CHARGE_RANGE: i32 = 2;

/// Element (4 + other), residue (20 + unknown), backbone flag.
pub const PROTEIN_FEATURE_DIM: usize = PROTEIN_ELEMENTS.len() + 1 + AMINO_ACIDS.len() + 1 + 1;

/// Element (9 + other), hybridization, clamped charge, clamped degree, aromatic flag.
pub const LIGAND_FEATURE_DIM: usize =
    LIGAND_ELEMENTS.len() + 1 + 4 + (2 * CHARGE_RANGE as usize + 1) + (MAX_DEGREE_BUCKET as usize + 1) + 1;

fn bucket(vocab: &[&str], value: &str) -> usize {
    vocab.iter().position(|v| *v == value).unwrap_or(vocab.len())
}

pub fn featurize_protein_atom(a: &ProteinAtom) -> Vec<f64> {
    let mut f = vec![0.0; PROTEIN_FEATURE_DIM];
    f[bucket(&PROTEIN_ELEMENTS, a.element.as_str())] = 1.0;
    let off = PROTEIN_ELEMENTS.len() + 1;
    let residue = a.residue_name.trim().to_ascii_uppercase();
    f[off + bucket(&AMINO_ACIDS, &residue)] = 1.0;
    if a.is_backbone {
        f[PROTEIN_FEATURE_DIM - 1] = 1.0;
    }
    f
}

pub fn featurize_ligand_atom(a: &LigandAtom) -> Vec<f64> {
    let mut f = vec![0.0; LIGAND_FEATURE_DIM];
    f[bucket(&LIGAND_ELEMENTS, a.element.as_str())] = 1.0;
    let mut off = LIGAND_ELEMENTS.len() + 1;
    let hyb = match a.hybridization {
        Hybridization::Sp => 0,
        Hybridization::Sp2 => 1,
        Hybridization::Sp3 => 2,
        Hybridization::Other => 3,
    };
    f[off + hyb] = 1.0;
    off += 4;
    let charge = a.formal_charge.clamp(-CHARGE_RANGE, CHARGE_RANGE);
    f[off + (charge + CHARGE_RANGE) as usize] = 1.0;
    off += 2 * CHARGE_RANGE as usize + 1;
    f[off + a.degree.min(MAX_DEGREE_BUCKET) as usize] = 1.0;
    if a.is_aromatic {
        f[LIGAND_FEATURE_DIM - 1] = 1.0;
    }
    f
}
