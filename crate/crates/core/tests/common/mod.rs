#![allow(dead_code)]

use ligbind::complex::{Complex, Element, Hybridization, LigandAtom, ProteinAtom, VdwRadii, Vec3};
use ligbind::encoder::ModelConfig;
use ligbind::physics::PhysicsConfig;
use ligbind::training::{gen_synthetic, SynthConfig};
use ligbind::Model;

pub fn small_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 16,
        num_layers: 2,
        num_heads: 2,
        ..Default::default()
    }
}

/// σ starts nonzero; at the default of 0 every prediction would be 0.
pub fn small_model(seed: u64) -> Model {
    let physics = PhysicsConfig {
        sigma_init: -0.2,
        ..Default::default()
    };
    Model::new(small_config(), physics, seed).unwrap()
}

/// Random complexes with 8 to 40 atoms in total.
pub fn corpus(seed: u64, n: usize) -> Vec<Complex> {
    let cfg = SynthConfig {
        protein_atoms: [6, 30],
        ligand_atoms: [2, 10],
        id_prefix: format!("c{seed}_"),
        ..Default::default()
    };
    gen_synthetic(seed, n, &cfg, &VdwRadii::default()).unwrap().complexes
}

pub fn protein_atom(element: &str, residue_index: i64, position: Vec3) -> ProteinAtom {
    ProteinAtom {
        element: Element::new(element).unwrap(),
        residue_name: "GLY".into(),
        residue_index,
        chain_id: 'A',
        is_backbone: true,
        position,
    }
}

pub fn ligand_atom(element: &str, position: Vec3) -> LigandAtom {
    LigandAtom {
        element: Element::new(element).unwrap(),
        hybridization: Hybridization::Sp3,
        formal_charge: 0,
        degree: 1,
        is_aromatic: false,
        position,
    }
}

pub fn complex(id: &str, protein: Vec<ProteinAtom>, ligand: Vec<LigandAtom>) -> Complex {
    let c = Complex {
        id: id.into(),
        affinity: None,
        protein,
        ligand,
    };
    c.validate().unwrap();
    c
}

/// Unit direction from spherical angles.
pub fn direction(theta: f64, phi: f64) -> Vec3 {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

pub fn scaled(p: Vec3, dir: Vec3, r: f64) -> Vec3 {
    [p[0] + r * dir[0], p[1] + r * dir[1], p[2] + r * dir[2]]
}
