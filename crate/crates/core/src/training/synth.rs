//! Seeded synthetic complexes labeled by a fixed reference potential.
//!
//! Each ligand atom is anchored near one protein atom at `u(1 + δ)`, where
//! `u` is the pair's radius sum, and kept at least `clearance·u` away from
//! every other protein atom. The label is `σ*·Σ pair_energy(u, 0, d, 1)` over
//! all ligand × protein pairs, i.e. the head's own functional form with
//! `H ≡ 0`, so a model can represent it exactly.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{ClusterSpec, Dataset, Entry, Split};
use crate::complex::{
    distance, vdw_radius_sum, Complex, Element, Hybridization, LigandAtom, ProteinAtom, VdwRadii, Vec3,
    AMINO_ACIDS,
};
use crate::error::{Error, Result};
use crate::physics::pair_energy;

/// Reference affinity scale of the labeling oracle.
pub const SIGMA_STAR: f64 = -0.2;

const PROTEIN_SPACING: (f64, f64) = (3.2, 4.2);
const LIGAND_SPACING: f64 = 1.5;
const ATOM_TRIES: usize = 500;
const COMPLEX_TRIES: usize = 50;

const PROTEIN_ELEMENTS: [(&str, f64); 4] = [("C", 0.55), ("N", 0.2), ("O", 0.2), ("S", 0.05)];
const LIGAND_ELEMENTS: [(&str, f64); 9] = [
    ("C", 0.5),
    ("N", 0.15),
    ("O", 0.15),
    ("S", 0.05),
    ("P", 0.03),
    ("F", 0.04),
    ("Cl", 0.04),
    ("Br", 0.02),
    ("I", 0.02),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Inclusive protein atom count range.
    pub protein_atoms: [usize; 2],
    /// Inclusive ligand atom count range.
    pub ligand_atoms: [usize; 2],
    /// Fraction of complexes whose anchor pairs sit exactly at `d = u`.
    pub minima_fraction: f64,
    /// Relative anchor distance perturbation `δ ~ U(-jitter, jitter)` for the
    /// remaining complexes.
    pub jitter: f64,
    /// Minimum distance to non-anchor protein atoms, in multiples of `u`.
    pub clearance: f64,
    /// Complexes per shared protein; 1 disables clustering.
    pub cluster_size: usize,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            protein_atoms: [8, 16],
            ligand_atoms: [3, 8],
            minima_fraction: 0.5,
            jitter: 0.05,
            clearance: 1.5,
            cluster_size: 1,
            id_prefix: "syn".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [plo, phi] = self.protein_atoms;
        let [llo, lhi] = self.ligand_atoms;
        if plo == 0 || llo == 0 || plo > phi || llo > lhi {
            return Err(Error::Config("atom count ranges must be nonempty with minimum ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.minima_fraction) {
            return Err(Error::Config("minima_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config("jitter must lie in [0, 0.5)".into()));
        }
        if !(self.clearance >= 1.0 && self.clearance.is_finite()) {
            return Err(Error::Config("clearance must be at least 1".into()));
        }
        if self.cluster_size == 0 {
            return Err(Error::Config("cluster_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `σ*·Σ_ij pair_energy(u_ij, 0, d_ij, 1)` over all ligand × protein pairs.
pub fn oracle_label(c: &Complex, radii: &VdwRadii) -> Result<f64> {
    let mut e = 0.0;
    for l in &c.ligand {
        for p in &c.protein {
            let u = vdw_radius_sum(&l.element, &p.element, radii);
            e += pair_energy(u, 0.0, distance(&l.position, &p.position), 1.0)?;
        }
    }
    Ok(SIGMA_STAR * e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub complexes: Vec<Complex>,
    pub clusters: Vec<ClusterSpec>,
    /// Whether each complex was placed exactly at its anchor minima.
    pub at_minima: Vec<bool>,
}

impl Synthetic {
    pub fn into_dataset(self, split: Split) -> Result<Dataset> {
        let entries = self.complexes.into_iter().map(|complex| Entry { complex, split }).collect();
        Dataset::new(entries, self.clusters)
    }
}

fn pick<'a, R: Rng>(rng: &mut R, table: &'a [(&'a str, f64)]) -> &'a str {
    let w = WeightedIndex::new(table.iter().map(|t| t.1)).expect("static weights");
    table[w.sample(rng)].0
}

fn unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|x| x / n);
        }
    }
}

fn offset(p: &Vec3, dir: &Vec3, r: f64) -> Vec3 {
    [p[0] + dir[0] * r, p[1] + dir[1] * r, p[2] + dir[2] * r]
}

fn gen_protein<R: Rng>(rng: &mut R, n: usize) -> Result<Vec<ProteinAtom>> {
    let mut pos: Vec<Vec3> = vec![[0.0; 3]];
    while pos.len() < n {
        let placed = (0..ATOM_TRIES).find_map(|_| {
            let base = pos.choose(rng).expect("nonempty");
            let p = offset(base, &unit_vector(rng), rng.random_range(PROTEIN_SPACING.0..PROTEIN_SPACING.1));
            pos.iter().all(|q| distance(&p, q) >= PROTEIN_SPACING.0).then_some(p)
        });
        pos.push(placed.ok_or_else(|| Error::Generation("could not place protein atom".into()))?);
    }
    Ok(pos
        .into_iter()
        .enumerate()
        .map(|(i, position)| ProteinAtom {
            element: Element::new(pick(rng, &PROTEIN_ELEMENTS)).expect("vocabulary symbol"),
            residue_name: AMINO_ACIDS.choose(rng).expect("nonempty").to_string(),
            residue_index: (i / 3 + 1) as i64,
            chain_id: 'A',
            is_backbone: i % 3 != 2,
            position,
        })
        .collect())
}

fn gen_ligand<R: Rng>(
    rng: &mut R,
    protein: &[ProteinAtom],
    m: usize,
    delta: &mut dyn FnMut(&mut R) -> f64,
    cfg: &SynthConfig,
    radii: &VdwRadii,
) -> Option<Vec<LigandAtom>> {
    let mut atoms: Vec<LigandAtom> = Vec::with_capacity(m);
    for _ in 0..m {
        let element = Element::new(pick(rng, &LIGAND_ELEMENTS)).expect("vocabulary symbol");
        let placed = (0..ATOM_TRIES).find_map(|_| {
            let j = rng.random_range(0..protein.len());
            let u = vdw_radius_sum(&element, &protein[j].element, radii);
            let p = offset(&protein[j].position, &unit_vector(rng), u * (1.0 + delta(rng)));
            let clear = protein.iter().enumerate().all(|(k, a)| {
                k == j || distance(&p, &a.position) >= cfg.clearance * vdw_radius_sum(&element, &a.element, radii)
            });
            let spaced = atoms.iter().all(|a| distance(&p, &a.position) >= LIGAND_SPACING);
            (clear && spaced).then_some(p)
        })?;
        let aromatic_capable = matches!(element.as_str(), "C" | "N");
        atoms.push(LigandAtom {
            hybridization: *[Hybridization::Sp, Hybridization::Sp2, Hybridization::Sp3, Hybridization::Other]
                .choose(rng)
                .expect("nonempty"),
            formal_charge: *[-1, 0, 0, 0, 1].choose(rng).expect("nonempty"),
            degree: rng.random_range(1..=4),
            is_aromatic: aromatic_capable && rng.random_bool(0.3),
            element,
            position: placed,
        });
    }
    Some(atoms)
}

/// Generates `n` labeled complexes. Identical arguments give identical output.
pub fn gen_synthetic(seed: u64, n: usize, cfg: &SynthConfig, radii: &VdwRadii) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Synthetic {
        complexes: Vec::with_capacity(n),
        clusters: Vec::new(),
        at_minima: Vec::with_capacity(n),
    };
    let mut protein = Vec::new();
    for i in 0..n {
        let member = i % cfg.cluster_size;
        let mut attempt = 0;
        let complex = loop {
            if member == 0 || attempt > 0 {
                let np = rng.random_range(cfg.protein_atoms[0]..=cfg.protein_atoms[1]);
                protein = gen_protein(&mut rng, np)?;
            }
            let m = rng.random_range(cfg.ligand_atoms[0]..=cfg.ligand_atoms[1]);
            let minima = rng.random_bool(cfg.minima_fraction);
            let jitter = cfg.jitter;
            let mut delta = |r: &mut ChaCha8Rng| if minima || jitter == 0.0 { 0.0 } else { r.random_range(-jitter..jitter) };
            if let Some(ligand) = gen_ligand(&mut rng, &protein, m, &mut delta, cfg, radii) {
                let mut c = Complex {
                    id: format!("{}{:04}", cfg.id_prefix, i),
                    affinity: None,
                    protein: protein.clone(),
                    ligand,
                };
                c.affinity = Some(oracle_label(&c, radii)?);
                c.validate()?;
                out.at_minima.push(minima);
                break c;
            }
            attempt += 1;
            if attempt >= COMPLEX_TRIES {
                return Err(Error::Generation(format!("complex {i}: ligand placement failed {COMPLEX_TRIES} times")));
            }
        };
        if cfg.cluster_size > 1 {
            // a failed placement regenerates the protein, which starts a new target
            if member == 0 || attempt > 0 {
                out.clusters.push(ClusterSpec {
                    target_id: format!("{}T{:04}", cfg.id_prefix, out.clusters.len()),
                    complex_ids: Vec::new(),
                });
            }
            out.clusters.last_mut().expect("cluster opened").complex_ids.push(complex.id.clone());
        }
        out.complexes.push(complex);
    }
    out.clusters.retain(|c| c.complex_ids.len() >= 2);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_request() {
        let s = gen_synthetic(1, 0, &SynthConfig::default(), &VdwRadii::default()).unwrap();
        assert!(s.complexes.is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::default();
        let a = gen_synthetic(9, 6, &cfg, &VdwRadii::default()).unwrap();
        let b = gen_synthetic(9, 6, &cfg, &VdwRadii::default()).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(10, 6, &cfg, &VdwRadii::default()).unwrap();
        assert_ne!(a.complexes, c.complexes);
    }

    #[test]
    fn sizes_and_geometry_respect_config() {
        let cfg = SynthConfig::default();
        let radii = VdwRadii::default();
        let s = gen_synthetic(2, 20, &cfg, &radii).unwrap();
        for c in &s.complexes {
            assert!((8..=16).contains(&c.n_protein()));
            assert!((3..=8).contains(&c.n_ligand()));
            for l in &c.ligand {
                let ratios: Vec<f64> = c
                    .protein
                    .iter()
                    .map(|p| distance(&l.position, &p.position) / vdw_radius_sum(&l.element, &p.element, &radii))
                    .collect();
                let close = ratios.iter().filter(|r| **r < cfg.clearance - 1e-9).count();
                assert_eq!(close, 1, "exactly one anchor per ligand atom");
                assert!(ratios.iter().all(|r| *r >= 1.0 - cfg.jitter - 1e-9));
            }
        }
    }

    #[test]
    fn minima_label_decomposes() {
        let cfg = SynthConfig { minima_fraction: 1.0, ..Default::default() };
        let radii = VdwRadii::default();
        let s = gen_synthetic(4, 3, &cfg, &radii).unwrap();
        for c in &s.complexes {
            let mut tail = 0.0;
            let mut at_min = 0;
            for l in &c.ligand {
                for p in &c.protein {
                    let u = vdw_radius_sum(&l.element, &p.element, &radii);
                    let d = distance(&l.position, &p.position);
                    if (d - u).abs() < 1e-9 {
                        at_min += 1;
                    } else {
                        tail += pair_energy(u, 0.0, d, 1.0).unwrap();
                    }
                }
            }
            assert_eq!(at_min, c.n_ligand());
            let expected = -SIGMA_STAR * at_min as f64 + SIGMA_STAR * tail;
            assert!((c.affinity.unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn clusters_share_proteins() {
        let cfg = SynthConfig { cluster_size: 4, ..Default::default() };
        let s = gen_synthetic(5, 12, &cfg, &VdwRadii::default()).unwrap();
        assert!(!s.clusters.is_empty());
        for cl in &s.clusters {
            let members: Vec<&Complex> = cl
                .complex_ids
                .iter()
                .map(|id| s.complexes.iter().find(|c| &c.id == id).unwrap())
                .collect();
            assert!(members.windows(2).all(|w| w[0].protein == w[1].protein));
        }
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SynthConfig { ligand_atoms: [0, 3], ..Default::default() };
        assert!(matches!(gen_synthetic(0, 1, &cfg, &VdwRadii::default()), Err(Error::Config(_))));
    }
}
