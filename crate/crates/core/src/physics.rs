//! Lennard-Jones interaction head.
//!
//! Ligand and protein representations form an offset matrix `H = h_L·h_Pᵀ`;
//! each ligand–protein pair contributes `c[(a/d)¹² − 2(a/d)⁶]` with
//! `a = u + β·tanh(H)`, `u` the tabulated radius sum and `d` the observed
//! distance. The residual term penalizes the squared distance derivative of
//! every pair energy, which vanishes when each pair sits at its minimum.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use ligbind_tensor::{Tape, Tensor, Var};

use crate::complex::{distance, vdw_radius_sum, ComplexGraph, ResidueKey, VdwRadii};
use crate::error::{Error, Result};

/// Default minimum admissible pair distance, Å.
pub const D_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// Every ligand × protein pair.
    AllPairs,
    /// Only pairs joined by a PL or LP edge of the kNN graph.
    EdgesOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    /// Pair coefficient `c`.
    pub c: f64,
    /// `β` in Å; `null` feeds `H` to the potential unbounded.
    pub offset_bound: Option<f64>,
    pub d_floor: f64,
    pub pair_scope: PairScope,
    /// Initial value of the trainable scale σ.
    pub sigma_init: f64,
    pub radii: VdwRadii,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            offset_bound: Some(0.5),
            d_floor: D_FLOOR,
            pair_scope: PairScope::AllPairs,
            sigma_init: 0.0,
            radii: VdwRadii::default(),
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() {
            return Err(Error::Config(format!("pair coefficient c = {} is not finite", self.c)));
        }
        if let Some(b) = self.offset_bound {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Config(format!("offset_bound must be positive, got {b}")));
            }
        }
        if !(self.d_floor.is_finite() && self.d_floor > 0.0) {
            return Err(Error::Config(format!("d_floor must be positive, got {}", self.d_floor)));
        }
        if !self.sigma_init.is_finite() {
            return Err(Error::Config("sigma_init is not finite".into()));
        }
        Ok(())
    }
}

fn check_floor(d: f64) -> Result<()> {
    if d < D_FLOOR || d.is_nan() {
        return Err(Error::BelowFloor { distance: d, floor: D_FLOOR });
    }
    Ok(())
}

/// `c[(a/d)¹² − 2(a/d)⁶]` with `a = u + h_b`.
pub fn pair_energy(u: f64, h_b: f64, d: f64, c: f64) -> Result<f64> {
    check_floor(d)?;
    let r6 = ((u + h_b) / d).powi(6);
    Ok(c * (r6 * r6 - 2.0 * r6))
}

/// `∂e/∂d = (12c/d)[(a/d)⁶ − (a/d)¹²]`.
pub fn pair_energy_derivative(u: f64, h_b: f64, d: f64, c: f64) -> Result<f64> {
    check_floor(d)?;
    let r6 = ((u + h_b) / d).powi(6);
    Ok(12.0 * c / d * (r6 - r6 * r6))
}

/// `ŷ = σ·E`.
pub fn predict_affinity(energy: f64, sigma: f64) -> f64 {
    sigma * energy
}

/// Ligand × protein table of radius sums, distances and scope flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    pub n_ligand: usize,
    pub n_protein: usize,
    /// Radius sums `u_ij`, `M × N`.
    pub u: Tensor,
    /// Pair distances `d_ij`, `M × N`.
    pub d: Tensor,
    /// 1 for in-scope pairs, 0 otherwise.
    pub mask: Tensor,
}

impl PairTable {
    /// With `use_geometry = false` the observed distances are replaced by the
    /// radius sums, so the table no longer depends on coordinates.
    pub fn new(g: &ComplexGraph, cfg: &PhysicsConfig, use_geometry: bool) -> Result<Self> {
        let (m, n) = (g.n_ligand(), g.n_protein());
        let mut u = Vec::with_capacity(m * n);
        let mut d = Vec::with_capacity(m * n);
        for (i, le) in g.ligand_elements.iter().enumerate() {
            for (j, pe) in g.protein_elements.iter().enumerate() {
                let uij = vdw_radius_sum(le, pe, &cfg.radii);
                u.push(uij);
                d.push(if use_geometry {
                    distance(g.ligand_position(i), g.protein_position(j))
                } else {
                    uij
                });
            }
        }
        let mask = match cfg.pair_scope {
            PairScope::AllPairs => vec![1.0; m * n],
            PairScope::EdgesOnly => {
                let mut mask = vec![0.0; m * n];
                for e in g.edges.iter().filter(|e| e.kind.is_cross()) {
                    let (lig, prot) = if g.is_ligand(e.src) { (e.src, e.dst) } else { (e.dst, e.src) };
                    mask[(lig - n) * n + prot] = 1.0;
                }
                mask
            }
        };
        for i in 0..m {
            for j in 0..n {
                let dij = d[i * n + j];
                if mask[i * n + j] != 0.0 && dij < cfg.d_floor {
                    return Err(Error::DistanceBelowFloor {
                        ligand: i,
                        protein: j,
                        distance: dij,
                        floor: cfg.d_floor,
                    });
                }
            }
        }
        Ok(Self {
            n_ligand: m,
            n_protein: n,
            u: Tensor::new(vec![m, n], u)?,
            d: Tensor::new(vec![m, n], d)?,
            mask: Tensor::new(vec![m, n], mask)?,
        })
    }

    pub fn in_scope(&self, i: usize, j: usize) -> bool {
        self.mask.get2(i, j) != 0.0
    }

    pub fn scope_count(&self) -> usize {
        self.mask.data().iter().filter(|v| **v != 0.0).count()
    }
}

/// `H = h_L · h_Pᵀ` (`M × N`).
pub fn interaction_matrix(tape: &mut Tape, h_ligand: Var, h_protein: Var) -> Result<Var> {
    let pt = tape.transpose(h_protein)?;
    Ok(tape.matmul(h_ligand, pt)?)
}

/// `β·tanh(H)`, or `H` itself when unbounded.
pub fn bound_offsets(tape: &mut Tape, h: Var, bound: Option<f64>) -> Result<Var> {
    match bound {
        Some(b) => {
            let t = tape.tanh(h)?;
            Ok(tape.scale(t, b)?)
        }
        None => Ok(h),
    }
}

/// Returns `(a/d)⁶` and `(a/d)¹²` for every pair.
fn ratio_powers(tape: &mut Tape, h_bounded: Var, table: &PairTable) -> Result<(Var, Var)> {
    let u = tape.constant(table.u.clone());
    let d = tape.constant(table.d.clone());
    let a = tape.add(u, h_bounded)?;
    let r = tape.div(a, d)?;
    let r6 = tape.pow(r, 6.0)?;
    let r12 = tape.square(r6)?;
    Ok((r6, r12))
}

#[derive(Debug, Clone, Copy)]
pub struct Energy {
    /// `M × N` pair energies, zero outside the scope.
    pub pairs: Var,
    pub total: Var,
}

pub fn vdw_energy(tape: &mut Tape, h_bounded: Var, table: &PairTable, c: f64) -> Result<Energy> {
    let (r6, r12) = ratio_powers(tape, h_bounded, table)?;
    let r6x2 = tape.scale(r6, 2.0)?;
    let e = tape.sub(r12, r6x2)?;
    let e = tape.scale(e, c)?;
    let mask = tape.constant(table.mask.clone());
    let pairs = tape.mul(e, mask)?;
    let total = tape.sum_all(pairs)?;
    Ok(Energy { pairs, total })
}

/// `Σ_(i,j) in scope (∂e_ij/∂d_ij)²`.
pub fn physics_residual(tape: &mut Tape, h_bounded: Var, table: &PairTable, c: f64) -> Result<Var> {
    let (r6, r12) = ratio_powers(tape, h_bounded, table)?;
    let diff = tape.sub(r6, r12)?;
    let coef = Tensor::new(
        table.d.shape().to_vec(),
        table
            .d
            .data()
            .iter()
            .zip(table.mask.data())
            .map(|(d, m)| 12.0 * c / d * m)
            .collect(),
    )?;
    let coef = tape.constant(coef);
    let deriv = tape.mul(diff, coef)?;
    let sq = tape.square(deriv)?;
    Ok(tape.sum_all(sq)?)
}

/// One residue of an interpretability report.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueContact {
    pub rank: usize,
    pub residue: ResidueKey,
    pub min_pair_energy: f64,
    /// Ligand and protein atom indices of the pair attaining the minimum.
    pub ligand_atom: usize,
    pub protein_atom: usize,
}

/// Residues touched by the lowest `⌈fraction·P⌉` of the `P` in-scope pair
/// energies, ordered by each residue's lowest pair energy.
pub fn explain(pair_energies: &Tensor, table: &PairTable, g: &ComplexGraph, fraction: f64) -> Result<Vec<ResidueContact>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("explain fraction must lie in (0, 1], got {fraction}")));
    }
    let n = table.n_protein;
    let mut pairs: Vec<(f64, &ResidueKey, usize, usize)> = Vec::new();
    for i in 0..table.n_ligand {
        for j in 0..n {
            if table.in_scope(i, j) {
                pairs.push((pair_energies.get2(i, j), &g.protein_residues[j], i, j));
            }
        }
    }
    let cmp = |a: &(f64, &ResidueKey, usize, usize), b: &(f64, &ResidueKey, usize, usize)| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.cmp(b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    };
    pairs.sort_by(cmp);
    let take = ((fraction * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len().max(1));
    let mut out: Vec<ResidueContact> = Vec::new();
    for &(e, key, i, j) in pairs.iter().take(take) {
        // pairs arrive in ascending energy, so the first hit is the minimum
        if out.iter().all(|r| &r.residue != key) {
            out.push(ResidueContact {
                rank: out.len() + 1,
                residue: key.clone(),
                min_pair_energy: e,
                ligand_atom: i,
                protein_atom: j,
            });
        }
    }
    Ok(out)
}

pub const EXPLAIN_HEADER: &str = "# rank\tresidue_index\tchain\tresidue_name\tmin_pair_energy";

pub fn format_explain(report: &[ResidueContact]) -> String {
    let mut s = String::from(EXPLAIN_HEADER);
    s.push('\n');
    for r in report {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            r.rank, r.residue.residue_index, r.residue.chain_id, r.residue.residue_name, r.min_pair_energy
        );
    }
    s
}
