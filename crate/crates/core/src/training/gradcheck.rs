//! Finite-difference verification of the full training objective.

use ligbind_tensor::suite::{FD_STEP, FD_TOL};
use ligbind_tensor::{grad_check_params, GradCheckReport};

use super::synth::{gen_synthetic, SynthConfig};
use super::item_objective;
use crate::complex::VdwRadii;
use crate::encoder::ModelConfig;
use crate::error::Result;
use crate::model::Model;
use crate::physics::PhysicsConfig;

/// Seeds used by default when checking the end-to-end objective.
pub const GRAD_CHECK_SEEDS: u64 = 20;

/// Checks `∂(L_d + L_p)/∂θ` for every scalar of a small randomly initialized
/// model on two small synthetic complexes.
pub fn end_to_end_check(seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig {
        hidden_dim: 8,
        num_layers: 2,
        num_heads: 2,
        k: 4,
        ..Default::default()
    };
    let physics = PhysicsConfig {
        sigma_init: -0.2,
        ..Default::default()
    };
    let model = Model::new(cfg, physics, seed)?;
    let synth = SynthConfig {
        protein_atoms: [5, 8],
        ligand_atoms: [2, 4],
        ..Default::default()
    };
    let data = gen_synthetic(seed, 2, &synth, &VdwRadii::default())?;
    let items = data
        .complexes
        .iter()
        .map(|c| model.prepare(c))
        .collect::<Result<Vec<_>>>()?;
    grad_check_params(
        |tape, store| {
            let mut total = None;
            for p in &items {
                let t = item_objective(&model, tape, store, p, p.affinity.unwrap_or(0.0), 1.0, 1.0)?.total;
                total = Some(match total {
                    None => t,
                    Some(acc) => tape.add(acc, t)?,
                });
            }
            Ok(total.expect("two items"))
        },
        &model.store,
        FD_STEP,
        FD_TOL,
        None,
    )
}
