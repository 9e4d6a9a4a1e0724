//! Empirical checks that predictions ignore rigid motions and relabelings.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::complex::Complex;
use crate::error::Result;
use crate::geometry::{permute_complex, random_permutation, RigidMotion};
use crate::model::Model;

/// Half-width of the translation cube sampled by the audit, Å.
pub const AUDIT_TRANSLATION: f64 = 100.0;

pub trait AffinityPredictor: Sync {
    fn predict(&self, c: &Complex) -> Result<f64>;
}

impl AffinityPredictor for Model {
    fn predict(&self, c: &Complex) -> Result<f64> {
        Model::predict(self, c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub complex_id: String,
    /// Largest `|ŷ(T x) − ŷ(x)|` over the sampled proper rigid motions.
    pub max_abs_deviation: f64,
    /// Deviation under one improper motion (a mirror image); informational.
    pub reflection_deviation: f64,
}

fn stream_rng(seed: u64, stream: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Applies `n_transforms` random rotations with translations uniform in
/// `[−100, 100]³` to each complex. Complex `i` draws from its own random
/// stream, so rows do not depend on evaluation order.
pub fn invariance_audit<P: AffinityPredictor + ?Sized>(
    model: &P,
    complexes: &[Complex],
    n_transforms: usize,
    seed: u64,
) -> Result<Vec<AuditRow>> {
    complexes
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = stream_rng(seed, i);
            let base = model.predict(c)?;
            let mut worst: f64 = 0.0;
            for _ in 0..n_transforms {
                let t = RigidMotion::random(&mut rng, AUDIT_TRANSLATION);
                worst = worst.max((model.predict(&t.transform(c))? - base).abs());
            }
            let mirror = RigidMotion::reflection(&mut rng, AUDIT_TRANSLATION);
            Ok(AuditRow {
                complex_id: c.id.clone(),
                max_abs_deviation: worst,
                reflection_deviation: (model.predict(&mirror.transform(c))? - base).abs(),
            })
        })
        .collect()
}

/// Largest prediction change over `n` random joint relabelings of the
/// protein and ligand atoms.
pub fn permutation_deviation<P: AffinityPredictor + ?Sized>(model: &P, c: &Complex, n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = model.predict(c)?;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let pp = random_permutation(&mut rng, c.n_protein());
        let lp = random_permutation(&mut rng, c.n_ligand());
        worst = worst.max((model.predict(&permute_complex(c, &pp, &lp))? - base).abs());
    }
    Ok(worst)
}

pub const AUDIT_HEADER: &str = "complex_id,max_abs_deviation,reflection_deviation";

pub fn audit_csv(rows: &[AuditRow]) -> String {
    let mut s = String::from(AUDIT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{:e},{:e}", r.complex_id, r.max_abs_deviation, r.reflection_deviation);
    }
    s
}
