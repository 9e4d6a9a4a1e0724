//! Rigid motions and atom relabelings used by the invariance suites.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::complex::{Complex, Vec3};

pub type Mat3 = [[f64; 3]; 3];

/// `x ↦ R·x + b`. `R` is orthogonal; it is a proper rotation unless built by
/// [`RigidMotion::reflection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Rotation of a unit quaternion `(w, x, y, z)`; the input is normalized.
    pub fn from_quaternion(q: [f64; 4], translation: Vec3) -> Self {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        let rotation = [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ];
        Self { rotation, translation }
    }

    /// Uniformly distributed rotation (normalized Gaussian quaternion) with a
    /// translation uniform in `[-t, t]³`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, t: f64) -> Self {
        let mut q = [0.0; 4];
        loop {
            for v in q.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
                break;
            }
        }
        let translation = if t > 0.0 {
            [rng.random_range(-t..=t), rng.random_range(-t..=t), rng.random_range(-t..=t)]
        } else {
            [0.0; 3]
        };
        Self::from_quaternion(q, translation)
    }

    /// Random rotation composed with the mirror `x ↦ -x` (determinant −1).
    pub fn reflection<R: Rng + ?Sized>(rng: &mut R, t: f64) -> Self {
        let mut m = Self::random(rng, t);
        for row in m.rotation.iter_mut() {
            row[0] = -row[0];
        }
        m
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = &self.rotation;
        let mut out = self.translation;
        for (i, o) in out.iter_mut().enumerate() {
            *o += r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2];
        }
        out
    }

    pub fn determinant(&self) -> f64 {
        let r = &self.rotation;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    pub fn transform(&self, c: &Complex) -> Complex {
        let moved: Vec<Vec3> = c.positions().iter().map(|p| self.apply(p)).collect();
        c.with_positions(&moved)
    }
}

/// Relabels atoms within each partition: new protein atom `i` is old atom
/// `protein_perm[i]`, likewise for the ligand.
pub fn permute_complex(c: &Complex, protein_perm: &[usize], ligand_perm: &[usize]) -> Complex {
    assert_eq!(protein_perm.len(), c.n_protein());
    assert_eq!(ligand_perm.len(), c.n_ligand());
    Complex {
        id: c.id.clone(),
        affinity: c.affinity,
        protein: protein_perm.iter().map(|&i| c.protein[i].clone()).collect(),
        ligand: ligand_perm.iter().map(|&i| c.ligand[i].clone()).collect(),
    }
}

/// Uniform random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
