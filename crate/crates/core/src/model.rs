//! Encoder, interaction head and affinity scale bound to one parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ligbind_tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

use crate::complex::{build_complete_graph, build_knn_graph, Complex, ComplexGraph};
use crate::encoder::{encode, Encoded, EncoderInputs, EncoderParams, Init, ModelConfig};
use crate::error::{Error, Result};
use crate::physics::{
    bound_offsets, explain, interaction_matrix, physics_residual, vdw_energy, Energy, PairTable,
    PhysicsConfig, ResidueContact,
};

pub const SIGMA_PARAM: &str = "sigma";

/// A complex with every coordinate-derived constant precomputed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub affinity: Option<f64>,
    pub graph: ComplexGraph,
    pub inputs: EncoderInputs,
    pub pairs: PairTable,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub encoded: Encoded,
    /// Raw `H`, `M × N`.
    pub offsets: Var,
    pub bounded_offsets: Var,
    pub energy: Energy,
    /// Physics residual `L_p` of this complex.
    pub residual: Var,
    /// `ŷ = σ·E`, shape `[1]`.
    pub prediction: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub physics: PhysicsConfig,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub sigma: ParamId,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: ModelConfig, physics: PhysicsConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        physics.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = {
            let mut reg = |name: &str, shape: &[usize], init: Init| -> Result<ParamId> {
                Ok(match init {
                    Init::Uniform { fan_in } => store.insert_uniform(name, shape, fan_in, &mut rng)?,
                    Init::Ones => store.insert(name, Tensor::ones(shape))?,
                    Init::Zeros => store.insert(name, Tensor::zeros(shape))?,
                })
            };
            EncoderParams::build(&config, &mut reg)?
        };
        let sigma = store.insert(SIGMA_PARAM, Tensor::scalar(physics.sigma_init))?;
        Ok(Self {
            config,
            physics,
            store,
            encoder,
            sigma,
        })
    }

    /// Binds an existing store, checking that it holds exactly the expected
    /// parameters with the expected shapes.
    pub fn from_store(config: ModelConfig, physics: PhysicsConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        physics.validate()?;
        let mut expected = 0usize;
        let encoder = {
            let mut reg = |name: &str, shape: &[usize], _: Init| -> Result<ParamId> {
                expected += 1;
                let id = store.id(name)?;
                let got = store.tensor(id).shape();
                if got != shape {
                    return Err(Error::Tensor(TensorError::ShapeMismatch {
                        op: "bind",
                        lhs: shape.to_vec(),
                        rhs: got.to_vec(),
                    }));
                }
                Ok(id)
            };
            EncoderParams::build(&config, &mut reg)?
        };
        let sigma = store.id(SIGMA_PARAM)?;
        if store.tensor(sigma).shape() != [1] {
            return Err(Error::Validation("sigma must hold a single value".into()));
        }
        if store.len() != expected + 1 {
            return Err(Error::Validation(format!(
                "parameter store holds {} tensors, the configuration defines {}",
                store.len(),
                expected + 1
            )));
        }
        Ok(Self {
            config,
            physics,
            store,
            encoder,
            sigma,
        })
    }

    pub fn sigma_value(&self) -> f64 {
        self.store.tensor(self.sigma).item()
    }

    pub fn graph(&self, c: &Complex) -> Result<ComplexGraph> {
        if self.config.disable_geometry {
            build_complete_graph(c)
        } else {
            build_knn_graph(c, self.config.k)
        }
    }

    pub fn prepare(&self, c: &Complex) -> Result<Prepared> {
        let graph = self.graph(c)?;
        let inputs = EncoderInputs::new(&graph, &self.config)?;
        let pairs = PairTable::new(&graph, &self.physics, !self.config.disable_geometry)?;
        Ok(Prepared {
            id: c.id.clone(),
            affinity: c.affinity,
            graph,
            inputs,
            pairs,
        })
    }

    /// Records the full forward pass for `p` using the values in `store`,
    /// which must share this model's layout.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, p: &Prepared) -> Result<Forward> {
        let encoded = encode(tape, store, &self.encoder, &self.config, &p.inputs)?;
        let offsets = interaction_matrix(tape, encoded.ligand, encoded.protein)?;
        let bounded_offsets = bound_offsets(tape, offsets, self.physics.offset_bound)?;
        let energy = vdw_energy(tape, bounded_offsets, &p.pairs, self.physics.c)?;
        let residual = physics_residual(tape, bounded_offsets, &p.pairs, self.physics.c)?;
        let sigma = tape.param(store, self.sigma);
        let prediction = tape.mul(sigma, energy.total)?;
        Ok(Forward {
            encoded,
            offsets,
            bounded_offsets,
            energy,
            residual,
            prediction,
        })
    }

    pub fn predict_prepared(&self, p: &Prepared) -> Result<f64> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, &self.store, p).map_err(|e| numerical(&p.id, e))?;
        Ok(tape.value(f.prediction).item())
    }

    pub fn predict(&self, c: &Complex) -> Result<f64> {
        self.predict_prepared(&self.prepare(c)?)
    }

    /// Energy, residual and prediction values of one complex.
    pub fn evaluate_terms(&self, p: &Prepared) -> Result<Terms> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, &self.store, p).map_err(|e| numerical(&p.id, e))?;
        Ok(Terms {
            energy: tape.value(f.energy.total).item(),
            residual: tape.value(f.residual).item(),
            prediction: tape.value(f.prediction).item(),
            pair_energies: tape.value(f.energy.pairs).clone(),
        })
    }

    /// Residues behind the lowest `fraction` of pair energies.
    pub fn explain(&self, c: &Complex, fraction: f64) -> Result<Vec<ResidueContact>> {
        let p = self.prepare(c)?;
        let terms = self.evaluate_terms(&p)?;
        explain(&terms.pair_energies, &p.pairs, &p.graph, fraction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Terms {
    pub energy: f64,
    pub residual: f64,
    pub prediction: f64,
    pub pair_energies: Tensor,
}

/// Tags arithmetic failures with the complex they occurred on.
pub(crate) fn numerical(id: &str, e: Error) -> Error {
    if e.is_numerical() && !matches!(e, Error::Numerical { .. }) {
        Error::Numerical {
            complex_id: id.to_string(),
            source: Box::new(e),
        }
    } else {
        e
    }
}
