//! Distance-only graph transformer encoder.
//!
//! Geometry enters exclusively through edge lengths (RBF-expanded) and edge
//! kinds, so every output is invariant to rigid motions of the input by
//! construction.

use serde::{Deserialize, Serialize};

use ligbind_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::complex::{ComplexGraph, LIGAND_FEATURE_DIM, PROTEIN_FEATURE_DIM};
use crate::error::{Error, Result};

/// Which state the attention query is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuerySource {
    /// The initial embedding `h⁰` at every layer.
    Initial,
    /// The current layer input `hˡ`.
    Previous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub rbf_centers: usize,
    pub rbf_min: f64,
    pub rbf_max: f64,
    /// kNN graph degree.
    pub k: usize,
    pub query_source: QuerySource,
    /// Ablation: complete graph, constant edge embeddings and tabulated
    /// contact distances in place of observed ones. Predictions then ignore
    /// coordinates entirely.
    pub disable_geometry: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            num_layers: 4,
            num_heads: 4,
            rbf_centers: 20,
            rbf_min: 0.0,
            rbf_max: 10.0,
            k: 8,
            query_source: QuerySource::Initial,
            disable_geometry: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1".into());
        }
        if self.hidden_dim == 0 || self.num_heads == 0 {
            return fail("hidden_dim and num_heads must be positive".into());
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return fail(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.rbf_centers < 2 {
            return fail("rbf_centers must be at least 2".into());
        }
        if !(self.rbf_min.is_finite() && self.rbf_max.is_finite() && self.rbf_max > self.rbf_min) {
            return fail(format!("rbf range [{}, {}] is empty", self.rbf_min, self.rbf_max));
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn rbf(&self) -> Rbf {
        Rbf::new(self.rbf_centers, self.rbf_min, self.rbf_max)
    }

    /// Width of the per-edge key/value input `[r ‖ e ‖ h_i ‖ h_j]`.
    pub fn edge_input_dim(&self) -> usize {
        self.rbf_centers + 4 + 2 * self.hidden_dim
    }
}

/// Gaussian radial basis with evenly spaced centers and width equal to the
/// center spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Rbf {
    pub centers: Vec<f64>,
    pub tau: f64,
}

impl Rbf {
    pub fn new(count: usize, min: f64, max: f64) -> Self {
        assert!(count >= 2 && max > min);
        let tau = (max - min) / (count - 1) as f64;
        Self {
            centers: (0..count).map(|m| min + m as f64 * tau).collect(),
            tau,
        }
    }

    pub fn embed(&self, d: f64) -> Vec<f64> {
        let w = 2.0 * self.tau * self.tau;
        self.centers.iter().map(|mu| (-(d - mu) * (d - mu) / w).exp()).collect()
    }
}

impl Default for Rbf {
    fn default() -> Self {
        Self::new(20, 0.0, 10.0)
    }
}

/// 20-center expansion on [0, 10] Å.
pub fn rbf_embed(d: f64) -> Vec<f64> {
    Rbf::default().embed(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

/// Parameter registration callback: `(name, shape, init) -> id`.
pub(crate) type Register<'a> = dyn FnMut(&str, &[usize], Init) -> Result<ParamId> + 'a;

/// Affine map `x·W + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    fn build(reg: &mut Register<'_>, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Ok(Self {
            w: reg(&format!("{name}.w"), &[fan_in, fan_out], Init::Uniform { fan_in })?,
            b: reg(&format!("{name}.b"), &[fan_out], Init::Uniform { fan_in })?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        Ok(tape.add_row(y, b)?)
    }
}

/// Linear → LayerNorm → ReLU → Linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
    pub second: Linear,
}

impl Mlp {
    fn build(reg: &mut Register<'_>, name: &str, fan_in: usize, width: usize) -> Result<Self> {
        Ok(Self {
            first: Linear::build(reg, &format!("{name}.l1"), fan_in, width)?,
            norm_gain: reg(&format!("{name}.ln.gain"), &[width], Init::Ones)?,
            norm_bias: reg(&format!("{name}.ln.bias"), &[width], Init::Zeros)?,
            second: Linear::build(reg, &format!("{name}.l2"), width, width)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.first.forward(tape, store, x)?;
        let g = tape.param(store, self.norm_gain);
        let b = tape.param(store, self.norm_bias);
        let h = tape.layer_norm(h, g, b)?;
        let h = tape.relu(h)?;
        self.second.forward(tape, store, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub query: Mlp,
    pub key: Mlp,
    pub value: Mlp,
    /// RBF → hidden gate applied to the attended values.
    pub gate: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub protein_embed: Linear,
    pub ligand_embed: Linear,
    pub layers: Vec<LayerParams>,
}

impl EncoderParams {
    pub(crate) fn build(cfg: &ModelConfig, reg: &mut Register<'_>) -> Result<Self> {
        let d = cfg.hidden_dim;
        let z = cfg.edge_input_dim();
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let p = format!("layer{l}");
            layers.push(LayerParams {
                query: Mlp::build(reg, &format!("{p}.query"), d, d)?,
                key: Mlp::build(reg, &format!("{p}.key"), z, d)?,
                value: Mlp::build(reg, &format!("{p}.value"), z, d)?,
                gate: Linear::build(reg, &format!("{p}.gate"), cfg.rbf_centers, d)?,
                out: Linear::build(reg, &format!("{p}.out"), d, d)?,
            });
        }
        Ok(Self {
            protein_embed: Linear::build(reg, "embed.protein", PROTEIN_FEATURE_DIM, d)?,
            ligand_embed: Linear::build(reg, "embed.ligand", LIGAND_FEATURE_DIM, d)?,
            layers,
        })
    }
}

/// Per-graph constants consumed by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInputs {
    pub protein_features: Tensor,
    pub ligand_features: Tensor,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `E × rbf_centers`; all zeros when geometry is disabled.
    pub rbf: Tensor,
    /// `E × 4` edge-kind one-hots.
    pub kinds: Tensor,
    pub n_protein: usize,
    pub n_ligand: usize,
}

impl EncoderInputs {
    pub fn new(g: &ComplexGraph, cfg: &ModelConfig) -> Result<Self> {
        let n = g.n_nodes();
        let mut seen = vec![false; n];
        for e in &g.edges {
            seen[e.dst] = true;
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(Error::EmptyNeighborhood(node));
        }
        let rbf = cfg.rbf();
        let r = cfg.rbf_centers;
        let mut rbf_data = Vec::with_capacity(g.edges.len() * r);
        let mut kinds = Vec::with_capacity(g.edges.len() * 4);
        for e in &g.edges {
            if cfg.disable_geometry {
                rbf_data.extend(std::iter::repeat_n(0.0, r));
            } else {
                rbf_data.extend(rbf.embed(e.distance));
            }
            kinds.extend(e.kind.one_hot());
        }
        let ne = g.edges.len();
        Ok(Self {
            protein_features: g.protein_features.clone(),
            ligand_features: g.ligand_features.clone(),
            src: g.edges.iter().map(|e| e.src).collect(),
            dst: g.edges.iter().map(|e| e.dst).collect(),
            rbf: Tensor::new(vec![ne, r], rbf_data)?,
            kinds: Tensor::new(vec![ne, 4], kinds)?,
            n_protein: g.n_protein(),
            n_ligand: g.n_ligand(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_protein + self.n_ligand
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }
}

/// `h⁰ = [protein rows ‖ ligand rows]`, each from its own embedding.
pub fn embed_initial(tape: &mut Tape, store: &ParamStore, p: &EncoderParams, x: &EncoderInputs) -> Result<Var> {
    let xp = tape.constant(x.protein_features.clone());
    let xl = tape.constant(x.ligand_features.clone());
    let hp = p.protein_embed.forward(tape, store, xp)?;
    let hl = p.ligand_embed.forward(tape, store, xl)?;
    Ok(tape.concat(&[hp, hl], 0)?)
}

/// Intermediate values of one encoder layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerTrace {
    /// `E × num_heads` attention weights, normalized over each node's in-edges.
    pub attention: Var,
    /// `E × D` gated per-edge messages.
    pub messages: Var,
    /// `n × D` summed incoming messages.
    pub aggregated: Var,
    /// `n × D` layer output.
    pub output: Var,
}

/// `D × H` matrix summing each head's block of features.
fn head_sum(cfg: &ModelConfig) -> Tensor {
    let (d, h, dh) = (cfg.hidden_dim, cfg.num_heads, cfg.head_dim());
    let mut m = vec![0.0; d * h];
    for f in 0..d {
        m[f * h + f / dh] = 1.0;
    }
    Tensor::new(vec![d, h], m).expect("head map shape")
}

/// Sums per-edge rows into their destination nodes.
pub fn aggregate(tape: &mut Tape, messages: Var, dst: &[usize], n_nodes: usize) -> Result<Var> {
    Ok(tape.scatter_add_rows(messages, dst, n_nodes)?)
}

pub fn layer_forward_traced(
    tape: &mut Tape,
    store: &ParamStore,
    lp: &LayerParams,
    cfg: &ModelConfig,
    x: &EncoderInputs,
    h: Var,
    h0: Var,
) -> Result<LayerTrace> {
    let n = x.n_nodes();
    let rbf = tape.constant(x.rbf.clone());
    let kinds = tape.constant(x.kinds.clone());
    let h_dst = tape.gather_rows(h, &x.dst)?;
    let h_src = tape.gather_rows(h, &x.src)?;
    let z = tape.concat(&[rbf, kinds, h_dst, h_src], 1)?;
    let k = lp.key.forward(tape, store, z)?;
    let v = lp.value.forward(tape, store, z)?;
    let q_in = match cfg.query_source {
        QuerySource::Initial => h0,
        QuerySource::Previous => h,
    };
    let q = lp.query.forward(tape, store, q_in)?;
    let q = tape.gather_rows(q, &x.dst)?;

    let hs = head_sum(cfg);
    let spread = tape.constant(hs.transpose2());
    let hs = tape.constant(hs);
    let qk = tape.mul(q, k)?;
    let scores = tape.matmul(qk, hs)?;
    let scores = tape.scale(scores, 1.0 / (cfg.head_dim() as f64).sqrt())?;
    let attention = tape.segment_softmax(scores, &x.dst, n)?;
    let weights = tape.matmul(attention, spread)?;
    let attended = tape.mul(weights, v)?;
    let gate = lp.gate.forward(tape, store, rbf)?;
    let messages = tape.mul(attended, gate)?;
    let aggregated = aggregate(tape, messages, &x.dst, n)?;
    let act = tape.swish(aggregated)?;
    let update = lp.out.forward(tape, store, act)?;
    let output = tape.add(h, update)?;
    Ok(LayerTrace {
        attention,
        messages,
        aggregated,
        output,
    })
}

/// `h^{l+1} = h^l + W_o·swish(Σ_j m_ij) + b_o`.
pub fn layer_forward(
    tape: &mut Tape,
    store: &ParamStore,
    lp: &LayerParams,
    cfg: &ModelConfig,
    x: &EncoderInputs,
    h: Var,
    h0: Var,
) -> Result<Var> {
    Ok(layer_forward_traced(tape, store, lp, cfg, x, h, h0)?.output)
}

#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub initial: Var,
    pub all: Var,
    pub protein: Var,
    pub ligand: Var,
}

pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    p: &EncoderParams,
    cfg: &ModelConfig,
    x: &EncoderInputs,
) -> Result<Encoded> {
    let h0 = embed_initial(tape, store, p, x)?;
    let mut h = h0;
    for lp in &p.layers {
        h = layer_forward(tape, store, lp, cfg, x, h, h0)?;
    }
    let protein_rows: Vec<usize> = (0..x.n_protein).collect();
    let ligand_rows: Vec<usize> = (x.n_protein..x.n_nodes()).collect();
    Ok(Encoded {
        initial: h0,
        all: h,
        protein: tape.gather_rows(h, &protein_rows)?,
        ligand: tape.gather_rows(h, &ligand_rows)?,
    })
}
