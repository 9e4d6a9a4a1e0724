//! Finite-difference checks for every tape primitive.
//!
//! Each case builds a scalar function `sum(op(x) * w)` with a fixed random
//! weighting `w`, so the upstream gradient is not uniform.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckReport};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

fn random(rng: &mut StdRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values in `[lo, hi]` with a random sign.
fn signed_away_from_zero(rng: &mut StdRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn weighted(tape: &mut Tape, out: Var, w: &Tensor) -> Result<Var> {
    let wv = tape.constant(w.clone());
    let m = tape.mul(out, wv)?;
    tape.sum_all(m)
}

fn check_unary(
    weight_seed: u64,
    x: Tensor,
    op: impl Fn(&mut Tape, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut probe = Tape::new();
    let pv = probe.constant(x.clone());
    let out_shape = probe_shape(&mut probe, pv, &op)?;
    let w = random(&mut StdRng::seed_from_u64(weight_seed), &out_shape, -1.0, 1.0);
    grad_check(
        |t, v| {
            let o = op(t, v)?;
            weighted(t, o, &w)
        },
        &x,
        FD_STEP,
        FD_TOL,
    )
}

fn probe_shape(tape: &mut Tape, v: Var, op: &impl Fn(&mut Tape, Var) -> Result<Var>) -> Result<Vec<usize>> {
    let o = op(tape, v)?;
    Ok(tape.value(o).shape().to_vec())
}

/// Checks every primitive with inputs drawn from `seed`. Returns one report
/// per primitive name.
pub fn primitive_suite(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();

    let b = random(&mut rng, &[4, 2], -1.0, 1.0);
    let x = random(&mut rng, &[3, 4], -1.0, 1.0);
    out.push((
        "matmul",
        check_unary(rng.random(), x, |t, v| {
            let bv = t.constant(b.clone());
            t.matmul(v, bv)
        })?,
    ));
    let a = random(&mut rng, &[2, 3], -1.0, 1.0);
    let x = random(&mut rng, &[3, 4], -1.0, 1.0);
    out.push((
        "matmul_rhs",
        check_unary(rng.random(), x, |t, v| {
            let av = t.constant(a.clone());
            t.matmul(av, v)
        })?,
    ));
    out.push((
        "transpose",
        check_unary(rng.random(), random(&mut rng, &[2, 5], -1.0, 1.0), |t, v| t.transpose(v))?,
    ));
    let c = random(&mut rng, &[3, 3], -1.0, 1.0);
    out.push((
        "add",
        check_unary(rng.random(), random(&mut rng, &[3, 3], -1.0, 1.0), |t, v| {
            let cv = t.constant(c.clone());
            let s = t.add(v, cv)?;
            t.add(s, v)
        })?,
    ));
    out.push((
        "sub",
        check_unary(rng.random(), random(&mut rng, &[3, 3], -1.0, 1.0), |t, v| {
            let cv = t.constant(c.clone());
            let s = t.sub(cv, v)?;
            let sq = t.square(v)?;
            t.sub(s, sq)
        })?,
    ));
    let row = random(&mut rng, &[3], -1.0, 1.0);
    out.push((
        "add_row",
        check_unary(rng.random(), random(&mut rng, &[4, 3], -1.0, 1.0), |t, v| {
            let r = t.constant(row.clone());
            t.add_row(v, r)
        })?,
    ));
    let mat = random(&mut rng, &[4, 3], -1.0, 1.0);
    out.push((
        "add_row_bias",
        check_unary(rng.random(), random(&mut rng, &[3], -1.0, 1.0), |t, v| {
            let m = t.constant(mat.clone());
            let s = t.add_row(m, v)?;
            t.square(s)
        })?,
    ));
    out.push((
        "elementwise_mul",
        check_unary(rng.random(), random(&mut rng, &[3, 2], -1.0, 1.0), |t, v| {
            let cv = t.constant(Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.1, -0.3, 1.5]).unwrap());
            let m = t.mul(v, cv)?;
            t.mul(m, v)
        })?,
    ));
    out.push((
        "scalar_mul",
        check_unary(rng.random(), random(&mut rng, &[5], -1.0, 1.0), |t, v| t.scale(v, -2.5))?,
    ));
    let num = random(&mut rng, &[2, 3], -1.0, 1.0);
    out.push((
        "divide",
        check_unary(
            rng.random(),
            signed_away_from_zero(&mut rng, &[2, 3], 0.5, 2.0),
            |t, v| {
                let n = t.constant(num.clone());
                let q = t.div(n, v)?;
                let r = t.div(v, q)?;
                t.add(q, r)
            },
        )?,
    ));
    out.push((
        "power_integer",
        check_unary(rng.random(), random(&mut rng, &[4], 0.5, 1.5), |t, v| t.pow(v, 12.0))?,
    ));
    out.push((
        "power_fractional",
        check_unary(rng.random(), random(&mut rng, &[4], 0.5, 2.0), |t, v| t.pow(v, -1.5))?,
    ));
    out.push((
        "exp",
        check_unary(rng.random(), random(&mut rng, &[2, 2], -2.0, 2.0), |t, v| t.exp(v))?,
    ));
    out.push((
        "tanh",
        check_unary(rng.random(), random(&mut rng, &[2, 3], -2.0, 2.0), |t, v| t.tanh(v))?,
    ));
    out.push((
        "square",
        check_unary(rng.random(), random(&mut rng, &[3], -2.0, 2.0), |t, v| t.square(v))?,
    ));
    out.push((
        "relu",
        check_unary(
            rng.random(),
            signed_away_from_zero(&mut rng, &[3, 3], 0.05, 2.0),
            |t, v| t.relu(v),
        )?,
    ));
    out.push((
        "swish",
        check_unary(rng.random(), random(&mut rng, &[3, 3], -3.0, 3.0), |t, v| t.swish(v))?,
    ));
    out.push((
        "sum_axis",
        check_unary(rng.random(), random(&mut rng, &[2, 3, 4], -1.0, 1.0), |t, v| {
            let s = t.sum_axis(v, 1)?;
            let sq = t.square(s)?;
            t.sum_axis(sq, 0)
        })?,
    ));
    let other = random(&mut rng, &[2, 2], -1.0, 1.0);
    out.push((
        "concat",
        check_unary(rng.random(), random(&mut rng, &[2, 3], -1.0, 1.0), |t, v| {
            let o = t.constant(other.clone());
            let sq = t.square(v)?;
            let c1 = t.concat(&[o, v, sq], 1)?;
            let tr = t.transpose(v)?;
            let c0 = t.concat(&[tr, tr], 0)?;
            let s0 = t.sum_all(c0)?;
            let s1 = t.sum_all(c1)?;
            let s = t.add(s0, s1)?;
            let c = t.concat(&[s, s0], 0)?;
            t.square(c)
        })?,
    ));
    out.push((
        "gather_rows",
        check_unary(rng.random(), random(&mut rng, &[4, 3], -1.0, 1.0), |t, v| {
            t.gather_rows(v, &[3, 0, 0, 2, 3])
        })?,
    ));
    out.push((
        "scatter_add_rows",
        check_unary(rng.random(), random(&mut rng, &[5, 2], -1.0, 1.0), |t, v| {
            let s = t.scatter_add_rows(v, &[1, 1, 0, 3, 1], 4)?;
            t.square(s)
        })?,
    ));
    out.push((
        "softmax",
        check_unary(rng.random(), random(&mut rng, &[6], -2.0, 2.0), |t, v| t.softmax(v))?,
    ));
    out.push((
        "segment_softmax",
        check_unary(rng.random(), random(&mut rng, &[6, 2], -3.0, 3.0), |t, v| {
            t.segment_softmax(v, &[0, 1, 0, 2, 1, 0], 3)
        })?,
    ));
    let gain = random(&mut rng, &[5], 0.5, 1.5);
    let bias = random(&mut rng, &[5], -0.5, 0.5);
    let ln_in = random(&mut rng, &[3, 5], -2.0, 2.0);
    out.push((
        "layer_norm",
        check_unary(rng.random(), ln_in.clone(), |t, v| {
            let g = t.constant(gain.clone());
            let b = t.constant(bias.clone());
            t.layer_norm(v, g, b)
        })?,
    ));
    out.push((
        "layer_norm_gain",
        check_unary(rng.random(), gain.clone(), |t, v| {
            let x = t.constant(ln_in.clone());
            let b = t.constant(bias.clone());
            let y = t.layer_norm(x, v, b)?;
            t.square(y)
        })?,
    ));
    out.push((
        "layer_norm_bias",
        check_unary(rng.random(), bias.clone(), |t, v| {
            let x = t.constant(ln_in.clone());
            let g = t.constant(gain.clone());
            let y = t.layer_norm(x, g, v)?;
            t.square(y)
        })?,
    ));
    Ok(out)
}
