//! Central finite-difference verification of tape gradients.

use crate::error::{Result, TensorError};
use crate::param::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Absolute error below which an entry passes regardless of relative error.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Entries compared.
    pub checked: usize,
    /// Entries whose perturbation crossed a ReLU kink or variance floor.
    pub skipped_nonsmooth: usize,
    /// Entries that violated the tolerance.
    pub failures: usize,
    /// Largest relative error among entries large enough that the relative
    /// tolerance, not the absolute floor, decides the outcome.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub tol: f64,
}

impl GradCheckReport {
    fn new(tol: f64) -> Self {
        Self {
            checked: 0,
            skipped_nonsmooth: 0,
            failures: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            tol,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale > 0.0 { abs / scale } else { 0.0 };
        self.checked += 1;
        self.max_abs_error = self.max_abs_error.max(abs);
        // where tol·scale exceeds the floor the relative test is the binding one
        if self.tol * scale >= ABS_FLOOR || !rel.is_finite() {
            self.max_rel_error = self.max_rel_error.max(if rel.is_finite() { rel } else { f64::INFINITY });
        }
        if abs > ABS_FLOOR && (rel > self.tol || !rel.is_finite()) {
            self.failures += 1;
        }
    }

    /// Folds another report into this one.
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.skipped_nonsmooth += other.skipped_nonsmooth;
        self.failures += other.failures;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.tol = self.tol.max(other.tol);
    }
}

fn eval<F>(f: &mut F, x: &Tensor) -> Result<(f64, u64)>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone())?;
    let out = f(&mut tape, v)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(TensorError::NonScalarLoss(value.shape().to_vec()));
    }
    Ok((value.item(), tape.kink_signature()))
}

/// Compares the tape gradient of a scalar function of one tensor against
/// `(f(x+h) - f(x-h)) / 2h` for every entry of `x`.
pub fn grad_check<F>(mut f: F, x: &Tensor, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone())?;
    let out = f(&mut tape, v)?;
    let base_sig = tape.kink_signature();
    let analytic = match tape.backward(out) {
        Ok(g) => g.wrt(&tape, v)?,
        Err(TensorError::Detached) => Tensor::zeros(x.shape()),
        Err(e) => return Err(e),
    };
    let mut report = GradCheckReport::new(tol);
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let (fp, sp) = eval(&mut f, &plus)?;
        let (fm, sm) = eval(&mut f, &minus)?;
        if sp != base_sig || sm != base_sig {
            report.skipped_nonsmooth += 1;
            continue;
        }
        report.record(analytic.data()[i], (fp - fm) / (2.0 * step));
    }
    Ok(report)
}

/// Same comparison for a scalar function of a whole parameter store.
///
/// `entries` restricts the check to `(param index, flat entry)` pairs; `None`
/// checks every scalar of every parameter.
///
/// The closure may use any error type that tensor errors convert into.
pub fn grad_check_params<F, E>(
    mut f: F,
    store: &ParamStore,
    step: f64,
    tol: f64,
    entries: Option<&[(usize, usize)]>,
) -> std::result::Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &ParamStore) -> std::result::Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let base_sig = tape.kink_signature();
    let analytic = match tape.backward(out) {
        Ok(g) => g.for_params(store),
        Err(TensorError::Detached) => store.zeros_like(),
        Err(e) => return Err(e.into()),
    };
    let all: Vec<(usize, usize)>;
    let entries = match entries {
        Some(e) => e,
        None => {
            all = store
                .iter()
                .flat_map(|(id, p)| (0..p.tensor.len()).map(move |k| (id.0, k)))
                .collect();
            &all
        }
    };
    let mut report = GradCheckReport::new(tol);
    let mut probe = store.clone();
    for &(pi, k) in entries {
        let id = crate::param::ParamId(pi);
        let orig = store.tensor(id).data()[k];
        let mut run = |delta: f64, probe: &mut ParamStore| -> std::result::Result<(f64, u64), E> {
            probe.get_mut(id).tensor.data_mut()[k] = orig + delta;
            let mut tape = Tape::new();
            let out = f(&mut tape, probe)?;
            Ok((tape.value(out).item(), tape.kink_signature()))
        };
        let (fp, sp) = run(step, &mut probe)?;
        let (fm, sm) = run(-step, &mut probe)?;
        probe.get_mut(id).tensor.data_mut()[k] = orig;
        if sp != base_sig || sm != base_sig {
            report.skipped_nonsmooth += 1;
            continue;
        }
        report.record(analytic[pi].data()[k], (fp - fm) / (2.0 * step));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_tight() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.5, 0.01]);
        let r = grad_check(
            |t, v| {
                let s = t.square(v)?;
                t.sum_all(s)
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(r.passed());
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let r = grad_check(|t, _| Ok(t.constant(Tensor::scalar(7.0))), &x, 1e-5, 1e-4).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_abs_error, 0.0);
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn kinks_are_skipped_not_failed() {
        // |x| has gradient sign(x); relu(x)+relu(-x) encodes it with kinks
        // only at zero, so a check away from zero must pass...
        let x = Tensor::vector(vec![0.7, -0.4]);
        let r = grad_check(
            |t, v| {
                let a = t.relu(v)?;
                let n = t.scale(v, -1.0)?;
                let b = t.relu(n)?;
                let s = t.add(a, b)?;
                t.sum_all(s)
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(r.passed());
        // ...while a straddled kink is reported as skipped rather than failed.
        let x = Tensor::vector(vec![1e-7]);
        let r = grad_check(
            |t, v| {
                let a = t.relu(v)?;
                t.sum_all(a)
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert_eq!(r.skipped_nonsmooth, 1);
        assert_eq!(r.checked, 0);
    }
}
