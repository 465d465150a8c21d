//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates forward values, so it is
//! independent of the backward implementation it verifies.

use super::{ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::Result;

/// Relative error with an absolute floor on the denominator, so that
/// gradients that are zero on both sides count as agreeing.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(tensor label, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    fn record(&mut self, label: &str, idx: usize, analytic: f64, numeric: f64) {
        let e = rel_error(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(e);
            self.worst = Some((label.to_string(), idx, analytic, numeric));
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_error >= self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst.or(self.worst.take());
        }
    }
}

/// Checks `d loss / d inputs` for a loss built by `build` from leaf inputs.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], build: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.input(t.clone().with_requires_grad()))
        .collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport::default();
    let mut work = inputs.to_vec();
    for (ti, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).map(|g| g.to_vec());
        for k in 0..inputs[ti].numel() {
            let orig = inputs[ti].data()[k];
            work[ti].data_mut()[k] = orig + eps;
            let up = eval(&work)?;
            work[ti].data_mut()[k] = orig - eps;
            let down = eval(&work)?;
            work[ti].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.as_ref().map_or(0.0, |g| g[k]);
            report.record(&format!("input{ti}"), k, a, numeric);
        }
    }
    Ok(report)
}

/// Checks parameter gradients for the loss recorded by `build`. `coords`
/// picks which flat indices of each parameter to perturb.
pub fn check_params<F>(
    params: &mut ParamSet<f64>,
    build: F,
    eps: f64,
    coords: impl Fn(ParamId, usize) -> Vec<usize>,
) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>,
{
    let eval = |params: &ParamSet<f64>| -> Result<f64> {
        let mut tape = Tape::with_params(params);
        let loss = build(&mut tape)?;
        Ok(tape.value(loss).item())
    };
    let grads = {
        let mut tape = Tape::with_params(params);
        let loss = build(&mut tape)?;
        tape.backward(loss)?
    };

    let mut report = GradCheckReport::default();
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let name = params.name(id).to_string();
        let analytic = grads.param(id).map(|g| g.to_vec());
        for k in coords(id, params.get(id).numel()) {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + eps;
            let up = eval(params)?;
            params.get_mut(id).data_mut()[k] = orig - eps;
            let down = eval(params)?;
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.as_ref().map_or(0.0, |g| g[k]);
            report.record(&name, k, a, numeric);
        }
    }
    Ok(report)
}
