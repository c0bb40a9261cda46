//! Central finite-difference check of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::Result;

/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Where the worst error occurred: parameter name or `input[i]`, and flat index.
    pub worst: Option<(String, usize)>,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `backward` against central differences with step `eps` for every
/// scalar of every parameter and input. `build` must record a scalar loss.
pub fn gradient_check<F>(params: &ParamSet, inputs: &[Tensor], eps: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |p: &ParamSet, xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new(p);
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut g = Graph::new(params);
    let vars: Vec<Var> = inputs.iter().map(|x| g.input_with_grad(x.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut report = GradCheck::default();
    let note = |report: &mut GradCheck, a: f64, n: f64, label: &dyn Fn() -> String, i: usize| {
        let e = rel_err(a, n);
        report.checked += 1;
        if e >= report.max_rel_err {
            report.max_rel_err = e;
            report.worst = Some((label(), i));
        }
    };

    let mut work = params.clone();
    for id in params.ids() {
        let analytic = grads.param(id).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; params.value(id).len()]);
        for i in 0..params.value(id).len() {
            let orig = params.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&work, inputs)?;
            work.value_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&work, inputs)?;
            work.value_mut(id).data_mut()[i] = orig;
            note(&mut report, analytic[i], (up - down) / (2.0 * eps), &|| params.name(id).to_string(), i);
        }
    }

    let mut xs = inputs.to_vec();
    for (j, v) in vars.iter().enumerate() {
        let analytic = grads.of(*v).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; inputs[j].len()]);
        for i in 0..inputs[j].len() {
            let orig = inputs[j].data()[i];
            xs[j].data_mut()[i] = orig + eps;
            let up = eval(params, &xs)?;
            xs[j].data_mut()[i] = orig - eps;
            let down = eval(params, &xs)?;
            xs[j].data_mut()[i] = orig;
            note(&mut report, analytic[i], (up - down) / (2.0 * eps), &|| format!("input[{j}]"), i);
        }
    }
    Ok(report)
}
