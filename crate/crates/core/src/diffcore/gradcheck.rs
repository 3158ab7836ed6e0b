//! Central finite-difference verification of `Graph::backward`.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over the coordinates of each parameter.
    pub max_rel_err: Vec<f64>,
    pub step: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_err.iter().copied().fold(0.0, f64::max)
    }
}

/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `backward()` against `(f(θ+h·e) − f(θ−h·e)) / 2h` on every
/// coordinate of every parameter. `build` must construct a scalar from
/// the supplied parameter leaves; it is re-run for each perturbation.
pub fn finite_diff_check<F>(params: &[Tensor], step: f64, tolerance: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    let eval = |values: &[Tensor], which: usize| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        let v = g.value(out).item()?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is not finite while perturbing parameter {which}"
            )));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut work = params.to_vec();
    let mut max_rel_err = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            work[pi].data_mut()[j] = orig + step;
            let plus = eval(&work, pi)?;
            work[pi].data_mut()[j] = orig - step;
            let minus = eval(&work, pi)?;
            work[pi].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grad.data()[j], numeric));
        }
        max_rel_err.push(worst);
    }
    let passed = max_rel_err.iter().all(|&e| e < tolerance);
    Ok(GradCheckReport {
        max_rel_err,
        step,
        tolerance,
        passed,
    })
}
