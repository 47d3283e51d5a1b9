//! Central finite-difference checking of taped gradients (f64).

use crate::error::Result;
use crate::numerics::graph::{Graph, Var};
use crate::numerics::tensor::Tensor;

/// Gradients below this magnitude are compared absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares the tape gradient of scalar `f` with `(f(θ+h) − f(θ−h)) / 2h` for the
/// selected elements of every input. `select(input, len)` picks which flat
/// positions to perturb (all of them when it returns `None`).
pub fn check_gradients<F>(
    inputs: &[Tensor<f64>],
    h: f64,
    select: impl Fn(usize, usize) -> Option<Vec<usize>>,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ins: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vars = ins
            .iter()
            .map(|t| g.leaf(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&g, &vars)?;
        Ok(g.scalar_value(out))
    };

    let g = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| g.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, (v, t)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.wrt(*v, t.shape());
        let positions = select(i, t.len()).unwrap_or_else(|| (0..t.len()).collect());
        for j in positions {
            let orig = t.data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic.data()[j], numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}
