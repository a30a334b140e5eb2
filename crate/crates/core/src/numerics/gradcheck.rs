//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares analytic parameter gradients of the scalar built by `f` with
/// central differences `(f(p+h) − f(p−h)) / 2h`. Error per element is
/// `|analytic − numeric| / (|analytic| + 1e-8)`.
///
/// `max_per_param` caps the elements probed per parameter (evenly strided).
pub fn check_param_grads<F>(store: &mut ParamStore, step: f64, max_per_param: usize, f: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Graph) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let loss = f(store, &mut g)?;
    g.backward(loss, store)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = f(s, &mut g)?;
        Ok(g.value(l).item())
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.get(id).trainable).collect();
    for id in ids {
        let n = store.get(id).value.len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let analytic = store.get(id).grad.data()[k];
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + step;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig - step;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let rel = (analytic - numeric).abs() / (analytic.abs() + 1e-8);
            report.checked += 1;
            if (rel > report.max_rel_err || report.worst.is_none())
                && rel >= report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = Some((store.name(id).to_string(), k, analytic, numeric));
                }
        }
    }
    Ok(report)
}
