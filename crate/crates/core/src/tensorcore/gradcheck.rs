//! Central finite-difference gradient checking.

use super::{Graph, ParamStore, TensorError, Var};

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst: Option<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |w| w.rel_error)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backward-pass gradients of `loss` with central differences for
/// every scalar of every parameter in `store`.
pub fn check_params<F>(
    store: &mut ParamStore,
    eps: f64,
    floor: f64,
    loss: F,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph<'_>) -> Result<Var, TensorError>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let root = loss(&mut g)?;
        g.backward(root).param_grads(&g)
    };
    let eval = |s: &ParamStore| -> Result<f64, TensorError> {
        let mut g = Graph::new(s);
        let root = loss(&mut g)?;
        Ok(g.value(root).item())
    };
    let mut report = GradCheckReport {
        checked: 0,
        worst: None,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for j in 0..store.get(id).len() {
            let orig = store.get(id).data()[j];
            store.get_mut(id).data_mut()[j] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(id)[j];
            let rel = relative_error(a, numeric, floor);
            report.checked += 1;
            if report.worst.as_ref().is_none_or(|w| rel > w.rel_error) {
                report.worst = Some(GradCheckEntry {
                    param: store.name(id).to_string(),
                    index: j,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}
