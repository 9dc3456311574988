use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::TensorError;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so gradients near
    /// zero are compared absolutely against `tol * floor`.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tol: 1e-4,
            floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tol)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| p.max_rel_error > self.tol)
            .map(|p| p.name.as_str())
            .collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of a scalar loss with central differences
/// for every element of every parameter in `params` (all parameters when
/// `params` is `None`).
///
/// `loss` must be deterministic: evaluation-mode dropout only.
pub fn grad_check<E, F>(
    store: &mut ParamStore,
    params: Option<&[ParamId]>,
    cfg: GradCheckConfig,
    mut loss: F,
) -> Result<GradCheckReport, E>
where
    E: From<TensorError>,
    F: for<'t> FnMut(&'t Tape, &ParamStore) -> Result<Var<'t>, E>,
{
    let ids: Vec<ParamId> = match params {
        Some(p) => p.to_vec(),
        None => store.ids().collect(),
    };

    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let out = loss(&tape, store)?;
        if !out.item().is_finite() {
            return Err(TensorError::NonFinite("loss".into()).into());
        }
        let grads = tape.backward(out);
        ids.iter()
            .map(|&id| {
                grads
                    .param_grad(id)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; store.value(id).len()])
            })
            .collect()
    };

    let mut eval = |store: &ParamStore| -> Result<f64, E> {
        let tape = Tape::new();
        let v = loss(&tape, store)?.item();
        Ok(v)
    };

    let mut report = Vec::with_capacity(ids.len());
    for (&id, grad) in ids.iter().zip(&analytic) {
        let name = store.get(id).name().to_string();
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, &a) in grad.iter().enumerate() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + cfg.step;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig - cfg.step;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() || !a.is_finite() {
                return Err(TensorError::NonFinite(format!("{name}[{i}]")).into());
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(a, numeric, cfg.floor);
            if err > check.max_rel_error || i == 0 {
                check.max_rel_error = err.max(check.max_rel_error);
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        report.push(check);
    }
    Ok(GradCheckReport {
        tol: cfg.tol,
        params: report,
    })
}
