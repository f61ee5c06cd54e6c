use super::{ParamSet, Tape, Var};

/// Worst analytic-vs-numeric disagreement within one parameter tensor.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the tape gradient of `loss_fn` against central differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every scalar in `params`.
///
/// `loss_fn` receives a fresh tape with `params` registered in order and
/// must return a scalar node.
pub fn grad_check<E, F>(params: &ParamSet<f64>, step: f64, loss_fn: F) -> Result<GradCheckReport, E>
where
    F: for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Result<Var, E>,
    E: From<super::TensorError>,
{
    let analytic = {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let loss = loss_fn(&mut tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.wrt(v)).collect::<Vec<_>>()
    };

    let eval = |p: &ParamSet<f64>| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let loss = loss_fn(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(params.len());
    for (ti, grad) in analytic.iter().enumerate() {
        let mut check = TensorCheck {
            name: params.name(ti).to_string(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..grad.len() {
            let original = probe.tensor(ti).data()[k];
            probe.tensor_mut(ti).data_mut()[k] = original + step;
            let up = eval(&probe)?;
            probe.tensor_mut(ti).data_mut()[k] = original - step;
            let down = eval(&probe)?;
            probe.tensor_mut(ti).data_mut()[k] = original;

            let numeric = (up - down) / (2.0 * step);
            let a = grad.data()[k];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || k == 0 {
                check.max_rel_error = err;
                check.worst_index = k;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        tensors.push(check);
    }
    Ok(GradCheckReport { tensors })
}
