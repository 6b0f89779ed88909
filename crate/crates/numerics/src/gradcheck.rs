//! Central finite-difference gradient checks.

use crate::params::{Bindings, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst coordinate found by a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
    /// `(analytic, numeric)` for every checked coordinate.
    pub pairs: Vec<(f64, f64)>,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            max_rel_err: 0.0,
            worst: None,
            checked: 0,
            pairs: Vec::new(),
        }
    }

    fn record(&mut self, label: String, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        self.pairs.push((analytic, numeric));
        if self.worst.is_none() || err > self.max_rel_err {
            self.max_rel_err = err;
            self.worst = Some((label, index, analytic, numeric));
        }
    }
}

impl GradCheckReport {
    /// Relative error over coordinates where either gradient reaches `floor`
    /// in magnitude, and absolute error over the rest.
    pub fn split_at(&self, floor: f64) -> (f64, f64) {
        let mut rel: f64 = 0.0;
        let mut abs: f64 = 0.0;
        for &(a, n) in &self.pairs {
            if a.abs().max(n.abs()) >= floor {
                rel = rel.max(relative_error(a, n));
            } else {
                abs = abs.max((a - n).abs());
            }
        }
        (rel, abs)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks `f` with respect to every element of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> GradCheckReport
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars);
    let grads = tape.backward(loss).expect("scalar loss");
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|v| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(&v.shape())))
        .collect();

    let eval = |perturbed: &[Tensor]| {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars).item()
    };

    let mut report = GradCheckReport::new();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + eps;
            let plus = eval(&work);
            work[k].data_mut()[i] = orig - eps;
            let minus = eval(&work);
            work[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            report.record(format!("input{k}"), i, analytic[k].data()[i], numeric);
        }
    }
    report
}

/// Checks a loss built from a [`ParamStore`] with respect to every parameter
/// whose name starts with one of `prefixes` (all parameters when empty).
pub fn grad_check_params<F>(store: &ParamStore, prefixes: &[&str], f: F, eps: f64) -> GradCheckReport
where
    F: for<'t, 's> Fn(&Bindings<'t, 's>) -> Var<'t>,
{
    grad_check_frozen(store, prefixes, &[], f, eps)
}

/// Like [`grad_check_params`] with the `frozen` prefixes bound as constants
/// in the analytic pass.
pub fn grad_check_frozen<F>(store: &ParamStore, prefixes: &[&str], frozen: &[&str], f: F, eps: f64) -> GradCheckReport
where
    F: for<'t, 's> Fn(&Bindings<'t, 's>) -> Var<'t>,
{
    let selected = |name: &str| prefixes.is_empty() || prefixes.iter().any(|p| name.starts_with(p));
    let tape = Tape::new();
    let b = frozen.iter().fold(Bindings::new(&tape, store), |b, p| b.freeze(*p));
    let loss = f(&b);
    let grads = b.gradients(&tape.backward(loss).expect("scalar loss"));

    let eval = |s: &ParamStore| {
        let tape = Tape::new();
        let b = frozen.iter().fold(Bindings::new(&tape, s), |b, p| b.freeze(*p));
        f(&b).item()
    };

    let mut report = GradCheckReport::new();
    let mut work = store.clone();
    let names: Vec<String> = store.names().filter(|n| selected(n)).map(String::from).collect();
    for name in names {
        let len = store.get(&name).unwrap().len();
        for i in 0..len {
            let orig = store.get(&name).unwrap().data()[i];
            work.get_mut(&name).unwrap().data_mut()[i] = orig + eps;
            let plus = eval(&work);
            work.get_mut(&name).unwrap().data_mut()[i] = orig - eps;
            let minus = eval(&work);
            work.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(&name).map(|g| g.data()[i]).unwrap_or(0.0);
            report.record(name.clone(), i, analytic, numeric);
        }
    }
    report
}
