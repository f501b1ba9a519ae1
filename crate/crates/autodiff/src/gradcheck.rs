use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn scalar_output(g: &Graph<f64>, out: Var) -> Result<f64> {
    let v = g.value(out);
    if v.numel() != 1 {
        return Err(TensorError::Contract(format!(
            "gradient check needs a scalar-valued function, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

/// Compares the reverse-mode gradient of `f` at `x` against central
/// differences with step `h`; returns the largest per-coordinate
/// [`relative_error`].
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let eval = |point: Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(point);
        let out = f(&mut g, v)?;
        scalar_output(&g, out)
    };
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let out = f(&mut g, xv)?;
    scalar_output(&g, out)?;
    let grads = g.backward(out)?;
    let analytic = grads
        .get(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Same check over every coordinate of every tensor in `store`.
pub fn grad_check_params<F>(f: F, store: &mut ParamStore<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    scalar_output(&g, out)?;
    let analytic = g.backward(out)?.param_grads(store);
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, store)?;
        scalar_output(&g, out)
    };
    let mut worst = 0.0f64;
    for id in store.ids().collect::<Vec<_>>() {
        for i in 0..store.get(id).numel() {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + h;
            let fp = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig - h;
            let fm = eval(store)?;
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[id.index()].as_ref().map_or(0.0, |t| t.data()[i]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}
