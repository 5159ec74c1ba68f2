use super::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Largest relative disagreement between the tape gradient of `f` and a
/// central finite difference with step `eps`, over every input coordinate.
///
/// The relative error of a coordinate is `|analytic − numeric| / max(1, |numeric|)`.
pub fn gradcheck<F>(f: F, point: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars: Vec<_> = point.iter().map(|p| tape.var(p.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|p| tape.constant(p.clone())).collect();
        scalar_value(f(&tape, &vars)?)
    };

    let mut worst = 0.0f64;
    let mut inputs = point.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for c in 0..point[i].len() {
            let x0 = point[i].data()[c];
            inputs[i].data_mut()[c] = x0 + eps;
            let up = eval(&inputs)?;
            inputs[i].data_mut()[c] = x0 - eps;
            let down = eval(&inputs)?;
            inputs[i].data_mut()[c] = x0;
            worst = worst.max(relative_error(grad.data()[c], (up - down) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

/// [`gradcheck`] over every entry of a parameter store.
pub fn gradcheck_params<F>(store: &ParamStore<f64>, f: F, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, &ParamStore<f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let loss = f(&tape, store)?;
    let grads = tape.backward(loss)?;

    let mut work = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        let analytic = grads.param(id).map(<[f64]>::to_vec);
        for c in 0..store.tensor(id).len() {
            let x0 = store.tensor(id).data()[c];
            work.tensor_mut(id).data_mut()[c] = x0 + eps;
            let up = scalar_value(f(&Tape::new(), &work)?)?;
            work.tensor_mut(id).data_mut()[c] = x0 - eps;
            let down = scalar_value(f(&Tape::new(), &work)?)?;
            work.tensor_mut(id).data_mut()[c] = x0;
            let a = analytic.as_ref().map_or(0.0, |g| g[c]);
            worst = worst.max(relative_error(a, (up - down) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

fn scalar_value(v: Var<'_, f64>) -> Result<f64> {
    if v.with_data(|d| d.len()) != 1 {
        return Err(Error::NonScalarLoss(v.shape()));
    }
    Ok(v.item())
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}
