//! Central-difference verification of tape gradients.

use super::{ParamStore, Tape, Tensor, TensorError, Var};

/// Relative error between two gradients of one parameter:
/// `‖a − n‖ / max(‖a‖, ‖n‖, 1e-8)`.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff = analytic.data().iter().zip(numeric.data()).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    diff / analytic.norm().max(numeric.norm()).max(1e-8)
}

fn eval_scalar<F>(store: &ParamStore, f: &F) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(TensorError::NonScalarLoss(v.shape().to_vec()));
    }
    let x = v.data()[0];
    if !x.is_finite() {
        return Err(TensorError::NonFinite("finite_diff"));
    }
    Ok(x)
}

/// Central-difference gradients of `f` for every parameter in `store`,
/// in registration order.
pub fn numeric_gradients<F>(store: &ParamStore, epsilon: f64, f: F) -> Result<Vec<Tensor>, TensorError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(TensorError::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let n = store.value(id).len();
        let mut grad = vec![0.0; n];
        for (i, g) in grad.iter_mut().enumerate() {
            let orig = store.value(id).data()[i];
            work.get_mut(id).value.data_mut()[i] = orig + epsilon;
            let plus = eval_scalar(&work, &f)?;
            work.get_mut(id).value.data_mut()[i] = orig - epsilon;
            let minus = eval_scalar(&work, &f)?;
            work.get_mut(id).value.data_mut()[i] = orig;
            *g = (plus - minus) / (2.0 * epsilon);
        }
        out.push(Tensor::new(store.value(id).shape(), grad)?);
    }
    Ok(out)
}

/// Analytic gradients of `f` for every parameter, via one backward pass.
/// Existing gradients in `store` are cleared first.
pub fn analytic_gradients<F>(store: &mut ParamStore, f: F) -> Result<Vec<Tensor>, TensorError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;
    Ok(store.iter().map(|p| p.grad.clone()).collect())
}

/// Largest per-parameter [`relative_error`] between paired gradient lists.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic.iter().zip(numeric).map(|(a, n)| relative_error(a, n)).fold(0.0, f64::max)
}

/// Compares tape gradients of the scalar `f` against central differences
/// and returns the largest per-parameter relative error.
pub fn finite_diff_check<F>(store: &mut ParamStore, epsilon: f64, f: F) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    let analytic = analytic_gradients(store, &f)?;
    let numeric = numeric_gradients(store, epsilon, &f)?;
    Ok(max_relative_error(&analytic, &numeric))
}
