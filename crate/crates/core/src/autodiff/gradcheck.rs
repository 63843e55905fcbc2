use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Compares reverse-mode gradients against central differences
/// `(f(x+ε) − f(x−ε)) / 2ε` for every element of every input.
///
/// Non-scalar outputs are reduced with a fixed random projection so the
/// full Jacobian is exercised. The error of one element is
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`; the maximum over
/// all elements is returned.
pub fn gradient_check<F>(op: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut projection = None;
    let eval = |values: &[Tensor<f64>], want_grads: bool| -> Result<(f64, Vec<Tensor<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = op(&mut tape, &vars)?;
        let loss = project(&mut tape, out, &mut projection)?;
        let value = tape.value(loss).item();
        let mut grads = Vec::new();
        if want_grads {
            tape.backward(loss)?;
            for (v, t) in vars.iter().zip(values) {
                grads.push(tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())));
            }
        }
        Ok((value, grads))
    };
    compare(inputs, eps, eval)
}

/// `sum(out ⊙ R)` for a projection `R` drawn once per check.
pub(crate) fn project(tape: &mut Tape<f64>, out: Var, projection: &mut Option<Tensor<f64>>) -> Result<Var> {
    let proj = projection.get_or_insert_with(|| {
        let shape = tape.shape(out).to_vec();
        let n = tape.value(out).len();
        if n == 1 {
            return Tensor::ones(&shape);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(&shape, data).expect("projection shape")
    });
    let r = tape.constant(proj.clone());
    let weighted = tape.mul(out, r)?;
    Ok(tape.sum(weighted))
}

/// Central-difference comparison driver; `eval(values, true)` must return
/// the loss and the analytic gradient of every input.
pub(crate) fn compare<E>(inputs: &[Tensor<f64>], eps: f64, mut eval: E) -> Result<f64>
where
    E: FnMut(&[Tensor<f64>], bool) -> Result<(f64, Vec<Tensor<f64>>)>,
{
    let (_, analytic) = eval(inputs, true)?;
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let (plus, _) = eval(&work, false)?;
            work[i].data_mut()[j] = orig - eps;
            let (minus, _) = eval(&work, false)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i].data()[j];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
