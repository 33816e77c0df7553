//! Central finite-difference verification of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)` for each input.
    pub relative_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn evaluate<F>(inputs: &[Tensor<f64>], build: &F) -> Result<(Tape<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    Ok((tape, vars, loss))
}

/// Compare reverse-mode gradients of the scalar built by `build` against
/// central differences with step `h`, perturbing every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::usage("finite-difference step must be positive"));
    }
    let (tape, vars, loss) = evaluate(inputs, &build)?;
    let grads = tape.backward(loss)?;
    let mut work = inputs.to_vec();
    let mut relative_errors = Vec::with_capacity(inputs.len());
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var, &inputs[i]);
        let mut diff = 0.0;
        let mut norm_a = 0.0;
        let mut norm_n = 0.0;
        for e in 0..inputs[i].len() {
            let x0 = inputs[i].data()[e];
            work[i].data_mut()[e] = x0 + h;
            let (t, _, l) = evaluate(&work, &build)?;
            let up = t.value(l).item();
            work[i].data_mut()[e] = x0 - h;
            let (t, _, l) = evaluate(&work, &build)?;
            let down = t.value(l).item();
            work[i].data_mut()[e] = x0;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[e];
            diff += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
        let scale = norm_a.max(norm_n).sqrt();
        relative_errors.push(if scale == 0.0 { 0.0 } else { diff.sqrt() / scale });
    }
    Ok(GradCheck { relative_errors })
}
