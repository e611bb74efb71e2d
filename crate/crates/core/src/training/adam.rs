use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments shaped like the parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step: 0,
            hyper: AdamHyper::default(),
        }
    }
}

/// One bias-corrected Adam step.
///
/// Rows whose gradient is entirely zero are treated as untouched: neither
/// their moments nor their parameters change. The step counter advances
/// once per call. A non-finite gradient entry aborts before anything is
/// modified.
pub fn adam_step(params: &mut Matrix, grad: &Matrix, state: &mut AdamState, lr: f64) -> Result<()> {
    if !params.same_shape(grad) || !params.same_shape(&state.m) {
        return Err(Error::Dimension {
            context: "adam step shapes",
            expected: params.rows() * params.cols(),
            actual: grad.rows() * grad.cols(),
        });
    }
    if let Some(pos) = grad.as_slice().iter().position(|g| !g.is_finite()) {
        let cols = grad.cols().max(1);
        return Err(Error::NonFiniteGradient {
            row: pos / cols,
            col: pos % cols,
            value: grad.as_slice()[pos],
        });
    }

    state.step += 1;
    let AdamHyper {
        beta1,
        beta2,
        epsilon,
    } = state.hyper;
    let t = state.step as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);

    for r in 0..params.rows() {
        let g = grad.row(r);
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let m = state.m.row_mut(r);
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = state.v.row_mut(r);
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let (m, v) = (state.m.row(r), state.v.row(r));
        for ((p, &mi), &vi) in params.row_mut(r).iter_mut().zip(m).zip(v) {
            let m_hat = mi / correction1;
            let v_hat = vi / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
