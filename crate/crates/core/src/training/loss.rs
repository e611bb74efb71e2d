//! BPR and in-batch sampled-softmax losses with exact gradients.
//!
//! Objectives are evaluated on final (propagated) embeddings; their
//! gradients are routed back to the base table with [`backward`]. The L2
//! term acts on base rows of the distinct users and items in the batch,
//! scaled by `coeff / batch_size`.

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::matrix::{self, axpy, Matrix};
use crate::model::{backward, EmbeddingModel, FinalEmbeddings};

use super::sampling::{BprTriple, SsmBatch};

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Objective plus L2 penalty.
    pub loss: f64,
    /// Gradient w.r.t. the base table.
    pub grad: Matrix,
    /// Rows with zero final-embedding norm met by the cosine (SSM only).
    pub zero_norm_rows: usize,
}

/// Gradient w.r.t. final embeddings together with the objective value.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub grad_final: Matrix,
    pub zero_norm_rows: usize,
}

/// `ln(1 + e^-x)` without overflow.
pub(crate) fn softplus_neg(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// `1 / (1 + e^x)` without overflow.
pub(crate) fn sigmoid_neg(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Mean of `-ln σ(r_ui - r_uj)` with inner-product scores.
pub fn bpr_objective(finals: &FinalEmbeddings, batch: &[BprTriple]) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::invalid("empty BPR batch"));
    }
    let nu = finals.num_users();
    let mut grad = Matrix::zeros(finals.values().rows(), finals.dim());
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let eu = finals.user(t.user);
        let ei = finals.item(t.positive);
        let ej = finals.item(t.negative);
        let x = matrix::dot(eu, ei) - matrix::dot(eu, ej);
        loss += softplus_neg(x);
        let dx = -sigmoid_neg(x) * scale;

        let gu = grad.row_mut(t.user);
        axpy(dx, ei, gu);
        axpy(-dx, ej, gu);
        axpy(dx, eu, grad.row_mut(nu + t.positive));
        axpy(-dx, eu, grad.row_mut(nu + t.negative));
    }
    Ok(Objective {
        loss: loss * scale,
        grad_final: grad,
        zero_norm_rows: 0,
    })
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches for
    // the strides used in this module (dense row- or column-major blocks).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unit rows of the selected embeddings; zero rows stay zero.
fn unit_rows(rows: &[usize], src: &Matrix, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut unit = Vec::with_capacity(rows.len() * dim);
    let mut norms = Vec::with_capacity(rows.len());
    for &r in rows {
        let v = src.row(r);
        let n = matrix::norm(v);
        norms.push(n);
        if n > 0.0 {
            unit.extend(v.iter().map(|x| x / n));
        } else {
            unit.extend(std::iter::repeat_n(0.0, dim));
        }
    }
    (unit, norms)
}

/// Distinct sorted values, their multiplicities, and the position of every
/// input value in the distinct list.
fn distinct(values: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut keys = values.to_vec();
    keys.sort_unstable();
    keys.dedup();
    let mut counts = vec![0; keys.len()];
    let slots: Vec<usize> = values
        .iter()
        .map(|v| {
            let s = keys.binary_search(v).expect("value is present");
            counts[s] += 1;
            s
        })
        .collect();
    (keys, counts, slots)
}

/// In-batch sampled softmax over cosine logits divided by `temperature`.
///
/// Entry `a` scores its own item as the positive and the items of all other
/// entries as negatives, duplicates included; the loss is the batch mean of
/// `logsumexp_b(S_ab) - S_aa`. Row `a` of `S` only depends on the user of
/// `a` and column `b` only on the item of `b`, so the logits are computed
/// once per distinct user and item and the columns are weighted by item
/// multiplicity. This is the same objective at a fraction of the cost.
pub fn ssm_objective(finals: &FinalEmbeddings, batch: &SsmBatch, temperature: f64) -> Result<Objective> {
    let b = batch.len();
    if b < 2 || batch.items.len() != b {
        return Err(Error::invalid("in-batch negatives need a batch of at least 2"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let d = finals.dim();
    let nu = finals.num_users();
    let values = finals.values();
    let (users, user_counts, user_slot) = distinct(&batch.users);
    let (items, item_counts, item_slot) = distinct(&batch.items);
    let item_rows: Vec<usize> = items.iter().map(|i| nu + i).collect();
    let (un, unorm) = unit_rows(&users, values, d);
    let (vn, vnorm) = unit_rows(&item_rows, values, d);
    let zero_norm_rows = unorm
        .iter()
        .zip(&user_counts)
        .chain(vnorm.iter().zip(&item_counts))
        .filter(|(&n, _)| n == 0.0)
        .map(|(_, &c)| c)
        .sum();

    let (m, n) = (users.len(), items.len());
    let inv_t = 1.0 / temperature;
    let mut logits = vec![0.0; m * n];
    gemm(m, d, n, inv_t, &un, d, 1, &vn, 1, d, &mut logits);

    let inv_b = 1.0 / b as f64;
    let weights: Vec<f64> = item_counts.iter().map(|&c| c as f64).collect();
    let mut loss = 0.0;
    for (&r, &c) in user_slot.iter().zip(&item_slot) {
        loss -= logits[r * n + c];
    }
    // logits become dL/dS in place: m_r * c_j * softmax_r(j) / B, minus the
    // positive indicator counts below
    for (r, &mult) in user_counts.iter().enumerate() {
        let row = &mut logits[r * n..(r + 1) * n];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (s, w) in row.iter_mut().zip(&weights) {
            *s = (*s - max).exp() * w;
            sum += *s;
        }
        loss += mult as f64 * (max + sum.ln());
        let scale = mult as f64 * inv_b / sum;
        for s in row.iter_mut() {
            *s *= scale;
        }
    }
    for (&r, &c) in user_slot.iter().zip(&item_slot) {
        logits[r * n + c] -= inv_b;
    }
    let dlogits = logits;

    let mut grad_un = vec![0.0; m * d];
    let mut grad_vn = vec![0.0; n * d];
    gemm(m, n, d, inv_t, &dlogits, n, 1, &vn, d, 1, &mut grad_un);
    gemm(n, m, d, inv_t, &dlogits, 1, n, &un, d, 1, &mut grad_vn);

    let mut grad = Matrix::zeros(values.rows(), d);
    // d(x/|x|)/dx applied to the upstream gradient: (g - (g.x̂) x̂) / |x|
    let mut scatter = |rows: &[usize], unit: &[f64], norms: &[f64], g: &mut [f64]| {
        for (a, &row) in rows.iter().enumerate() {
            if norms[a] == 0.0 {
                continue;
            }
            let xh = &unit[a * d..(a + 1) * d];
            let ga = &mut g[a * d..(a + 1) * d];
            let proj = matrix::dot(ga, xh);
            axpy(-proj, xh, ga);
            axpy(1.0 / norms[a], ga, grad.row_mut(row));
        }
    };
    scatter(&users, &un, &unorm, &mut grad_un);
    scatter(&item_rows, &vn, &vnorm, &mut grad_vn);

    Ok(Objective {
        loss: loss * inv_b,
        grad_final: grad,
        zero_norm_rows,
    })
}

/// Adds `coeff / batch_size * sum ||base_r||^2` over distinct `rows` to
/// `grad` and returns the penalty value.
fn l2_penalty(base: &Matrix, mut rows: Vec<usize>, batch_size: usize, coeff: f64, grad: &mut Matrix) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    rows.sort_unstable();
    rows.dedup();
    let scale = coeff / batch_size as f64;
    let mut penalty = 0.0;
    for r in rows {
        let v = base.row(r);
        penalty += matrix::dot(v, v);
        axpy(2.0 * scale, v, grad.row_mut(r));
    }
    penalty * scale
}

fn finish(
    model: &EmbeddingModel,
    adj: &NormalizedAdjacency,
    objective: Objective,
    rows: Vec<usize>,
    batch_size: usize,
    l2: f64,
) -> Result<LossOutput> {
    let mut grad = backward(&objective.grad_final, adj, model.num_layers())?;
    let penalty = l2_penalty(model.base(), rows, batch_size, l2, &mut grad);
    Ok(LossOutput {
        loss: objective.loss + penalty,
        grad,
        zero_norm_rows: objective.zero_norm_rows,
    })
}

pub fn bpr_loss_and_grad(
    model: &EmbeddingModel,
    adj: &NormalizedAdjacency,
    batch: &[BprTriple],
    l2: f64,
) -> Result<LossOutput> {
    let finals = model.forward(adj, false)?;
    let objective = bpr_objective(&finals, batch)?;
    let rows = batch
        .iter()
        .flat_map(|t| {
            [
                model.user_row(t.user),
                model.item_row(t.positive),
                model.item_row(t.negative),
            ]
        })
        .collect();
    finish(model, adj, objective, rows, batch.len(), l2)
}

pub fn ssm_loss_and_grad(
    model: &EmbeddingModel,
    adj: &NormalizedAdjacency,
    batch: &SsmBatch,
    temperature: f64,
    l2: f64,
) -> Result<LossOutput> {
    let finals = model.forward(adj, false)?;
    let objective = ssm_objective(&finals, batch, temperature)?;
    let rows = batch
        .users
        .iter()
        .map(|&u| model.user_row(u))
        .chain(batch.items.iter().map(|&i| model.item_row(i)))
        .collect();
    finish(model, adj, objective, rows, batch.len(), l2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finals(users: &[&[f64]], items: &[&[f64]]) -> FinalEmbeddings {
        let d = users[0].len();
        let data: Vec<f64> = users.iter().chain(items).flat_map(|r| r.iter().copied()).collect();
        FinalEmbeddings::from_table(
            users.len(),
            items.len(),
            Matrix::from_vec(users.len() + items.len(), d, data).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bpr_equal_scores_give_ln2() {
        let f = finals(&[&[1.0, 0.0]], &[&[0.5, 1.0], &[0.5, -3.0]]);
        let t = BprTriple {
            user: 0,
            positive: 0,
            negative: 1,
        };
        let obj = bpr_objective(&f, &[t]).unwrap();
        assert!((obj.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bpr_large_margin_goes_to_zero() {
        let f = finals(&[&[1.0]], &[&[1e3], &[-1e3]]);
        let t = BprTriple {
            user: 0,
            positive: 0,
            negative: 1,
        };
        let obj = bpr_objective(&f, &[t]).unwrap();
        assert!(obj.loss >= 0.0 && obj.loss < 1e-300);
        assert!(obj.grad_final.is_finite());
        // and the opposite direction stays finite
        let t = BprTriple {
            user: 0,
            positive: 1,
            negative: 0,
        };
        let obj = bpr_objective(&f, &[t]).unwrap();
        assert!((obj.loss - 2e3).abs() < 1e-9);
    }

    #[test]
    fn ssm_hand_value() {
        let f = finals(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[2.0, 0.0], &[0.0, 3.0]]);
        let batch = SsmBatch {
            users: vec![0, 1],
            items: vec![0, 1],
        };
        let obj = ssm_objective(&f, &batch, 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((obj.loss - expected).abs() < 1e-12);
        assert!((obj.loss - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn ssm_uniform_cosines_give_ln_b() {
        // all users and items identical: every cosine is 1
        let b = 6;
        let users: Vec<&[f64]> = vec![&[0.3, 0.4]; b];
        let items: Vec<&[f64]> = vec![&[3.0, 4.0]; b];
        let f = finals(&users, &items);
        let batch = SsmBatch {
            users: (0..b).collect(),
            items: (0..b).collect(),
        };
        let obj = ssm_objective(&f, &batch, 0.1).unwrap();
        assert!((obj.loss - (b as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ssm_zero_norm_rows_are_counted() {
        let f = finals(&[&[0.0, 0.0], &[0.0, 1.0]], &[&[2.0, 0.0], &[0.0, 3.0]]);
        let batch = SsmBatch {
            users: vec![0, 1],
            items: vec![0, 1],
        };
        let obj = ssm_objective(&f, &batch, 0.5).unwrap();
        assert_eq!(obj.zero_norm_rows, 1);
        assert!(obj.loss.is_finite());
        assert_eq!(obj.grad_final.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn stable_helpers() {
        assert!((softplus_neg(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus_neg(-1e4), 1e4);
        assert!(softplus_neg(800.0) >= 0.0);
        assert_eq!(sigmoid_neg(0.0), 0.5);
        assert!(sigmoid_neg(800.0) >= 0.0 && sigmoid_neg(-800.0) == 1.0);
    }
}
