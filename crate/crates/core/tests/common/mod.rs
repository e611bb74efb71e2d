//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tten_core::{InteractionDataset, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bipartite train graph; every user gets at least one item when
/// `connected` is set.
pub fn random_dataset(rng: &mut ChaCha8Rng, users: usize, items: usize, density: f64, connected: bool) -> InteractionDataset {
    let mut train = Vec::new();
    for _ in 0..users {
        let mut row: Vec<usize> = (0..items).filter(|_| rng.random::<f64>() < density).collect();
        if connected && row.is_empty() {
            row.push(rng.random_range(0..items));
        }
        train.push(row);
    }
    InteractionDataset::new(users, items, train, vec![], vec![]).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Dense `D^-1/2 A D^-1/2` built straight from the interaction lists.
pub fn dense_normalized_adjacency(ds: &InteractionDataset) -> Vec<Vec<f64>> {
    let nu = ds.num_users();
    let n = nu + ds.num_items();
    let mut a = vec![vec![0.0; n]; n];
    for u in 0..nu {
        for &i in ds.train(u) {
            a[u][nu + i] = 1.0;
            a[nu + i][u] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    for r in 0..n {
        for c in 0..n {
            a[r][c] *= inv_sqrt[r] * inv_sqrt[c];
        }
    }
    a
}

pub fn dense_matmul(a: &[Vec<f64>], x: &Matrix) -> Matrix {
    Matrix::from_fn(a.len(), x.cols(), |r, c| (0..x.rows()).map(|k| a[r][k] * x.get(k, c)).sum())
}

/// `(1/(K+1)) * sum_k Ã^k E` with dense products.
pub fn dense_layer_mean(a: &[Vec<f64>], e: &Matrix, layers: usize) -> Matrix {
    let mut sum = e.clone();
    let mut cur = e.clone();
    for _ in 0..layers {
        cur = dense_matmul(a, &cur);
        sum.add_scaled(1.0, &cur);
    }
    sum.scale(1.0 / (layers + 1) as f64);
    sum
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sorts every candidate by score (desc, id asc) and keeps `k`.
pub fn brute_force_topk(scores: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut all = scores.to_vec();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter().take(k).map(|(i, _)| i).collect()
}

/// Central finite differences of `f` at every entry of `x`.
pub fn finite_difference(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = x.get(r, c);
            probe.set(r, c, orig + h);
            let up = f(&probe);
            probe.set(r, c, orig - h);
            let down = f(&probe);
            probe.set(r, c, orig);
            grad.set(r, c, (up - down) / (2.0 * h));
        }
    }
    grad
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over all entries.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    pearson(&ranks(x), &ranks(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
