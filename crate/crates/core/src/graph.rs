//! Symmetric-normalized bipartite adjacency `D^-1/2 A D^-1/2` over the
//! user-item train graph, stored as CSR over all `U + I` nodes
//! (users first, then items).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix};

#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedAdjacency {
    /// Edge `(u, i)` gets weight `1 / sqrt(deg_u * deg_i)` with train
    /// degrees. Degree-0 nodes have no edges.
    pub fn build(dataset: &InteractionDataset) -> Self {
        let nu = dataset.num_users();
        let ni = dataset.num_items();
        let n = nu + ni;
        let item_degree = dataset.popularity();

        let mut item_users: Vec<Vec<usize>> = vec![Vec::new(); ni];
        for u in 0..nu {
            for &i in dataset.train(u) {
                item_users[i].push(u);
            }
        }

        let weight = |du: usize, di: usize| 1.0 / ((du * di) as f64).sqrt();

        let nnz = 2 * dataset.num_train_interactions();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        offsets.push(0);
        for u in 0..nu {
            let items = dataset.train(u);
            for &i in items {
                neighbors.push(nu + i);
                weights.push(weight(items.len(), item_degree[i]));
            }
            offsets.push(neighbors.len());
        }
        for (i, users) in item_users.iter().enumerate() {
            // users were pushed in ascending order
            for &u in users {
                neighbors.push(u);
                weights.push(weight(dataset.train(u).len(), item_degree[i]));
            }
            offsets.push(neighbors.len());
        }

        NormalizedAdjacency {
            num_users: nu,
            num_items: ni,
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn node_count(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Number of stored (directed) entries, twice the interaction count.
    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// Neighbors of `node` (ascending) with their weights.
    pub fn row(&self, node: usize) -> (&[usize], &[f64]) {
        let range = self.offsets[node]..self.offsets[node + 1];
        (&self.neighbors[range.clone()], &self.weights[range])
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        let (cols, w) = self.row(from);
        cols.binary_search(&to).ok().map(|k| w[k])
    }

    /// One propagation layer, `output = Ã · input`.
    pub fn propagate(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(input.rows(), input.cols());
        self.propagate_into(input, &mut out)?;
        Ok(out)
    }

    /// Like [`propagate`](Self::propagate) but writes into `out`, which must
    /// have the input's shape. Each output row is accumulated in neighbor
    /// order, so the result does not depend on how rows are split across
    /// threads.
    pub fn propagate_into(&self, input: &Matrix, out: &mut Matrix) -> Result<()> {
        if input.rows() != self.node_count() {
            return Err(Error::Dimension {
                context: "propagate input rows",
                expected: self.node_count(),
                actual: input.rows(),
            });
        }
        if !out.same_shape(input) {
            return Err(Error::Dimension {
                context: "propagate output rows",
                expected: input.rows(),
                actual: out.rows(),
            });
        }
        let dim = input.cols();
        if dim == 0 {
            return Ok(());
        }
        let fill = |(node, row): (usize, &mut [f64])| {
            row.fill(0.0);
            let (cols, w) = self.row(node);
            for (&j, &wj) in cols.iter().zip(w) {
                axpy(wj, input.row(j), row);
            }
        };
        #[cfg(feature = "parallel")]
        out.as_mut_slice()
            .par_chunks_mut(dim)
            .with_min_len(256)
            .enumerate()
            .for_each(fill);
        #[cfg(not(feature = "parallel"))]
        out.as_mut_slice().chunks_mut(dim).enumerate().for_each(fill);
        Ok(())
    }

    /// Dense `(U+I) x (U+I)` copy, for small-graph checks.
    pub fn to_dense(&self) -> Matrix {
        let n = self.node_count();
        let mut m = Matrix::zeros(n, n);
        for a in 0..n {
            let (cols, w) = self.row(a);
            for (&b, &wb) in cols.iter().zip(w) {
                m.set(a, b, wb);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(num_users: usize, num_items: usize, train: Vec<Vec<usize>>) -> InteractionDataset {
        InteractionDataset::new(num_users, num_items, train, vec![], vec![]).unwrap()
    }

    #[test]
    fn single_edge_has_unit_weight() {
        let adj = NormalizedAdjacency::build(&ds(1, 1, vec![vec![0]]));
        assert_eq!(adj.weight(0, 1), Some(1.0));
        assert_eq!(adj.weight(1, 0), Some(1.0));
        assert_eq!(adj.nnz(), 2);
    }

    #[test]
    fn one_user_two_items() {
        let adj = NormalizedAdjacency::build(&ds(1, 2, vec![vec![0, 1]]));
        let w = 1.0 / 2f64.sqrt();
        assert_eq!(adj.weight(0, 1), Some(w));
        assert_eq!(adj.weight(0, 2), Some(w));
        assert_eq!(adj.weight(2, 0), Some(w));
        assert_eq!(adj.weight(1, 2), None);
    }

    #[test]
    fn weight_swap_on_single_pair() {
        let adj = NormalizedAdjacency::build(&ds(1, 1, vec![vec![0]]));
        let input = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = adj.propagate(&input).unwrap();
        assert_eq!(out.row(0), &[3.0, 4.0]);
        assert_eq!(out.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn isolated_nodes_propagate_to_zero() {
        let adj = NormalizedAdjacency::build(&ds(2, 2, vec![vec![0], vec![]]));
        let input = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 + 1.0);
        let out = adj.propagate(&input).unwrap();
        assert_eq!(out.row(1), &[0.0; 3]);
        assert_eq!(out.row(3), &[0.0; 3]);
        let zero = adj.propagate(&Matrix::zeros(4, 3)).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_row_count_is_rejected() {
        let adj = NormalizedAdjacency::build(&ds(1, 1, vec![vec![0]]));
        assert!(adj.propagate(&Matrix::zeros(3, 2)).is_err());
    }
}
