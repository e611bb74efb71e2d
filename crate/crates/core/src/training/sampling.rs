use rand::Rng;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

/// In-batch sampled-softmax batch. Entry `a` is `(users[a], items[a])`;
/// its negatives are the items of every other entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SsmBatch {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
}

impl SsmBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn negatives(&self, entry: usize) -> impl Iterator<Item = usize> + '_ {
        self.items
            .iter()
            .enumerate()
            .filter(move |&(b, _)| b != entry)
            .map(|(_, &i)| i)
    }
}

/// Uniform sampler over train `(user, item)` pairs.
#[derive(Debug, Clone)]
pub struct InteractionSampler<'a> {
    dataset: &'a InteractionDataset,
    pairs: Vec<(usize, usize)>,
    /// Pairs whose user has at least one non-interacted item.
    bpr_pairs: Vec<(usize, usize)>,
}

impl<'a> InteractionSampler<'a> {
    pub fn new(dataset: &'a InteractionDataset) -> Self {
        let pairs: Vec<(usize, usize)> = (0..dataset.num_users())
            .flat_map(|u| dataset.train(u).iter().map(move |&i| (u, i)))
            .collect();
        let bpr_pairs = pairs
            .iter()
            .copied()
            .filter(|&(u, _)| dataset.train(u).len() < dataset.num_items())
            .collect();
        InteractionSampler {
            dataset,
            pairs,
            bpr_pairs,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        self.pairs[rng.random_range(0..self.pairs.len())]
    }

    /// `batch_size` triples drawn with replacement. Users who interacted
    /// with every item are skipped since no negative exists for them.
    pub fn bpr_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<BprTriple>> {
        if self.bpr_pairs.is_empty() {
            return Err(Error::invalid(
                "no train interaction with an available negative item",
            ));
        }
        let n_items = self.dataset.num_items();
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let (user, positive) = self.bpr_pairs[rng.random_range(0..self.bpr_pairs.len())];
            let negative = loop {
                let j = rng.random_range(0..n_items);
                if !self.dataset.is_train_pair(user, j) {
                    break j;
                }
            };
            out.push(BprTriple {
                user,
                positive,
                negative,
            });
        }
        Ok(out)
    }

    pub fn ssm_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SsmBatch> {
        if batch_size < 2 {
            return Err(Error::invalid("in-batch negatives need a batch of at least 2"));
        }
        if self.pairs.is_empty() {
            return Err(Error::invalid("dataset has no train interactions"));
        }
        let (users, items) = (0..batch_size).map(|_| self.sample_pair(rng)).unzip();
        Ok(SsmBatch { users, items })
    }
}
