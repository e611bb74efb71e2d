//! Synthetic implicit-feedback data with a known latent structure and a
//! power-law popularity skew in the train split.
//!
//! Train interactions mix user-item affinity with item base popularity,
//! while test items are each user's highest-affinity unseen items spread
//! evenly over base-popularity groups. The result is a popularity-biased
//! train split paired with a popularity-balanced test split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

const TEST_GROUPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_dim: usize,
    /// Base popularity of the item at rank r is proportional to r^-exponent.
    pub popularity_exponent: f64,
    /// Weight of base popularity in the train sampling mixture.
    pub popularity_mix: f64,
    pub interactions_per_user: usize,
    pub test_items_per_user: usize,
    /// Temperature of the per-user softmax over latent inner products.
    pub affinity_temperature: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_users: 2000,
            num_items: 1000,
            latent_dim: 16,
            popularity_exponent: 1.0,
            popularity_mix: 0.5,
            interactions_per_user: 40,
            test_items_per_user: 5,
            affinity_temperature: 0.1,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_users", self.num_users),
            ("num_items", self.num_items),
            ("latent_dim", self.latent_dim),
            ("interactions_per_user", self.interactions_per_user),
            ("test_items_per_user", self.test_items_per_user),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.popularity_mix) {
            return Err(Error::invalid(format!(
                "popularity_mix must be in [0, 1], got {}",
                self.popularity_mix
            )));
        }
        if !self.popularity_exponent.is_finite() {
            return Err(Error::invalid("popularity_exponent must be finite"));
        }
        if !(self.affinity_temperature > 0.0) {
            return Err(Error::invalid("affinity_temperature must be positive"));
        }
        if self.interactions_per_user + self.test_items_per_user > self.num_items {
            return Err(Error::invalid(format!(
                "{} train + {} test items per user exceed {} items",
                self.interactions_per_user, self.test_items_per_user, self.num_items
            )));
        }
        Ok(())
    }
}

/// Generated dataset plus the ground truth that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: InteractionDataset,
    pub user_latent: Matrix,
    pub item_latent: Matrix,
    /// Normalized base popularity per item (sums to 1).
    pub base_popularity: Vec<f64>,
}

fn unit_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Matrix {
    let mut m = Matrix::zeros(n, dim);
    for r in 0..n {
        let row = m.row_mut(r);
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let len = matrix::norm(row);
            if len > 1e-12 {
                row.iter_mut().for_each(|v| *v /= len);
                break;
            }
        }
    }
    m
}

/// Weighted sampling of `count` distinct indices without replacement
/// (Efraimidis-Spirakis keys `ln(u) / w`). Zero weights are never picked
/// while positive weights remain.
fn weighted_without_replacement(
    rng: &mut ChaCha8Rng,
    weights: &[f64],
    count: usize,
) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random::<f64>();
            let key = if w > 0.0 {
                // u in [0, 1); ln(0) = -inf sorts last, as it should
                u.ln() / w
            } else {
                f64::NEG_INFINITY
            };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut picked: Vec<usize> = keyed.into_iter().take(count).map(|(_, i)| i).collect();
    picked.sort_unstable();
    picked
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let n_items = spec.num_items;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let user_latent = unit_vectors(&mut rng, spec.num_users, spec.latent_dim);
    let item_latent = unit_vectors(&mut rng, n_items, spec.latent_dim);

    // rank[i] is the 0-based popularity rank of item i
    let mut by_rank: Vec<usize> = (0..n_items).collect();
    by_rank.shuffle(&mut rng);
    let mut rank = vec![0usize; n_items];
    for (r, &i) in by_rank.iter().enumerate() {
        rank[i] = r;
    }
    let raw: Vec<f64> = rank
        .iter()
        .map(|&r| ((r + 1) as f64).powf(-spec.popularity_exponent))
        .collect();
    let total: f64 = raw.iter().sum();
    let base_popularity: Vec<f64> = raw.iter().map(|w| w / total).collect();

    // test groups follow base-popularity rank, equal sizes
    let groups = TEST_GROUPS.min(n_items);
    let group_of = |i: usize| rank[i] * groups / n_items;

    let mut train = Vec::with_capacity(spec.num_users);
    let mut test = Vec::with_capacity(spec.num_users);
    let mut logits = vec![0.0; n_items];
    let mut weights = vec![0.0; n_items];
    for u in 0..spec.num_users {
        let zu = user_latent.row(u);
        for (i, l) in logits.iter_mut().enumerate() {
            *l = matrix::dot(zu, item_latent.row(i)) / spec.affinity_temperature;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for i in 0..n_items {
            let affinity = (logits[i] - max).exp() / z;
            weights[i] =
                (1.0 - spec.popularity_mix) * affinity + spec.popularity_mix * base_popularity[i];
        }
        let train_u = weighted_without_replacement(&mut rng, &weights, spec.interactions_per_user);

        // per group: unseen items by descending affinity
        let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); groups];
        let mut by_affinity: Vec<usize> = (0..n_items)
            .filter(|i| train_u.binary_search(i).is_err())
            .collect();
        by_affinity.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        for &i in &by_affinity {
            candidates[group_of(i)].push(i);
        }
        let mut cursors = vec![0usize; groups];
        let mut cycle: Vec<usize> = (0..groups).collect();
        cycle.shuffle(&mut rng);
        let mut test_u = Vec::with_capacity(spec.test_items_per_user);
        let mut slot = 0;
        while test_u.len() < spec.test_items_per_user {
            // an exhausted group passes its turn to the next one in the cycle
            let g = cycle[slot % groups];
            slot += 1;
            if let Some(&item) = candidates[g].get(cursors[g]) {
                cursors[g] += 1;
                test_u.push(item);
            }
        }
        train.push(train_u);
        test.push(test_u);
    }

    let dataset = InteractionDataset::new(
        spec.num_users,
        n_items,
        train,
        vec![Vec::new(); spec.num_users],
        test,
    )?;
    Ok(SyntheticData {
        dataset,
        user_latent,
        item_latent,
        base_popularity,
    })
}
