//! Ranking metrics and popularity-bias analyses.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, PopularityGroups, Split};
use crate::error::{Error, Result};
use crate::matrix;
use crate::model::FinalEmbeddings;
use crate::scoring::{RankedList, TtenRanker};

fn hits<'a>(ranked: &'a RankedList, target: &'a [usize], k: usize) -> impl Iterator<Item = usize> + 'a {
    ranked
        .items
        .iter()
        .take(k)
        .enumerate()
        .filter(move |(_, i)| target.binary_search(i).is_ok())
        .map(|(pos, _)| pos)
}

/// `|top-k ∩ target| / |target|`; `target` must be sorted and non-empty.
pub fn recall_at_k(ranked: &RankedList, target: &[usize], k: usize) -> f64 {
    debug_assert!(!target.is_empty());
    hits(ranked, target, k).count() as f64 / target.len() as f64
}

/// Binary-relevance NDCG with a `log2(rank + 1)` discount and the ideal DCG
/// truncated at `min(|target|, k)`.
pub fn ndcg_at_k(ranked: &RankedList, target: &[usize], k: usize) -> f64 {
    debug_assert!(!target.is_empty());
    let discount = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = hits(ranked, target, k).map(discount).sum();
    let idcg: f64 = (0..target.len().min(k)).map(discount).sum();
    dcg / idcg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall: f64,
    pub ndcg: f64,
    pub k: usize,
    pub p: f64,
    pub users_evaluated: usize,
    /// Share of all top-k slots held by each group, index 0 = group 1.
    pub group_frequency: Vec<f64>,
    /// `None` when a group has no target items at all.
    pub group_recall: Vec<Option<f64>>,
}

/// Top-`k` lists (train items masked) for every user whose `split` set is
/// non-empty, in user order.
pub fn rank_users(
    finals: &FinalEmbeddings,
    dataset: &InteractionDataset,
    p: f64,
    k: usize,
    split: Split,
) -> Result<Vec<RankedList>> {
    if finals.num_users() != dataset.num_users() || finals.num_items() != dataset.num_items() {
        return Err(Error::Dimension {
            context: "embeddings vs dataset",
            expected: dataset.num_users() + dataset.num_items(),
            actual: finals.num_users() + finals.num_items(),
        });
    }
    let ranker = TtenRanker::new(finals, p)?;
    if ranker.zero_norm_items() > 0 {
        log::warn!("{} items have zero-norm embeddings and score 0", ranker.zero_norm_items());
    }
    let users: Vec<usize> = (0..dataset.num_users())
        .filter(|&u| !dataset.split(split, u).is_empty())
        .collect();
    let rank = |&u: &usize| ranker.top_k(u, k, dataset.train(u));
    #[cfg(feature = "parallel")]
    let lists = users.par_iter().map(rank).collect();
    #[cfg(not(feature = "parallel"))]
    let lists = users.iter().map(rank).collect();
    lists
}

/// Fraction of all recommendation slots occupied by each group.
pub fn group_frequency(lists: &[RankedList], groups: &PopularityGroups) -> Vec<f64> {
    let mut counts = vec![0usize; groups.num_groups()];
    let mut total = 0usize;
    for list in lists {
        for &i in &list.items {
            counts[groups.group_of(i) - 1] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Per group, retrieved target items over all target items of that group,
/// pooled across users.
pub fn group_recall(
    lists: &[RankedList],
    dataset: &InteractionDataset,
    split: Split,
    groups: &PopularityGroups,
    k: usize,
) -> Vec<Option<f64>> {
    let g = groups.num_groups();
    let mut hit = vec![0usize; g];
    let mut total = vec![0usize; g];
    for list in lists {
        let target = dataset.split(split, list.user);
        for &i in target {
            total[groups.group_of(i) - 1] += 1;
        }
        for pos in hits(list, target, k) {
            hit[groups.group_of(list.items[pos]) - 1] += 1;
        }
    }
    hit.iter()
        .zip(&total)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect()
}

/// Aggregates precomputed lists into a report.
pub fn summarize(
    lists: &[RankedList],
    dataset: &InteractionDataset,
    groups: &PopularityGroups,
    p: f64,
    k: usize,
    split: Split,
) -> EvalReport {
    let n = lists.len();
    let (mut recall, mut ndcg) = (0.0, 0.0);
    for list in lists {
        let target = dataset.split(split, list.user);
        recall += recall_at_k(list, target, k);
        ndcg += ndcg_at_k(list, target, k);
    }
    if n > 0 {
        recall /= n as f64;
        ndcg /= n as f64;
    }
    EvalReport {
        recall,
        ndcg,
        k,
        p,
        users_evaluated: n,
        group_frequency: group_frequency(lists, groups),
        group_recall: group_recall(lists, dataset, split, groups, k),
    }
}

/// Full evaluation on `split`. Users with an empty target set are skipped;
/// only train items are masked.
pub fn evaluate(
    finals: &FinalEmbeddings,
    dataset: &InteractionDataset,
    groups: &PopularityGroups,
    p: f64,
    k: usize,
    split: Split,
) -> Result<EvalReport> {
    let lists = rank_users(finals, dataset, p, k, split)?;
    Ok(summarize(&lists, dataset, groups, p, k, split))
}

/// Mean Recall@k on `split`, without the group breakdown.
pub fn mean_recall(
    finals: &FinalEmbeddings,
    dataset: &InteractionDataset,
    p: f64,
    k: usize,
    split: Split,
) -> Result<f64> {
    let lists = rank_users(finals, dataset, p, k, split)?;
    if lists.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = lists
        .iter()
        .map(|l| recall_at_k(l, dataset.split(split, l.user), k))
        .sum();
    Ok(total / lists.len() as f64)
}

/// Evaluates the same embeddings at every `p` of the grid.
pub fn p_sweep(
    finals: &FinalEmbeddings,
    dataset: &InteractionDataset,
    groups: &PopularityGroups,
    grid: &[f64],
    k: usize,
    split: Split,
) -> Result<Vec<EvalReport>> {
    if grid.is_empty() {
        return Err(Error::invalid("p grid is empty"));
    }
    grid.iter()
        .map(|&p| evaluate(finals, dataset, groups, p, k, split))
        .collect()
}

/// `start, start + step, ...` up to `stop` inclusive (within step/1e6).
pub fn p_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::invalid(format!("bad p grid {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-6).floor() as usize;
    Ok((0..=n).map(|j| start + j as f64 * step).collect())
}

/// Pearson correlation, or `None` when either side has zero variance or
/// fewer than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    /// NaN when undefined.
    pub value: f64,
    pub note: Option<String>,
}

/// Pearson r between item final-embedding norms and train popularity.
pub fn magnitude_popularity_correlation(finals: &FinalEmbeddings, popularity: &[usize]) -> Result<Correlation> {
    if popularity.len() != finals.num_items() {
        return Err(Error::Dimension {
            context: "popularity length",
            expected: finals.num_items(),
            actual: popularity.len(),
        });
    }
    let norms: Vec<f64> = (0..finals.num_items()).map(|i| matrix::norm(finals.item(i))).collect();
    let pop: Vec<f64> = popularity.iter().map(|&c| c as f64).collect();
    Ok(match pearson(&norms, &pop) {
        Some(value) => Correlation { value, note: None },
        None => Correlation {
            value: f64::NAN,
            note: Some(
                "undefined: fewer than two items or zero variance in magnitude or popularity".into(),
            ),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    PositivePopular,
    NegativePopular,
    PositiveUnpopular,
    NegativeUnpopular,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::PositivePopular,
        Quadrant::NegativePopular,
        Quadrant::PositiveUnpopular,
        Quadrant::NegativeUnpopular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quadrant::PositivePopular => "positive_popular",
            Quadrant::NegativePopular => "negative_popular",
            Quadrant::PositiveUnpopular => "positive_unpopular",
            Quadrant::NegativeUnpopular => "negative_unpopular",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserQuadrantMeans {
    pub user: usize,
    /// Indexed like [`Quadrant::ALL`]; `None` for an empty quadrant.
    pub means: [Option<f64>; 4],
}

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineQuadrantStats {
    pub popular_fraction: f64,
    pub num_popular_items: usize,
    pub per_user: Vec<UserQuadrantMeans>,
    /// Per quadrant, counts of per-user means in 50 equal bins over [-1, 1].
    pub histograms: [Vec<usize>; 4],
}

impl CosineQuadrantStats {
    pub fn mean_of_means(&self, q: Quadrant) -> Option<f64> {
        let vals: Vec<f64> = self.per_user.iter().filter_map(|u| u.means[q.index()]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Share of users with both quadrants non-empty whose `higher` mean
    /// exceeds their `lower` mean.
    pub fn separation_rate(&self, higher: Quadrant, lower: Quadrant) -> Option<f64> {
        let pairs: Vec<(f64, f64)> = self
            .per_user
            .iter()
            .filter_map(|u| Some((u.means[higher.index()]?, u.means[lower.index()]?)))
            .collect();
        (!pairs.is_empty())
            .then(|| pairs.iter().filter(|(a, b)| a > b).count() as f64 / pairs.len() as f64)
    }
}

fn histogram_bin(value: f64) -> usize {
    let pos = ((value + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor();
    (pos.max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Mean user-item cosine per (test membership x popularity) quadrant.
///
/// The top `popular_fraction` of items by train popularity (ties by id)
/// are popular. For each user with test items, positives are the test
/// items and negatives are the items in none of the user's splits.
pub fn cosine_quadrant_analysis(
    finals: &FinalEmbeddings,
    dataset: &InteractionDataset,
    popular_fraction: f64,
) -> Result<CosineQuadrantStats> {
    if !(popular_fraction > 0.0 && popular_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "popular fraction must be in (0, 1), got {popular_fraction}"
        )));
    }
    let n_items = dataset.num_items();
    let popularity = dataset.popularity();
    let mut order: Vec<usize> = (0..n_items).collect();
    order.sort_by(|&a, &b| popularity[b].cmp(&popularity[a]).then(a.cmp(&b)));
    let num_popular = ((popular_fraction * n_items as f64).round() as usize).clamp(1, n_items.max(1));
    let mut popular = vec![false; n_items];
    for &i in order.iter().take(num_popular) {
        popular[i] = true;
    }

    let unit_items: Vec<Vec<f64>> = (0..n_items).map(|i| unit(finals.item(i))).collect();
    let per_user_means = |u: usize| -> Option<UserQuadrantMeans> {
        if dataset.test(u).is_empty() {
            return None;
        }
        let eu = unit(finals.user(u));
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        for i in 0..n_items {
            let positive = dataset.test(u).binary_search(&i).is_ok();
            if !positive
                && (dataset.train(u).binary_search(&i).is_ok()
                    || dataset.validation(u).binary_search(&i).is_ok())
            {
                continue;
            }
            let q = match (positive, popular[i]) {
                (true, true) => Quadrant::PositivePopular,
                (false, true) => Quadrant::NegativePopular,
                (true, false) => Quadrant::PositiveUnpopular,
                (false, false) => Quadrant::NegativeUnpopular,
            };
            sums[q.index()] += matrix::dot(&eu, &unit_items[i]);
            counts[q.index()] += 1;
        }
        let means = std::array::from_fn(|q| (counts[q] > 0).then(|| sums[q] / counts[q] as f64));
        Some(UserQuadrantMeans { user: u, means })
    };
    let users: Vec<usize> = (0..dataset.num_users()).collect();
    #[cfg(feature = "parallel")]
    let per_user: Vec<UserQuadrantMeans> = users.par_iter().filter_map(|&u| per_user_means(u)).collect();
    #[cfg(not(feature = "parallel"))]
    let per_user: Vec<UserQuadrantMeans> = users.iter().filter_map(|&u| per_user_means(u)).collect();

    let mut histograms: [Vec<usize>; 4] = std::array::from_fn(|_| vec![0; HISTOGRAM_BINS]);
    for u in &per_user {
        for (q, m) in u.means.iter().enumerate() {
            if let Some(m) = m {
                histograms[q][histogram_bin(*m)] += 1;
            }
        }
    }
    Ok(CosineQuadrantStats {
        popular_fraction,
        num_popular_items: num_popular,
        per_user,
        histograms,
    })
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = matrix::norm(v);
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        vec![0.0; v.len()]
    }
}
