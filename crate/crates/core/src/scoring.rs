//! Test-time embedding normalization scoring and masked top-k retrieval.
//!
//! The relevance of item `i` for user `u` at normalization strength `p` is
//! `cos(e_u, e_i) * ||e_i||^(1-p)`, equivalently
//! `e_u . e_i / (||e_u|| ||e_i||^p)`. `p = 0` recovers the inner product
//! and `p = 1` the cosine. The user norm is a positive per-user constant,
//! so it never changes a ranking.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix;
use crate::model::FinalEmbeddings;

/// Score of one user-item pair. Zero-norm vectors score 0.
pub fn tten_score(user: &[f64], item: &[f64], p: f64) -> Result<f64> {
    if user.len() != item.len() {
        return Err(Error::Dimension {
            context: "tten_score vectors",
            expected: user.len(),
            actual: item.len(),
        });
    }
    let nu = matrix::norm(user);
    let ni = matrix::norm(item);
    if nu == 0.0 || ni == 0.0 {
        return Ok(0.0);
    }
    let cos = matrix::dot(user, item) / (nu * ni);
    Ok(cos * ni.powf(1.0 - p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: usize,
    /// Items by descending score, ties by ascending id.
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
    /// Fewer than `k` unmasked items were available.
    pub short: bool,
}

/// Ranks items for many users at one normalization strength.
///
/// Item factors `||e_i||^-p` are computed once; a user's raw score is
/// `(e_u . e_i) * ||e_i||^-p` and the reported score divides that by
/// `||e_u||`.
#[derive(Debug, Clone)]
pub struct TtenRanker<'a> {
    finals: &'a FinalEmbeddings,
    p: f64,
    item_factor: Vec<f64>,
    zero_norm_items: usize,
}

impl<'a> TtenRanker<'a> {
    pub fn new(finals: &'a FinalEmbeddings, p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(Error::invalid(format!("normalization strength must be finite, got {p}")));
        }
        let mut zero_norm_items = 0;
        let item_factor = (0..finals.num_items())
            .map(|i| {
                let n = matrix::norm(finals.item(i));
                if n > 0.0 {
                    n.powf(-p)
                } else {
                    zero_norm_items += 1;
                    0.0
                }
            })
            .collect();
        Ok(TtenRanker {
            finals,
            p,
            item_factor,
            zero_norm_items,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn zero_norm_items(&self) -> usize {
        self.zero_norm_items
    }

    /// Top-`k` items for `user`, skipping the sorted `excluded` items.
    pub fn top_k(&self, user: usize, k: usize, excluded: &[usize]) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if user >= self.finals.num_users() {
            return Err(Error::invalid(format!(
                "user {user} out of range ({} users)",
                self.finals.num_users()
            )));
        }
        let eu = self.finals.user(user);
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.finals.num_items());
        let mut skip = excluded.iter().peekable();
        for i in 0..self.finals.num_items() {
            while skip.next_if(|&&e| e < i).is_some() {}
            if skip.next_if_eq(&&i).is_some() {
                continue;
            }
            let raw = if self.item_factor[i] == 0.0 {
                0.0
            } else {
                matrix::dot(eu, self.finals.item(i)) * self.item_factor[i]
            };
            scored.push((raw, i));
        }

        let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
        };
        let short = scored.len() < k;
        if !short && scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);

        let user_norm = matrix::norm(eu);
        let (scores, items) = scored
            .into_iter()
            .map(|(raw, i)| {
                let s = if user_norm > 0.0 { raw / user_norm } else { 0.0 };
                (s, i)
            })
            .unzip();
        Ok(RankedList {
            user,
            items,
            scores,
            short,
        })
    }
}

/// Top-`k` list for one user; `train_mask` is the user's sorted train items.
pub fn recommend_topk(
    finals: &FinalEmbeddings,
    user: usize,
    k: usize,
    p: f64,
    train_mask: &[usize],
) -> Result<RankedList> {
    TtenRanker::new(finals, p)?.top_k(user, k, train_mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

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
    fn collinear_endpoints() {
        let u = [1.0, 0.0];
        let i = [2.0, 0.0];
        assert_eq!(tten_score(&u, &i, 0.0).unwrap(), 2.0);
        assert_eq!(tten_score(&u, &i, 1.0).unwrap(), 1.0);
        let half = tten_score(&u, &i, 0.5).unwrap();
        assert!((half - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn p_one_is_cosine() {
        let u = [0.3, -1.2, 2.0];
        let i = [4.0, 0.5, -0.7];
        let cos = matrix::dot(&u, &i) / (matrix::norm(&u) * matrix::norm(&i));
        assert!((tten_score(&u, &i, 1.0).unwrap() - cos).abs() < 1e-15);
    }

    #[test]
    fn zero_norms_score_zero() {
        assert_eq!(tten_score(&[0.0, 0.0], &[1.0, 2.0], 0.3).unwrap(), 0.0);
        assert_eq!(tten_score(&[1.0, 0.0], &[0.0, 0.0], -2.0).unwrap(), 0.0);
        assert!(tten_score(&[1.0], &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn masking_and_sorting() {
        // unit items along the user direction scaled to scores .9 .1 .5
        let f = finals(&[&[1.0]], &[&[0.9], &[0.1], &[0.5]]);
        let r = recommend_topk(&f, 0, 2, 0.0, &[0]).unwrap();
        assert_eq!(r.items, vec![2, 1]);
        assert!(!r.short);
        assert!((r.scores[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn short_lists_are_flagged() {
        let f = finals(&[&[1.0]], &[&[0.9], &[0.1], &[0.5]]);
        let r = recommend_topk(&f, 0, 5, 1.0, &[1]).unwrap();
        assert!(r.short);
        assert_eq!(r.items.len(), 2);
        // equal cosines: ties by id
        assert_eq!(r.items, vec![0, 2]);
    }

    #[test]
    fn invalid_requests() {
        let f = finals(&[&[1.0]], &[&[0.9]]);
        assert!(recommend_topk(&f, 0, 0, 1.0, &[]).is_err());
        assert!(recommend_topk(&f, 1, 1, 1.0, &[]).is_err());
        assert!(recommend_topk(&f, 0, 1, f64::NAN, &[]).is_err());
    }
}
