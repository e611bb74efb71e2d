//! Implicit-feedback interaction data: loading, validation carve-out,
//! popularity counts and equal-size popularity groups.
//!
//! Interaction files hold one user per line, `<user> <item> <item> ...`,
//! with non-negative decimal ids. Blank lines are skipped and a user line
//! with no items means the user has no interactions in that split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Users, items and their train/validation/test interactions.
///
/// Every per-user list is sorted and duplicate free, and the three splits
/// of a user are pairwise disjoint. `popularity[i]` counts the train lists
/// containing `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    train: Vec<Vec<usize>>,
    validation: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
    popularity: Vec<usize>,
    user_labels: Vec<u64>,
    item_labels: Vec<u64>,
}

impl InteractionDataset {
    /// Builds a dataset from dense ids. Lists may be unsorted; duplicates
    /// inside a list are dropped. Missing trailing users get empty lists.
    pub fn new(
        num_users: usize,
        num_items: usize,
        train: Vec<Vec<usize>>,
        validation: Vec<Vec<usize>>,
        test: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let labels_u = (0..num_users as u64).collect();
        let labels_i = (0..num_items as u64).collect();
        Self::with_labels(num_users, num_items, train, validation, test, labels_u, labels_i)
    }

    fn with_labels(
        num_users: usize,
        num_items: usize,
        train: Vec<Vec<usize>>,
        validation: Vec<Vec<usize>>,
        test: Vec<Vec<usize>>,
        user_labels: Vec<u64>,
        item_labels: Vec<u64>,
    ) -> Result<Self> {
        let train = normalize_split(train, num_users, num_items, "train")?;
        let validation = normalize_split(validation, num_users, num_items, "validation")?;
        let test = normalize_split(test, num_users, num_items, "test")?;

        for u in 0..num_users {
            if let Some(i) = first_common(&train[u], &test[u]) {
                return Err(Error::SplitOverlap {
                    user: user_labels[u],
                    item: item_labels[i],
                });
            }
            if let Some(i) = first_common(&train[u], &validation[u]) {
                return Err(Error::invalid(format!(
                    "user {} has item {} in both train and validation",
                    user_labels[u], item_labels[i]
                )));
            }
            if let Some(i) = first_common(&validation[u], &test[u]) {
                return Err(Error::invalid(format!(
                    "user {} has item {} in both validation and test",
                    user_labels[u], item_labels[i]
                )));
            }
        }

        let mut dataset = InteractionDataset {
            num_users,
            num_items,
            train,
            validation,
            test,
            popularity: Vec::new(),
            user_labels,
            item_labels,
        };
        dataset.popularity = compute_popularity(&dataset);
        Ok(dataset)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn train(&self, user: usize) -> &[usize] {
        &self.train[user]
    }

    pub fn validation(&self, user: usize) -> &[usize] {
        &self.validation[user]
    }

    pub fn test(&self, user: usize) -> &[usize] {
        &self.test[user]
    }

    pub fn split(&self, split: Split, user: usize) -> &[usize] {
        match split {
            Split::Train => self.train(user),
            Split::Validation => self.validation(user),
            Split::Test => self.test(user),
        }
    }

    pub fn popularity(&self) -> &[usize] {
        &self.popularity
    }

    pub fn num_train_interactions(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn num_interactions(&self, split: Split) -> usize {
        (0..self.num_users).map(|u| self.split(split, u).len()).sum()
    }

    /// Original id of a user as it appeared in the input files.
    pub fn user_label(&self, user: usize) -> u64 {
        self.user_labels[user]
    }

    pub fn item_label(&self, item: usize) -> u64 {
        self.item_labels[item]
    }

    pub fn is_train_pair(&self, user: usize, item: usize) -> bool {
        self.train[user].binary_search(&item).is_ok()
    }

    /// Moves `floor(fraction * |test_u|)` test items of every user into the
    /// validation split, chosen by a seeded uniform shuffle.
    ///
    /// Users are visited in id order and share one generator; each user's
    /// sorted test list is Fisher-Yates shuffled and its prefix becomes validation.
    pub fn with_validation_split(mut self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid(format!(
                "validation fraction must be in [0, 1), got {fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for u in 0..self.num_users {
            let test = &mut self.test[u];
            let moved = (fraction * test.len() as f64).floor() as usize;
            let mut order = test.clone();
            // Plain downward Fisher-Yates so the carve does not depend on the
            // internals of any particular shuffle implementation.
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..(i + 1) as u32) as usize;
                order.swap(i, j);
            }
            if moved == 0 {
                continue;
            }
            let picked: BTreeSet<usize> = order[..moved].iter().copied().collect();
            test.retain(|i| !picked.contains(i));
            let validation = &mut self.validation[u];
            validation.extend(picked);
            validation.sort_unstable();
        }
        Ok(self)
    }

    /// Writes the train file and a test file holding test ∪ validation, using
    /// the original ids. Reloading with the same fraction and seed reproduces
    /// a dataset whose validation split was carved the same way.
    pub fn write_files(&self, train_path: &Path, test_path: &Path) -> Result<()> {
        let merged: Vec<Vec<usize>> = (0..self.num_users)
            .map(|u| {
                let mut all = self.test[u].clone();
                all.extend_from_slice(&self.validation[u]);
                all.sort_unstable();
                all
            })
            .collect();
        fs::write(train_path, self.render(&self.train))
            .map_err(|e| Error::io(train_path, e))?;
        fs::write(test_path, self.render(&merged)).map_err(|e| Error::io(test_path, e))?;
        Ok(())
    }

    fn render(&self, lists: &[Vec<usize>]) -> String {
        let mut out = String::new();
        for (u, items) in lists.iter().enumerate() {
            write!(out, "{}", self.user_labels[u]).unwrap();
            for &i in items {
                write!(out, " {}", self.item_labels[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

fn normalize_split(
    mut lists: Vec<Vec<usize>>,
    num_users: usize,
    num_items: usize,
    name: &str,
) -> Result<Vec<Vec<usize>>> {
    if lists.len() > num_users {
        return Err(Error::invalid(format!(
            "{name} split has {} users, dataset has {num_users}",
            lists.len()
        )));
    }
    lists.resize_with(num_users, Vec::new);
    for (u, items) in lists.iter_mut().enumerate() {
        items.sort_unstable();
        items.dedup();
        if let Some(&bad) = items.last().filter(|&&i| i >= num_items) {
            return Err(Error::invalid(format!(
                "{name} split: user {u} references item {bad} but there are {num_items} items"
            )));
        }
    }
    Ok(lists)
}

fn first_common(a: &[usize], b: &[usize]) -> Option<usize> {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => return Some(a[x]),
        }
    }
    None
}

/// Train-interaction count per item. Validation and test never contribute.
pub fn compute_popularity(dataset: &InteractionDataset) -> Vec<usize> {
    let mut counts = vec![0usize; dataset.num_items];
    for items in &dataset.train {
        for &i in items {
            counts[i] += 1;
        }
    }
    counts
}

/// One parsed line of an interaction file.
pub type InteractionLine = (u64, Vec<u64>);

/// Parses interaction-file text. `source` only labels error messages.
pub fn parse_interactions(text: &str, source: &Path) -> Result<Vec<InteractionLine>> {
    let mut lines = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut ids = line.split_whitespace().map(|tok| {
            tok.parse::<u64>().map_err(|_| Error::Parse {
                path: source.to_path_buf(),
                line: idx + 1,
                message: format!("expected a non-negative integer id, found {tok:?}"),
            })
        });
        let user = ids.next().expect("non-empty line")?;
        let items = ids.collect::<Result<Vec<_>>>()?;
        lines.push((user, items));
    }
    Ok(lines)
}

pub fn read_interaction_file(path: &Path) -> Result<Vec<InteractionLine>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, path)
}

/// Dense index for a set of raw ids.
///
/// Ids are kept as-is when at least half of `0..=max` is used; sparser id
/// spaces are compacted to `0..n` in ascending id order.
struct IdMap {
    labels: Vec<u64>,
    index: Option<BTreeMap<u64, usize>>,
}

impl IdMap {
    fn build(ids: &BTreeSet<u64>) -> Self {
        let Some(&max) = ids.last() else {
            return IdMap {
                labels: Vec::new(),
                index: None,
            };
        };
        if (max as u128 + 1) <= 2 * ids.len() as u128 {
            IdMap {
                labels: (0..=max).collect(),
                index: None,
            }
        } else {
            let labels: Vec<u64> = ids.iter().copied().collect();
            let index = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
            IdMap {
                labels,
                index: Some(index),
            }
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn get(&self, id: u64) -> usize {
        match &self.index {
            None => id as usize,
            Some(map) => map[&id],
        }
    }
}

/// Reads train and test interaction files, then carves a validation split
/// out of each user's test items (see
/// [`InteractionDataset::with_validation_split`]).
pub fn load_dataset(
    train_path: &Path,
    test_path: &Path,
    validation_fraction: f64,
    seed: u64,
) -> Result<InteractionDataset> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::invalid(format!(
            "validation fraction must be in [0, 1), got {validation_fraction}"
        )));
    }
    let train_lines = read_interaction_file(train_path)?;
    let test_lines = read_interaction_file(test_path)?;
    dataset_from_lines(&train_lines, &test_lines)?.with_validation_split(validation_fraction, seed)
}

/// Assembles a dataset from parsed train and test lines (no validation).
pub fn dataset_from_lines(
    train_lines: &[InteractionLine],
    test_lines: &[InteractionLine],
) -> Result<InteractionDataset> {
    let all = train_lines.iter().chain(test_lines);
    let user_ids: BTreeSet<u64> = all.clone().map(|(u, _)| *u).collect();
    let item_ids: BTreeSet<u64> = all.flat_map(|(_, items)| items.iter().copied()).collect();
    let users = IdMap::build(&user_ids);
    let items = IdMap::build(&item_ids);

    let densify = |lines: &[InteractionLine]| {
        let mut lists = vec![Vec::new(); users.len()];
        for (u, its) in lines {
            lists[users.get(*u)].extend(its.iter().map(|&i| items.get(i)));
        }
        lists
    };
    let train = densify(train_lines);
    let test = densify(test_lines);
    InteractionDataset::with_labels(
        users.len(),
        items.len(),
        train,
        vec![Vec::new(); users.len()],
        test,
        users.labels.clone(),
        items.labels.clone(),
    )
}

/// Equal-size popularity buckets; group `num_groups` holds the most popular
/// items and group 1 the least popular.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularityGroups {
    num_groups: usize,
    assignment: Vec<usize>,
}

impl PopularityGroups {
    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    /// 1-based group of an item.
    pub fn group_of(&self, item: usize) -> usize {
        self.assignment[item]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Item count per group, index 0 = group 1.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_groups];
        for &g in &self.assignment {
            sizes[g - 1] += 1;
        }
        sizes
    }
}

/// Sorts items by (popularity desc, id asc) and cuts the order into
/// `num_groups` contiguous blocks whose sizes differ by at most one; the
/// `I mod G` most popular blocks take the extra item.
pub fn assign_groups(popularity: &[usize], num_groups: usize) -> Result<PopularityGroups> {
    let n = popularity.len();
    if num_groups == 0 || num_groups > n {
        return Err(Error::invalid(format!(
            "cannot split {n} items into {num_groups} popularity groups"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| popularity[b].cmp(&popularity[a]).then(a.cmp(&b)));

    let base = n / num_groups;
    let extra = n % num_groups;
    let mut assignment = vec![0; n];
    let mut pos = 0;
    for block in 0..num_groups {
        let size = base + usize::from(block < extra);
        for &item in &order[pos..pos + size] {
            assignment[item] = num_groups - block;
        }
        pos += size;
    }
    Ok(PopularityGroups {
        num_groups,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn lines(text: &str) -> Vec<InteractionLine> {
        parse_interactions(text, &PathBuf::from("mem")).unwrap()
    }

    #[test]
    fn fraction_zero_keeps_test_and_empty_validation() {
        let ds = dataset_from_lines(&lines("0 0 1\n1 1\n"), &lines("0 2\n"))
            .unwrap()
            .with_validation_split(0.0, 3)
            .unwrap();
        assert_eq!(ds.num_users(), 2);
        assert_eq!(ds.num_items(), 3);
        assert_eq!(ds.train(0), &[0, 1]);
        assert_eq!(ds.train(1), &[1]);
        assert_eq!(ds.test(0), &[2]);
        assert!(ds.test(1).is_empty());
        assert_eq!(ds.num_interactions(Split::Validation), 0);
    }

    #[test]
    fn floor_keeps_single_test_item() {
        let ds = dataset_from_lines(&lines("0 0 1\n1 1\n"), &lines("0 2\n"))
            .unwrap()
            .with_validation_split(0.5, 3)
            .unwrap();
        assert_eq!(ds.test(0), &[2]);
        assert!(ds.validation(0).is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_interactions("0 1 2\n\n1 x\n", Path::new("f.txt")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
        assert!(parse_interactions("0 -1\n", Path::new("f")).is_err());
    }

    #[test]
    fn train_test_overlap_is_rejected() {
        let err = dataset_from_lines(&lines("0 4 5\n"), &lines("0 5\n")).unwrap_err();
        match err {
            Error::SplitOverlap { user, item } => assert_eq!((user, item), (0, 5)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn sparse_ids_are_densified_with_labels() {
        let ds = dataset_from_lines(&lines("100 5000 9000\n300 9000\n"), &lines("100 7000\n"))
            .unwrap();
        assert_eq!(ds.num_users(), 2);
        assert_eq!(ds.num_items(), 3);
        assert_eq!(ds.user_label(1), 300);
        assert_eq!(ds.item_label(2), 9000);
        assert_eq!(ds.train(1), &[2]);
        assert_eq!(ds.popularity(), &[1, 0, 2]);
    }

    #[test]
    fn empty_user_line_is_allowed() {
        let ds = dataset_from_lines(&lines("0 1\n1\n2 0\n"), &lines("")).unwrap();
        assert_eq!(ds.num_users(), 3);
        assert!(ds.train(1).is_empty());
    }

    #[test]
    fn popularity_counts_train_only() {
        let ds = InteractionDataset::new(
            3,
            4,
            vec![vec![0, 1], vec![0], vec![0, 2]],
            vec![vec![3], vec![], vec![]],
            vec![vec![2], vec![1], vec![]],
        )
        .unwrap();
        assert_eq!(ds.popularity(), &[3, 1, 1, 0]);
        assert_eq!(
            ds.popularity().iter().sum::<usize>(),
            ds.num_train_interactions()
        );
    }

    #[test]
    fn groups_equal_partition() {
        let pop: Vec<usize> = (0..10).map(|i| i * 3).collect();
        let g = assign_groups(&pop, 5).unwrap();
        assert_eq!(g.group_sizes(), vec![2; 5]);
        assert_eq!(g.group_of(9), 5);
        assert_eq!(g.group_of(8), 5);
        assert_eq!(g.group_of(0), 1);
    }

    #[test]
    fn groups_tie_break_by_id() {
        let g = assign_groups(&[0; 5], 5).unwrap();
        assert_eq!(g.assignment(), &[5, 4, 3, 2, 1]);
    }

    #[test]
    fn groups_remainder_goes_to_popular_blocks() {
        let pop = [7, 6, 5, 4, 3, 2, 1];
        let g = assign_groups(&pop, 5).unwrap();
        // sizes listed from most to least popular: (2, 2, 1, 1, 1)
        let sizes = g.group_sizes();
        assert_eq!(sizes.iter().rev().copied().collect::<Vec<_>>(), vec![2, 2, 1, 1, 1]);
        assert_eq!(&g.assignment()[..4], &[5, 5, 4, 4]);
    }

    #[test]
    fn too_many_groups_is_an_error() {
        assert!(assign_groups(&[1, 2], 3).is_err());
        assert!(assign_groups(&[1, 2], 0).is_err());
    }

    #[test]
    fn bad_validation_fraction() {
        let ds = InteractionDataset::new(1, 1, vec![vec![0]], vec![], vec![]).unwrap();
        assert!(ds.clone().with_validation_split(1.0, 0).is_err());
        assert!(ds.with_validation_split(-0.1, 0).is_err());
    }
}
