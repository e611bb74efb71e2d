mod common;

use common::{pearson, spearman};
use tten_core::{assign_groups, generate_synthetic, SyntheticSpec};

fn spec(mix: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        popularity_mix: mix,
        seed,
        ..SyntheticSpec::default()
    }
}

fn train_counts(data: &tten_core::SyntheticData) -> Vec<f64> {
    data.dataset.popularity().iter().map(|&c| c as f64).collect()
}

#[test]
fn no_popularity_mix_means_no_popularity_signal() {
    let seeds = 0..6;
    let mut corrs = Vec::new();
    for seed in seeds {
        let data = generate_synthetic(&spec(0.0, seed)).unwrap();
        corrs.push(pearson(&train_counts(&data), &data.base_popularity));
    }
    let mean = corrs.iter().sum::<f64>() / corrs.len() as f64;
    assert!(mean.abs() < 0.1, "mean corr {mean}, per seed {corrs:?}");
}

#[test]
fn full_popularity_mix_follows_base_popularity_rank() {
    for seed in 0..3 {
        let data = generate_synthetic(&spec(1.0, seed)).unwrap();
        let rho = spearman(&train_counts(&data), &data.base_popularity);
        assert!(rho > 0.9, "seed {seed}: spearman {rho}");
    }
}

#[test]
fn default_spec_shape_and_disjointness() {
    let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let ds = &data.dataset;
    assert_eq!((ds.num_users(), ds.num_items()), (2000, 1000));
    assert_eq!(data.user_latent.rows(), 2000);
    assert_eq!(data.item_latent.cols(), 16);
    for u in 0..ds.num_users() {
        assert_eq!(ds.train(u).len(), 40);
        assert_eq!(ds.test(u).len(), 5);
        assert!(ds.validation(u).is_empty());
        assert!(ds.test(u).iter().all(|i| ds.train(u).binary_search(i).is_err()));
    }
    for r in 0..data.item_latent.rows() {
        let n: f64 = data.item_latent.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
    let total: f64 = data.base_popularity.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn test_items_spread_over_popularity_groups() {
    // Each user's five test items come from five different base-popularity
    // groups, so pooled over users the train-popularity groups stay balanced
    // far beyond what the popularity-skewed train split shows.
    let data = generate_synthetic(&SyntheticSpec::default()).unwrap();
    let ds = &data.dataset;
    let groups = assign_groups(ds.popularity(), 5).unwrap();
    let mut test_share = [0usize; 5];
    let mut train_share = [0usize; 5];
    for u in 0..ds.num_users() {
        for &i in ds.test(u) {
            test_share[groups.group_of(i) - 1] += 1;
        }
        for &i in ds.train(u) {
            train_share[groups.group_of(i) - 1] += 1;
        }
    }
    let frac = |v: [usize; 5]| {
        let t: usize = v.iter().sum();
        v.map(|c| c as f64 / t as f64)
    };
    let (test_f, train_f) = (frac(test_share), frac(train_share));
    assert!(test_f[4] < train_f[4], "test {test_f:?} train {train_f:?}");
    assert!(test_f[0] > train_f[0]);
    assert!(test_f[4] < 0.4);
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let small = SyntheticSpec {
        num_users: 100,
        num_items: 80,
        interactions_per_user: 10,
        test_items_per_user: 5,
        ..SyntheticSpec::default()
    };
    let a = generate_synthetic(&small).unwrap();
    let b = generate_synthetic(&small).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.item_latent, b.item_latent);
    let c = generate_synthetic(&SyntheticSpec { seed: 2, ..small }).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn too_many_items_per_user_is_an_error() {
    let bad = SyntheticSpec {
        num_items: 44,
        ..SyntheticSpec::default()
    };
    assert!(generate_synthetic(&bad).is_err());
}
