use serde::{Deserialize, Serialize};
use tten_core::evaluation::{magnitude_popularity_correlation, p_grid};
use tten_core::matrix::{dot, norm};
use tten_core::training::{LossKind, TrainConfig, Trainer};
use tten_core::{
    assign_groups, evaluate, generate_synthetic, p_sweep, recommend_topk, EvalReport,
    FinalEmbeddings, InteractionDataset, PopularityGroups, Split, SyntheticSpec,
};

/// Page controls. Small defaults so training finishes in seconds in a tab.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoParams {
    pub users: usize,
    pub items: usize,
    pub popularity_mix: f64,
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            users: 400,
            items: 300,
            popularity_mix: 0.5,
            dim: 16,
            epochs: 30,
            batch_size: 128,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub params: DemoParams,
    pub train_interactions: usize,
    pub test_interactions: usize,
    pub epoch_losses: Vec<f64>,
    /// `null` when undefined.
    pub magnitude_popularity_correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub item: usize,
    pub score: f64,
    pub cosine: f64,
    pub magnitude: f64,
    pub popularity: usize,
    pub group: usize,
    pub in_test: bool,
}

pub struct Session {
    summary: SessionSummary,
    dataset: InteractionDataset,
    finals: FinalEmbeddings,
    groups: PopularityGroups,
}

const GROUPS: usize = 5;

impl Session {
    /// Generates the dataset and trains an SSM model for `params.epochs`
    /// epochs. The whole held-out split is the test set.
    pub fn train(params: DemoParams) -> Result<Session, String> {
        let spec = SyntheticSpec {
            num_users: params.users,
            num_items: params.items,
            popularity_mix: params.popularity_mix,
            // keep room for test items on small catalogues
            interactions_per_user: 20.min(params.items / 4).max(1),
            seed: params.seed,
            ..SyntheticSpec::default()
        };
        let dataset = generate_synthetic(&spec).map_err(|e| e.to_string())?.dataset;
        let config = TrainConfig {
            dim: params.dim,
            batch_size: params.batch_size,
            max_epochs: params.epochs.max(1),
            seed: params.seed,
            ..TrainConfig::new(LossKind::Ssm)
        };
        let mut trainer = Trainer::new(&dataset, config).map_err(|e| e.to_string())?;
        let epoch_losses = (0..params.epochs)
            .map(|_| trainer.run_epoch())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| e.to_string())?;
        let finals = trainer.final_embeddings().map_err(|e| e.to_string())?;
        drop(trainer);
        let groups = assign_groups(dataset.popularity(), GROUPS).map_err(|e| e.to_string())?;
        let corr = magnitude_popularity_correlation(&finals, dataset.popularity())
            .map_err(|e| e.to_string())?
            .value;
        let summary = SessionSummary {
            params,
            train_interactions: dataset.num_train_interactions(),
            test_interactions: dataset.num_interactions(Split::Test),
            epoch_losses,
            magnitude_popularity_correlation: corr.is_finite().then_some(corr),
        };
        Ok(Session {
            summary,
            dataset,
            finals,
            groups,
        })
    }

    pub fn summary(&self) -> &SessionSummary {
        &self.summary
    }

    pub fn num_users(&self) -> usize {
        self.dataset.num_users()
    }

    pub fn evaluate(&self, p: f64, k: usize) -> Result<EvalReport, String> {
        evaluate(&self.finals, &self.dataset, &self.groups, p, k, Split::Test).map_err(|e| e.to_string())
    }

    /// Reports at `p = 0, 1/steps, ..., 1`.
    pub fn sweep(&self, steps: usize, k: usize) -> Result<Vec<EvalReport>, String> {
        if steps == 0 {
            return Err("sweep needs at least one step".into());
        }
        let grid = p_grid(0.0, 1.0, 1.0 / steps as f64).map_err(|e| e.to_string())?;
        p_sweep(&self.finals, &self.dataset, &self.groups, &grid, k, Split::Test).map_err(|e| e.to_string())
    }

    /// Top-`k` for one user with the pieces of each score.
    pub fn recommend(&self, user: usize, p: f64, k: usize) -> Result<Vec<Recommendation>, String> {
        if user >= self.dataset.num_users() {
            return Err(format!("user {user} out of range (0..{})", self.dataset.num_users()));
        }
        let list = recommend_topk(&self.finals, user, k, p, self.dataset.train(user))
            .map_err(|e| e.to_string())?;
        let eu = self.finals.user(user);
        let test = self.dataset.test(user);
        Ok(list
            .items
            .iter()
            .zip(&list.scores)
            .map(|(&item, &score)| {
                let ei = self.finals.item(item);
                let magnitude = norm(ei);
                let denom = norm(eu) * magnitude;
                Recommendation {
                    item,
                    score,
                    cosine: if denom > 0.0 { dot(eu, ei) / denom } else { 0.0 },
                    magnitude,
                    popularity: self.dataset.popularity()[item],
                    group: self.groups.group_of(item),
                    in_test: test.contains(&item),
                }
            })
            .collect())
    }

    /// `(popularity, magnitude)` per item.
    pub fn magnitudes(&self) -> Vec<(usize, f64)> {
        (0..self.dataset.num_items())
            .map(|i| (self.dataset.popularity()[i], norm(self.finals.item(i))))
            .collect()
    }
}
