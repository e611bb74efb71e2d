use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::evaluation::mean_recall;
use crate::graph::NormalizedAdjacency;
use crate::model::{EmbeddingModel, FinalEmbeddings};

use super::adam::{adam_step, AdamState};
use super::loss::{bpr_loss_and_grad, ssm_loss_and_grad};
use super::sampling::InteractionSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bpr,
    Ssm,
}

impl LossKind {
    pub fn default_l2(self) -> f64 {
        match self {
            LossKind::Bpr => 1e-5,
            LossKind::Ssm => 1e-7,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpr" => Ok(LossKind::Bpr),
            "ssm" => Ok(LossKind::Ssm),
            other => Err(Error::invalid(format!("unknown loss {other:?}, expected bpr or ssm"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Bpr => "bpr",
            LossKind::Ssm => "ssm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// First epoch at which validation runs.
    pub early_stop_min_epoch: usize,
    /// Consecutive non-improving validations tolerated.
    pub patience: usize,
    pub eval_every: usize,
    pub temperature: f64,
    pub l2: f64,
    pub num_layers: usize,
    pub dim: usize,
    pub seed: u64,
    /// Normalization strength used for validation ranking.
    pub eval_p: f64,
    pub eval_k: usize,
}

impl TrainConfig {
    pub fn new(loss: LossKind) -> Self {
        TrainConfig {
            loss,
            learning_rate: 1e-3,
            batch_size: 4096,
            max_epochs: 300,
            early_stop_min_epoch: 50,
            patience: 5,
            eval_every: 5,
            temperature: 0.1,
            l2: loss.default_l2(),
            num_layers: 3,
            dim: 64,
            seed: 0,
            eval_p: 1.0,
            eval_k: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.loss == LossKind::Ssm && self.batch_size < 2 {
            return bad("sampled softmax needs a batch size of at least 2");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 coefficient must be non-negative");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if self.dim == 0 {
            return bad("dimension must be at least 1");
        }
        if self.eval_k == 0 {
            return bad("k must be at least 1");
        }
        if !self.eval_p.is_finite() {
            return bad("normalization strength must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Early,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub epoch: usize,
    pub validation_recall: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<ValidationPoint>,
    pub epoch_losses: Vec<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_recall: Option<f64>,
    pub stop_reason: StopReason,
    pub zero_norm_rows: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Improved,
    NotImproved,
    Stop,
}

/// Patience counter over validation scores; only strict improvements count.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    misses: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            misses: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Observation {
        match self.best {
            Some((_, best)) if score <= best => {
                self.misses += 1;
                if self.misses >= self.patience {
                    Observation::Stop
                } else {
                    Observation::NotImproved
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.misses = 0;
                Observation::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Epoch-level driver; [`train`] adds validation and early stopping.
pub struct Trainer<'a> {
    dataset: &'a InteractionDataset,
    config: TrainConfig,
    adj: NormalizedAdjacency,
    sampler: InteractionSampler<'a>,
    model: EmbeddingModel,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
    zero_norm_rows: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a InteractionDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.num_train_interactions() == 0 {
            return Err(Error::invalid("dataset has no train interactions"));
        }
        let model = EmbeddingModel::init_xavier(
            dataset.num_users(),
            dataset.num_items(),
            config.dim,
            config.num_layers,
            config.seed,
        )?;
        let adam = AdamState::new(model.base().rows(), model.dim());
        Ok(Trainer {
            dataset,
            adj: NormalizedAdjacency::build(dataset),
            sampler: InteractionSampler::new(dataset),
            model,
            adam,
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5a3b_1e00_0001),
            config,
            epoch: 0,
            zero_norm_rows: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.sampler.num_pairs().div_ceil(self.config.batch_size)
    }

    /// One pass of `ceil(interactions / batch_size)` batches; returns the
    /// mean batch loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let batches = self.batches_per_epoch();
        let mut total = 0.0;
        for _ in 0..batches {
            let out = match self.config.loss {
                LossKind::Bpr => {
                    let batch = self.sampler.bpr_batch(self.config.batch_size, &mut self.rng)?;
                    bpr_loss_and_grad(&self.model, &self.adj, &batch, self.config.l2)?
                }
                LossKind::Ssm => {
                    let batch = self.sampler.ssm_batch(self.config.batch_size, &mut self.rng)?;
                    ssm_loss_and_grad(
                        &self.model,
                        &self.adj,
                        &batch,
                        self.config.temperature,
                        self.config.l2,
                    )?
                }
            };
            if out.zero_norm_rows > 0 {
                log::warn!("{} zero-norm embeddings in a batch", out.zero_norm_rows);
                self.zero_norm_rows += out.zero_norm_rows;
            }
            adam_step(
                self.model.base_mut(),
                &out.grad,
                &mut self.adam,
                self.config.learning_rate,
            )?;
            total += out.loss;
        }
        self.epoch += 1;
        Ok(total / batches as f64)
    }

    pub fn final_embeddings(&self) -> Result<FinalEmbeddings> {
        self.model.forward(&self.adj, false)
    }

    pub fn validation_recall(&self) -> Result<f64> {
        let finals = self.final_embeddings()?;
        mean_recall(
            &finals,
            self.dataset,
            self.config.eval_p,
            self.config.eval_k,
            Split::Validation,
        )
    }
}

/// Trains with early stopping on validation Recall@k and returns the model
/// from the best validation checkpoint (the last model if validation never
/// ran).
pub fn train(dataset: &InteractionDataset, config: &TrainConfig) -> Result<(EmbeddingModel, TrainReport)> {
    let mut trainer = Trainer::new(dataset, config.clone())?;
    let mut warnings = Vec::new();
    let has_validation = dataset.num_interactions(Split::Validation) > 0;
    if !has_validation {
        let msg = "validation split is empty; early stopping disabled".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_model = None;
    let mut history = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let loss = trainer.run_epoch()?;
        epoch_losses.push(loss);
        log::debug!("epoch {epoch}: loss {loss:.6}");

        let due = epoch >= config.early_stop_min_epoch
            && (epoch - config.early_stop_min_epoch).is_multiple_of(config.eval_every);
        if !(has_validation && due) {
            continue;
        }
        let recall = trainer.validation_recall()?;
        log::info!("epoch {epoch}: loss {loss:.6}, validation recall@{} {recall:.5}", config.eval_k);
        history.push(ValidationPoint {
            epoch,
            validation_recall: recall,
            mean_loss: loss,
        });
        match stopper.observe(epoch, recall) {
            Observation::Improved => best_model = Some(trainer.model().clone()),
            Observation::NotImproved => {}
            Observation::Stop => {
                stop_reason = StopReason::Early;
                break;
            }
        }
    }

    let epochs_run = trainer.epoch();
    let zero_norm_rows = trainer.zero_norm_rows;
    let (best_epoch, best_validation_recall) = match stopper.best() {
        Some((e, r)) => (e, Some(r)),
        None => (epochs_run, None),
    };
    let model = best_model.unwrap_or_else(|| trainer.model().clone());
    Ok((
        model,
        TrainReport {
            history,
            epoch_losses,
            epochs_run,
            best_epoch,
            best_validation_recall,
            stop_reason,
            zero_norm_rows,
            warnings,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_one_stops_on_first_drop() {
        let mut s = EarlyStopping::new(1);
        assert_eq!(s.observe(50, 0.10), Observation::Improved);
        assert_eq!(s.observe(55, 0.09), Observation::Stop);
        assert_eq!(s.best(), Some((50, 0.10)));
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        let mut s = EarlyStopping::new(2);
        s.observe(1, 0.2);
        assert_eq!(s.observe(2, 0.2), Observation::NotImproved);
        assert_eq!(s.observe(3, 0.3), Observation::Improved);
        assert_eq!(s.observe(4, 0.1), Observation::NotImproved);
        assert_eq!(s.observe(5, 0.1), Observation::Stop);
    }

    #[test]
    fn config_defaults_follow_loss() {
        assert_eq!(TrainConfig::new(LossKind::Bpr).l2, 1e-5);
        assert_eq!(TrainConfig::new(LossKind::Ssm).l2, 1e-7);
        let c = TrainConfig::new(LossKind::Ssm);
        assert_eq!((c.batch_size, c.max_epochs, c.dim, c.num_layers), (4096, 300, 64, 3));
        assert!(c.validate().is_ok());
        let bad = TrainConfig {
            temperature: 0.0,
            ..c.clone()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { patience: 0, ..c };
        assert!(bad.validate().is_err());
        assert_eq!("SSM".parse::<LossKind>().unwrap(), LossKind::Ssm);
        assert!("foo".parse::<LossKind>().is_err());
    }

    #[test]
    fn one_epoch_no_early_stop() {
        let ds = InteractionDataset::new(
            3,
            4,
            vec![vec![0, 1], vec![1, 2], vec![3]],
            vec![vec![2], vec![], vec![]],
            vec![vec![3], vec![0], vec![1]],
        )
        .unwrap();
        let config = TrainConfig {
            max_epochs: 1,
            batch_size: 4,
            dim: 4,
            ..TrainConfig::new(LossKind::Bpr)
        };
        let (_, report) = train(&ds, &config).unwrap();
        assert_eq!(report.epochs_run, 1);
        assert_eq!(report.epoch_losses.len(), 1);
        assert!(report.history.is_empty());
        assert_eq!(report.stop_reason, StopReason::MaxEpochs);
    }

    #[test]
    fn empty_validation_disables_early_stopping() {
        let ds = InteractionDataset::new(
            2,
            3,
            vec![vec![0, 1], vec![2]],
            vec![],
            vec![vec![2], vec![0]],
        )
        .unwrap();
        let config = TrainConfig {
            max_epochs: 4,
            early_stop_min_epoch: 1,
            eval_every: 1,
            patience: 1,
            batch_size: 2,
            dim: 3,
            ..TrainConfig::new(LossKind::Ssm)
        };
        let (_, report) = train(&ds, &config).unwrap();
        assert_eq!(report.epochs_run, 4);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.history.is_empty());
    }
}
