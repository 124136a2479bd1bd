//! Shared minibatch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{AdamConfig, AdamState, Graph, Var};
use crate::model::{Ablation, ContextOrder, Layout, Model, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bce,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub ablation: Ablation,
    pub order: ContextOrder,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            ablation: Ablation::NONE,
            order: ContextOrder::default(),
        }
    }
}

/// A model together with its optimizer state and progress.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub adam: AdamState,
    pub task: Task,
    pub config: TrainConfig,
    pub epochs_done: usize,
}

impl Trainer {
    pub fn new(mut model: Model, task: Task, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        model.set_trainable(task, config.ablation);
        let adam = AdamState::new(&model.params, config.adam);
        Ok(Trainer {
            model,
            adam,
            task,
            config,
            epochs_done: 0,
        })
    }

    /// Continues from saved optimizer state.
    pub fn resume(
        mut model: Model,
        adam: AdamState,
        task: Task,
        config: TrainConfig,
        epochs_done: usize,
    ) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        model.set_trainable(task, config.ablation);
        Ok(Trainer {
            model,
            adam,
            task,
            config,
            epochs_done,
        })
    }

    /// Runs `config.epochs` epochs. `terms` maps one example to prediction
    /// nodes and their targets; the loss of a batch is the mean over all its
    /// items. Returns the mean item loss of every epoch.
    pub fn train<E, F>(&mut self, examples: &[E], loss: LossKind, terms: F) -> Result<Vec<f64>>
    where
        F: Fn(&mut Graph, &Layout, &E, &TrainConfig) -> Result<(Vec<Var>, Vec<f64>)>,
    {
        if examples.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let mut curve = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let mut order: Vec<usize> = (0..examples.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(self.epochs_done as u64);
            order.shuffle(&mut rng);

            let (mut total, mut items) = (0.0, 0usize);
            for batch in order.chunks(self.config.batch_size) {
                self.model.params.zero_grads();
                let grads = {
                    let mut g = Graph::new(&self.model.params);
                    let mut preds = Vec::new();
                    let mut targets = Vec::new();
                    for &i in batch {
                        let (p, t) = terms(&mut g, &self.model.layout, &examples[i], &self.config)?;
                        preds.extend(p);
                        targets.extend(t);
                    }
                    let all = g.concat(&preds, 0)?;
                    let value = match loss {
                        LossKind::Bce => g.bce_loss(all, &targets)?,
                        LossKind::Mae => g.mae_loss(all, &targets)?,
                    };
                    total += g.value(value)[0] * targets.len() as f64;
                    items += targets.len();
                    g.backward(value)?
                };
                self.model.params.accumulate(&grads);
                self.model.freeze_padding();
                self.adam.step(&mut self.model.params)?;
            }
            self.epochs_done += 1;
            curve.push(total / items as f64);
        }
        Ok(curve)
    }
}
