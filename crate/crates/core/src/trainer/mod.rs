//! Co-training loop: minibatch sampling from both embodiments, the
//! method-specific objective, AdamW updates, logging and checkpoints.

mod checkpoint;
mod config;
mod sweep;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{EffectiveConfig, Method, TrainConfig};
pub use sweep::{per_seed_csv, run_sweep, SweepRow, SweepTable, SWEEP_SETTINGS};

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::model::{total_loss, Batch, LossBreakdown, Model, Objective};
use crate::numkit::{AdamW, DenseMatrix, SeededRng, Stream, Tape};
use crate::pushmini::{
    evaluate, reference_seeds, DomainDataset, Episode, EvalSetting, ModelPolicy, NormBundle, Variant, HORIZON,
};

/// Training items of one embodiment in model units.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub domain: Domain,
    pub embodiment: DenseMatrix,
    pub scene: DenseMatrix,
    /// Normalised flattened chunks.
    pub actions: DenseMatrix,
    pub variants: Vec<Variant>,
}

impl PreparedSet {
    pub fn new(dataset: &DomainDataset, norm: &NormBundle) -> Result<Self> {
        let input = ModelPolicy::encoder_input(norm, dataset.domain, &dataset.observations)?;
        let stats = norm.action(dataset.domain)?.tiled(HORIZON);
        let mut actions = dataset.actions.clone();
        for r in 0..actions.rows() {
            stats.normalize_in_place(actions.row_mut(r))?;
        }
        Ok(Self {
            domain: dataset.domain,
            embodiment: input.embodiment,
            scene: input.scene,
            actions,
            variants: dataset.variants.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            input: crate::model::EncoderInput {
                domain: self.domain,
                embodiment: self.embodiment.select_rows(indices),
                scene: self.scene.select_rows(indices),
            },
            actions: self.actions.select_rows(indices),
        }
    }
}

/// `b` uniform draws with replacement from `[0, n)`.
pub fn sample_batch(n: usize, b: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::contract("cannot sample from an empty dataset"));
    }
    Ok((0..b).map(|_| rng.below(n)).collect())
}

/// Minibatch generator for update `step`; independent of every other step,
/// so a resumed run draws exactly what an uninterrupted one would.
fn step_rng(seed: u64, step: u64) -> SeededRng {
    SeededRng::new(seed, Stream::Custom((1 << 32) | step))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub loss: LossBreakdown,
    pub wall_seconds: f64,
    pub eval_success_rate: Option<f64>,
}

pub const LOG_HEADER: &str = "step,bc_H,bc_R,ot_joint,total,sinkhorn_residual,eval_success_rate";

impl LogRow {
    pub fn csv(&self) -> String {
        let eval = self.eval_success_rate.map(|s| s.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            self.loss.bc_source,
            self.loss.bc_target,
            self.loss.ot_joint,
            self.loss.total,
            self.loss.sinkhorn_residual,
            eval
        )
    }
}

/// Training state: model, optimizer and prepared data.
pub struct Trainer {
    pub config: TrainConfig,
    pub effective: EffectiveConfig,
    pub model: Model,
    pub optimizer: AdamW,
    pub norm: NormBundle,
    source: PreparedSet,
    target: PreparedSet,
}

impl Trainer {
    /// Fresh model and statistics fitted on `episodes`.
    pub fn new(config: TrainConfig, episodes: &[Episode]) -> Result<Self> {
        let effective = config.effective()?;
        let norm = NormBundle::fit(episodes)?;
        let model = Model::new(effective.model.clone(), config.seed)?;
        let optimizer = AdamW::new(effective.optimizer, &model.params);
        Self::assemble(config, effective, model, optimizer, norm, episodes)
    }

    /// Continues from a checkpoint; its statistics replace a refit.
    pub fn resume(config: TrainConfig, episodes: &[Episode], checkpoint: Checkpoint) -> Result<Self> {
        let effective = config.effective()?;
        if checkpoint.config_hash != effective.hash() {
            return Err(Error::contract("checkpoint was produced by a different configuration"));
        }
        let model = Model::from_params(checkpoint.model_config, checkpoint.params)?;
        Self::assemble(
            config,
            effective,
            model,
            checkpoint.optimizer,
            checkpoint.norm,
            episodes,
        )
    }

    fn assemble(
        config: TrainConfig,
        effective: EffectiveConfig,
        model: Model,
        optimizer: AdamW,
        norm: NormBundle,
        episodes: &[Episode],
    ) -> Result<Self> {
        let source = PreparedSet::new(&DomainDataset::from_episodes(Domain::Source, episodes), &norm);
        let target = PreparedSet::new(&DomainDataset::from_episodes(Domain::Target, episodes), &norm)?;
        if target.is_empty() {
            return Err(Error::contract("training needs target-domain data"));
        }
        let source = if config.method == Method::TargetOnly {
            target.clone()
        } else {
            let s = source?;
            if s.is_empty() {
                return Err(Error::contract("training needs source-domain data"));
            }
            s
        };
        Ok(Self {
            config,
            effective,
            model,
            optimizer,
            norm,
            source,
            target,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.optimizer.steps_taken()
    }

    /// The two minibatches of update `step`.
    pub fn batches(&self, step: u64) -> Result<(Batch, Batch)> {
        let mut rng = step_rng(self.config.seed, step);
        let b = self.config.batch_size;
        let si = sample_batch(self.source.len(), b, &mut rng)?;
        let ti = sample_batch(self.target.len(), b, &mut rng)?;
        Ok((self.source.batch(&si), self.target.batch(&ti)))
    }

    /// Loss and parameter gradients on the given batches, without updating.
    pub fn loss_and_grads(&self, source: &Batch, target: &Batch) -> Result<(LossBreakdown, Vec<DenseMatrix>)> {
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let objective = Objective {
            bc: &self.effective.bc,
            alignment: &self.effective.alignment,
            alpha: self.effective.alpha,
        };
        let (root, loss) = total_loss(&self.model, &mut tape, &bound, source, target, &objective)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {}", self.steps_taken())));
        }
        let mut grads = tape.backward(root)?;
        Ok((loss, bound.collect(&mut grads, &self.model.params)))
    }

    /// One AdamW update on freshly sampled batches.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let (source, target) = self.batches(self.steps_taken())?;
        let (loss, grads) = self.loss_and_grads(&source, &target)?;
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::NonFinite(format!("gradient at step {}", self.steps_taken())));
        }
        self.optimizer.step(&mut self.model.params, &grads)?;
        Ok(loss)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.effective, &self.model, &self.optimizer, &self.norm)
    }

    /// Base-variant success rate over the first `n` evaluation seeds.
    pub fn quick_eval(&self, n: usize) -> Result<f64> {
        let seeds: Vec<u64> = reference_seeds().into_iter().take(n).collect();
        let mut policy = ModelPolicy {
            model: &self.model,
            norm: &self.norm,
        };
        Ok(evaluate(&mut policy, EvalSetting::target(Variant::Base), &seeds)?.success_rate)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train_log.csv";

/// Runs `config.max_iters` updates. With `out_dir`, the log is streamed to
/// CSV and the checkpoint is rewritten every `eval_every` steps and at the
/// end; a non-finite loss aborts the run and leaves the last good
/// checkpoint in place.
pub fn train(config: &TrainConfig, episodes: &[Episode], out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), episodes)?;
    let mut log = Vec::new();
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(LOG_FILE);
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{LOG_HEADER}").map_err(|e| Error::io(&path, e))?;
            trainer.checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
            Some((f, path))
        }
        None => None,
    };
    let start = Instant::now();
    for step in 0..config.max_iters {
        let loss = trainer.step()?;
        let done = step + 1;
        let periodic = config.eval_every > 0 && done % config.eval_every == 0;
        let eval_success_rate = if periodic && config.eval_episodes > 0 {
            Some(trainer.quick_eval(config.eval_episodes)?)
        } else {
            None
        };
        let row = LogRow {
            step,
            loss,
            wall_seconds: start.elapsed().as_secs_f64(),
            eval_success_rate,
        };
        if let Some((f, path)) = log_file.as_mut() {
            writeln!(f, "{}", row.csv()).map_err(|e| Error::io(path.as_path(), e))?;
        }
        if let (true, Some(dir)) = (periodic, out_dir) {
            trainer.checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
            log::info!(
                "step {done}: total {:.5} bc_R {:.5} ({:.1}s)",
                row.loss.total,
                row.loss.bc_target,
                row.wall_seconds
            );
        }
        log.push(row);
    }
    let checkpoint = trainer.checkpoint();
    if let Some(dir) = out_dir {
        checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(TrainOutcome { checkpoint, log })
}
