//! End-to-end optimization: encoder pretraining, retrieval-style training
//! against a replaced-in-place memory, and episodic few-shot training.

mod checkpoint;
mod gradcheck;
mod model;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradcheck_instance, GradcheckCase, GRADCHECK_STEP};
pub use model::{EncodedFeature, Encoder, EncoderKind, ModelParams};

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asa::AsaParams;
use crate::dataset::{sample_episode, Dataset, Episode, EpisodeShape};
use crate::embed::{neighbourhood_embed, AggregationMode};
use crate::error::{MneError, Result};
use crate::losses::{ce_loss, total_loss, Classifier, LossBreakdown};
use crate::memory::{ClassId, EpisodicMemory, LabelSource, MemoryId};
use crate::numeric::{AdamConfig, AdamState};
use crate::treegraph::NeighbourhoodTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Retrieval,
    Episodic,
}

/// Everything that controls a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub k: usize,
    pub depth: usize,
    pub lambda_bce: f64,
    pub aggregation: AggregationMode,
    pub lr_encoder: f64,
    pub lr_model: f64,
    pub lr_decay: f64,
    /// Epochs (retrieval) or episodes (episodic) between learning-rate decays; 0 disables decay.
    pub decay_every: usize,
    pub epochs: usize,
    pub episodes: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub memory_update: bool,
    pub episode: EpisodeShape,
    pub encoder: EncoderKind,
    pub hidden_dim: usize,
    /// Embedding dimension for an MLP encoder; the identity keeps the input dimension.
    pub embed_dim: Option<usize>,
    /// Output dimension of the ASA difference projection; defaults to the embedding dimension.
    pub diff_dim: Option<usize>,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    /// Norm of classifier rows initialized from class-mean features; `None`
    /// keeps the random fan-in initialization.
    #[serde(default)]
    pub imprint_scale: Option<f64>,
}

impl TrainConfig {
    pub fn retrieval() -> Self {
        TrainConfig {
            mode: TrainMode::Retrieval,
            k: 12,
            depth: 2,
            lambda_bce: 1.0,
            aggregation: AggregationMode::Attention,
            lr_encoder: 1e-5,
            lr_model: 1e-4,
            lr_decay: 0.1,
            decay_every: 20,
            epochs: 40,
            episodes: 0,
            batch_size: 32,
            seed: 0,
            memory_update: true,
            episode: EpisodeShape::default(),
            encoder: EncoderKind::Identity,
            hidden_dim: 64,
            embed_dim: None,
            diff_dim: None,
            pretrain_epochs: 20,
            pretrain_lr: 1e-2,
            imprint_scale: Some(5.0),
        }
    }

    pub fn episodic() -> Self {
        TrainConfig {
            mode: TrainMode::Episodic,
            k: 10,
            lr_encoder: 1e-4,
            lr_model: 1e-3,
            decay_every: 5000,
            epochs: 0,
            episodes: 30000,
            ..TrainConfig::retrieval()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MneError::Numeric(m));
        if self.k == 0 {
            return Err(MneError::Capacity {
                needed: 1,
                available: 0,
            });
        }
        if !(self.lr_encoder > 0.0 && self.lr_model > 0.0 && self.pretrain_lr > 0.0) {
            return bad("learning rates must be > 0".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("decay factor {} not in (0, 1]", self.lr_decay));
        }
        if !(self.lambda_bce >= 0.0) {
            return bad(format!("BCE weight {} must be >= 0", self.lambda_bce));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if self
            .imprint_scale
            .is_some_and(|s| !(s > 0.0 && s.is_finite()))
        {
            return bad("imprint scale must be finite and > 0".into());
        }
        Ok(())
    }

    /// Learning-rate multiplier after `boundary` completed epochs/episodes.
    pub fn lr_scale(&self, boundary: usize) -> f64 {
        if self.decay_every == 0 {
            1.0
        } else {
            self.lr_decay.powi((boundary / self.decay_every) as i32)
        }
    }

    pub fn embedding_dim(&self, input_dim: usize) -> usize {
        match self.encoder {
            EncoderKind::Identity => input_dim,
            EncoderKind::Mlp => self.embed_dim.unwrap_or(input_dim),
        }
    }

    /// Fresh parameters: identity or untrained MLP encoder, default-initialized
    /// ASA rounds and classifier.
    pub fn init_params(&self, input_dim: usize, classes: usize) -> Result<ModelParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let dim = self.embedding_dim(input_dim);
        if self.encoder == EncoderKind::Identity && self.embed_dim.is_some_and(|d| d != input_dim) {
            return Err(MneError::shape(format!(
                "identity encoder needs embedding dimension {input_dim}, got {}",
                self.embed_dim.unwrap_or(0)
            )));
        }
        let encoder = match self.encoder {
            EncoderKind::Identity => Encoder::identity(input_dim),
            EncoderKind::Mlp => Encoder::mlp(input_dim, self.hidden_dim, dim, &mut rng),
        };
        self.params_with_encoder(encoder, classes, &mut rng)
    }

    fn params_with_encoder(
        &self,
        encoder: Encoder,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ModelParams> {
        let dim = encoder.out_dim();
        let diff_dim = self.diff_dim.unwrap_or(dim);
        let asa = (0..self.depth)
            .map(|_| AsaParams::init(dim, diff_dim, rng))
            .collect();
        Ok(ModelParams {
            encoder,
            asa,
            classifier: Classifier::init(classes, dim, rng)?,
        })
    }

    /// Sets every classifier row with training items to `imprint_scale` times
    /// the normalized mean of its class's encoded features. Does nothing when
    /// imprinting is off.
    pub fn imprint_classifier(&self, params: &mut ModelParams, data: &Dataset) -> Result<()> {
        let Some(scale) = self.imprint_scale else {
            return Ok(());
        };
        let encoded = params.encode_all(&data.features)?;
        let dim = params.classifier.dim();
        let mut sums = vec![vec![0.0; dim]; params.classifier.num_classes()];
        for (f, &y) in encoded.iter().zip(&data.labels) {
            let row = sums
                .get_mut(y as usize)
                .ok_or_else(|| MneError::Lookup(format!("label {y} has no classifier row")))?;
            crate::numeric::axpy(1.0, f, row);
        }
        let rows: Vec<Vec<f64>> = sums
            .iter()
            .enumerate()
            .map(|(c, m)| match crate::numeric::l2_normalize(m) {
                Ok(u) => u.iter().map(|v| v * scale).collect(),
                Err(_) => params.classifier.weights.row(c).to_vec(),
            })
            .collect();
        params.classifier = Classifier::new(crate::numeric::Matrix::from_rows(&rows)?)?;
        Ok(())
    }

    /// [`TrainConfig::init_params`] followed by [`TrainConfig::imprint_classifier`].
    pub fn init_params_for(&self, data: &Dataset) -> Result<ModelParams> {
        let mut params = self.init_params(data.dim(), data.num_classes().max(2))?;
        self.imprint_classifier(&mut params, data)?;
        Ok(params)
    }

    /// Parameters around an existing encoder, e.g. one from [`pretrain_encoder`].
    pub fn init_params_with_encoder(
        &self,
        encoder: Encoder,
        classes: usize,
    ) -> Result<ModelParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(1));
        self.params_with_encoder(encoder, classes, &mut rng)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// `"epoch"` or `"episode"`.
    pub phase: String,
    pub index: usize,
    pub ce: f64,
    pub bce: f64,
    pub bce_per_pair: f64,
    pub total: f64,
    pub lr_encoder: f64,
    pub lr_model: f64,
}

/// Writes the log as JSON lines.
pub fn write_log<W: Write>(log: &[LogRecord], mut out: W) -> Result<()> {
    for r in log {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub encoder: Encoder,
    pub train_accuracy: f64,
    pub epoch_losses: Vec<f64>,
}

/// Trains an MLP encoder with a throwaway linear softmax head on the raw
/// features. The identity encoder is returned as-is.
pub fn pretrain_encoder(data: &Dataset, config: &TrainConfig) -> Result<PretrainReport> {
    config.validate()?;
    let in_dim = data.dim();
    match config.encoder {
        EncoderKind::Identity => {
            if config.embed_dim.is_some_and(|d| d != in_dim) {
                return Err(MneError::shape(format!(
                    "identity encoder needs embedding dimension {in_dim}, got {}",
                    config.embed_dim.unwrap_or(0)
                )));
            }
            return Ok(PretrainReport {
                encoder: Encoder::identity(in_dim),
                train_accuracy: f64::NAN,
                epoch_losses: Vec::new(),
            });
        }
        EncoderKind::Mlp => {}
    }
    if data.is_empty() {
        return Err(MneError::Capacity {
            needed: 1,
            available: 0,
        });
    }
    let classes = data.num_classes().max(2);
    let dim = config.embedding_dim(in_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder = Encoder::mlp(in_dim, config.hidden_dim, dim, &mut rng);
    let mut head = Classifier::init(classes, dim, &mut rng)?;

    let sizes: Vec<usize> = encoder
        .blocks()
        .iter()
        .map(|b| b.len())
        .chain(std::iter::once(head.weights.as_slice().len()))
        .collect();
    let mut adam = AdamState::new(&sizes, AdamConfig::default());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.pretrain_epochs);

    for _ in 0..config.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut g_enc = encoder.zeros_like();
            let mut g_head = head.weights.clone();
            g_head.as_mut_slice().fill(0.0);
            for &i in batch {
                let (out, cache) = encoder.forward_cached(&data.features[i])?;
                let ce = ce_loss(&out, data.labels[i], &head)?;
                epoch_loss += ce.loss;
                encoder.backward(&cache, &ce.grad_embedding, &mut g_enc);
                crate::numeric::axpy(1.0, ce.grad_weights.as_slice(), g_head.as_mut_slice());
            }
            let mut grads: Vec<&[f64]> = g_enc.blocks();
            grads.push(g_head.as_slice());
            let mut params: Vec<&mut [f64]> = encoder.blocks_mut();
            params.push(head.weights.as_mut_slice());
            let lrs = vec![config.pretrain_lr; params.len()];
            adam.update(&mut params, &grads, &lrs)?;
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }

    let correct = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| {
            let logits = head.logits(&encoder.forward(x).expect("validated dims"));
            argmax(&logits) == y as usize
        })
        .count();
    Ok(PretrainReport {
        encoder,
        train_accuracy: correct as f64 / data.len() as f64,
        epoch_losses,
    })
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss and gradients of one target whose neighbourhood tree is already built.
pub(crate) fn tree_loss(
    params: &ModelParams,
    encoded: &EncodedFeature,
    tree: &NeighbourhoodTree,
    label: ClassId,
    labels: &dyn LabelSource,
    config: &TrainConfig,
    grads: &mut ModelParams,
) -> Result<LossBreakdown> {
    let asa: &[AsaParams] = &params.asa;
    let mut out = neighbourhood_embed(tree, asa, config.aggregation)?;
    let (lb, lg) = total_loss(
        &mut out,
        tree,
        asa,
        config.aggregation,
        label,
        &params.classifier,
        labels,
        config.lambda_bce,
    )?;
    for (dst, src) in grads.asa.iter_mut().zip(&lg.asa) {
        dst.accumulate(src);
    }
    crate::numeric::axpy(
        1.0,
        lg.classifier.as_slice(),
        grads.classifier.weights.as_mut_slice(),
    );
    encoded.backward(&params.encoder, &lg.root, &mut grads.encoder);
    Ok(lb)
}

/// Loss and gradients of one target against `memory`; the target's own entry
/// (if any) is excluded from its root's neighbours.
pub(crate) fn item_loss(
    params: &ModelParams,
    memory: &EpisodicMemory,
    x: &[f64],
    id: Option<MemoryId>,
    label: ClassId,
    config: &TrainConfig,
) -> Result<(LossBreakdown, ModelParams)> {
    let encoded = params.encode_cached(x)?;
    let tree = NeighbourhoodTree::build(&encoded.feature, id, memory, config.k, config.depth)?;
    let mut grads = params.zeros_like();
    let lb = tree_loss(params, &encoded, &tree, label, memory, config, &mut grads)?;
    Ok((lb, grads))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub items: usize,
    pub ce: f64,
    pub bce: f64,
    pub total: f64,
    pub pairs: usize,
}

impl StepStats {
    fn add(&mut self, lb: &LossBreakdown) {
        self.items += 1;
        self.ce += lb.ce;
        self.bce += lb.bce;
        self.total += lb.total;
        self.pairs += lb.pair_count;
    }

    fn merge(&mut self, o: &StepStats) {
        self.items += o.items;
        self.ce += o.ce;
        self.bce += o.bce;
        self.total += o.total;
        self.pairs += o.pairs;
    }

    fn record(&self, phase: &str, index: usize, lr_encoder: f64, lr_model: f64) -> LogRecord {
        let n = self.items.max(1) as f64;
        LogRecord {
            phase: phase.to_string(),
            index,
            ce: self.ce / n,
            bce: self.bce / n,
            bce_per_pair: if self.pairs == 0 {
                0.0
            } else {
                self.bce / self.pairs as f64
            },
            total: self.total / n,
            lr_encoder,
            lr_model,
        }
    }
}

/// Sums per-item gradients in item order and applies one Adam step.
fn reduce_and_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    results: Vec<Result<(LossBreakdown, ModelParams)>>,
    lr_encoder: f64,
    lr_model: f64,
) -> Result<StepStats> {
    let mut stats = StepStats::default();
    let mut total = params.zeros_like();
    for r in results {
        let (lb, g) = r?;
        stats.add(&lb);
        total.accumulate(&g);
    }
    let enc_blocks = params.encoder_block_count();
    let grads = total.blocks();
    let mut blocks = params.blocks_mut();
    let lrs: Vec<f64> = (0..blocks.len())
        .map(|i| if i < enc_blocks { lr_encoder } else { lr_model })
        .collect();
    adam.update(&mut blocks, &grads, &lrs)?;
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<LogRecord>,
    pub memory: EpisodicMemory,
}

/// Retrieval-mode training: the memory holds the encoded training set and is
/// refreshed for each batch after its optimizer step.
#[derive(Debug)]
pub struct RetrievalTrainer<'a> {
    data: &'a Dataset,
    config: TrainConfig,
    params: ModelParams,
    adam: AdamState,
    memory: EpisodicMemory,
    rng: ChaCha8Rng,
    epoch: usize,
    log: Vec<LogRecord>,
}

impl<'a> RetrievalTrainer<'a> {
    pub fn new(data: &'a Dataset, config: TrainConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        if params.encoder.in_dim() != data.dim() {
            return Err(MneError::shape(format!(
                "encoder expects {} inputs, data has dimension {}",
                params.encoder.in_dim(),
                data.dim()
            )));
        }
        if config.aggregation == AggregationMode::Attention && params.depth() != config.depth {
            return Err(MneError::shape(format!(
                "config depth {} but parameters hold {} ASA rounds",
                config.depth,
                params.depth()
            )));
        }
        if config.depth > 0 && data.len() < config.k + 1 {
            return Err(MneError::Capacity {
                needed: config.k + 1,
                available: data.len(),
            });
        }
        let raw: Vec<Vec<f64>> = data
            .features
            .par_iter()
            .map(|x| params.encoder.forward(x))
            .collect::<Result<_>>()?;
        let memory = EpisodicMemory::from_labeled(&raw, &data.labels)?;
        let adam = AdamState::new(&params.block_sizes(), AdamConfig::default());
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0001);
        Ok(RetrievalTrainer {
            data,
            config,
            params,
            adam,
            memory,
            rng,
            epoch: 0,
            log: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    fn learning_rates(&self) -> (f64, f64) {
        let s = self.config.lr_scale(self.epoch);
        (self.config.lr_encoder * s, self.config.lr_model * s)
    }

    /// One optimizer step over the given training items (memory ids equal item indices).
    pub fn step(&mut self, batch: &[usize]) -> Result<StepStats> {
        let (lr_enc, lr_model) = self.learning_rates();
        let results: Vec<_> = batch
            .par_iter()
            .map(|&i| {
                item_loss(
                    &self.params,
                    &self.memory,
                    &self.data.features[i],
                    Some(i as MemoryId),
                    self.data.labels[i],
                    &self.config,
                )
            })
            .collect();
        let stats = reduce_and_step(&mut self.params, &mut self.adam, results, lr_enc, lr_model)?;
        if self.config.memory_update {
            let fresh: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| self.params.encoder.forward(&self.data.features[i]))
                .collect::<Result<_>>()?;
            let ids: Vec<MemoryId> = batch.iter().map(|&i| i as MemoryId).collect();
            self.memory.update(&ids, &fresh)?;
        }
        Ok(stats)
    }

    pub fn run_epoch(&mut self) -> Result<LogRecord> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);
        let (lr_enc, lr_model) = self.learning_rates();
        let mut stats = StepStats::default();
        for batch in order.chunks(self.config.batch_size) {
            stats.merge(&self.step(batch)?);
        }
        let rec = stats.record("epoch", self.epoch, lr_enc, lr_model);
        self.epoch += 1;
        self.log.push(rec.clone());
        Ok(rec)
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            params: self.params,
            log: self.log,
            memory: self.memory,
        }
    }
}

pub fn train_retrieval(
    data: &Dataset,
    config: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<TrainOutcome> {
    let params = match init {
        Some(p) => p,
        None => config.init_params_for(data)?,
    };
    let mut trainer = RetrievalTrainer::new(data, config.clone(), params)?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

/// Builds the labeled per-episode memory from encoder outputs of every
/// support and query item, in [`Episode::items`] order.
pub fn episode_memory(
    params: &ModelParams,
    data: &Dataset,
    episode: &Episode,
) -> Result<EpisodicMemory> {
    let items = episode.items();
    let raw: Vec<Vec<f64>> = items
        .iter()
        .map(|&i| params.encoder.forward(&data.features[i]))
        .collect::<Result<_>>()?;
    let labels: Vec<ClassId> = items.iter().map(|&i| data.labels[i]).collect();
    EpisodicMemory::from_labeled(&raw, &labels)
}

/// Episodic few-shot training.
#[derive(Debug)]
pub struct EpisodicTrainer<'a> {
    data: &'a Dataset,
    config: TrainConfig,
    params: ModelParams,
    adam: AdamState,
    index: std::collections::BTreeMap<ClassId, Vec<usize>>,
    rng: ChaCha8Rng,
    episode: usize,
    log: Vec<LogRecord>,
}

impl<'a> EpisodicTrainer<'a> {
    pub fn new(data: &'a Dataset, config: TrainConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        if params.encoder.in_dim() != data.dim() {
            return Err(MneError::shape(format!(
                "encoder expects {} inputs, data has dimension {}",
                params.encoder.in_dim(),
                data.dim()
            )));
        }
        if config.aggregation == AggregationMode::Attention && params.depth() != config.depth {
            return Err(MneError::shape(format!(
                "config depth {} but parameters hold {} ASA rounds",
                config.depth,
                params.depth()
            )));
        }
        let index = data.class_index();
        if index.len() < config.episode.way {
            return Err(MneError::Capacity {
                needed: config.episode.way,
                available: index.len(),
            });
        }
        if config.depth > 0 && config.episode.memory_size() < config.k + 1 {
            return Err(MneError::Capacity {
                needed: config.k + 1,
                available: config.episode.memory_size(),
            });
        }
        let adam = AdamState::new(&params.block_sizes(), AdamConfig::default());
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0002);
        Ok(EpisodicTrainer {
            data,
            config,
            params,
            adam,
            index,
            rng,
            episode: 0,
            log: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn sample(&mut self) -> Result<Episode> {
        sample_episode(&self.index, self.config.episode, &mut self.rng)
    }

    /// One optimizer step on one episode. Every item is embedded against the
    /// episode memory with its own entry excluded at the root.
    pub fn step_episode(&mut self, episode: &Episode) -> Result<LogRecord> {
        let s = self.config.lr_scale(self.episode);
        let (lr_enc, lr_model) = (self.config.lr_encoder * s, self.config.lr_model * s);
        let memory = episode_memory(&self.params, self.data, episode)?;
        let items = episode.items();
        let results: Vec<_> = items
            .par_iter()
            .enumerate()
            .map(|(slot, &i)| {
                item_loss(
                    &self.params,
                    &memory,
                    &self.data.features[i],
                    Some(slot as MemoryId),
                    self.data.labels[i],
                    &self.config,
                )
            })
            .collect();
        let stats = reduce_and_step(&mut self.params, &mut self.adam, results, lr_enc, lr_model)?;
        let rec = stats.record("episode", self.episode, lr_enc, lr_model);
        self.episode += 1;
        self.log.push(rec.clone());
        Ok(rec)
    }

    pub fn run_episode(&mut self) -> Result<LogRecord> {
        let ep = self.sample()?;
        self.step_episode(&ep)
    }

    pub fn finish(self) -> (ModelParams, Vec<LogRecord>) {
        (self.params, self.log)
    }
}

pub fn train_episodic(
    data: &Dataset,
    config: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<(ModelParams, Vec<LogRecord>)> {
    let params = match init {
        Some(p) => p,
        None => config.init_params_for(data)?,
    };
    let mut trainer = EpisodicTrainer::new(data, config.clone(), params)?;
    for _ in 0..config.episodes {
        trainer.run_episode()?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests;
