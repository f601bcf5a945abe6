//! Losses and the optimization loop: shuffled minibatches, Adam, gradient
//! clipping, validation AUC each epoch, early stopping, several seeds.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bag_encoder::{bag_backward, bag_forward, sentence_stream};
use crate::dataset::{
    split_train_val, Bag, BagInstance, DirectExample, DirectInstance, Featurizer, PairId, RelationInventory,
};
use crate::diff::ops::{self, Mode};
use crate::diff::{adam_step, AdamConfig, AdamState, ParameterSet};
use crate::embeddings::WordEmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, RECALL_CUTOFF};
use crate::model::{Model, ModelConfig, Net};
use crate::dataset::SentenceInstance;
use crate::sentence_encoder::{sentence_backward, sentence_forward};

/// Minibatch gradients are computed in this many contiguous chunks and
/// summed in chunk order, so results do not depend on the thread count.
const GRAD_CHUNKS: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupervisionMode {
    /// Bag loss only.
    #[default]
    #[serde(rename = "distsup")]
    DistSup,
    /// Direct examples merged into the bag stream as singleton bags.
    #[serde(rename = "as-bags")]
    AsBags,
    /// Bag loss plus the λ-weighted sentence-level existence loss.
    #[serde(rename = "multitask")]
    MultiTask,
}

impl SupervisionMode {
    pub const ALL: [SupervisionMode; 3] = [SupervisionMode::DistSup, SupervisionMode::AsBags, SupervisionMode::MultiTask];
}

impl fmt::Display for SupervisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SupervisionMode::DistSup => "distsup",
            SupervisionMode::AsBags => "as-bags",
            SupervisionMode::MultiTask => "multitask",
        })
    }
}

impl FromStr for SupervisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distsup" => Ok(SupervisionMode::DistSup),
            "as-bags" => Ok(SupervisionMode::AsBags),
            "multitask" => Ok(SupervisionMode::MultiTask),
            _ => Err(Error::InvalidArgument(format!(
                "unknown supervision mode `{s}` (expected distsup, as-bags or multitask)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: SupervisionMode,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Fraction of training bags kept for training; the rest validate.
    pub train_fraction: f64,
    /// Seeds the train/validation split and the OOV word vector.
    pub data_seed: u64,
    pub min_freq: usize,
    pub max_len: usize,
    pub adam: AdamConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: SupervisionMode::DistSup,
            lambda: 1.0,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            seeds: vec![1, 2, 3],
            grad_clip: 5.0,
            train_fraction: 0.9,
            data_seed: 0,
            min_freq: 0,
            max_len: crate::dataset::MAX_SENTENCE_LEN,
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad(format!("grad_clip must be >= 0, got {}", self.grad_clip));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.max_len == 0 {
            return bad("max_len must be >= 1".into());
        }
        if !(self.adam.lr > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.adam.lr));
        }
        self.model.validate()
    }
}

/// `(1/(λ+1), λ/(λ+1))`.
pub fn combined_coefficients(lambda: f64) -> (f64, f64) {
    (1.0 / (lambda + 1.0), lambda / (lambda + 1.0))
}

pub fn combined_loss(distsup: f64, directsup: f64, lambda: f64) -> f64 {
    let (a, b) = combined_coefficients(lambda);
    a * distsup + b * directsup
}

/// Sum over relations of `bce(prob_k, bit_k)`.
pub fn distsup_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            left: vec![probs.len()],
            right: vec![labels.len()],
        });
    }
    Ok(probs.iter().zip(labels).map(|(&p, &t)| ops::bce(p, t)).sum())
}

/// Sum of `bce(p_s, label_s)` over a batch of sentences.
pub fn directsup_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if let Some(l) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::InvalidArgument(format!("direct labels must be 0 or 1, got {l}")));
    }
    distsup_loss(probs, labels)
}

/// Featurized data for one training run.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<BagInstance>,
    pub val: Vec<BagInstance>,
    pub test: Vec<BagInstance>,
    pub direct: Vec<DirectInstance>,
    /// Direct examples as singleton bags (for [`SupervisionMode::AsBags`]).
    pub direct_bags: Vec<BagInstance>,
}

/// A direct example as a singleton bag: its relation bit is set when the
/// example is positive and the relation is in the inventory, otherwise the
/// bag is negative.
pub fn direct_as_bag(ex: &DirectExample, index: usize, relations: &RelationInventory) -> Bag {
    let mut labels = vec![false; relations.len()];
    if ex.label == 1 {
        if let Some(r) = ex.relation.as_deref().and_then(|r| relations.index_of(r)) {
            labels[r] = true;
        }
    }
    let e1 = ex.sentence.e1_mentions();
    let e2 = ex.sentence.e2_mentions();
    let name = |m: &[String]| m.first().cloned().unwrap_or_default();
    Bag {
        pair: PairId::new(format!("direct{index}:{}", name(&e1)), name(&e2)),
        e1_mentions: e1,
        e2_mentions: e2,
        labels,
        sentences: vec![ex.sentence.clone()],
    }
}

impl Corpus {
    pub fn prepare(
        featurizer: &Featurizer,
        train_bags: Vec<Bag>,
        test_bags: &[Bag],
        direct: &[DirectExample],
        relations: &RelationInventory,
        cfg: &TrainConfig,
    ) -> Result<Corpus> {
        let (train, val) = split_train_val(train_bags, cfg.train_fraction, cfg.data_seed)?;
        let direct_bags: Vec<Bag> = direct
            .iter()
            .enumerate()
            .map(|(i, ex)| direct_as_bag(ex, i, relations))
            .collect();
        Ok(Corpus {
            train: featurizer.bags(&train)?,
            val: featurizer.bags(&val)?,
            test: featurizer.bags(test_bags)?,
            direct: direct.iter().map(|ex| featurizer.direct(ex)).collect(),
            direct_bags: featurizer.bags(&direct_bags)?,
        })
    }
}

/// Patience-based stopping on validation AUC.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub max_epochs: usize,
    pub epoch: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_improvement: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        EarlyStopping {
            patience,
            max_epochs,
            epoch: 0,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    /// Records the validation AUC of the next epoch. Only a strictly
    /// greater AUC counts as an improvement.
    pub fn observe(&mut self, auc: f64) -> StopDecision {
        self.epoch += 1;
        let improved = auc > self.best;
        if improved {
            self.best = auc;
            self.best_epoch = self.epoch;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        StopDecision {
            improved,
            stop: self.since_improvement >= self.patience || self.epoch >= self.max_epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub seed: u64,
    pub epoch: usize,
    pub distsup_loss: f64,
    pub directsup_loss: f64,
    pub val_auc: f64,
    pub seconds: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "seed={}\tepoch={}\tdistsup_loss={:.6}\tdirectsup_loss={:.6}\tval_auc={:.6}\tseconds={:.3}",
            self.seed, self.epoch, self.distsup_loss, self.directsup_loss, self.val_auc, self.seconds
        )
    }
}

/// Result of training one seed: the parameters of its best validation epoch.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub epochs_run: usize,
    pub log: Vec<EpochLog>,
    pub model: Model,
    pub adam: AdamState,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub runs: Vec<SeedRun>,
    /// Index into `runs` of the seed with the best validation AUC (first on ties).
    pub best: usize,
}

impl TrainOutcome {
    pub fn best_run(&self) -> &SeedRun {
        &self.runs[self.best]
    }
}

/// Independent random streams of one seed.
fn stream(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(sentence_stream(seed, 0x5EED), |acc, &p| sentence_stream(acc, p))
}

const SHUFFLE_STREAM: u64 = 1;
const BAG_DROPOUT_STREAM: u64 = 2;
const DIRECT_STREAM: u64 = 3;
const DIRECT_DROPOUT_STREAM: u64 = 4;
const INIT_STREAM: u64 = 5;

/// Summed loss and gradient over `items`, computed in fixed chunks.
fn chunked_grads<T: Sync>(
    items: &[T],
    template: &ParameterSet,
    f: impl Fn(&T, usize, &mut ParameterSet) -> Result<f64> + Sync,
) -> Result<(f64, ParameterSet)> {
    let chunk = items.len().div_ceil(GRAD_CHUNKS).max(1);
    let parts: Vec<Result<(f64, ParameterSet)>> = items
        .par_chunks(chunk)
        .enumerate()
        .map(|(c, slice)| {
            let mut g = template.zeros_like();
            let mut loss = 0.0;
            for (i, item) in slice.iter().enumerate() {
                loss += f(item, c * chunk + i, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = template.zeros_like();
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_scaled(&g, 1.0)?;
    }
    Ok((loss, total))
}

/// DistSup loss and gradient of a bag minibatch.
pub fn bag_batch_grads(
    bags: &[&BagInstance],
    table: &WordEmbeddingTable,
    net: &Net,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(f64, ParameterSet)> {
    chunked_grads(bags, net.params, |bag, i, g| {
        let fwd = bag_forward(bag, table, net, mode, sentence_stream(dropout_seed, i as u64))?;
        let probs = &fwd.output.probs;
        let loss = distsup_loss(probs, &bag.labels)?;
        let dprobs: Vec<f64> = probs.iter().zip(&bag.labels).map(|(&p, &t)| ops::bce_grad(p, t)).collect();
        bag_backward(&fwd, &dprobs, net, g);
        Ok(loss)
    })
}

/// DirectSup loss and gradient of a batch of labelled sentences.
pub fn sentence_batch_grads(
    batch: &[(&SentenceInstance, f64)],
    table: &WordEmbeddingTable,
    net: &Net,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(f64, ParameterSet)> {
    chunked_grads(batch, net.params, |&(sentence, label), i, g| {
        let mut rng = ChaCha8Rng::seed_from_u64(sentence_stream(dropout_seed, i as u64));
        let fwd = sentence_forward(sentence, table, net, mode, Some(&mut rng));
        let loss = ops::bce(fwd.p, label);
        let zero = vec![0.0; fwd.s.len()];
        sentence_backward(&fwd, &zero, ops::bce_grad(fwd.p, label), net, g);
        Ok(loss)
    })
}

/// Cycles through direct examples in reshuffled order and samples sentences
/// from negative training bags, on its own random stream.
struct DirectStream<'a> {
    direct: &'a [DirectInstance],
    negatives: Vec<(usize, usize)>,
    bags: &'a [BagInstance],
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl<'a> DirectStream<'a> {
    fn new(direct: &'a [DirectInstance], bags: &'a [BagInstance], seed: u64) -> Self {
        let negatives = bags
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.is_positive())
            .flat_map(|(i, b)| (0..b.sentences.len()).map(move |j| (i, j)))
            .collect();
        DirectStream {
            direct,
            negatives,
            bags,
            order: Vec::new(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn next_batch(&mut self, n: usize) -> Vec<(&'a SentenceInstance, f64)> {
        let mut batch = Vec::with_capacity(2 * n);
        if !self.direct.is_empty() {
            for _ in 0..n {
                if self.cursor == self.order.len() {
                    self.order = (0..self.direct.len()).collect();
                    self.order.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                let ex = &self.direct[self.order[self.cursor]];
                self.cursor += 1;
                batch.push((&ex.sentence, ex.label));
            }
        }
        if !self.negatives.is_empty() {
            for _ in 0..n {
                let (b, s) = self.negatives[self.rng.random_range(0..self.negatives.len())];
                batch.push((&self.bags[b].sentences[s], 0.0));
            }
        }
        batch
    }
}

/// Trains every seed of `cfg` and keeps each seed's best validation epoch.
pub fn train(cfg: &TrainConfig, corpus: &Corpus, table: &WordEmbeddingTable) -> Result<TrainOutcome> {
    train_with_log(cfg, corpus, table, &mut |_| {})
}

pub fn train_with_log(
    cfg: &TrainConfig,
    corpus: &Corpus,
    table: &WordEmbeddingTable,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if table.dim() != cfg.model.d_w {
        return Err(Error::InvalidArgument(format!(
            "word vectors have dimension {}, model expects d_w = {}",
            table.dim(),
            cfg.model.d_w
        )));
    }
    if corpus.train.is_empty() {
        return Err(Error::Empty("training bags"));
    }
    if corpus.val.is_empty() {
        return Err(Error::Empty("validation bags"));
    }
    if let Some(bag) = corpus.train.iter().chain(&corpus.val).find(|b| b.labels.len() != cfg.model.n_relations) {
        return Err(Error::InvalidArgument(format!(
            "bag {} has {} relation labels, model expects {}",
            bag.pair,
            bag.labels.len(),
            cfg.model.n_relations
        )));
    }
    if cfg.mode != SupervisionMode::DistSup && corpus.direct.is_empty() {
        return Err(Error::InvalidArgument(format!("mode {} needs direct examples", cfg.mode)));
    }
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        runs.push(train_seed(cfg, corpus, table, seed, on_epoch)?);
    }
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.best_val_auc > runs[best].best_val_auc {
            best = i;
        }
    }
    Ok(TrainOutcome { runs, best })
}

fn train_seed(
    cfg: &TrainConfig,
    corpus: &Corpus,
    table: &WordEmbeddingTable,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<SeedRun> {
    let mut model = Model::new(cfg.model.clone(), stream(seed, &[INIT_STREAM]))?;
    let mut adam = AdamState::new(&model.params);
    let stream_bags: Vec<&BagInstance> = match cfg.mode {
        SupervisionMode::AsBags => corpus.train.iter().chain(&corpus.direct_bags).collect(),
        _ => corpus.train.iter().collect(),
    };
    let mut order: Vec<usize> = (0..stream_bags.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(stream(seed, &[SHUFFLE_STREAM]));
    let mut direct = DirectStream::new(&corpus.direct, &corpus.train, stream(seed, &[DIRECT_STREAM]));
    let (c_dist, c_direct) = combined_coefficients(cfg.lambda);

    let mut stopping = EarlyStopping::new(cfg.patience, cfg.max_epochs);
    let mut best: Option<(ParameterSet, AdamState)> = None;
    let mut log = Vec::new();
    let mut step: u64 = 0;
    loop {
        let started = Instant::now();
        let epoch = stopping.epoch + 1;
        order.shuffle(&mut shuffle_rng);
        let (mut dist_total, mut direct_total) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let bags: Vec<&BagInstance> = batch.iter().map(|&i| stream_bags[i]).collect();
            let net = model.net();
            let (dist_loss, mut grads) =
                bag_batch_grads(&bags, table, &net, Mode::Train, stream(seed, &[BAG_DROPOUT_STREAM, step]))?;
            if cfg.mode == SupervisionMode::MultiTask {
                let sentences = direct.next_batch(cfg.batch_size);
                if cfg.lambda > 0.0 {
                    let (direct_loss, direct_grads) = sentence_batch_grads(
                        &sentences,
                        table,
                        &net,
                        Mode::Train,
                        stream(seed, &[DIRECT_DROPOUT_STREAM, step]),
                    )?;
                    grads.scale(c_dist);
                    grads.add_scaled(&direct_grads, c_direct)?;
                    direct_total += direct_loss;
                }
            }
            dist_total += dist_loss;
            if !(dist_total.is_finite() && direct_total.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite loss at seed {seed}, epoch {epoch}, step {step}"
                )));
            }
            if cfg.grad_clip > 0.0 {
                grads.clip_global_norm(cfg.grad_clip);
            }
            adam_step(&mut model.params, &grads, &mut adam, &cfg.adam).map_err(|e| match e {
                Error::NonFinite(name) => Error::Diverged(format!(
                    "non-finite gradient in `{name}` at seed {seed}, epoch {epoch}, step {step}"
                )),
                other => other,
            })?;
        }
        let (_, val_auc) = evaluate(&corpus.val, table, &model.net(), RECALL_CUTOFF)?;
        let entry = EpochLog {
            seed,
            epoch,
            distsup_loss: dist_total,
            directsup_loss: direct_total,
            val_auc,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.push(entry);
        let decision = stopping.observe(val_auc);
        if decision.improved {
            best = Some((model.params.clone(), adam.clone()));
        }
        if decision.stop {
            break;
        }
    }
    let (params, adam) = best.expect("at least one epoch ran");
    Ok(SeedRun {
        seed,
        best_epoch: stopping.best_epoch,
        best_val_auc: stopping.best,
        epochs_run: stopping.epoch,
        log,
        model: Model::from_params(cfg.model.clone(), params)?,
        adam,
    })
}
