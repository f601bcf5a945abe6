//! Ranked precision/recall over all (pair, relation) predictions, the
//! recall-truncated AUC, and the experiment harnesses built on top of it.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bag_encoder::{predict_bag, AttentionConfig, Pooling, SentenceDiagnostics, WeightScheme};
use crate::dataset::{Bag, BagInstance, Featurizer, PairId};
use crate::embeddings::WordEmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{Model, Net};
use crate::training::{train, Corpus, SupervisionMode, TrainConfig};

/// Default recall cutoff.
pub const RECALL_CUTOFF: f64 = 0.4;

/// λ grid of the sweep.
pub const LAMBDA_GRID: [f64; 9] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pair: PairId,
    pub relation: usize,
    pub confidence: f64,
    pub gold: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    /// Confidence of the record at this rank.
    pub threshold: f64,
    /// Whether the record at this rank is a gold positive.
    pub hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per rank, highest confidence first.
    pub points: Vec<PrPoint>,
    pub positives: usize,
}

fn rank_order(a: &PredictionRecord, b: &PredictionRecord) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.pair.cmp(&b.pair))
        .then_with(|| a.relation.cmp(&b.relation))
}

/// Sorts by confidence (descending; ties by pair id, then relation index)
/// and emits cumulative precision and recall at every rank.
pub fn pr_curve(records: &[PredictionRecord]) -> Result<PrCurve> {
    let positives = records.iter().filter(|r| r.gold).count();
    if positives == 0 {
        return Err(Error::InvalidArgument("no gold positives: recall is undefined".into()));
    }
    let mut order: Vec<&PredictionRecord> = records.iter().collect();
    order.sort_by(|a, b| rank_order(a, b));
    let mut tp = 0usize;
    let points = order
        .iter()
        .enumerate()
        .map(|(k, r)| {
            tp += usize::from(r.gold);
            PrPoint {
                precision: tp as f64 / (k + 1) as f64,
                recall: tp as f64 / positives as f64,
                threshold: r.confidence,
                hit: r.gold,
            }
        })
        .collect();
    Ok(PrCurve { points, positives })
}

/// Area under the PR curve for recall in `[0, cutoff]`.
///
/// Each true positive adds `precision · 1/P`; the one that crosses the
/// cutoff contributes only the part of its recall step below it.
pub fn auc_at_recall(curve: &PrCurve, cutoff: f64) -> f64 {
    let p = curve.positives as f64;
    let mut auc = 0.0;
    let mut tp = 0usize;
    for pt in curve.points.iter().filter(|pt| pt.hit) {
        let before = tp as f64 / p;
        tp += 1;
        if tp as f64 / p < cutoff {
            auc += pt.precision / p;
        } else {
            auc += pt.precision * (cutoff - before).max(0.0);
            break;
        }
    }
    auc.min(cutoff)
}

/// One record per (bag, relation), in bag order.
pub fn prediction_records(bags: &[BagInstance], table: &WordEmbeddingTable, net: &Net) -> Result<Vec<PredictionRecord>> {
    let per_bag: Vec<Vec<PredictionRecord>> = bags
        .par_iter()
        .map(|bag| {
            let pred = predict_bag(bag, table, net)?;
            Ok(pred
                .probs
                .iter()
                .zip(&bag.labels)
                .enumerate()
                .map(|(relation, (&confidence, &gold))| PredictionRecord {
                    pair: bag.pair.clone(),
                    relation,
                    confidence,
                    gold: gold > 0.0,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_bag.into_iter().flatten().collect())
}

/// PR curve and AUC@`cutoff` of a model on a set of bags.
pub fn evaluate(bags: &[BagInstance], table: &WordEmbeddingTable, net: &Net, cutoff: f64) -> Result<(PrCurve, f64)> {
    let curve = pr_curve(&prediction_records(bags, table, net)?)?;
    let auc = auc_at_recall(&curve, cutoff);
    Ok((curve, auc))
}

/// `rank confidence precision recall` lines.
pub fn format_pr_curve(curve: &PrCurve) -> String {
    let mut out = String::from("rank\tconfidence\tprecision\trecall\n");
    for (k, pt) in curve.points.iter().enumerate() {
        let _ = writeln!(out, "{}\t{:.17e}\t{:.17e}\t{:.17e}", k + 1, pt.threshold, pt.precision, pt.recall);
    }
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Test AUC of every seed's best-validation model.
pub fn seed_test_aucs(cfg: &TrainConfig, corpus: &Corpus, table: &WordEmbeddingTable) -> Result<Vec<f64>> {
    let outcome = train(cfg, corpus, table)?;
    outcome
        .runs
        .iter()
        .map(|run| evaluate(&corpus.test, table, &run.model.net(), RECALL_CUTOFF).map(|(_, auc)| auc))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub mode: SupervisionMode,
    pub weight: WeightScheme,
    pub pooling: Pooling,
    pub aucs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Set when the cell's training aborted.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    pub fn cell(&self, mode: SupervisionMode, weight: WeightScheme, pooling: Pooling) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && c.weight == weight && c.pooling == pooling)
    }

    /// Tab-delimited table, one row per cell, mode-major.
    pub fn to_table(&self) -> String {
        let mut out = String::from("supervision\tweights\tpooling\tmean_auc\tstd_auc\tn\taucs\n");
        for c in &self.cells {
            let aucs: Vec<String> = c.aucs.iter().map(|a| format!("{a:.6}")).collect();
            match &c.error {
                None => {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
                        c.mode,
                        c.weight,
                        c.pooling,
                        c.mean,
                        c.std,
                        c.aucs.len(),
                        aucs.join(",")
                    );
                }
                Some(e) => {
                    let _ = writeln!(out, "{}\t{}\t{}\tFAILED\tFAILED\t0\t{}", c.mode, c.weight, c.pooling, e);
                }
            }
        }
        out
    }
}

/// Every supervision mode × weight scheme × pooling combination, each over
/// all seeds of `base`. A cell that fails is recorded and the rest continue.
pub fn ablation_grid(base: &TrainConfig, corpus: &Corpus, table: &WordEmbeddingTable) -> AblationGrid {
    let mut jobs = Vec::new();
    for mode in SupervisionMode::ALL {
        for att in AttentionConfig::all() {
            jobs.push((mode, att));
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(mode, att)| {
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.model.attention = att;
            let (aucs, error) = match seed_test_aucs(&cfg, corpus, table) {
                Ok(aucs) => (aucs, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            let (mean, std) = mean_std(&aucs);
            AblationCell {
                mode,
                weight: att.weight,
                pooling: att.pooling,
                aucs,
                mean,
                std,
                error,
            }
        })
        .collect();
    AblationGrid { cells }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub aucs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// MultiTask training at each λ, over all seeds of `base`.
pub fn lambda_sweep(values: &[f64], base: &TrainConfig, corpus: &Corpus, table: &WordEmbeddingTable) -> Result<Vec<SweepPoint>> {
    if let Some(bad) = values.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {bad}")));
    }
    values
        .par_iter()
        .map(|&lambda| {
            let mut cfg = base.clone();
            cfg.mode = SupervisionMode::MultiTask;
            cfg.lambda = lambda;
            let aucs = seed_test_aucs(&cfg, corpus, table)?;
            let (mean, std) = mean_std(&aucs);
            Ok(SweepPoint { lambda, aucs, mean, std })
        })
        .collect()
}

/// `lambda mean_auc std_auc aucs` lines; λ is plotted on a log axis by consumers.
pub fn format_sweep(points: &[SweepPoint]) -> String {
    let mut out = String::from("lambda\tmean_auc\tstd_auc\taucs\n");
    for p in points {
        let aucs: Vec<String> = p.aucs.iter().map(|a| format!("{a:.6}")).collect();
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{}", p.lambda, p.mean, p.std, aucs.join(","));
    }
    out
}

/// Per-sentence weights of one bag under one or more models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inspection {
    pub pair: PairId,
    /// `(label, attention config)` per model, in column order.
    pub models: Vec<(String, AttentionConfig)>,
    pub sentences: Vec<String>,
    /// `diagnostics[m][j]`: model `m`, sentence `j`.
    pub diagnostics: Vec<Vec<SentenceDiagnostics>>,
    pub probs: Vec<Vec<f64>>,
}

pub fn find_bag<'a>(bags: &'a [Bag], pair: &PairId) -> Result<&'a Bag> {
    bags.iter()
        .find(|b| &b.pair == pair)
        .ok_or_else(|| Error::UnknownBag(pair.to_string()))
}

/// One column of an inspection: a model and the featurizer it was trained with.
pub struct InspectModel<'a> {
    pub label: String,
    pub model: &'a Model,
    pub featurizer: Featurizer<'a>,
}

pub fn inspect_bag(bag: &Bag, models: &[InspectModel]) -> Result<Inspection> {
    let mut diagnostics = Vec::new();
    let mut probs = Vec::new();
    for m in models {
        let instance = m.featurizer.bag(bag)?;
        let pred = predict_bag(&instance, m.featurizer.table, &m.model.net())?;
        diagnostics.push(pred.diagnostics);
        probs.push(pred.probs);
    }
    Ok(Inspection {
        pair: bag.pair.clone(),
        models: models.iter().map(|m| (m.label.clone(), m.model.cfg.attention)).collect(),
        sentences: bag.sentences.iter().map(|s| s.text()).collect(),
        diagnostics,
        probs,
    })
}

impl Inspection {
    /// One column per model weight, then the sentence; `p` and `u` follow.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# pair\t{}", self.pair);
        for (label, att) in &self.models {
            let kind = match att.weight {
                WeightScheme::Softmax => "softmax a_j",
                WeightScheme::Sigmoid => "sigmoid(u_j)",
                WeightScheme::Uniform => "uniform",
            };
            let _ = writeln!(out, "# {label}\t{att}\tweight = {kind}");
        }
        let mut header: Vec<String> = self.models.iter().map(|(l, _)| format!("{l}_weight")).collect();
        header.push("sentence".into());
        for (l, _) in &self.models {
            header.push(format!("{l}_p"));
            header.push(format!("{l}_u"));
        }
        let _ = writeln!(out, "{}", header.join("\t"));
        for (j, text) in self.sentences.iter().enumerate() {
            let mut row: Vec<String> = self.diagnostics.iter().map(|d| format!("{:.4}", d[j].weight)).collect();
            row.push(text.clone());
            for d in &self.diagnostics {
                row.push(format!("{:.4}", d[j].p));
                row.push(format!("{:.4}", d[j].u));
            }
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        out
    }
}
