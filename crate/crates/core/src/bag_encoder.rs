//! Bag encoder: attention logits from existence probabilities, the six
//! weight × pooling aggregations, entity-pair features and the multilabel
//! output layer.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BagInstance;
use crate::diff::ops::{self, Mode};
use crate::diff::ParameterSet;
use crate::embeddings::{EntityEmbedding, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::model::Net;
use crate::sentence_encoder::{affine_back, sentence_backward, sentence_forward, SentenceForward};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    Uniform,
    Softmax,
    #[default]
    Sigmoid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Average,
    #[default]
    Max,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 3] = [WeightScheme::Uniform, WeightScheme::Softmax, WeightScheme::Sigmoid];
}

impl Pooling {
    pub const ALL: [Pooling; 2] = [Pooling::Average, Pooling::Max];
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::Softmax => "softmax",
            WeightScheme::Sigmoid => "sigmoid",
        })
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Average => "average",
            Pooling::Max => "max",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "softmax" => Ok(WeightScheme::Softmax),
            "sigmoid" => Ok(WeightScheme::Sigmoid),
            _ => Err(Error::InvalidArgument(format!("unknown weight scheme `{s}`"))),
        }
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" | "avg" => Ok(Pooling::Average),
            "max" => Ok(Pooling::Max),
            _ => Err(Error::InvalidArgument(format!("unknown pooling `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub weight: WeightScheme,
    pub pooling: Pooling,
}

impl AttentionConfig {
    pub fn new(weight: WeightScheme, pooling: Pooling) -> Self {
        AttentionConfig { weight, pooling }
    }

    /// All six combinations, weight scheme major.
    pub fn all() -> Vec<AttentionConfig> {
        WeightScheme::ALL
            .iter()
            .flat_map(|&w| Pooling::ALL.iter().map(move |&p| AttentionConfig::new(w, p)))
            .collect()
    }
}

impl fmt::Display for AttentionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.weight, self.pooling)
    }
}

/// `u = W7 ReLU(W6 p + b6) + b7`. Returns `(u, hidden_pre)`.
pub fn attention_logit(p: f64, net: &Net) -> (f64, Vec<f64>) {
    let l = net.layout;
    let pre = ops::affine_unchecked(&[p], net.t(l.w6).data(), net.t(l.b6).data());
    let hidden = ops::relu(&pre);
    let u = ops::affine_unchecked(&hidden, net.t(l.w7).data(), net.t(l.b7).data())[0];
    (u, pre)
}

/// Backward of [`attention_logit`]; returns `d loss / d p`.
pub fn attention_logit_backward(p: f64, pre: &[f64], du: f64, net: &Net, grads: &mut ParameterSet) -> f64 {
    let l = net.layout;
    let hidden = ops::relu(pre);
    let dhidden = affine_back(grads, l.w7, l.b7, &hidden, net, &[du]);
    let dpre = ops::relu_backward(pre, &dhidden);
    affine_back(grads, l.w6, l.b6, &[p], net, &dpre)[0]
}

/// Output of [`attend_and_pool`].
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    /// Bag encoding.
    pub g: Vec<f64>,
    /// Reported per-sentence weight: `1/n` (uniform average), `1` (uniform
    /// max), softmax `a_j`, or sigmoid `σ(u_j)`.
    pub weights: Vec<f64>,
    /// Factor actually multiplying `s_j`; differs from `weights` only for
    /// (sigmoid, average), where it is `σ(u_j)/n`.
    pub coef: Vec<f64>,
    /// For max pooling, the sentence chosen in each dimension (first on ties).
    pub argmax: Option<Vec<usize>>,
}

fn scheme_weights(logits: &[f64], scheme: WeightScheme) -> Result<Vec<f64>> {
    Ok(match scheme {
        WeightScheme::Uniform => vec![1.0; logits.len()],
        WeightScheme::Softmax => ops::softmax(logits)?,
        WeightScheme::Sigmoid => logits.iter().map(|&u| ops::sigmoid(u)).collect(),
    })
}

/// Aggregates sentence encodings into a bag encoding `g`.
///
/// | weights | average | max |
/// |---|---|---|
/// | uniform | `(1/n) Σ s_j` | `max_j s_j[k]` |
/// | softmax | `Σ a_j s_j` | `max_j a_j s_j[k]` |
/// | sigmoid | `(1/n) Σ σ(u_j) s_j` | `max_j σ(u_j) s_j[k]` |
pub fn attend_and_pool(encodings: &[Vec<f64>], logits: &[f64], cfg: AttentionConfig) -> Result<Pooled> {
    let n = encodings.len();
    if n == 0 {
        return Err(Error::Empty("bag"));
    }
    if logits.len() != n {
        return Err(Error::ShapeMismatch {
            left: vec![n],
            right: vec![logits.len()],
        });
    }
    let dim = encodings[0].len();
    if encodings.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidArgument("sentence encodings differ in size".into()));
    }
    let w = scheme_weights(logits, cfg.weight)?;
    match cfg.pooling {
        Pooling::Average => {
            // softmax weights already sum to one; the others are averaged
            let scale = if cfg.weight == WeightScheme::Softmax {
                1.0
            } else {
                1.0 / n as f64
            };
            let coef: Vec<f64> = w.iter().map(|wj| wj * scale).collect();
            let mut g = vec![0.0; dim];
            for (s, cj) in encodings.iter().zip(&coef) {
                g.iter_mut().zip(s).for_each(|(gk, sk)| *gk += cj * sk);
            }
            let weights = if cfg.weight == WeightScheme::Sigmoid { w } else { coef.clone() };
            Ok(Pooled {
                g,
                weights,
                coef,
                argmax: None,
            })
        }
        Pooling::Max => {
            let mut g = vec![f64::NEG_INFINITY; dim];
            let mut argmax = vec![0; dim];
            for (j, (s, wj)) in encodings.iter().zip(&w).enumerate() {
                for k in 0..dim {
                    let v = wj * s[k];
                    if v > g[k] {
                        g[k] = v;
                        argmax[k] = j;
                    }
                }
            }
            Ok(Pooled {
                g,
                weights: w.clone(),
                coef: w,
                argmax: Some(argmax),
            })
        }
    }
}

/// Backward of [`attend_and_pool`]: returns `(d/ds_j, d/du_j)`.
pub fn attend_and_pool_backward(
    encodings: &[Vec<f64>],
    logits: &[f64],
    pooled: &Pooled,
    dg: &[f64],
    cfg: AttentionConfig,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = encodings.len();
    let dim = dg.len();
    let mut ds = vec![vec![0.0; dim]; n];
    // gradient with respect to each sentence's coefficient
    let mut dcoef = vec![0.0; n];
    match &pooled.argmax {
        None => {
            for j in 0..n {
                for k in 0..dim {
                    ds[j][k] = pooled.coef[j] * dg[k];
                }
                dcoef[j] = ops::dot(&encodings[j], dg);
            }
        }
        Some(argmax) => {
            for k in 0..dim {
                let j = argmax[k];
                ds[j][k] += pooled.coef[j] * dg[k];
                dcoef[j] += encodings[j][k] * dg[k];
            }
        }
    }
    let du = match cfg.weight {
        WeightScheme::Uniform => vec![0.0; n],
        WeightScheme::Softmax => ops::softmax_backward(&pooled.coef, &dcoef),
        WeightScheme::Sigmoid => {
            let scale = match cfg.pooling {
                Pooling::Average => 1.0 / n as f64,
                Pooling::Max => 1.0,
            };
            logits
                .iter()
                .zip(&dcoef)
                .map(|(&u, &dw)| ops::sigmoid_backward(ops::sigmoid(u), dw * scale))
                .collect()
        }
    };
    (ds, du)
}

/// `m = e1 ⊙ e2`.
pub fn entity_pair_vector(e1: &EntityEmbedding, e2: &EntityEmbedding) -> Result<Vec<f64>> {
    if e1.0.len() != e2.0.len() {
        return Err(Error::ShapeMismatch {
            left: vec![e1.0.len()],
            right: vec![e2.0.len()],
        });
    }
    Ok(e1.0.iter().zip(&e2.0).map(|(a, b)| a * b).collect())
}

/// Cached values of the output layer.
#[derive(Clone, Debug)]
pub struct OutputForward {
    /// `[g; m]`.
    pub input: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

/// `σ(W5 ReLU(W4 [g; m] + b4) + b5)`, one independent probability per relation.
pub fn predict_relations(g: &[f64], m: &[f64], net: &Net) -> OutputForward {
    let l = net.layout;
    let input: Vec<f64> = g.iter().chain(m).copied().collect();
    let hidden_pre = ops::affine_unchecked(&input, net.t(l.w4).data(), net.t(l.b4).data());
    let hidden = ops::relu(&hidden_pre);
    let probs = ops::affine_unchecked(&hidden, net.t(l.w5).data(), net.t(l.b5).data())
        .into_iter()
        .map(ops::sigmoid)
        .collect();
    OutputForward {
        input,
        hidden_pre,
        hidden,
        probs,
    }
}

/// Backward of [`predict_relations`] given `d loss / d probs`; returns `d loss / d g`.
pub fn predict_relations_backward(out: &OutputForward, dprobs: &[f64], net: &Net, grads: &mut ParameterSet) -> Vec<f64> {
    let l = net.layout;
    let dz: Vec<f64> = out
        .probs
        .iter()
        .zip(dprobs)
        .map(|(&p, &d)| ops::sigmoid_backward(p, d))
        .collect();
    let dhidden = affine_back(grads, l.w5, l.b5, &out.hidden, net, &dz);
    let dpre = ops::relu_backward(&out.hidden_pre, &dhidden);
    let dinput = affine_back(grads, l.w4, l.b4, &out.input, net, &dpre);
    dinput[..net.cfg.d_s].to_vec()
}

/// Per-sentence attention diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceDiagnostics {
    /// Existence probability.
    pub p: f64,
    /// Unnormalized attention logit.
    pub u: f64,
    /// Effective weight (see [`Pooled::weights`]).
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagPrediction {
    pub probs: Vec<f64>,
    pub diagnostics: Vec<SentenceDiagnostics>,
}

/// Everything cached by a bag's forward pass.
#[derive(Clone, Debug)]
pub struct BagForward {
    pub sentences: Vec<SentenceForward>,
    pub logit_pre: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub pooled: Pooled,
    pub output: OutputForward,
}

impl BagForward {
    pub fn prediction(&self) -> BagPrediction {
        BagPrediction {
            probs: self.output.probs.clone(),
            diagnostics: self
                .sentences
                .iter()
                .zip(&self.logits)
                .zip(&self.pooled.weights)
                .map(|((s, &u), &weight)| SentenceDiagnostics { p: s.p, u, weight })
                .collect(),
        }
    }
}

/// Seed of the dropout stream for sentence `index` under stream `seed`.
pub fn sentence_stream(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every sentence of the bag through the sentence encoder and
/// aggregates. In train mode, sentence `j` draws its dropout mask from
/// `sentence_stream(dropout_seed, j)`.
pub fn bag_forward(
    bag: &BagInstance,
    table: &WordEmbeddingTable,
    net: &Net,
    mode: Mode,
    dropout_seed: u64,
) -> Result<BagForward> {
    if bag.sentences.is_empty() {
        return Err(Error::Empty("bag"));
    }
    let sentences: Vec<SentenceForward> = bag
        .sentences
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(sentence_stream(dropout_seed, j as u64));
            sentence_forward(s, table, net, mode, Some(&mut rng))
        })
        .collect();
    let (logits, logit_pre): (Vec<f64>, Vec<Vec<f64>>) =
        sentences.iter().map(|s| attention_logit(s.p, net)).unzip();
    let encodings: Vec<Vec<f64>> = sentences.iter().map(|s| s.s.clone()).collect();
    let pooled = attend_and_pool(&encodings, &logits, net.cfg.attention)?;
    let output = predict_relations(&pooled.g, &bag.entity_pair, net);
    Ok(BagForward {
        sentences,
        logit_pre,
        logits,
        pooled,
        output,
    })
}

/// Backpropagates `d loss / d probs` through the whole bag path.
pub fn bag_backward(fwd: &BagForward, dprobs: &[f64], net: &Net, grads: &mut ParameterSet) {
    let dg = predict_relations_backward(&fwd.output, dprobs, net, grads);
    let encodings: Vec<Vec<f64>> = fwd.sentences.iter().map(|s| s.s.clone()).collect();
    let (ds, du) = attend_and_pool_backward(&encodings, &fwd.logits, &fwd.pooled, &dg, net.cfg.attention);
    for (j, sent) in fwd.sentences.iter().enumerate() {
        let dp = if du[j] != 0.0 {
            attention_logit_backward(sent.p, &fwd.logit_pre[j], du[j], net, grads)
        } else {
            0.0
        };
        sentence_backward(sent, &ds[j], dp, net, grads);
    }
}

/// Eval-mode prediction for one bag.
pub fn predict_bag(bag: &BagInstance, table: &WordEmbeddingTable, net: &Net) -> Result<BagPrediction> {
    Ok(bag_forward(bag, table, net, Mode::Eval, 0)?.prediction())
}
