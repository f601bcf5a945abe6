//! Sentence encoder: input vectors `[word; d_e1; d_e2]`, multi-width
//! max-pooled convolution, linear projection to `s`, and the existence head
//! `p = σ(W3 ReLU(W2 s + b2) + b3)`.

use rand::RngCore;

use crate::dataset::{SentenceInstance, MAX_DISTANCE};
use crate::diff::ops::{self, ConvOutput, Mode};
use crate::diff::{ParamId, ParameterSet};
use crate::embeddings::WordEmbeddingTable;
use crate::model::Net;

/// Distance-table row for a clipped signed distance.
#[inline]
pub fn distance_row(d: i32) -> usize {
    (d.clamp(-MAX_DISTANCE, MAX_DISTANCE) + MAX_DISTANCE) as usize
}

/// Row used for padding positions.
pub const PAD_DISTANCE_ROW: usize = (2 * MAX_DISTANCE) as usize;

/// Input sequence for the convolution, padded up to the widest filter.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSeq {
    /// Row-major `[rows, dim]`, after dropout.
    pub data: Vec<f64>,
    pub dim: usize,
    pub rows: usize,
    /// Number of real (non-padding) tokens.
    pub valid: usize,
    pub d1_rows: Vec<usize>,
    pub d2_rows: Vec<usize>,
    /// Inverted-dropout mask applied to `data`, if any.
    pub mask: Option<Vec<f64>>,
}

/// Builds `v_1..v_T`. Positions beyond the sentence (when it is shorter
/// than the widest filter) get a zero word vector and the clip-row distance
/// embeddings. Dropout is applied to the whole sequence in train mode.
pub fn input_repr(
    sentence: &SentenceInstance,
    table: &WordEmbeddingTable,
    net: &Net,
    mode: Mode,
    rng: Option<&mut dyn RngCore>,
) -> InputSeq {
    let cfg = net.cfg;
    let (d_w, d_pos) = (cfg.d_w, cfg.d_pos);
    let dim = cfg.input_dim();
    let valid = sentence.len().max(1);
    let rows = valid.max(cfg.max_width());
    let e1 = net.t(net.layout.dist_e1);
    let e2 = net.t(net.layout.dist_e2);

    let mut data = vec![0.0; rows * dim];
    let mut d1_rows = Vec::with_capacity(rows);
    let mut d2_rows = Vec::with_capacity(rows);
    for i in 0..rows {
        let (r1, r2) = if i < sentence.len() {
            (distance_row(sentence.d1[i]), distance_row(sentence.d2[i]))
        } else {
            (PAD_DISTANCE_ROW, PAD_DISTANCE_ROW)
        };
        let row = &mut data[i * dim..(i + 1) * dim];
        if i < sentence.len() {
            row[..d_w].copy_from_slice(table.row(sentence.word_ids[i]));
        }
        row[d_w..d_w + d_pos].copy_from_slice(e1.row(r1));
        row[d_w + d_pos..].copy_from_slice(e2.row(r2));
        d1_rows.push(r1);
        d2_rows.push(r2);
    }

    let mask = match (mode, rng) {
        (Mode::Train, Some(rng)) if cfg.dropout > 0.0 => {
            let mask = ops::dropout_mask(data.len(), cfg.dropout, rng);
            data.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
            Some(mask)
        }
        _ => None,
    };

    InputSeq {
        data,
        dim,
        rows,
        valid,
        d1_rows,
        d2_rows,
        mask,
    }
}

/// Cached intermediate values of one sentence's forward pass.
#[derive(Clone, Debug)]
pub struct SentenceForward {
    pub input: InputSeq,
    pub conv: Vec<ConvOutput>,
    /// `[c_2; c_3; c_4; c_5]`.
    pub pooled: Vec<f64>,
    /// Sentence encoding.
    pub s: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    /// Existence probability.
    pub p: f64,
}

/// `s = W1 [c_x for each width] + b1`. Returns `(s, conv outputs, pooled)`.
pub fn encode(input: &InputSeq, net: &Net) -> (Vec<f64>, Vec<ConvOutput>, Vec<f64>) {
    let mut conv = Vec::with_capacity(net.layout.conv.len());
    let mut pooled = Vec::with_capacity(net.cfg.filters * net.layout.conv.len());
    for ids in &net.layout.conv {
        let out = ops::conv_encode(
            &input.data,
            input.dim,
            input.valid,
            ids.width,
            net.t(ids.kernel),
            net.t(ids.bias),
        )
        .expect("layout shapes are validated");
        pooled.extend_from_slice(&out.values);
        conv.push(out);
    }
    let s = ops::affine_unchecked(&pooled, net.t(net.layout.w1).data(), net.t(net.layout.b1).data());
    (s, conv, pooled)
}

/// `p = σ(W3 ReLU(W2 s + b2) + b3)`. Returns `(p, hidden_pre, hidden)`.
pub fn existence_head(s: &[f64], net: &Net) -> (f64, Vec<f64>, Vec<f64>) {
    let l = net.layout;
    let hidden_pre = ops::affine_unchecked(s, net.t(l.w2).data(), net.t(l.b2).data());
    let hidden = ops::relu(&hidden_pre);
    let z = ops::affine_unchecked(&hidden, net.t(l.w3).data(), net.t(l.b3).data())[0];
    (ops::sigmoid(z), hidden_pre, hidden)
}

pub fn sentence_forward(
    sentence: &SentenceInstance,
    table: &WordEmbeddingTable,
    net: &Net,
    mode: Mode,
    rng: Option<&mut dyn RngCore>,
) -> SentenceForward {
    let input = input_repr(sentence, table, net, mode, rng);
    let (s, conv, pooled) = encode(&input, net);
    let (p, hidden_pre, hidden) = existence_head(&s, net);
    SentenceForward {
        input,
        conv,
        pooled,
        s,
        hidden_pre,
        hidden,
        p,
    }
}

/// Backpropagates `d loss / d s` and `d loss / d p` into `grads`.
/// Word vectors are frozen, so their gradient is dropped.
pub fn sentence_backward(fwd: &SentenceForward, ds: &[f64], dp: f64, net: &Net, grads: &mut ParameterSet) {
    let l = net.layout;
    let mut ds_total = ds.to_vec();

    if dp != 0.0 {
        let dz = ops::sigmoid_backward(fwd.p, dp);
        let dhidden = affine_back(grads, l.w3, l.b3, &fwd.hidden, net, &[dz]);
        let dpre = ops::relu_backward(&fwd.hidden_pre, &dhidden);
        let ds_head = affine_back(grads, l.w2, l.b2, &fwd.s, net, &dpre);
        ds_total.iter_mut().zip(&ds_head).for_each(|(a, b)| *a += b);
    }

    let dpooled = affine_back(grads, l.w1, l.b1, &fwd.pooled, net, &ds_total);

    let input = &fwd.input;
    let mut dinput = vec![0.0; input.data.len()];
    let f = net.cfg.filters;
    for (i, ids) in l.conv.iter().enumerate() {
        let (dk, db) = grads.pair_mut(ids.kernel, ids.bias);
        ops::conv_backward(
            &input.data,
            input.dim,
            ids.width,
            net.t(ids.kernel),
            &fwd.conv[i].argmax,
            &dpooled[i * f..(i + 1) * f],
            dk.data_mut(),
            db.data_mut(),
            Some(&mut dinput),
        );
    }
    if let Some(mask) = &input.mask {
        dinput.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
    }

    let (d_w, d_pos) = (net.cfg.d_w, net.cfg.d_pos);
    for t in 0..input.rows {
        let row = &dinput[t * input.dim..(t + 1) * input.dim];
        let g1 = &row[d_w..d_w + d_pos];
        let g2 = &row[d_w + d_pos..];
        grads[l.dist_e1]
            .row_mut(input.d1_rows[t])
            .iter_mut()
            .zip(g1)
            .for_each(|(a, b)| *a += b);
        grads[l.dist_e2]
            .row_mut(input.d2_rows[t])
            .iter_mut()
            .zip(g2)
            .for_each(|(a, b)| *a += b);
    }
}

/// Affine backward writing into `grads[w]`, `grads[b]`; returns the input gradient.
pub(crate) fn affine_back(
    grads: &mut ParameterSet,
    w: ParamId,
    b: ParamId,
    x: &[f64],
    net: &Net,
    grad_out: &[f64],
) -> Vec<f64> {
    let (dw, db) = grads.pair_mut(w, b);
    ops::affine_backward(x, net.t(w).data(), grad_out, dw.data_mut(), db.data_mut())
}
