#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relex::bag_encoder::AttentionConfig;
use relex::dataset::{Bag, BagInstance, Featurizer, PairId, Sentence, Span};
use relex::embeddings::{PretrainedVectors, Vocabulary, WordEmbeddingTable};
use relex::diff::ops::Mode;
use relex::diff::ParameterSet;
use relex::model::{Model, ModelConfig};
use relex::training::{bag_batch_grads, combined_coefficients, sentence_batch_grads};

pub struct Tiny {
    pub vocab: Vocabulary,
    pub vectors: PretrainedVectors,
    pub table: WordEmbeddingTable,
    pub model: Model,
    pub bag: BagInstance,
    pub direct: Vec<(relex::dataset::SentenceInstance, f64)>,
}

pub fn tiny_config(attention: AttentionConfig) -> ModelConfig {
    ModelConfig {
        d_w: 8,
        d_pos: 3,
        filter_widths: vec![2, 3, 4, 5],
        filters: 4,
        d_s: 8,
        exist_hidden: 6,
        attn_hidden: 5,
        out_hidden: 7,
        n_relations: 3,
        dropout: 0.1,
        attention,
    }
}

fn sentence(text: &str, e1: usize, e2: usize) -> Sentence {
    let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
    Sentence::new(tokens, vec![Span::new(e1, e1 + 1)], vec![Span::new(e2, e2 + 1)]).unwrap()
}

/// Full model with tiny dimensions, one bag of 3 sentences and a 4-sentence direct batch.
pub fn tiny(attention: AttentionConfig, seed: u64) -> Tiny {
    let words = [
        "alice", "bob", "met", "in", "paris", "founded", "the", "company", "with", "later", "and", "x",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = PretrainedVectors::new(8);
    for w in words {
        vectors
            .insert(w, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
    }
    let sentences = vec![
        sentence("alice met bob in paris", 0, 2),
        sentence("bob founded the company with alice later", 5, 0),
        sentence("alice and bob", 0, 2),
    ];
    let vocab = Vocabulary::build(words.iter().copied().chain(["unseenword"]), 0).unwrap();
    let table = WordEmbeddingTable::build(&vocab, &vectors, seed).unwrap();
    let bag = Bag {
        pair: PairId::new("alice", "bob"),
        e1_mentions: vec!["alice".into()],
        e2_mentions: vec!["bob".into()],
        labels: vec![true, false, true],
        sentences,
    };
    let feat = Featurizer {
        vocab: &vocab,
        table: &table,
        pretrained: &vectors,
        max_len: 120,
    };
    let bag = feat.bag(&bag).unwrap();
    let direct = vec![
        (feat.sentence(&sentence("bob founded x", 0, 2)), 1.0),
        (feat.sentence(&sentence("x met alice in paris", 2, 4)), 0.0),
        (feat.sentence(&sentence("the company and bob", 1, 3)), 1.0),
        (feat.sentence(&sentence("paris x", 0, 1)), 0.0),
    ];
    let model = Model::new(tiny_config(attention), seed).unwrap();
    Tiny {
        vocab,
        vectors,
        table,
        model,
        bag,
        direct,
    }
}

/// Combined loss of the tiny bag and direct batch with fixed dropout masks,
/// and its analytic gradient.
pub fn combined_grads(t: &Tiny, params: &ParameterSet, lambda: f64) -> (f64, ParameterSet) {
    let net = t.model.net_with(params);
    let (dist, mut g) = bag_batch_grads(&[&t.bag], &t.table, &net, Mode::Train, 11).unwrap();
    let batch: Vec<_> = t.direct.iter().map(|(s, l)| (s, *l)).collect();
    let (direct, gd) = sentence_batch_grads(&batch, &t.table, &net, Mode::Train, 23).unwrap();
    let (a, b) = combined_coefficients(lambda);
    g.scale(a);
    g.add_scaled(&gd, b).unwrap();
    (a * dist + b * direct, g)
}
