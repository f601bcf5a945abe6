//! Model-ready views of sentences and bags: vocabulary indices, position
//! features and precomputed entity-pair vectors.

use super::{Bag, DirectExample, PairId, Sentence};
use crate::bag_encoder::entity_pair_vector;
use crate::embeddings::{entity_embedding, PretrainedVectors, Vocabulary, WordEmbeddingTable};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceInstance {
    pub word_ids: Vec<usize>,
    /// Clipped signed distances to the closest e1 / e2 mention.
    pub d1: Vec<i32>,
    pub d2: Vec<i32>,
    pub tokens: Vec<String>,
}

impl SentenceInstance {
    pub fn new(sentence: &Sentence, vocab: &Vocabulary, max_len: usize) -> Self {
        let s = sentence.truncated(max_len);
        let (d1, d2) = s.position_features();
        SentenceInstance {
            word_ids: s.tokens.iter().map(|t| vocab.index_of(t)).collect(),
            d1,
            d2,
            tokens: s.tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagInstance {
    pub pair: PairId,
    pub sentences: Vec<SentenceInstance>,
    /// 0/1 per relation.
    pub labels: Vec<f64>,
    /// `e1 ⊙ e2`.
    pub entity_pair: Vec<f64>,
}

impl BagInstance {
    pub fn is_positive(&self) -> bool {
        self.labels.iter().any(|&l| l > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectInstance {
    pub sentence: SentenceInstance,
    pub label: f64,
}

/// Everything needed to turn raw sentences into model inputs.
#[derive(Clone, Copy)]
pub struct Featurizer<'a> {
    pub vocab: &'a Vocabulary,
    pub table: &'a WordEmbeddingTable,
    pub pretrained: &'a PretrainedVectors,
    pub max_len: usize,
}

impl Featurizer<'_> {
    pub fn sentence(&self, s: &Sentence) -> SentenceInstance {
        SentenceInstance::new(s, self.vocab, self.max_len)
    }

    fn mentions(explicit: &[String], sentences: &[Sentence], first: bool) -> Vec<String> {
        if !explicit.is_empty() {
            return explicit.to_vec();
        }
        sentences
            .iter()
            .flat_map(|s| if first { s.e1_mentions() } else { s.e2_mentions() })
            .collect()
    }

    pub fn bag(&self, bag: &Bag) -> Result<BagInstance> {
        let e1 = entity_embedding(
            &Self::mentions(&bag.e1_mentions, &bag.sentences, true),
            self.table,
            self.pretrained,
        )?;
        let e2 = entity_embedding(
            &Self::mentions(&bag.e2_mentions, &bag.sentences, false),
            self.table,
            self.pretrained,
        )?;
        Ok(BagInstance {
            pair: bag.pair.clone(),
            sentences: bag.sentences.iter().map(|s| self.sentence(s)).collect(),
            labels: bag.labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            entity_pair: entity_pair_vector(&e1, &e2)?,
        })
    }

    pub fn bags(&self, bags: &[Bag]) -> Result<Vec<BagInstance>> {
        bags.iter().map(|b| self.bag(b)).collect()
    }

    pub fn direct(&self, ex: &DirectExample) -> DirectInstance {
        DirectInstance {
            sentence: self.sentence(&ex.sentence),
            label: f64::from(ex.label),
        }
    }
}
