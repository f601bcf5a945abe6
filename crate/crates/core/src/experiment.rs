//! Assembles everything a training run needs from raw bags, direct
//! examples and pretrained vectors.

use crate::dataset::synthetic::SyntheticData;
use crate::dataset::{Bag, DirectExample, Featurizer, RelationInventory};
use crate::embeddings::{PretrainedVectors, Vocabulary, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::training::{Corpus, TrainConfig};

/// Vocabulary over the tokens of the training bags and direct examples.
pub fn training_vocabulary(train_bags: &[Bag], direct: &[DirectExample], min_freq: usize) -> Result<Vocabulary> {
    let tokens = train_bags
        .iter()
        .flat_map(|b| b.sentences.iter())
        .chain(direct.iter().map(|d| &d.sentence))
        .flat_map(|s| s.tokens.iter());
    Vocabulary::build(tokens, min_freq)
}

pub struct Experiment {
    pub relations: RelationInventory,
    pub vocab: Vocabulary,
    pub pretrained: PretrainedVectors,
    pub table: WordEmbeddingTable,
    pub corpus: Corpus,
    pub test_bags: Vec<Bag>,
}

impl Experiment {
    /// Builds the vocabulary and frozen table, splits off validation bags
    /// and featurizes every split.
    pub fn new(
        cfg: &TrainConfig,
        relations: RelationInventory,
        train_bags: Vec<Bag>,
        test_bags: Vec<Bag>,
        direct: Vec<DirectExample>,
        pretrained: PretrainedVectors,
    ) -> Result<Self> {
        if cfg.model.n_relations != relations.len() {
            return Err(Error::InvalidArgument(format!(
                "n_relations = {} but the inventory has {} relations",
                cfg.model.n_relations,
                relations.len()
            )));
        }
        if cfg.model.d_w != pretrained.dim() {
            return Err(Error::InvalidArgument(format!(
                "d_w = {} but the word vectors have dimension {}",
                cfg.model.d_w,
                pretrained.dim()
            )));
        }
        let vocab = training_vocabulary(&train_bags, &direct, cfg.min_freq)?;
        let table = WordEmbeddingTable::build(&vocab, &pretrained, cfg.data_seed)?;
        let featurizer = Featurizer {
            vocab: &vocab,
            table: &table,
            pretrained: &pretrained,
            max_len: cfg.max_len,
        };
        let corpus = Corpus::prepare(&featurizer, train_bags, &test_bags, &direct, &relations, cfg)?;
        Ok(Experiment {
            relations,
            vocab,
            pretrained,
            table,
            corpus,
            test_bags,
        })
    }

    pub fn from_synthetic(cfg: &TrainConfig, data: &SyntheticData) -> Result<Self> {
        Experiment::new(
            cfg,
            data.relations.clone(),
            data.train_bags()?,
            data.test_bags()?,
            data.direct.clone(),
            data.vectors.clone(),
        )
    }

    pub fn featurizer(&self, max_len: usize) -> Featurizer<'_> {
        Featurizer {
            vocab: &self.vocab,
            table: &self.table,
            pretrained: &self.pretrained,
            max_len,
        }
    }
}
