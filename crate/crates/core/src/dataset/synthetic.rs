//! Synthetic distant-supervision data with planted trigger tokens.
//!
//! Every relation owns a few trigger words. A sentence "expresses" a
//! relation iff it contains one of that relation's triggers. A positive
//! pair's bag is corrupted with probability `noise`: none of its sentences
//! then carries a trigger, although the knowledge base still labels it.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{build_bags, Bag, CorpusSentence, DirectExample, KbFact, PairId, RelationInventory, Sentence, Span};
use crate::embeddings::PretrainedVectors;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_relations: usize,
    pub train_positive: usize,
    pub train_negative: usize,
    pub test_positive: usize,
    pub test_negative: usize,
    pub n_direct: usize,
    /// Total word types, triggers included.
    pub vocab_size: usize,
    pub triggers_per_relation: usize,
    /// Probability that a positive bag carries no trigger sentence.
    pub noise: f64,
    /// Inclusive sentence length range (entity mentions included).
    pub min_len: usize,
    pub max_len: usize,
    /// Inclusive bag size range.
    pub min_bag: usize,
    pub max_bag: usize,
    /// Chance that a further sentence of an uncorrupted positive bag carries
    /// a trigger (the first one always does).
    pub trigger_rate: f64,
    /// Dimension of the generated word vectors.
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_relations: 5,
            train_positive: 200,
            train_negative: 800,
            test_positive: 100,
            test_negative: 400,
            n_direct: 500,
            vocab_size: 200,
            triggers_per_relation: 1,
            noise: 0.0,
            min_len: 8,
            max_len: 16,
            min_bag: 1,
            max_bag: 4,
            trigger_rate: 0.3,
            dim: 32,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub relations: RelationInventory,
    pub kb: Vec<KbFact>,
    pub train_corpus: Vec<CorpusSentence>,
    pub test_corpus: Vec<CorpusSentence>,
    pub direct: Vec<DirectExample>,
    pub vectors: PretrainedVectors,
}

impl SyntheticData {
    pub fn train_bags(&self) -> Result<Vec<Bag>> {
        build_bags(&self.kb, &self.train_corpus, &self.relations)
    }

    pub fn test_bags(&self) -> Result<Vec<Bag>> {
        build_bags(&self.kb, &self.test_corpus, &self.relations)
    }
}

pub fn relation_name(r: usize) -> String {
    format!("rel{r}")
}

pub fn trigger_word(relation: usize, j: usize) -> String {
    format!("trig{relation}_{j}")
}

/// Relation index if `token` is a trigger word.
pub fn trigger_relation(token: &str) -> Option<usize> {
    token
        .strip_prefix("trig")
        .and_then(|rest| rest.split_once('_'))
        .and_then(|(r, _)| r.parse().ok())
}

pub fn has_trigger_for(sentence: &Sentence, relation: usize) -> bool {
    sentence
        .tokens
        .iter()
        .any(|t| trigger_relation(t) == Some(relation))
}

pub fn has_any_trigger(sentence: &Sentence) -> bool {
    sentence.tokens.iter().any(|t| trigger_relation(t).is_some())
}

struct Generator {
    spec: SyntheticSpec,
    rng: ChaCha8Rng,
    fillers: Vec<String>,
    next_entity: usize,
}

impl Generator {
    fn entity(&mut self) -> String {
        self.next_entity += 1;
        format!("ent{}", self.next_entity)
    }

    fn trigger(&mut self, relation: usize) -> String {
        let j = self.rng.random_range(0..self.spec.triggers_per_relation);
        trigger_word(relation, j)
    }

    /// A sentence mentioning `e1` and `e2`, with `trigger` placed between
    /// the mentions when present.
    fn sentence(&mut self, e1: &str, e2: &str, trigger: Option<String>) -> Sentence {
        let len = self.rng.random_range(self.spec.min_len..=self.spec.max_len);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| self.fillers.choose(&mut self.rng).expect("fillers").clone())
            .collect();
        let a = self.rng.random_range(0..len);
        let mut b = self.rng.random_range(0..len - 1);
        if b >= a {
            b += 1;
        }
        tokens[a] = e1.to_string();
        tokens[b] = e2.to_string();
        if let Some(t) = trigger {
            let (lo, hi) = (a.min(b), a.max(b));
            let free: Vec<usize> = if hi - lo >= 2 {
                (lo + 1..hi).collect()
            } else {
                (0..len).filter(|&i| i != a && i != b).collect()
            };
            let pos = *free.choose(&mut self.rng).expect("len >= 3");
            tokens[pos] = t;
        }
        Sentence {
            tokens,
            e1_spans: vec![Span::new(a, a + 1)],
            e2_spans: vec![Span::new(b, b + 1)],
        }
    }

    fn bag_size(&mut self) -> usize {
        self.rng.random_range(self.spec.min_bag..=self.spec.max_bag)
    }

    fn corpus(&mut self, positive: usize, negative: usize, kb: &mut Vec<KbFact>) -> Vec<CorpusSentence> {
        let mut corpus = Vec::new();
        for _ in 0..positive {
            let (e1, e2) = (self.entity(), self.entity());
            let relation = self.rng.random_range(0..self.spec.n_relations);
            kb.push(KbFact::new(&e1, relation_name(relation), &e2));
            let corrupted = self.rng.random::<f64>() < self.spec.noise;
            let n = self.bag_size();
            for j in 0..n {
                let trigger = if corrupted {
                    None
                } else if j == 0 || self.rng.random::<f64>() < self.spec.trigger_rate {
                    Some(self.trigger(relation))
                } else {
                    None
                };
                let sentence = self.sentence(&e1, &e2, trigger);
                corpus.push(CorpusSentence {
                    pair: PairId::new(&e1, &e2),
                    sentence,
                });
            }
        }
        for _ in 0..negative {
            let (e1, e2) = (self.entity(), self.entity());
            let n = self.bag_size();
            for _ in 0..n {
                let sentence = self.sentence(&e1, &e2, None);
                corpus.push(CorpusSentence {
                    pair: PairId::new(&e1, &e2),
                    sentence,
                });
            }
        }
        corpus
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let n_triggers = spec.n_relations * spec.triggers_per_relation;
    if spec.n_relations == 0 || spec.triggers_per_relation == 0 {
        return Err(Error::InvalidArgument("need at least one relation and one trigger".into()));
    }
    if n_triggers >= spec.vocab_size {
        return Err(Error::InvalidArgument(format!(
            "{n_triggers} trigger words do not fit a vocabulary of {}",
            spec.vocab_size
        )));
    }
    if !(0.0..=1.0).contains(&spec.noise) || !(0.0..=1.0).contains(&spec.trigger_rate) {
        return Err(Error::InvalidArgument("rates must lie in [0, 1]".into()));
    }
    if spec.min_len < 3 || spec.min_len > spec.max_len {
        return Err(Error::InvalidArgument(
            "sentence length range must satisfy 3 <= min <= max".into(),
        ));
    }
    if spec.min_bag == 0 || spec.min_bag > spec.max_bag {
        return Err(Error::InvalidArgument("bag size range must satisfy 1 <= min <= max".into()));
    }

    let fillers: Vec<String> = (0..spec.vocab_size - n_triggers).map(|i| format!("w{i}")).collect();
    let mut g = Generator {
        spec: spec.clone(),
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        fillers,
        next_entity: 0,
    };

    let mut kb = Vec::new();
    let train_corpus = g.corpus(spec.train_positive, spec.train_negative, &mut kb);
    let test_corpus = g.corpus(spec.test_positive, spec.test_negative, &mut kb);

    let mut direct = Vec::with_capacity(spec.n_direct);
    for i in 0..spec.n_direct {
        let (e1, e2) = (g.entity(), g.entity());
        if i % 2 == 0 {
            let relation = g.rng.random_range(0..spec.n_relations);
            let trigger = g.trigger(relation);
            let s = g.sentence(&e1, &e2, Some(trigger));
            direct.push(DirectExample::from_relation(s, &relation_name(relation)));
        } else {
            let s = g.sentence(&e1, &e2, None);
            direct.push(DirectExample::from_relation(s, "no_relation"));
        }
    }

    let normal = Normal::new(0.0, 1.0 / (spec.dim as f64).sqrt()).expect("valid normal");
    let mut vectors = PretrainedVectors::new(spec.dim);
    let mut words: Vec<String> = g.fillers.clone();
    for r in 0..spec.n_relations {
        words.extend((0..spec.triggers_per_relation).map(|j| trigger_word(r, j)));
    }
    words.extend((1..=g.next_entity).map(|i| format!("ent{i}")));
    for w in words {
        let v: Vec<f64> = (0..spec.dim).map(|_| normal.sample(&mut g.rng)).collect();
        vectors.insert(w, v)?;
    }

    Ok(SyntheticData {
        relations: RelationInventory::new((0..spec.n_relations).map(relation_name))?,
        kb,
        train_corpus,
        test_corpus,
        direct,
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(noise: f64) -> SyntheticSpec {
        SyntheticSpec {
            train_positive: 200,
            train_negative: 100,
            test_positive: 10,
            test_negative: 10,
            n_direct: 40,
            noise,
            seed: 3,
            ..SyntheticSpec::default()
        }
    }

    fn corrupted(bags: &[Bag]) -> usize {
        bags.iter()
            .filter(|b| b.is_positive())
            .filter(|b| {
                let r = b.labels.iter().position(|&x| x).unwrap();
                !b.sentences.iter().any(|s| has_trigger_for(s, r))
            })
            .count()
    }

    #[test]
    fn noise_free_bags_all_carry_triggers() {
        let data = generate_synthetic(&spec(0.0)).unwrap();
        let bags = data.train_bags().unwrap();
        assert_eq!(bags.iter().filter(|b| b.is_positive()).count(), 200);
        assert_eq!(corrupted(&bags), 0);
        assert!(bags
            .iter()
            .filter(|b| !b.is_positive())
            .all(|b| !b.sentences.iter().any(has_any_trigger)));
    }

    #[test]
    fn fully_corrupted_bags_carry_none() {
        let data = generate_synthetic(&spec(1.0)).unwrap();
        assert_eq!(corrupted(&data.train_bags().unwrap()), 200);
    }

    #[test]
    fn half_noise_matches_binomial() {
        let data = generate_synthetic(&spec(0.5)).unwrap();
        let c = corrupted(&data.train_bags().unwrap()) as f64;
        // sd = sqrt(200 * 0.25) ≈ 7.07; allow 4 sd
        assert!((c - 100.0).abs() <= 4.0 * 7.08, "{c}");
    }

    #[test]
    fn direct_labels_follow_triggers() {
        let data = generate_synthetic(&spec(0.0)).unwrap();
        assert_eq!(data.direct.len(), 40);
        for ex in &data.direct {
            assert_eq!(ex.label == 1, has_any_trigger(&ex.sentence));
        }
    }

    #[test]
    fn inconsistent_spec_rejected() {
        let bad = SyntheticSpec {
            vocab_size: 5,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(&spec(0.5)).unwrap();
        let b = generate_synthetic(&spec(0.5)).unwrap();
        assert_eq!(a.train_corpus, b.train_corpus);
        assert_eq!(a.vectors, b.vectors);
    }
}
