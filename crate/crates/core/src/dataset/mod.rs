//! Bags, direct-supervision sentences, knowledge-base alignment, position
//! features, train/validation splitting and synthetic data.

mod instance;
mod io;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use instance::{BagInstance, DirectInstance, Featurizer, SentenceInstance};
pub use io::{
    load_bags, load_direct, load_relations, parse_spans, read_corpus, read_direct_source, read_kb, write_bags,
    write_direct, write_relations, BAGS_HEADER, DIRECT_HEADER, MANIFEST_MARK,
};

/// Largest absolute token distance with its own embedding row.
pub const MAX_DISTANCE: i32 = 30;
/// Rows per distance-embedding table (`-30..=30`).
pub const DISTANCE_ROWS: usize = (2 * MAX_DISTANCE + 1) as usize;
/// Default sentence length cap.
pub const MAX_SENTENCE_LEN: usize = 120;

/// Half-open token interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    fn signed_distance(&self, i: usize) -> i64 {
        if i < self.start {
            i as i64 - self.start as i64
        } else if i >= self.end {
            i as i64 - (self.end as i64 - 1)
        } else {
            0
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// A tokenized sentence with its entity mention annotations.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub e1_spans: Vec<Span>,
    pub e2_spans: Vec<Span>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, e1_spans: Vec<Span>, e2_spans: Vec<Span>) -> Result<Self> {
        let s = Sentence {
            tokens,
            e1_spans,
            e2_spans,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Empty("sentence tokens"));
        }
        if self.e1_spans.is_empty() || self.e2_spans.is_empty() {
            return Err(Error::InvalidArgument(
                "each entity needs at least one mention span".into(),
            ));
        }
        for s in self.e1_spans.iter().chain(&self.e2_spans) {
            if s.start >= s.end || s.end > self.tokens.len() {
                return Err(Error::InvalidArgument(format!(
                    "span {s} outside sentence of {} tokens",
                    self.tokens.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn mention_text(&self, span: Span) -> String {
        self.tokens[span.start..span.end].join(" ")
    }

    pub fn e1_mentions(&self) -> Vec<String> {
        self.e1_spans.iter().map(|s| self.mention_text(*s)).collect()
    }

    pub fn e2_mentions(&self) -> Vec<String> {
        self.e2_spans.iter().map(|s| self.mention_text(*s)).collect()
    }

    /// Signed clipped distances of every token to the closest e1 and e2 mention.
    pub fn position_features(&self) -> (Vec<i32>, Vec<i32>) {
        position_features(self.tokens.len(), &self.e1_spans, &self.e2_spans)
    }

    /// Keeps at most `max_len` tokens, centred between the leftmost e1 and
    /// e2 mentions. Spans falling outside the window are dropped and spans
    /// crossing its edge are cut; each entity keeps at least one span.
    pub fn truncated(&self, max_len: usize) -> Sentence {
        let len = self.tokens.len();
        if len <= max_len || max_len == 0 {
            return self.clone();
        }
        let first = |spans: &[Span]| spans.iter().min().copied().expect("validated spans");
        let (a, b) = (first(&self.e1_spans), first(&self.e2_spans));
        let lo = a.start.min(b.start);
        let hi = a.end.max(b.end);
        let centre = (lo + hi) / 2;
        let start = centre.saturating_sub(max_len / 2).min(len - max_len);
        let end = start + max_len;

        let clip = |spans: &[Span], keep: Span| -> Vec<Span> {
            let mut out: Vec<Span> = spans
                .iter()
                .filter(|s| s.end > start && s.start < end)
                .map(|s| Span::new(s.start.max(start) - start, s.end.min(end) - start))
                .collect();
            if out.is_empty() {
                // leftmost mention lies outside the window; pin it to the nearest edge
                let pos = if keep.start >= end { max_len - 1 } else { 0 };
                out.push(Span::new(pos, pos + 1));
            }
            out
        };
        Sentence {
            tokens: self.tokens[start..end].to_vec(),
            e1_spans: clip(&self.e1_spans, a),
            e2_spans: clip(&self.e2_spans, b),
        }
    }
}

/// For each token position and each entity, the signed distance to the
/// closest mention span (0 inside a span, negative to its left, positive to
/// its right), clipped to `[-30, 30]`. Ties go to the earlier mention.
pub fn position_features(len: usize, e1_spans: &[Span], e2_spans: &[Span]) -> (Vec<i32>, Vec<i32>) {
    (distances(len, e1_spans), distances(len, e2_spans))
}

fn distances(len: usize, spans: &[Span]) -> Vec<i32> {
    let mut ordered = spans.to_vec();
    ordered.sort();
    (0..len)
        .map(|i| {
            let mut best: Option<i64> = None;
            for s in &ordered {
                let d = s.signed_distance(i);
                if best.is_none_or(|b| d.abs() < b.abs()) {
                    best = Some(d);
                }
            }
            best.unwrap_or(MAX_DISTANCE as i64)
                .clamp(-(MAX_DISTANCE as i64), MAX_DISTANCE as i64) as i32
        })
        .collect()
}

/// Ordered set of relation types. "No relation" is represented by an empty
/// label set and is never a member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationInventory {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

/// Names that denote the absence of a relation.
pub const NO_RELATION_NAMES: [&str; 3] = ["NA", "no_relation", "none"];

pub fn is_no_relation(name: &str) -> bool {
    NO_RELATION_NAMES.iter().any(|n| n.eq_ignore_ascii_case(name))
}

impl RelationInventory {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if is_no_relation(n) {
                return Err(Error::InvalidArgument(format!(
                    "`{n}` denotes no relation and cannot be an inventory member"
                )));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate relation `{n}`")));
            }
        }
        Ok(RelationInventory { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Entity pair key `(e1 id, e2 id)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub e1: String,
    pub e2: String,
}

impl PairId {
    pub fn new(e1: impl Into<String>, e2: impl Into<String>) -> Self {
        PairId {
            e1: e1.into(),
            e2: e2.into(),
        }
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.e1, self.e2)
    }
}

impl std::str::FromStr for PairId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split_once("::")
            .map(|(a, b)| PairId::new(a, b))
            .ok_or_else(|| Error::InvalidArgument(format!("pair id `{s}` is not `e1::e2`")))
    }
}

/// All sentences mentioning one entity pair plus its distant label set.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub pair: PairId,
    pub e1_mentions: Vec<String>,
    pub e2_mentions: Vec<String>,
    /// One flag per relation in the inventory; all false for a negative bag.
    pub labels: Vec<bool>,
    pub sentences: Vec<Sentence>,
}

impl Bag {
    pub fn is_positive(&self) -> bool {
        self.labels.iter().any(|&b| b)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn label_names<'a>(&self, inventory: &'a RelationInventory) -> Vec<&'a str> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| inventory.name(i))
            .collect()
    }

    pub fn validate(&self, n_relations: usize) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::Empty("bag sentences"));
        }
        if self.labels.len() != n_relations {
            return Err(Error::InvalidArgument(format!(
                "bag {} has {} label bits, inventory has {n_relations}",
                self.pair,
                self.labels.len()
            )));
        }
        self.sentences.iter().try_for_each(Sentence::validate)
    }

    /// Merges another shard's bag for the same pair: sentences concatenate,
    /// labels OR, mentions union.
    pub fn merge(&mut self, other: Bag) -> Result<()> {
        if self.pair != other.pair || self.labels.len() != other.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot merge bag {} into {}",
                other.pair, self.pair
            )));
        }
        self.sentences.extend(other.sentences);
        for (a, b) in self.labels.iter_mut().zip(other.labels) {
            *a |= b;
        }
        let union = |a: &mut Vec<String>, b: Vec<String>| {
            let set: BTreeSet<String> = a.drain(..).chain(b).collect();
            a.extend(set);
        };
        union(&mut self.e1_mentions, other.e1_mentions);
        union(&mut self.e2_mentions, other.e2_mentions);
        Ok(())
    }
}

/// A sentence with a binary "expresses some relation of interest" label.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectExample {
    pub sentence: Sentence,
    pub label: u8,
    /// Original relation type when the source provides one.
    pub relation: Option<String>,
}

impl DirectExample {
    pub fn new(sentence: Sentence, label: u8, relation: Option<String>) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidArgument(format!("direct label {label} is not 0/1")));
        }
        Ok(DirectExample {
            sentence,
            label,
            relation,
        })
    }

    /// Binarizes a labelled sentence: any relation other than "no relation" is 1.
    pub fn from_relation(sentence: Sentence, relation: &str) -> Self {
        if is_no_relation(relation) {
            DirectExample {
                sentence,
                label: 0,
                relation: None,
            }
        } else {
            DirectExample {
                sentence,
                label: 1,
                relation: Some(relation.to_string()),
            }
        }
    }
}

/// A knowledge-base fact `(e1, relation, e2)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KbFact {
    pub e1: String,
    pub relation: String,
    pub e2: String,
}

impl KbFact {
    pub fn new(e1: impl Into<String>, relation: impl Into<String>, e2: impl Into<String>) -> Self {
        KbFact {
            e1: e1.into(),
            relation: relation.into(),
            e2: e2.into(),
        }
    }
}

/// A corpus sentence annotated with the entity ids it mentions.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSentence {
    pub pair: PairId,
    pub sentence: Sentence,
}

/// Groups corpus sentences by entity pair and labels each bag with the
/// relations the knowledge base holds for that pair. Bags come out sorted
/// by pair id.
pub fn build_bags(
    kb: &[KbFact],
    corpus: &[CorpusSentence],
    inventory: &RelationInventory,
) -> Result<Vec<Bag>> {
    let mut facts: HashMap<PairId, Vec<usize>> = HashMap::new();
    for f in kb {
        let r = inventory
            .index_of(&f.relation)
            .ok_or_else(|| Error::UnknownRelation(f.relation.clone()))?;
        facts.entry(PairId::new(&f.e1, &f.e2)).or_default().push(r);
    }

    let mut bags: BTreeMap<PairId, Bag> = BTreeMap::new();
    for cs in corpus {
        cs.sentence.validate()?;
        let bag = bags.entry(cs.pair.clone()).or_insert_with(|| {
            let mut labels = vec![false; inventory.len()];
            for &r in facts.get(&cs.pair).map(Vec::as_slice).unwrap_or(&[]) {
                labels[r] = true;
            }
            Bag {
                pair: cs.pair.clone(),
                e1_mentions: Vec::new(),
                e2_mentions: Vec::new(),
                labels,
                sentences: Vec::new(),
            }
        });
        bag.e1_mentions.extend(cs.sentence.e1_mentions());
        bag.e2_mentions.extend(cs.sentence.e2_mentions());
        bag.sentences.push(cs.sentence.clone());
    }
    Ok(bags
        .into_values()
        .map(|mut b| {
            for m in [&mut b.e1_mentions, &mut b.e2_mentions] {
                m.sort();
                m.dedup();
            }
            b
        })
        .collect())
}

/// Merges bag shards by pair id; the result is sorted by pair id.
pub fn merge_bag_shards(shards: Vec<Vec<Bag>>) -> Result<Vec<Bag>> {
    let mut merged: BTreeMap<PairId, Bag> = BTreeMap::new();
    for bag in shards.into_iter().flatten() {
        match merged.get_mut(&bag.pair) {
            Some(existing) => existing.merge(bag)?,
            None => {
                merged.insert(bag.pair.clone(), bag);
            }
        }
    }
    Ok(merged.into_values().collect())
}

/// Splits items into `(train, validation)` with positives and negatives
/// partitioned separately, each shuffled with `seed`.
pub fn split_stratified<T>(
    items: Vec<T>,
    is_positive: impl Fn(&T) -> bool,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    if items.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 items to split, got {}",
            items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<T>, Vec<T>) = items.into_iter().partition(|x| is_positive(x));
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let cut = |n: usize| ((n as f64) * fraction).round() as usize;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for stream in [pos, neg] {
        let k = cut(stream.len());
        let mut stream = stream;
        let tail = stream.split_off(k);
        train.extend(stream);
        val.extend(tail);
    }
    if val.is_empty() {
        val.push(train.pop().expect("at least two items"));
    } else if train.is_empty() {
        train.push(val.pop().expect("at least two items"));
    }
    Ok((train, val))
}

/// Stratified 90/10-style split of bags by positive/negative status.
pub fn split_train_val(bags: Vec<Bag>, fraction: f64, seed: u64) -> Result<(Vec<Bag>, Vec<Bag>)> {
    split_stratified(bags, Bag::is_positive, fraction, seed)
}
