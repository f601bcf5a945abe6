//! Vocabulary construction, frozen pretrained word vectors with OOV and
//! hyphen handling, and entity embeddings.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::dataset::MANIFEST_MARK;
use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Standard deviation of the shared OOV vector.
pub const OOV_STD: f64 = 0.05;

const VOCAB_HEADER: &str = "#relex-vocab";

/// Lowercases and splits on whitespace; punctuation other than inner
/// hyphens and apostrophes becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        let chars: Vec<char> = chunk.chars().collect();
        for (i, &c) in chars.iter().enumerate() {
            let inner = i > 0 && i + 1 < chars.len();
            if c.is_alphanumeric() || ((c == '-' || c == '\'') && inner) {
                current.extend(c.to_lowercase());
            } else {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_lowercase().collect());
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Word → index map over words more frequent than a threshold.
/// Index 0 is the shared OOV index.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    words: Vec<String>,
    min_freq: usize,
}

impl Vocabulary {
    pub const OOV: usize = 0;
    const OOV_TOKEN: &'static str = "<oov>";

    /// Maps every (lowercased) word whose count is strictly greater than
    /// `min_freq`. Words are ordered by descending count, then lexically.
    pub fn build<I, S>(tokens: I, min_freq: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        for t in tokens {
            total += 1;
            *counts.entry(t.as_ref().to_lowercase()).or_default() += 1;
        }
        if total == 0 {
            return Err(Error::Empty("vocabulary corpora"));
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c > min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut words = vec![Self::OOV_TOKEN.to_string()];
        words.extend(kept.into_iter().map(|(w, _)| w));
        Ok(Self::from_words(words, min_freq))
    }

    fn from_words(words: Vec<String>, min_freq: usize) -> Self {
        let index = words
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            index,
            words,
            min_freq,
        }
    }

    pub fn index_of(&self, word: &str) -> usize {
        match self.index.get(word) {
            Some(&i) => i,
            None => self
                .index
                .get(&word.to_lowercase())
                .copied()
                .unwrap_or(Self::OOV),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index_of(word) != Self::OOV
    }

    /// Number of rows including the OOV row.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 1
    }

    /// Mapped words in index order (excludes OOV).
    pub fn words(&self) -> &[String] {
        &self.words[1..]
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn save(&self, path: &Path, dim: usize, seed: u64) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "{VOCAB_HEADER}\td_w={dim}\tmin_freq={}\tseed={seed}\n",
            self.min_freq
        ));
        for (i, w) in self.words.iter().enumerate().skip(1) {
            out.push_str(&format!("{w}\t{i}\n"));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Loads a saved vocabulary; returns it with the `(d_w, seed)` header fields.
    pub fn load(path: &Path) -> Result<(Self, usize, u64)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.first() != Some(&VOCAB_HEADER) {
            return Err(Error::FormatVersion {
                path: path.into(),
                found: fields.first().unwrap_or(&"").to_string(),
                expected: VOCAB_HEADER.into(),
            });
        }
        let mut dim = 0;
        let mut min_freq = 0;
        let mut seed = 0;
        for f in &fields[1..] {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::parse(path, 1, format!("bad header field `{f}`")))?;
            let bad = |_| Error::parse(path, 1, format!("bad header value `{f}`"));
            match k {
                "d_w" => dim = v.parse().map_err(bad)?,
                "min_freq" => min_freq = v.parse().map_err(bad)?,
                "seed" => seed = v.parse().map_err(bad)?,
                _ => return Err(Error::parse(path, 1, format!("unknown header key `{k}`"))),
            }
        }
        let mut words = vec![Self::OOV_TOKEN.to_string()];
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let (w, i) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno, "expected `word<TAB>index`"))?;
            let i: usize = i
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad index `{i}`")))?;
            if i != words.len() {
                return Err(Error::parse(path, lineno, format!("index {i} out of order")));
            }
            words.push(w.to_string());
        }
        Ok((Self::from_words(words, min_freq), dim, seed))
    }
}

/// Pretrained word vectors keyed by word.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainedVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedVectors {
    pub fn new(dim: usize) -> Self {
        PretrainedVectors {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::ShapeMismatch {
                left: vec![self.dim],
                right: vec![vector.len()],
            });
        }
        self.vectors.insert(word.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Reads `word v1 … vd` lines. A leading `count dim` line and run-manifest
    /// lines are skipped.
    /// When `keep` is given, only those words are retained.
    pub fn load(path: &Path, keep: Option<&dyn Fn(&str) -> bool>) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut out: Option<PretrainedVectors> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.starts_with(&format!("{MANIFEST_MARK}\t")) {
                continue;
            }
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<&str> = parts.collect();
            if out.is_none() && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            if let Some(keep) = keep {
                if !keep(word) {
                    continue;
                }
            }
            let vector = values
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
            let set = out.get_or_insert_with(|| PretrainedVectors::new(vector.len()));
            if vector.len() != set.dim {
                return Err(Error::parse(
                    path,
                    n + 1,
                    format!("expected {} values, found {}", set.dim, vector.len()),
                ));
            }
            set.vectors.insert(word.to_string(), vector);
        }
        out.ok_or(Error::Empty("pretrained vector file"))
    }

    pub fn save(&self, path: &Path, preamble: &[String]) -> Result<()> {
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        let mut out = String::new();
        for line in preamble {
            out.push_str(line);
            out.push('\n');
        }
        for w in words {
            out.push_str(w);
            for v in &self.vectors[w] {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Frozen word-vector matrix: one row per vocabulary index, row 0 is the
/// shared OOV vector. Nothing outside construction can mutate the rows.
#[derive(Clone, Debug, PartialEq)]
pub struct WordEmbeddingTable {
    rows: Tensor,
}

impl WordEmbeddingTable {
    pub fn build(vocab: &Vocabulary, pretrained: &PretrainedVectors, seed: u64) -> Result<Self> {
        let dim = pretrained.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("word vector dimension is zero".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, OOV_STD).expect("valid normal");
        let oov: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();

        let mut data = Vec::with_capacity(vocab.len() * dim);
        data.extend_from_slice(&oov);
        for w in vocab.words() {
            data.extend(resolve_word(w, &oov, pretrained));
        }
        Ok(WordEmbeddingTable {
            rows: Tensor::matrix(vocab.len(), dim, data)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    /// Word vectors are never trained.
    pub fn is_frozen(&self) -> bool {
        true
    }

    pub fn row(&self, index: usize) -> &[f64] {
        self.rows.row(index)
    }

    pub fn oov_row(&self) -> &[f64] {
        self.rows.row(Vocabulary::OOV)
    }

    /// SHA-256 over the raw bits of every row.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.rows.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn resolve_word(word: &str, oov: &[f64], pretrained: &PretrainedVectors) -> Vec<f64> {
    if let Some(v) = pretrained.get(word) {
        return v.to_vec();
    }
    if word.contains('-') {
        let parts: Vec<&str> = word.split('-').filter(|p| !p.is_empty()).collect();
        if !parts.is_empty() {
            let vecs: Vec<&[f64]> = parts
                .iter()
                .map(|p| pretrained.get(p).unwrap_or(oov))
                .collect();
            return mean(&vecs, oov.len());
        }
    }
    oov.to_vec()
}

/// Vector for one surface word: its pretrained vector if present; for an
/// absent hyphenated word, the mean of its parts (each pretrained or OOV);
/// otherwise the shared OOV vector.
pub fn lookup_word(word: &str, table: &WordEmbeddingTable, pretrained: &PretrainedVectors) -> Vec<f64> {
    resolve_word(&word.to_lowercase(), table.oov_row(), pretrained)
}

fn mean(vectors: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for v in vectors {
        acc.iter_mut().zip(v.iter()).for_each(|(a, x)| *a += x);
    }
    let n = vectors.len() as f64;
    acc.into_iter().map(|a| a / n).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityEmbedding(pub Vec<f64>);

/// Mean over distinct mentions of the mean of each mention's word vectors.
/// Mentions are deduplicated and sorted after tokenization, so the result
/// does not depend on mention order.
pub fn entity_embedding<S: AsRef<str>>(
    mentions: &[S],
    table: &WordEmbeddingTable,
    pretrained: &PretrainedVectors,
) -> Result<EntityEmbedding> {
    let distinct: BTreeSet<Vec<String>> = mentions
        .iter()
        .map(|m| tokenize(m.as_ref()))
        .filter(|t| !t.is_empty())
        .collect();
    if distinct.is_empty() {
        return Err(Error::Empty("entity mentions"));
    }
    let dim = table.dim();
    let per_mention: Vec<Vec<f64>> = distinct
        .iter()
        .map(|words| {
            let vecs: Vec<Vec<f64>> = words
                .iter()
                .map(|w| lookup_word(w, table, pretrained))
                .collect();
            let refs: Vec<&[f64]> = vecs.iter().map(Vec::as_slice).collect();
            mean(&refs, dim)
        })
        .collect();
    let refs: Vec<&[f64]> = per_mention.iter().map(Vec::as_slice).collect();
    Ok(EntityEmbedding(mean(&refs, dim)))
}
