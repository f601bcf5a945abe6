//! Line-oriented, tab-delimited file formats.
//!
//! Bag file (`#relex-bags\tv1` header), one bag per line:
//! `e1 id, e2 id, e1 mentions (|-joined), e2 mentions, labels (comma list or -),
//! sentence count, then per sentence: tokens (space-joined), e1 spans, e2 spans`.
//! Spans are `start:end` (half-open), comma-separated.
//!
//! Direct file (`#relex-direct\tv1` header), one sentence per line:
//! `tokens, e1 spans, e2 spans, label (0/1), relation type or -`.

use std::fs;
use std::path::Path;

use super::{
    Bag, CorpusSentence, DirectExample, KbFact, PairId, RelationInventory, Sentence, Span,
};
use crate::error::{Error, Result};

pub const BAGS_HEADER: &str = "#relex-bags\tv1";
pub const DIRECT_HEADER: &str = "#relex-direct\tv1";

/// Prefix of run-manifest lines (`#%<TAB>key<TAB>value`), which may follow
/// the header of any file.
pub const MANIFEST_MARK: &str = "#%";

fn is_manifest_line(line: &str) -> bool {
    line.strip_prefix(MANIFEST_MARK).is_some_and(|rest| rest.starts_with('\t'))
}

fn push_preamble(out: &mut String, preamble: &[String]) {
    for line in preamble {
        out.push_str(line);
        out.push('\n');
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Lines after the header; `#` is a legal token here, so only blank and
/// manifest lines are skipped.
fn record_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !is_manifest_line(l))
}

fn check_header<'a>(path: &Path, lines: &mut impl Iterator<Item = &'a str>, expected: &str) -> Result<()> {
    let found = lines.next().unwrap_or_default();
    if found != expected {
        return Err(Error::FormatVersion {
            path: path.into(),
            found: found.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(())
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_spans(field: &str) -> std::result::Result<Vec<Span>, String> {
    field
        .split(',')
        .map(|s| {
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| format!("span `{s}` is not `start:end`"))?;
            let a = a.trim().parse().map_err(|_| format!("bad span start `{a}`"))?;
            let b = b.trim().parse().map_err(|_| format!("bad span end `{b}`"))?;
            Ok(Span::new(a, b))
        })
        .collect()
}

fn format_spans(spans: &[Span]) -> String {
    spans.iter().map(Span::to_string).collect::<Vec<_>>().join(",")
}

fn parse_sentence(tokens: &str, e1: &str, e2: &str) -> std::result::Result<Sentence, String> {
    let tokens: Vec<String> = tokens.split(' ').filter(|t| !t.is_empty()).map(String::from).collect();
    Sentence::new(tokens, parse_spans(e1)?, parse_spans(e2)?).map_err(|e| e.to_string())
}

fn check_field(value: &str, forbidden: &[char], what: &str) -> Result<()> {
    if value.is_empty() || value.contains(['\t', '\n']) || value.contains(forbidden) {
        return Err(Error::InvalidArgument(format!(
            "{what} `{value}` cannot be written (empty or contains a delimiter)"
        )));
    }
    Ok(())
}

fn format_sentence(s: &Sentence) -> Result<String> {
    for t in &s.tokens {
        check_field(t, &[' '], "token")?;
    }
    Ok(format!(
        "{}\t{}\t{}",
        s.tokens.join(" "),
        format_spans(&s.e1_spans),
        format_spans(&s.e2_spans)
    ))
}

pub fn write_bags(path: &Path, bags: &[Bag], inventory: &RelationInventory, preamble: &[String]) -> Result<()> {
    let mut out = String::new();
    out.push_str(BAGS_HEADER);
    out.push('\n');
    push_preamble(&mut out, preamble);
    for bag in bags {
        if bag.pair.e1 == MANIFEST_MARK {
            return Err(Error::InvalidArgument(format!("entity id `{MANIFEST_MARK}` is reserved")));
        }
        check_field(&bag.pair.e1, &[], "entity id")?;
        check_field(&bag.pair.e2, &[], "entity id")?;
        for m in bag.e1_mentions.iter().chain(&bag.e2_mentions) {
            check_field(m, &['|'], "mention")?;
        }
        let labels = bag.label_names(inventory);
        let labels = if labels.is_empty() {
            "-".to_string()
        } else {
            labels.join(",")
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            bag.pair.e1,
            bag.pair.e2,
            bag.e1_mentions.join("|"),
            bag.e2_mentions.join("|"),
            labels,
            bag.sentences.len()
        ));
        for s in &bag.sentences {
            out.push('\t');
            out.push_str(&format_sentence(s)?);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_bags(path: &Path, inventory: &RelationInventory) -> Result<Vec<Bag>> {
    let text = read(path)?;
    let mut lines = text.lines();
    check_header(path, &mut lines, BAGS_HEADER)?;
    let mut bags = Vec::new();
    for (lineno, line) in record_lines(&text) {
        let err = |m: String| Error::parse(path, lineno, m);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 6 {
            return Err(err(format!("expected at least 6 fields, found {}", f.len())));
        }
        let n: usize = f[5]
            .parse()
            .map_err(|_| err(format!("bad sentence count `{}`", f[5])))?;
        if n == 0 || f.len() != 6 + 3 * n {
            return Err(err(format!(
                "sentence count {n} does not match {} trailing fields",
                f.len() - 6
            )));
        }
        let mut labels = vec![false; inventory.len()];
        if f[4] != "-" {
            for name in f[4].split(',') {
                let r = inventory
                    .index_of(name)
                    .ok_or_else(|| err(format!("relation `{name}` is not in the inventory")))?;
                labels[r] = true;
            }
        }
        let split_mentions = |s: &str| -> Vec<String> {
            s.split('|').filter(|m| !m.is_empty()).map(String::from).collect()
        };
        let sentences = (0..n)
            .map(|j| {
                let b = 6 + 3 * j;
                parse_sentence(f[b], f[b + 1], f[b + 2]).map_err(|m| err(format!("sentence {j}: {m}")))
            })
            .collect::<Result<Vec<_>>>()?;
        bags.push(Bag {
            pair: PairId::new(f[0], f[1]),
            e1_mentions: split_mentions(f[2]),
            e2_mentions: split_mentions(f[3]),
            labels,
            sentences,
        });
    }
    Ok(bags)
}

pub fn write_direct(path: &Path, examples: &[DirectExample], preamble: &[String]) -> Result<()> {
    let mut out = String::new();
    out.push_str(DIRECT_HEADER);
    out.push('\n');
    push_preamble(&mut out, preamble);
    for ex in examples {
        if ex.sentence.tokens.len() == 1 && ex.sentence.tokens[0] == MANIFEST_MARK {
            return Err(Error::InvalidArgument(format!("sentence `{MANIFEST_MARK}` is reserved")));
        }
        let relation = match &ex.relation {
            Some(r) => {
                check_field(r, &[], "relation")?;
                r.as_str()
            }
            None => "-",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            format_sentence(&ex.sentence)?,
            ex.label,
            relation
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_direct(path: &Path) -> Result<Vec<DirectExample>> {
    let text = read(path)?;
    let mut lines = text.lines();
    check_header(path, &mut lines, DIRECT_HEADER)?;
    parse_direct(path, record_lines(&text))
}

/// Direct records without the header line (a leading header is tolerated).
pub fn read_direct_source(path: &Path) -> Result<Vec<DirectExample>> {
    let text = read(path)?;
    let skip = usize::from(text.lines().next() == Some(DIRECT_HEADER));
    let lines = text
        .lines()
        .enumerate()
        .skip(skip)
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !is_manifest_line(l));
    parse_direct(path, lines)
}

fn parse_direct<'a>(path: &Path, lines: impl Iterator<Item = (usize, &'a str)>) -> Result<Vec<DirectExample>> {
    let mut out = Vec::new();
    for (lineno, line) in lines {
        let err = |m: String| Error::parse(path, lineno, m);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let sentence = parse_sentence(f[0], f[1], f[2]).map_err(err)?;
        let label = match f[3] {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("label `{other}` is not 0 or 1"))),
        };
        let relation = (f[4] != "-").then(|| f[4].to_string());
        out.push(DirectExample {
            sentence,
            label,
            relation,
        });
    }
    Ok(out)
}

/// One relation name per line.
pub fn load_relations(path: &Path) -> Result<RelationInventory> {
    let text = read(path)?;
    RelationInventory::new(
        data_lines(&text).map(|(_, l)| l.trim().to_string()),
    )
}

pub fn write_relations(path: &Path, inventory: &RelationInventory, preamble: &[String]) -> Result<()> {
    let mut out = String::new();
    push_preamble(&mut out, preamble);
    out.push_str(&inventory.names().join("\n"));
    out.push('\n');
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Knowledge base: `e1<TAB>relation<TAB>e2` per line.
pub fn read_kb(path: &Path) -> Result<Vec<KbFact>> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(n, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            match f.as_slice() {
                [e1, r, e2] => Ok(KbFact::new(*e1, *r, *e2)),
                _ => Err(Error::parse(path, n, "expected `e1<TAB>relation<TAB>e2`")),
            }
        })
        .collect()
}

/// Annotated corpus: `e1 id<TAB>e2 id<TAB>tokens<TAB>e1 spans<TAB>e2 spans` per line.
pub fn read_corpus(path: &Path) -> Result<Vec<CorpusSentence>> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(n, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 5 {
                return Err(Error::parse(path, n, format!("expected 5 fields, found {}", f.len())));
            }
            let sentence = parse_sentence(f[2], f[3], f[4]).map_err(|m| Error::parse(path, n, m))?;
            Ok(CorpusSentence {
                pair: PairId::new(f[0], f[1]),
                sentence,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(text: &str) -> Sentence {
        let tokens: Vec<String> = text.split(' ').map(String::from).collect();
        Sentence::new(tokens, vec![Span::new(0, 1)], vec![Span::new(2, 4)]).unwrap()
    }

    #[test]
    fn direct_counts_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("direct.tsv");
        let mut examples = Vec::new();
        for i in 0..3 {
            examples.push(DirectExample::from_relation(sentence(&format!("a{i} works for b c")), "employee_of"));
        }
        for i in 0..2 {
            examples.push(DirectExample::from_relation(sentence(&format!("a{i} met with b c")), "no_relation"));
        }
        write_direct(&path, &examples, &["#%\tcommand\ttest".to_string()]).unwrap();
        let loaded = load_direct(&path).unwrap();
        assert_eq!(loaded.len(), 5);
        assert_eq!(loaded.iter().map(|e| e.label as usize).sum::<usize>(), 3);
        assert_eq!(loaded, examples);
    }

    #[test]
    fn malformed_direct_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("direct.tsv");
        fs::write(&path, format!("{DIRECT_HEADER}\na b c\t0:1\t2:3\t1\t-\na b c\t0:1\t2:3\t7\t-\n")).unwrap();
        let err = load_direct(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn wrong_header_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bags.tsv");
        fs::write(&path, "#relex-bags\tv0\n").unwrap();
        let inv = RelationInventory::new(["r"]).unwrap();
        assert!(matches!(load_bags(&path, &inv), Err(Error::FormatVersion { .. })));
    }

    #[test]
    fn bag_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bags.tsv");
        let inv = RelationInventory::new(["founder_of", "ceo_of"]).unwrap();
        let bags = vec![
            Bag {
                pair: PairId::new("m.1", "m.2"),
                e1_mentions: vec!["Steve Jobs".into(), "Jobs".into()],
                e2_mentions: vec!["Apple".into()],
                labels: vec![true, true],
                sentences: vec![sentence("x y z w"), sentence("p q r s t")],
            },
            Bag {
                pair: PairId::new("m.3", "m.4"),
                e1_mentions: vec!["X".into()],
                e2_mentions: vec!["Y Z".into()],
                labels: vec![false, false],
                sentences: vec![sentence("x y z w")],
            },
        ];
        write_bags(&path, &bags, &inv, &["#%\tcommand\ttest".to_string()]).unwrap();
        assert_eq!(load_bags(&path, &inv).unwrap(), bags);
    }
}
