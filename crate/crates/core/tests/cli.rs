use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relex::checkpoint::Checkpoint;
use relex::dataset::{load_bags, load_relations, Featurizer};
use relex::embeddings::{PretrainedVectors, Vocabulary, WordEmbeddingTable};
use relex::evaluation::{evaluate, RECALL_CUTOFF};

const SMALL: &[&str] = &[
    "--train-positive", "40", "--train-negative", "80", "--test-positive", "15", "--test-negative", "30",
    "--n-direct", "60",
];

const CONFIG: &str = "max_epochs = 2\nseeds = [1, 2]\nlr = 0.01\nfilters = 4\nd_s = 8\nexist_hidden = 6\nattn_hidden = 6\nout_hidden = 8\n";

fn relex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relex")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Data {
    dir: tempfile::TempDir,
}

impl Data {
    fn new() -> Data {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["gen-synthetic", "--out-dir", s(dir.path())];
        args.extend_from_slice(SMALL);
        let out = relex(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::write(dir.path().join("cfg.toml"), CONFIG).unwrap();
        Data { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (rel, train, direct, vec, cfg, out) = (
            self.path("relations.txt"),
            self.path("train.bags"),
            self.path("direct.tsv"),
            self.path("vectors.txt"),
            self.path("cfg.toml"),
            self.path(out),
        );
        let mut args = vec![
            "train", "--relations", s(&rel), "--train-bags", s(&train), "--direct", s(&direct), "--vectors",
            s(&vec), "--config", s(&cfg), "--out", s(&out),
        ];
        args.extend_from_slice(extra);
        relex(&args)
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = ["relations.txt", "train.bags", "test.bags", "direct.tsv", "vectors.txt"]
        .iter()
        .map(|n| (n.to_string(), fs::read(dir.join(n)).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn generation_is_byte_reproducible() {
    let data = Data::new();
    let first = files(data.dir.path());
    let mut args = vec!["gen-synthetic", "--out-dir", s(data.dir.path())];
    args.extend_from_slice(SMALL);
    assert!(relex(&args).status.success());
    assert_eq!(first, files(data.dir.path()));
    for (name, bytes) in &first {
        let text = String::from_utf8_lossy(bytes);
        assert!(text.lines().any(|l| l.starts_with("#%\tconfig_sha256\t")), "{name} lacks a manifest");
    }
}

#[test]
fn train_and_eval_are_reproducible_and_agree_with_the_library() {
    let data = Data::new();
    let a = data.train("a.ckpt", &["--mode", "multitask"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let first = fs::read(data.path("a.ckpt")).unwrap();
    let again = data.train("a.ckpt", &["--mode", "multitask"]);
    assert!(again.status.success());
    assert_eq!(first, fs::read(data.path("a.ckpt")).unwrap(), "checkpoint differs between identical runs");
    assert!(data.path("a.ckpt.vocab").is_file() && data.path("a.ckpt.log").is_file());

    let threaded = data.train("b.ckpt", &["--mode", "multitask", "--jobs", "1"]);
    assert!(threaded.status.success());
    let ckpt_a = Checkpoint::load(&data.path("a.ckpt")).unwrap();
    let ckpt_b = Checkpoint::load(&data.path("b.ckpt")).unwrap();
    assert_eq!(ckpt_a.params, ckpt_b.params, "result depends on the thread count");

    let (ckpt, bags, vec, pr) = (data.path("a.ckpt"), data.path("test.bags"), data.path("vectors.txt"), data.path("pr.tsv"));
    let eval = || {
        relex(&["eval", "--checkpoint", s(&ckpt), "--bags", s(&bags), "--vectors", s(&vec), "--out-pr", s(&pr)])
    };
    let e1 = eval();
    assert!(e1.status.success(), "{}", String::from_utf8_lossy(&e1.stderr));
    let pr1 = fs::read(&pr).unwrap();
    let e2 = eval();
    assert_eq!(e1.stdout, e2.stdout);
    assert_eq!(pr1, fs::read(&pr).unwrap());

    // same number through the library
    let loaded = Checkpoint::load(&ckpt).unwrap();
    let relations = load_relations(&data.path("relations.txt")).unwrap();
    let (vocab, _, seed) = Vocabulary::load(&data.path("a.ckpt.vocab")).unwrap();
    let vectors = PretrainedVectors::load(&vec, None).unwrap();
    let table = WordEmbeddingTable::build(&vocab, &vectors, seed).unwrap();
    loaded.check_table(&table).unwrap();
    let featurizer = Featurizer {
        vocab: &vocab,
        table: &table,
        pretrained: &vectors,
        max_len: loaded.config.max_len,
    };
    let test = featurizer.bags(&load_bags(&bags, &relations).unwrap()).unwrap();
    let model = loaded.model().unwrap();
    let (_, auc) = evaluate(&test, &table, &model.net(), RECALL_CUTOFF).unwrap();
    let stdout = String::from_utf8(e1.stdout).unwrap();
    let printed: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("auc_at_0.4\t"))
        .expect("auc line")
        .parse()
        .unwrap();
    assert_eq!(printed, auc, "{stdout}");
}

#[test]
fn checkpoint_roundtrip_preserves_parameters_bitwise() {
    let data = Data::new();
    assert!(data.train("c.ckpt", &[]).status.success());
    let loaded = Checkpoint::load(&data.path("c.ckpt")).unwrap();
    let copy = data.path("copy.ckpt");
    loaded.save(&copy).unwrap();
    let reloaded = Checkpoint::load(&copy).unwrap();
    let bits = |c: &Checkpoint| -> Vec<u64> {
        c.params.tensors().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&loaded), bits(&reloaded));
    assert_eq!(loaded.adam, reloaded.adam);
    assert_eq!(loaded.config, reloaded.config);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let data = Data::new();
    assert_eq!(relex(&["train"]).status.code(), Some(1));
    assert_eq!(relex(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(relex(&["--help"]).status.code(), Some(0));

    let missing = relex(&[
        "train", "--relations", "/nonexistent/r.txt", "--train-bags", "x", "--vectors", "y", "--out",
        s(&data.path("m.ckpt")),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let needs_direct = relex(&[
        "train", "--relations", s(&data.path("relations.txt")), "--train-bags", s(&data.path("train.bags")),
        "--vectors", s(&data.path("vectors.txt")), "--mode", "multitask", "--out", s(&data.path("n.ckpt")),
    ]);
    assert_eq!(needs_direct.status.code(), Some(1));

    let diverged = data.train("d.ckpt", &["--lr", "1e300"]);
    assert_eq!(diverged.status.code(), Some(3), "{}", String::from_utf8_lossy(&diverged.stderr));
    assert!(!data.path("d.ckpt").exists(), "no checkpoint after divergence");

    // checkpoint from a different format version
    assert!(data.train("v.ckpt", &[]).status.success());
    let text = fs::read_to_string(data.path("v.ckpt")).unwrap();
    fs::write(data.path("v.ckpt"), text.replacen("\"version\":1", "\"version\":99", 1)).unwrap();
    let stale = relex(&[
        "eval", "--checkpoint", s(&data.path("v.ckpt")), "--vocab", s(&data.path("v.ckpt.vocab")), "--bags",
        s(&data.path("test.bags")), "--vectors", s(&data.path("vectors.txt")),
    ]);
    assert_eq!(stale.status.code(), Some(2), "{}", String::from_utf8_lossy(&stale.stderr));
}

#[test]
fn inspect_reports_one_row_per_sentence() {
    let data = Data::new();
    assert!(data.train("m.ckpt", &["--mode", "multitask"]).status.success());
    assert!(data.train("b.ckpt", &[]).status.success());
    let relations = load_relations(&data.path("relations.txt")).unwrap();
    let bags = load_bags(&data.path("test.bags"), &relations).unwrap();
    let bag = bags.iter().max_by_key(|b| b.len()).unwrap();
    let pair = format!("{}::{}", bag.pair.e1, bag.pair.e2);
    let out = data.path("inspect.tsv");
    let res = relex(&[
        "inspect", "--checkpoint", s(&data.path("m.ckpt")), "--baseline", s(&data.path("b.ckpt")), "--bags",
        s(&data.path("test.bags")), "--vectors", s(&data.path("vectors.txt")), "--pair", &pair, "--out", s(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), bag.len() + 1, "{text}");
    assert_eq!(rows[0].split('\t').count(), 7);

    let unknown = relex(&[
        "inspect", "--checkpoint", s(&data.path("m.ckpt")), "--bags", s(&data.path("test.bags")), "--vectors",
        s(&data.path("vectors.txt")), "--pair", "nobody::nothing",
    ]);
    assert_eq!(unknown.status.code(), Some(2));
}
