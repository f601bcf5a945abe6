//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training divergence.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::bag_encoder::{Pooling, WeightScheme};
use crate::checkpoint::Checkpoint;
use crate::dataset::synthetic::{generate_synthetic, SyntheticSpec};
use crate::dataset::{
    build_bags, load_bags, load_direct, load_relations, merge_bag_shards, read_corpus, read_direct_source, read_kb,
    write_bags, write_direct, write_relations, Bag, DirectExample, Featurizer, PairId, RelationInventory,
};
use crate::embeddings::{PretrainedVectors, Vocabulary, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::evaluation::{
    ablation_grid, evaluate, find_bag, format_pr_curve, format_sweep, inspect_bag, lambda_sweep, InspectModel,
    LAMBDA_GRID, RECALL_CUTOFF,
};
use crate::experiment::Experiment;
use crate::manifest::{config_hash, RunManifest};
use crate::training::{train_with_log, SupervisionMode, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged(_) => EXIT_DIVERGED,
        Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

#[derive(Parser, Debug)]
#[command(name = "relex", version, about = "Relation extraction with directly supervised attention")]
struct Cli {
    /// Worker threads for minibatches, evaluation and grid jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Align a corpus with a knowledge base into bags; normalize direct examples.
    BuildData(BuildDataArgs),
    /// Generate a synthetic dataset with planted trigger tokens.
    GenSynthetic(GenSyntheticArgs),
    /// Train over all seeds and save the best checkpoint.
    Train(TrainArgs),
    /// PR curve and AUC of a checkpoint on a bag file.
    Eval(EvalArgs),
    /// Supervision × weights × pooling grid.
    Ablate(GridArgs),
    /// MultiTask test AUC across λ values.
    SweepLambda(SweepArgs),
    /// Per-sentence attention weights of one bag.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct BuildDataArgs {
    #[arg(long)]
    relations: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    /// Annotated corpus shard; repeat for several shards.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    out_bags: PathBuf,
    /// Direct-supervision records to validate and normalize.
    #[arg(long, requires = "out_direct")]
    direct: Option<PathBuf>,
    #[arg(long, requires = "direct")]
    out_direct: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenSyntheticArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML file with generator fields; flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_relations: Option<usize>,
    #[arg(long)]
    train_positive: Option<usize>,
    #[arg(long)]
    train_negative: Option<usize>,
    #[arg(long)]
    test_positive: Option<usize>,
    #[arg(long)]
    test_negative: Option<usize>,
    #[arg(long)]
    n_direct: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    triggers_per_relation: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_bag: Option<usize>,
    #[arg(long)]
    max_bag: Option<usize>,
    #[arg(long)]
    trigger_rate: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Every training field, settable from a flat TOML file and from flags
/// of the same name (flags win).
#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFlags {
    #[arg(long)]
    pub mode: Option<SupervisionMode>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub d_w: Option<usize>,
    #[arg(long)]
    pub d_pos: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub filter_widths: Option<Vec<usize>>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub d_s: Option<usize>,
    #[arg(long)]
    pub exist_hidden: Option<usize>,
    #[arg(long)]
    pub attn_hidden: Option<usize>,
    #[arg(long)]
    pub out_hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub weight: Option<WeightScheme>,
    #[arg(long)]
    pub pooling: Option<Pooling>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($f:ident),*) => {
        TrainFlags { $($f: $flags.$f.clone().or_else(|| $file.$f.clone()),)* }
    };
}

impl TrainFlags {
    /// `self` where set, otherwise `file`.
    pub fn over(&self, file: &TrainFlags) -> TrainFlags {
        overlay!(
            self, file, mode, lambda, batch_size, max_epochs, patience, seeds, grad_clip, train_fraction, data_seed,
            min_freq, max_len, lr, beta1, beta2, eps, d_w, d_pos, filter_widths, filters, d_s, exist_hidden,
            attn_hidden, out_hidden, dropout, weight, pooling
        )
    }

    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),*) => {
                $(if let Some(v) = &self.$src { cfg.$($dst).+ = v.clone(); })*
            };
        }
        set!(
            mode => mode, lambda => lambda, batch_size => batch_size, max_epochs => max_epochs,
            patience => patience, seeds => seeds, grad_clip => grad_clip, train_fraction => train_fraction,
            data_seed => data_seed, min_freq => min_freq, max_len => max_len,
            lr => adam.lr, beta1 => adam.beta1, beta2 => adam.beta2, eps => adam.eps,
            d_w => model.d_w, d_pos => model.d_pos, filter_widths => model.filter_widths,
            filters => model.filters, d_s => model.d_s, exist_hidden => model.exist_hidden,
            attn_hidden => model.attn_hidden, out_hidden => model.out_hidden, dropout => model.dropout,
            weight => model.attention.weight, pooling => model.attention.pooling
        );
    }

    pub fn load(path: &Path) -> Result<TrainFlags> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    relations: PathBuf,
    #[arg(long)]
    train_bags: PathBuf,
    /// Direct-supervision file (required by the as-bags and multitask modes).
    #[arg(long)]
    direct: Option<PathBuf>,
    /// Pretrained word vectors (`word v1 v2 ...` per line).
    #[arg(long)]
    vectors: PathBuf,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Flat TOML file with training fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint path; the vocabulary is written to `<out>.vocab`.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch log (default `<out>.log`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary file (default `<checkpoint>.vocab`).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    bags: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    /// PR-curve data file.
    #[arg(long)]
    out_pr: Option<PathBuf>,
    #[arg(long, default_value_t = RECALL_CUTOFF)]
    cutoff: f64,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    test_bags: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values_t = LAMBDA_GRID.to_vec())]
    lambdas: Vec<f64>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Checkpoint of the model to inspect.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional second checkpoint shown as the baseline column.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    bags: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    /// Entity pair as `e1::e2`.
    #[arg(long)]
    pair: PairId,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Files written by a command; removed again unless the command succeeds.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        self.claim(path);
        fs::write(path, contents).map_err(|e| Error::io(path, e))
    }

    fn claim(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

fn require_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        )),
        _ => Ok(()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let command_line = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let result = match cli.jobs {
        Some(0) => Err(Error::InvalidArgument("--jobs must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(cli.command, &command_line))),
        None => dispatch(cli.command, &command_line),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, command_line: &str) -> Result<()> {
    match command {
        Command::BuildData(a) => build_data(a, command_line),
        Command::GenSynthetic(a) => gen_synthetic(a, command_line),
        Command::Train(a) => train_cmd(a, command_line),
        Command::Eval(a) => eval_cmd(a, command_line),
        Command::Ablate(a) => ablate_cmd(a, command_line),
        Command::SweepLambda(a) => sweep_cmd(a, command_line),
        Command::Inspect(a) => inspect_cmd(a, command_line),
    }
}

fn build_data(a: BuildDataArgs, command_line: &str) -> Result<()> {
    let mut inputs = vec![&a.relations, &a.kb];
    inputs.extend(&a.corpus);
    inputs.extend(&a.direct);
    for p in &inputs {
        require_file(p)?;
    }
    require_parent(&a.out_bags)?;
    if let Some(p) = &a.out_direct {
        require_parent(p)?;
    }
    let relations = load_relations(&a.relations)?;
    let kb = read_kb(&a.kb)?;
    let shards = a
        .corpus
        .par_iter()
        .map(|p| read_corpus(p).and_then(|c| build_bags(&kb, &c, &relations)))
        .collect::<Result<Vec<_>>>()?;
    let bags = merge_bag_shards(shards)?;
    let direct = a.direct.as_deref().map(read_direct_source).transpose()?;

    let mut manifest = RunManifest::new(command_line, config_hash(&relations.names())?, Vec::new());
    for p in &inputs {
        manifest.add_input(p)?;
    }
    manifest.add_output(&a.out_bags);
    if let Some(p) = &a.out_direct {
        manifest.add_output(p);
    }
    manifest.verify_inputs()?;

    let mut out = Outputs::default();
    out.claim(&a.out_bags);
    write_bags(&a.out_bags, &bags, &relations, &manifest.lines())?;
    if let (Some(p), Some(direct)) = (&a.out_direct, &direct) {
        out.claim(p);
        write_direct(p, direct, &manifest.lines())?;
    }
    out.commit();
    let positive = bags.iter().filter(|b| b.is_positive()).count();
    println!("bags\t{}\tpositive\t{positive}", bags.len());
    if let Some(d) = direct {
        println!("direct\t{}", d.len());
    }
    Ok(())
}

fn gen_synthetic(a: GenSyntheticArgs, command_line: &str) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<SyntheticSpec>(&text)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { spec.$f = v; })* };
    }
    set!(
        n_relations, train_positive, train_negative, test_positive, test_negative, n_direct, vocab_size,
        triggers_per_relation, noise, min_len, max_len, min_bag, max_bag, trigger_rate, dim, seed
    );
    if !a.out_dir.is_dir() {
        return Err(Error::io(
            &a.out_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    let data = generate_synthetic(&spec)?;
    let paths = synthetic_paths(&a.out_dir);
    let mut manifest = RunManifest::new(command_line, config_hash(&spec)?, vec![spec.seed]);
    for p in &paths {
        manifest.add_output(p);
    }
    let [relations, train, test, direct, vectors] = &paths;
    let mut out = Outputs::default();
    for p in &paths {
        out.claim(p);
    }
    write_relations(relations, &data.relations, &manifest.lines())?;
    write_bags(train, &data.train_bags()?, &data.relations, &manifest.lines())?;
    write_bags(test, &data.test_bags()?, &data.relations, &manifest.lines())?;
    write_direct(direct, &data.direct, &manifest.lines())?;
    data.vectors.save(vectors, &manifest.lines())?;
    out.commit();
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(())
}

/// relations, train bags, test bags, direct examples, vectors.
pub fn synthetic_paths(dir: &Path) -> [PathBuf; 5] {
    [
        dir.join("relations.txt"),
        dir.join("train.bags"),
        dir.join("test.bags"),
        dir.join("direct.tsv"),
        dir.join("vectors.txt"),
    ]
}

fn resolve_config(config: &ConfigArgs) -> Result<(TrainConfig, TrainFlags)> {
    let file = match &config.config {
        Some(p) => {
            require_file(p)?;
            TrainFlags::load(p)?
        }
        None => TrainFlags::default(),
    };
    let flags = config.flags.over(&file);
    let mut cfg = TrainConfig::default();
    flags.apply(&mut cfg);
    Ok((cfg, flags))
}

struct LoadedData {
    relations: RelationInventory,
    train: Vec<Bag>,
    direct: Vec<DirectExample>,
    vectors: PretrainedVectors,
}

fn load_data(data: &DataArgs, flags: &TrainFlags, cfg: &mut TrainConfig, manifest: &mut RunManifest) -> Result<LoadedData> {
    for p in [&data.relations, &data.train_bags, &data.vectors].into_iter().chain(&data.direct) {
        require_file(p)?;
        manifest.add_input(p)?;
    }
    let relations = load_relations(&data.relations)?;
    let train = load_bags(&data.train_bags, &relations)?;
    let direct = match &data.direct {
        Some(p) => load_direct(p)?,
        None => Vec::new(),
    };
    let vectors = PretrainedVectors::load(&data.vectors, None)?;
    cfg.model.n_relations = relations.len();
    if flags.d_w.is_none() {
        cfg.model.d_w = vectors.dim();
    }
    if cfg.mode != SupervisionMode::DistSup && direct.is_empty() {
        return Err(Error::InvalidArgument(format!("mode {} requires --direct", cfg.mode)));
    }
    Ok(LoadedData {
        relations,
        train,
        direct,
        vectors,
    })
}

fn train_cmd(a: TrainArgs, command_line: &str) -> Result<()> {
    let (mut cfg, flags) = resolve_config(&a.config)?;
    cfg.validate()?;
    require_parent(&a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log"));
    let vocab_path = with_suffix(&a.out, ".vocab");
    let mut manifest = RunManifest::new(command_line, "", cfg.seeds.clone());
    let data = load_data(&a.data, &flags, &mut cfg, &mut manifest)?;
    cfg.validate()?;
    manifest.config_hash = config_hash(&cfg)?;
    for p in [&a.out, &vocab_path, &log_path] {
        manifest.add_output(p);
    }

    let exp = Experiment::new(&cfg, data.relations, data.train, Vec::new(), data.direct, data.vectors)?;
    let mut out = Outputs::default();
    out.claim(&log_path);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let header = manifest.wrap("");
    log.write_all(header.as_bytes()).map_err(|e| Error::io(&log_path, e))?;
    let mut io_error = None;
    let outcome = train_with_log(&cfg, &exp.corpus, &exp.table, &mut |entry| {
        eprintln!("{entry}");
        if let Err(e) = writeln!(log, "{entry}") {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(Error::io(&log_path, e));
    }
    manifest.verify_inputs()?;

    let best = outcome.best_run();
    let ckpt = Checkpoint::from_run(manifest, &cfg, &exp.relations, best, &exp.table);
    out.claim(&vocab_path);
    exp.vocab.save(&vocab_path, exp.table.dim(), cfg.data_seed)?;
    out.claim(&a.out);
    ckpt.save(&a.out)?;
    out.commit();
    for run in &outcome.runs {
        println!(
            "seed\t{}\tbest_epoch\t{}\tepochs\t{}\tval_auc\t{}",
            run.seed, run.best_epoch, run.epochs_run, run.best_val_auc
        );
    }
    println!("best_seed\t{}\tval_auc\t{}", best.seed, best.best_val_auc);
    Ok(())
}

/// Checkpoint, its model and the featurization it was trained with.
struct Restored {
    ckpt: Checkpoint,
    model: crate::model::Model,
    vocab: Vocabulary,
    table: WordEmbeddingTable,
}

fn restore(checkpoint: &Path, vocab: Option<&Path>, vectors: &PretrainedVectors) -> Result<Restored> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let vocab_path = vocab.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(checkpoint, ".vocab"));
    let (vocab, dim, seed) = Vocabulary::load(&vocab_path)?;
    if dim != vectors.dim() {
        return Err(Error::InvalidArgument(format!(
            "vocabulary was built for d_w = {dim}, vectors have dimension {}",
            vectors.dim()
        )));
    }
    let table = WordEmbeddingTable::build(&vocab, vectors, seed)?;
    ckpt.check_table(&table)?;
    let model = ckpt.model()?;
    Ok(Restored {
        ckpt,
        model,
        vocab,
        table,
    })
}

fn eval_cmd(a: EvalArgs, command_line: &str) -> Result<()> {
    for p in [&a.checkpoint, &a.bags, &a.vectors] {
        require_file(p)?;
    }
    if !(a.cutoff > 0.0 && a.cutoff <= 1.0) {
        return Err(Error::InvalidArgument(format!("cutoff must lie in (0, 1], got {}", a.cutoff)));
    }
    if let Some(p) = &a.out_pr {
        require_parent(p)?;
    }
    let vectors = PretrainedVectors::load(&a.vectors, None)?;
    let r = restore(&a.checkpoint, a.vocab.as_deref(), &vectors)?;
    let relations = r.ckpt.relations()?;
    let bags = load_bags(&a.bags, &relations)?;
    let featurizer = Featurizer {
        vocab: &r.vocab,
        table: &r.table,
        pretrained: &vectors,
        max_len: r.ckpt.config.max_len,
    };
    let instances = featurizer.bags(&bags)?;
    let (curve, auc) = evaluate(&instances, &r.table, &r.model.net(), a.cutoff)?;

    let mut manifest = RunManifest::new(command_line, config_hash(&r.ckpt.config)?, vec![r.ckpt.seed]);
    for p in [&a.checkpoint, &a.bags, &a.vectors] {
        manifest.add_input(p)?;
    }
    let mut out = Outputs::default();
    if let Some(p) = &a.out_pr {
        manifest.add_output(p);
        manifest.verify_inputs()?;
        let body = format!("# auc_at_recall\t{}\t{}\n{}", a.cutoff, auc, format_pr_curve(&curve));
        out.write(p, &manifest.wrap(&body))?;
    }
    out.commit();
    println!("auc_at_{}\t{}", a.cutoff, auc);
    Ok(())
}

fn grid_setup(g: &GridArgs, command_line: &str) -> Result<(TrainConfig, Experiment, RunManifest)> {
    let (mut cfg, flags) = resolve_config(&g.config)?;
    cfg.validate()?;
    require_parent(&g.out)?;
    require_file(&g.test_bags)?;
    let mut manifest = RunManifest::new(command_line, "", cfg.seeds.clone());
    let data = load_data(&g.data, &flags, &mut cfg, &mut manifest)?;
    if data.direct.is_empty() {
        return Err(Error::InvalidArgument("grid runs require --direct".into()));
    }
    cfg.validate()?;
    manifest.add_input(&g.test_bags)?;
    manifest.config_hash = config_hash(&cfg)?;
    manifest.add_output(&g.out);
    let test = load_bags(&g.test_bags, &data.relations)?;
    let exp = Experiment::new(&cfg, data.relations, data.train, test, data.direct, data.vectors)?;
    Ok((cfg, exp, manifest))
}

fn ablate_cmd(a: GridArgs, command_line: &str) -> Result<()> {
    let (cfg, exp, manifest) = grid_setup(&a, command_line)?;
    let grid = ablation_grid(&cfg, &exp.corpus, &exp.table);
    manifest.verify_inputs()?;
    let mut out = Outputs::default();
    let table = grid.to_table();
    out.write(&a.out, &manifest.wrap(&table))?;
    out.commit();
    print!("{table}");
    let failed = grid.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} cells failed", grid.cells.len());
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs, command_line: &str) -> Result<()> {
    let (cfg, exp, manifest) = grid_setup(&a.grid, command_line)?;
    let points = lambda_sweep(&a.lambdas, &cfg, &exp.corpus, &exp.table)?;
    manifest.verify_inputs()?;
    let body = format_sweep(&points);
    let mut out = Outputs::default();
    out.write(&a.grid.out, &manifest.wrap(&body))?;
    out.commit();
    print!("{body}");
    Ok(())
}

fn inspect_column<'a>(label: &str, r: &'a Restored, vectors: &'a PretrainedVectors) -> InspectModel<'a> {
    InspectModel {
        label: label.to_string(),
        model: &r.model,
        featurizer: Featurizer {
            vocab: &r.vocab,
            table: &r.table,
            pretrained: vectors,
            max_len: r.ckpt.config.max_len,
        },
    }
}

fn inspect_cmd(a: InspectArgs, command_line: &str) -> Result<()> {
    for p in [&a.checkpoint, &a.bags, &a.vectors].into_iter().chain(&a.baseline) {
        require_file(p)?;
    }
    if let Some(p) = &a.out {
        require_parent(p)?;
    }
    let vectors = PretrainedVectors::load(&a.vectors, None)?;
    let model = restore(&a.checkpoint, None, &vectors)?;
    let baseline = a.baseline.as_deref().map(|p| restore(p, None, &vectors)).transpose()?;
    let relations = model.ckpt.relations()?;
    let bags = load_bags(&a.bags, &relations)?;
    let bag = find_bag(&bags, &a.pair)?;

    let mut columns = Vec::new();
    if let Some(b) = &baseline {
        columns.push(inspect_column("baseline", b, &vectors));
    }
    columns.push(inspect_column("model", &model, &vectors));
    let report = inspect_bag(bag, &columns)?;

    let mut manifest = RunManifest::new(command_line, config_hash(&model.ckpt.config)?, vec![model.ckpt.seed]);
    for p in [&a.checkpoint, &a.bags, &a.vectors].into_iter().chain(&a.baseline) {
        manifest.add_input(p)?;
    }
    let table = report.to_table();
    let mut out = Outputs::default();
    if let Some(p) = &a.out {
        manifest.add_output(p);
        manifest.verify_inputs()?;
        out.write(p, &manifest.wrap(&table))?;
    }
    out.commit();
    print!("{table}");
    Ok(())
}
