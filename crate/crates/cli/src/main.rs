use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use convgraph::augment::{self, MfsConfig, DEFAULT_CAP};
use convgraph::dialogue::validate_corpus_file;
use convgraph::error::StageExt;
use convgraph::experiment::{render_table, run_experiment, ExperimentManifest};
use convgraph::instances::DEFAULT_HISTORY;
use convgraph::metrics::{welch_ttest_at, SIGNIFICANCE_LEVEL};
use convgraph::policy::{predict_set, TrainConfig};
use convgraph::{
    build_graph, evaluate, extract_instances, ConvGraph, Corpus, Error, InstanceSet, LossKind,
    PolicyModel, PredictionRecord, Result, Split, Vocabulary,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "convgraph", version, about = "Conversation graphs for dialogue policy learning")]
struct Cli {
    /// Vocabulary file.
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    /// Random seed for augmentation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AugmentKind {
    Mfs,
    Oracle,
    Downsample,
    Duplicate,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Bce,
    Sbce,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Bce => LossKind::Bce,
            LossArg::Sbce => LossKind::Sbce,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file and report problems with line numbers.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Build the label vocabulary of one or more corpora (written to --vocab).
    BuildVocab {
        #[arg(long = "in", value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a conversation graph from one or more corpora.
    BuildGraph {
        #[arg(long = "in", value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Do not link final states to the shared end node.
        #[arg(long)]
        no_final_state: bool,
    },
    /// Print graph statistics.
    Stats {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Extract (history, agent act) instances from a corpus.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        /// Number of preceding dialogue states per instance (1 to 8).
        #[arg(long, default_value_t = DEFAULT_HISTORY)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Keep only the first copy of each instance.
        #[arg(long)]
        dedupe: bool,
    },
    /// Produce an augmented or resampled training set.
    ///
    /// `duplicate` reads a corpus file as --in and needs --vocab; the other
    /// strategies read an instance file.
    Augment {
        #[arg(long, value_enum)]
        strategy: AugmentKind,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        /// Held-out instances for `oracle`.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_HISTORY)]
        n: usize,
        /// Most frequent histories kept per agent node.
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        /// Copies per dialogue for `duplicate`.
        #[arg(long, default_value_t = 2)]
        factor: usize,
        #[arg(long)]
        out: PathBuf,
        /// Prepend the input instances to the augmentation.
        #[arg(long)]
        combine_base: bool,
    },
    /// Train a policy model.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        /// Training graph, source of the SBCE reference acts.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "bce")]
        loss: LossArg,
        #[arg(long, default_value_t = 256)]
        hidden: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        max_epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training log (JSON).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Predict agent acts for an instance file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Score predictions with HardF1 and SoftF1.
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
        /// Graph of all splits, source of the valid reference acts.
        #[arg(long)]
        eval_graph: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Welch's t-test between two score lists.
    Ttest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = SIGNIFICANCE_LEVEL)]
        alpha: f64,
    },
    /// Run a manifest-driven experiment.
    Experiment {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a graph in Graphviz format.
    ExportDot {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                ExitCode::from(EXIT_DATA)
            } else {
                ExitCode::from(EXIT_INTERNAL)
            }
        }
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn vocab_path(cli: &Cli) -> Result<&Path> {
    cli.vocab
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--vocab is required".into()))
}

fn load_vocab(cli: &Cli) -> Result<Vocabulary> {
    Vocabulary::load(vocab_path(cli)?).stage("load vocabulary")
}

fn load_corpora(paths: &[PathBuf]) -> Result<Vec<Corpus>> {
    paths
        .iter()
        .map(|p| Corpus::load(p, Split::Train))
        .collect::<Result<Vec<_>>>()
        .stage("load corpus")
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Scores {
        List(Vec<f64>),
        Object { scores: Vec<f64> },
    }
    let text = read(path)?;
    match serde_json::from_str(&text) {
        Ok(Scores::List(s)) | Ok(Scores::Object { scores: s }) => Ok(s),
        Err(e) => Err(Error::Format(format!(
            "{}: expected a list of scores or {{\"scores\": [...]}}: {e}",
            path.display()
        ))),
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let seed = cli.seed.unwrap_or(TrainConfig::default().seed);
    match &cli.command {
        Command::Validate { input } => {
            let diags = validate_corpus_file(input).stage("validate")?;
            if cli.json {
                print!("{}", to_json(&diags));
            } else {
                for d in &diags {
                    println!("{}:{}: {}", input.display(), d.line, d.message);
                }
                if diags.is_empty() {
                    println!("{}: ok", input.display());
                }
            }
            if !diags.is_empty() {
                return Ok(ExitCode::from(EXIT_DATA));
            }
        }
        Command::BuildVocab { inputs, out } => {
            let corpora = load_corpora(inputs)?;
            let refs: Vec<&Corpus> = corpora.iter().collect();
            let vocab = Vocabulary::build(&refs).stage("build vocabulary")?;
            let path = out
                .as_deref()
                .map_or_else(|| vocab_path(cli), Ok)?;
            vocab.save(path).stage("write vocabulary")?;
            log::info!(
                "vocabulary {}: {} act labels, {} belief slots",
                vocab.hash(),
                vocab.act_width(),
                vocab.belief_width()
            );
        }
        Command::BuildGraph {
            inputs,
            out,
            no_final_state,
        } => {
            let vocab = load_vocab(cli)?;
            let corpora = load_corpora(inputs)?;
            let refs: Vec<&Corpus> = corpora.iter().collect();
            let g = build_graph(&refs, &vocab, !no_final_state).stage("build graph")?;
            g.save(out).stage("write graph")?;
            log::info!("graph: {} nodes, {} edges", g.nodes().len(), g.edge_count());
        }
        Command::Stats { graph } => {
            let g = ConvGraph::load(graph).stage("load graph")?;
            let s = g.stats();
            if cli.json {
                print!("{}", to_json(&s));
            } else {
                println!(
                    "{:>8} {:>8} {:>8} {:>6} {:>10}",
                    "edges", "rep%", "nodes", "MND", "dialogues"
                );
                println!(
                    "{:>8} {:>8.2} {:>8} {:>6.2} {:>10}",
                    s.edges, s.repetition, s.nodes, s.mnd, s.n_dialogues
                );
            }
        }
        Command::Extract {
            input,
            n,
            out,
            dedupe,
        } => {
            let vocab = load_vocab(cli)?;
            let corpus = Corpus::load(input, Split::Train).stage("load corpus")?;
            let mut set = extract_instances(&corpus, &vocab, *n).stage("extract")?;
            if *dedupe {
                set = set.dedupe();
            }
            set.save(out).stage("write instances")?;
            log::info!("{} instances ({} unique)", set.len(), set.unique_count());
        }
        Command::Augment {
            strategy,
            graph,
            input,
            dev,
            test,
            n,
            cap,
            factor,
            out,
            combine_base,
        } => {
            let set = augment_cmd(
                cli, *strategy, graph, input, dev, test, *n, *cap, *factor, seed, *combine_base,
            )?;
            set.save(out).stage("write instances")?;
            log::info!("{} instances", set.len());
        }
        Command::Train {
            train,
            dev,
            graph,
            loss,
            hidden,
            batch,
            patience,
            lr,
            max_epochs,
            threshold,
            out,
            log: log_path,
        } => {
            let train_set = InstanceSet::load(train).stage("load train instances")?;
            let dev_set = InstanceSet::load(dev).stage("load dev instances")?;
            let g = ConvGraph::load(graph).stage("load graph")?;
            let cfg = TrainConfig {
                loss: (*loss).into(),
                hidden: *hidden,
                batch_size: *batch,
                patience: *patience,
                learning_rate: *lr,
                max_epochs: *max_epochs,
                seed,
                threshold: *threshold,
            };
            let (model, log) = match convgraph::train(&train_set, &dev_set, &g, &cfg) {
                Err(Error::Divergence { epoch, last_finite }) => {
                    last_finite.save(out).stage("write model")?;
                    return Err(Error::Divergence { epoch, last_finite }).stage("train");
                }
                other => other.stage("train")?,
            };
            model.save(out).stage("write model")?;
            if let Some(p) = log_path {
                write(p, to_json(&log)).stage("write log")?;
            }
            log::info!(
                "best epoch {} dev HardF1 {:.4}",
                log.best_epoch,
                log.best_dev_hard_f1
            );
        }
        Command::Predict {
            model,
            input,
            out,
            threshold,
        } => {
            let m = PolicyModel::load(model).stage("load model")?;
            let set = InstanceSet::load(input).stage("load instances")?;
            let preds = predict_set(&m, &set, *threshold).stage("predict")?;
            let mut text = String::new();
            for p in &preds {
                text.push_str(&serde_json::to_string(p).expect("record serializes"));
                text.push('\n');
            }
            write(out, text).stage("write predictions")?;
        }
        Command::Evaluate {
            preds,
            eval_graph,
            out,
        } => {
            let g = ConvGraph::load(eval_graph).stage("load graph")?;
            let text = read(preds).stage("load predictions")?;
            let records = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str::<PredictionRecord>(l).map_err(|e| Error::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()
                .stage("load predictions")?;
            let report = evaluate(&records, &g).stage("evaluate")?;
            let json = to_json(&report);
            match out {
                Some(p) => write(p, &json).stage("write report")?,
                None => print!("{json}"),
            }
            if out.is_some() && !cli.json {
                println!(
                    "HardF1 {:.4}  SoftF1 {:.4}  records {}  unresolved {}",
                    report.hard_f1, report.soft_f1, report.n_records, report.unresolved
                );
            }
        }
        Command::Ttest { a, b, alpha } => {
            let xs = read_scores(a).stage("load scores")?;
            let ys = read_scores(b).stage("load scores")?;
            let r = welch_ttest_at(&xs, &ys, *alpha).stage("ttest")?;
            if cli.json {
                print!("{}", to_json(&r));
            } else {
                println!(
                    "t = {:.6}  df = {:.4}  p = {:.6}  {}",
                    r.t,
                    r.df,
                    r.p,
                    if r.significant { "significant" } else { "not significant" }
                );
            }
        }
        Command::Experiment { manifest } => {
            let m = ExperimentManifest::load(manifest).stage("load manifest")?;
            let report = run_experiment(&m)?;
            if cli.json {
                print!("{}", to_json(&report));
            } else {
                print!("{}", render_table(&report));
            }
        }
        Command::ExportDot { graph, out } => {
            let vocab = load_vocab(cli)?;
            let g = ConvGraph::load(graph).stage("load graph")?;
            let dot = g.to_dot(&vocab);
            match out {
                Some(p) => write(p, dot).stage("write dot")?,
                None => print!("{dot}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn augment_cmd(
    cli: &Cli,
    strategy: AugmentKind,
    graph: &Option<PathBuf>,
    input: &Path,
    dev: &Option<PathBuf>,
    test: &Option<PathBuf>,
    n: usize,
    cap: usize,
    factor: usize,
    seed: u64,
    combine_base: bool,
) -> Result<InstanceSet> {
    let need = |p: &Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| Error::InvalidConfig(format!("{flag} is required for this strategy")))
    };
    let mfs_cfg = MfsConfig {
        n,
        max_histories_per_node: cap,
        combine_with_base: false,
    };
    let load_graph = || ConvGraph::load(need(graph, "--graph")?).stage("load graph");
    let out = match strategy {
        AugmentKind::Duplicate => {
            let vocab = load_vocab(cli)?;
            let corpus = Corpus::load(input, Split::Train).stage("load corpus")?;
            let dup = augment::duplicate_dialogues(&corpus, factor, seed).stage("augment")?;
            let mut set = extract_instances(&dup, &vocab, n).stage("extract")?;
            set.meta.insert("strategy".into(), "duplicate".into());
            set.meta.insert("factor".into(), factor.to_string());
            set.meta.insert("seed".into(), seed.to_string());
            if combine_base {
                log::warn!("--combine-base has no effect for duplicate");
            }
            return Ok(set);
        }
        AugmentKind::Downsample => {
            let base = InstanceSet::load(input).stage("load instances")?;
            let mut set = augment::downsample(&base);
            set.meta.insert("strategy".into(), "downsample".into());
            return Ok(set);
        }
        AugmentKind::Mfs => {
            let g = load_graph()?;
            augment::mfs_augment(&g, &mfs_cfg).stage("augment")?
        }
        AugmentKind::Oracle => {
            let g = load_graph()?;
            let base = InstanceSet::load(input).stage("load instances")?;
            let dev = InstanceSet::load(need(dev, "--dev")?).stage("load dev instances")?;
            let test = InstanceSet::load(need(test, "--test")?).stage("load test instances")?;
            let mfs = augment::mfs_augment(&g, &mfs_cfg).stage("augment")?;
            augment::oracle_augment(&mfs, &dev, &test, &base).stage("augment")?
        }
    };
    if !combine_base {
        return Ok(out);
    }
    let base = InstanceSet::load(input).stage("load instances")?;
    augment::combine_with_base(&base, &out).stage("augment")
}
