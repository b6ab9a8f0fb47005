//! Manifest-driven experiment runner: one strategy, one loss, several seeds,
//! scored on the development set, the deduplicated test set and the original
//! test set.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{self, MfsConfig, DEFAULT_CAP};
use crate::dialogue::{Corpus, Split, Vocabulary};
use crate::error::{Error, Result, StageExt};
use crate::graph::{build_graph, ConvGraph};
use crate::instances::{extract_instances, InstanceSet, DEFAULT_HISTORY, MAX_HISTORY};
use crate::metrics::{evaluate, welch_ttest, ScoreReport, WelchResult};
use crate::policy::{predict_set, train, LossKind, TrainConfig, TrainLog};

pub const REPORT_SCHEMA: u32 = 1;

pub const DEFAULT_SEEDS: [u64; 10] = [13, 17, 19, 23, 29, 31, 37, 41, 43, 47];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Base,
    Dsample,
    Dupl,
    Mfs,
    MfsPlusBase,
    OraclePlusBase,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Base,
        Strategy::Dsample,
        Strategy::Dupl,
        Strategy::Mfs,
        Strategy::MfsPlusBase,
        Strategy::OraclePlusBase,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Base => "BASE",
            Strategy::Dsample => "D-SAMPLE",
            Strategy::Dupl => "DATA DUPL",
            Strategy::Mfs => "MFS",
            Strategy::MfsPlusBase => "MFS + B",
            Strategy::OraclePlusBase => "ORACLE + B",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Strategy::Base => "base",
            Strategy::Dsample => "dsample",
            Strategy::Dupl => "dupl",
            Strategy::Mfs => "mfs",
            Strategy::MfsPlusBase => "mfs_plus_base",
            Strategy::OraclePlusBase => "oracle_plus_base",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s
            .to_ascii_lowercase()
            .replace('+', "_plus_")
            .replace(['-', ' '], "_")
            .split('_')
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.slug().replace('_', "") == norm.replace('_', ""))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

fn default_n() -> usize {
    DEFAULT_HISTORY
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_cap() -> usize {
    DEFAULT_CAP
}
fn default_dup_factor() -> usize {
    2
}
fn default_aug_seed() -> u64 {
    13
}
fn default_true() -> bool {
    true
}

/// Training hyper-parameters shared by all seeds of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub hidden: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub threshold: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        let c = TrainConfig::default();
        Hyper {
            hidden: c.hidden,
            batch_size: c.batch_size,
            patience: c.patience,
            learning_rate: c.learning_rate,
            max_epochs: c.max_epochs,
            threshold: c.threshold,
        }
    }
}

impl Hyper {
    fn config(&self, loss: LossKind, seed: u64) -> TrainConfig {
        TrainConfig {
            loss,
            hidden: self.hidden,
            batch_size: self.batch_size,
            patience: self.patience,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            seed,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub strategy: Strategy,
    pub loss: LossKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub hyper: Hyper,
    /// Histories per agent node for most frequent sampling.
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_dup_factor")]
    pub dup_factor: usize,
    /// Seed for dialogue duplication.
    #[serde(default = "default_aug_seed")]
    pub augment_seed: u64,
    /// Also train BASE with the same seeds and test for significance.
    #[serde(default = "default_true")]
    pub compare_with_base: bool,
}

impl ExperimentManifest {
    /// Reads a JSON manifest; relative paths are resolved against the
    /// manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: ExperimentManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("manifest: {e}")))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut m.train, &mut m.dev, &mut m.test, &mut m.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if !(1..=MAX_HISTORY).contains(&self.n) {
            return Err(Error::InvalidConfig(format!(
                "history length must be in 1..={MAX_HISTORY}"
            )));
        }
        for p in [&self.train, &self.dev, &self.test] {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("{} does not exist", p.display())));
            }
        }
        self.hyper.config(self.loss, 0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blocks<T> {
    pub dev: T,
    pub test_dedup: T,
    pub test: T,
}

impl<T> Blocks<T> {
    fn map<U>(&self, f: impl Fn(&T) -> U) -> Blocks<U> {
        Blocks {
            dev: f(&self.dev),
            test_dedup: f(&self.test_dedup),
            test: f(&self.test),
        }
    }

    fn named(&self) -> [(&'static str, &T); 3] {
        [
            ("dev", &self.dev),
            ("test_dedup", &self.test_dedup),
            ("test", &self.test),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_trained: usize,
    pub scores: Blocks<ScoreReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub hard_f1: MeanStd,
    pub soft_f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRuns {
    pub strategy: Strategy,
    pub train_set_size: usize,
    pub runs: Vec<RunReport>,
    pub summary: Blocks<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub hard_f1: WelchResult,
    pub soft_f1: WelchResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSizes {
    pub train_dialogues: usize,
    pub train_instances: usize,
    pub dev_instances: usize,
    pub test_instances: usize,
    pub test_dedup_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub manifest: ExperimentManifest,
    pub vocab_hash: String,
    pub act_width: usize,
    pub state_width: usize,
    pub data: DataSizes,
    pub result: StrategyRuns,
    pub baseline: Option<StrategyRuns>,
    /// Welch t-tests of `result` against `baseline`, per evaluation block.
    pub significance: Option<Blocks<Significance>>,
}

struct Prepared {
    vocab: Vocabulary,
    train_corpus: Corpus,
    g_train: ConvGraph,
    eval_graph: ConvGraph,
    base: InstanceSet,
    dev: InstanceSet,
    test: InstanceSet,
    test_dedup: InstanceSet,
}

fn prepare(m: &ExperimentManifest) -> Result<Prepared> {
    let load = |p: &Path, s| Corpus::load(p, s);
    let train_corpus = load(&m.train, Split::Train).stage("load train corpus")?;
    let dev_corpus = load(&m.dev, Split::Dev).stage("load dev corpus")?;
    let test_corpus = load(&m.test, Split::Test).stage("load test corpus")?;
    let all = [&train_corpus, &dev_corpus, &test_corpus];
    let vocab = Vocabulary::build(&all).stage("build vocabulary")?;
    let g_train = build_graph(&[&train_corpus], &vocab, true).stage("build train graph")?;
    let eval_graph = build_graph(&all, &vocab, true).stage("build evaluation graph")?;
    let base = extract_instances(&train_corpus, &vocab, m.n).stage("extract train")?;
    let dev = extract_instances(&dev_corpus, &vocab, m.n).stage("extract dev")?;
    let test = extract_instances(&test_corpus, &vocab, m.n).stage("extract test")?;
    let test_dedup = test.dedupe();
    Ok(Prepared {
        vocab,
        train_corpus,
        g_train,
        eval_graph,
        base,
        dev,
        test,
        test_dedup,
    })
}

/// The training set a strategy produces from the prepared data.
fn training_set(strategy: Strategy, m: &ExperimentManifest, p: &Prepared) -> Result<InstanceSet> {
    let mfs_cfg = MfsConfig {
        n: m.n,
        max_histories_per_node: m.cap,
        combine_with_base: false,
    };
    let mut set = match strategy {
        Strategy::Base => p.base.clone(),
        Strategy::Dsample => augment::downsample(&p.base),
        Strategy::Dupl => {
            let dup = augment::duplicate_dialogues(&p.train_corpus, m.dup_factor, m.augment_seed)?;
            extract_instances(&dup, &p.vocab, m.n)?
        }
        Strategy::Mfs => augment::mfs_augment(&p.g_train, &mfs_cfg)?,
        Strategy::MfsPlusBase => {
            let mfs = augment::mfs_augment(&p.g_train, &mfs_cfg)?;
            augment::combine_with_base(&p.base, &mfs)?
        }
        Strategy::OraclePlusBase => {
            let mfs = augment::mfs_augment(&p.g_train, &mfs_cfg)?;
            let oracle = augment::oracle_augment(&mfs, &p.dev, &p.test, &p.base)?;
            augment::combine_with_base(&p.base, &oracle)?
        }
    };
    set.meta.insert("strategy".into(), strategy.slug().into());
    Ok(set)
}

fn mean_std(xs: &[f64]) -> MeanStd {
    let n = xs.len() as f64;
    let mean = crate::metrics::stable_mean(xs);
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

fn summarize(runs: &[RunReport]) -> Blocks<MetricSummary> {
    let pick = |f: fn(&Blocks<ScoreReport>) -> &ScoreReport| {
        let hard: Vec<f64> = runs.iter().map(|r| f(&r.scores).hard_f1).collect();
        let soft: Vec<f64> = runs.iter().map(|r| f(&r.scores).soft_f1).collect();
        MetricSummary {
            hard_f1: mean_std(&hard),
            soft_f1: mean_std(&soft),
        }
    };
    Blocks {
        dev: pick(|b| &b.dev),
        test_dedup: pick(|b| &b.test_dedup),
        test: pick(|b| &b.test),
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run_strategy(
    strategy: Strategy,
    m: &ExperimentManifest,
    p: &Prepared,
) -> Result<StrategyRuns> {
    let set = training_set(strategy, m, p).stage("augment")?;
    let slug = strategy.slug();
    set.save(m.output_dir.join(format!("train_{slug}.inst")))
        .stage("write artifacts")?;
    let runs = m
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(RunReport, TrainLog, Vec<u8>)> {
            let cfg = m.hyper.config(m.loss, seed);
            let (model, log) = train(&set, &p.dev, &p.g_train, &cfg).stage("train")?;
            let score = |s: &InstanceSet| -> Result<ScoreReport> {
                let preds = predict_set(&model, s, cfg.threshold)?;
                evaluate(&preds, &p.eval_graph)
            };
            let scores = Blocks {
                dev: score(&p.dev),
                test_dedup: score(&p.test_dedup),
                test: score(&p.test),
            };
            let scores = Blocks {
                dev: scores.dev.stage("evaluate")?,
                test_dedup: scores.test_dedup.stage("evaluate")?,
                test: scores.test.stage("evaluate")?,
            };
            let report = RunReport {
                seed,
                best_epoch: log.best_epoch,
                epochs_trained: log.epochs.len(),
                scores,
            };
            Ok((report, log, model.to_bytes()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(runs.len());
    for (report, log, model) in runs {
        let stem = format!("{slug}_{}_seed{}", loss_slug(m.loss), report.seed);
        write_file(&m.output_dir.join("models").join(format!("{stem}.bin")), model)
            .stage("write artifacts")?;
        let log_json = serde_json::to_string_pretty(&log).expect("log serializes") + "\n";
        write_file(&m.output_dir.join("logs").join(format!("{stem}.json")), log_json)
            .stage("write artifacts")?;
        reports.push(report);
    }
    Ok(StrategyRuns {
        strategy,
        train_set_size: set.len(),
        summary: summarize(&reports),
        runs: reports,
    })
}

fn loss_slug(loss: LossKind) -> &'static str {
    match loss {
        LossKind::Bce => "bce",
        LossKind::Sbce => "sbce",
    }
}

fn significance(result: &StrategyRuns, baseline: &StrategyRuns) -> Result<Blocks<Significance>> {
    let test = |f: fn(&Blocks<ScoreReport>) -> &ScoreReport| -> Result<Significance> {
        let collect = |runs: &StrategyRuns, hard: bool| -> Vec<f64> {
            runs.runs
                .iter()
                .map(|r| {
                    let s = f(&r.scores);
                    if hard {
                        s.hard_f1
                    } else {
                        s.soft_f1
                    }
                })
                .collect()
        };
        Ok(Significance {
            hard_f1: welch_ttest(&collect(result, true), &collect(baseline, true))?,
            soft_f1: welch_ttest(&collect(result, false), &collect(baseline, false))?,
        })
    };
    Ok(Blocks {
        dev: test(|b| &b.dev)?,
        test_dedup: test(|b| &b.test_dedup)?,
        test: test(|b| &b.test)?,
    })
}

/// Runs the experiment and writes every artifact (vocabulary, graphs,
/// instance sets, models, training logs, `report.json`, `report.txt` and a
/// copy of the manifest) into the output directory.
pub fn run_experiment(m: &ExperimentManifest) -> Result<ExperimentReport> {
    m.validate().stage("validate manifest")?;
    for dir in ["", "models", "logs"] {
        let d = m.output_dir.join(dir);
        std::fs::create_dir_all(&d)
            .map_err(|e| Error::io(&d, e))
            .stage("write artifacts")?;
    }
    let p = prepare(m)?;
    let out = &m.output_dir;
    (|| -> Result<()> {
        p.vocab.save(out.join("vocab.json"))?;
        p.g_train.save(out.join("graph_train.json"))?;
        p.eval_graph.save(out.join("graph_eval.json"))?;
        p.base.save(out.join("train.inst"))?;
        p.dev.save(out.join("dev.inst"))?;
        p.test.save(out.join("test.inst"))?;
        p.test_dedup.save(out.join("test_dedup.inst"))?;
        let manifest = serde_json::to_string_pretty(m).expect("manifest serializes") + "\n";
        write_file(&out.join("manifest.json"), manifest)
    })()
    .stage("write artifacts")?;

    let result = run_strategy(m.strategy, m, &p)?;
    let baseline = if m.compare_with_base && m.strategy != Strategy::Base {
        Some(run_strategy(Strategy::Base, m, &p)?)
    } else {
        None
    };
    let significance = match &baseline {
        Some(b) if m.seeds.len() >= 2 => Some(significance(&result, b).stage("significance")?),
        _ => None,
    };
    let report = ExperimentReport {
        schema: REPORT_SCHEMA,
        manifest: m.clone(),
        vocab_hash: p.vocab.hash(),
        act_width: p.vocab.act_width(),
        state_width: p.vocab.state_width(),
        data: DataSizes {
            train_dialogues: p.train_corpus.dialogues.len(),
            train_instances: p.base.len(),
            dev_instances: p.dev.len(),
            test_instances: p.test.len(),
            test_dedup_instances: p.test_dedup.len(),
        },
        result,
        baseline,
        significance,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&out.join("report.json"), json).stage("write artifacts")?;
    write_file(&out.join("report.txt"), render_table(&report)).stage("write artifacts")?;
    Ok(report)
}

/// Plain-text table: one row per evaluation block, H-F1 and S-F1 columns per
/// strategy, `*` marking p < 0.05 against BASE.
pub fn render_table(r: &ExperimentReport) -> String {
    let mut columns: Vec<(&StrategyRuns, Option<&Blocks<Significance>>)> = Vec::new();
    if let Some(b) = &r.baseline {
        columns.push((b, None));
    }
    columns.push((&r.result, r.significance.as_ref()));

    let mut out = String::new();
    let _ = writeln!(
        out,
        "loss={} n={} seeds={} train_set={}",
        loss_slug(r.manifest.loss),
        r.manifest.n,
        r.manifest.seeds.len(),
        r.result.train_set_size
    );
    let _ = write!(out, "{:<12}", "block");
    for (c, _) in &columns {
        let _ = write!(out, "| {:^17} ", c.strategy.label());
    }
    out.push('\n');
    let _ = write!(out, "{:<12}", "");
    for _ in &columns {
        let _ = write!(out, "| {:>8} {:>8} ", "H-F1", "S-F1");
    }
    out.push('\n');
    let names = BTreeMap::from([
        ("dev", "dev"),
        ("test_dedup", "test dedup"),
        ("test", "test"),
    ]);
    for (i, (key, _)) in r.result.summary.named().iter().enumerate() {
        let _ = write!(out, "{:<12}", names[key]);
        for (c, sig) in &columns {
            let summary = c.summary.named()[i].1;
            let marks = sig.map(|s| s.map(|x| (x.hard_f1.significant, x.soft_f1.significant)));
            let (hs, ss) = marks.map_or((false, false), |m| *m.named()[i].1);
            let cell = |v: f64, star: bool| format!("{:.1}{}", 100.0 * v, if star { "*" } else { "" });
            let _ = write!(
                out,
                "| {:>8} {:>8} ",
                cell(summary.hard_f1.mean, hs),
                cell(summary.soft_f1.mean, ss)
            );
        }
        out.push('\n');
    }
    out
}
