use std::collections::HashSet;
use std::path::Path;

use convgraph::augment::{mfs_augment, MfsConfig};
use convgraph::experiment::{run_experiment, ExperimentManifest, Hyper, Strategy};
use convgraph::fixtures::{self, random_corpus};
use convgraph::{
    build_graph, extract_instances, train, Error, LossKind, TrainConfig, Vocabulary,
};

fn manifest(dir: &Path, strategy: Strategy, seeds: Vec<u64>) -> ExperimentManifest {
    ExperimentManifest {
        train: dir.join("train.jsonl"),
        dev: dir.join("dev.jsonl"),
        test: dir.join("test.jsonl"),
        strategy,
        loss: LossKind::Bce,
        n: 4,
        seeds,
        output_dir: dir.join("out"),
        hyper: Hyper {
            hidden: 8,
            max_epochs: 20,
            ..Hyper::default()
        },
        cap: 64,
        dup_factor: 2,
        augment_seed: 13,
        compare_with_base: true,
    }
}

fn write_f1(dir: &Path) {
    for split in ["train", "dev", "test"] {
        fixtures::f1_corpus()
            .save(dir.join(format!("{split}.jsonl")))
            .unwrap();
    }
}

#[test]
fn base_on_fixture_reports_every_block() {
    let tmp = tempfile::tempdir().unwrap();
    write_f1(tmp.path());
    let r = run_experiment(&manifest(tmp.path(), Strategy::Base, vec![13, 17])).unwrap();
    assert_eq!(r.schema, 1);
    assert_eq!(r.result.runs.len(), 2);
    assert!(r.baseline.is_none());
    for run in &r.result.runs {
        for s in [&run.scores.dev, &run.scores.test_dedup, &run.scores.test] {
            assert!(s.soft_f1 >= s.hard_f1);
        }
        assert_eq!(run.scores.test.n_records, 6);
        assert_eq!(run.scores.test_dedup.n_records, 3);
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["schema"], 1);
    let table = std::fs::read_to_string(tmp.path().join("out/report.txt")).unwrap();
    assert!(table.contains("test dedup"));
    for f in ["vocab.json", "graph_train.json", "graph_eval.json", "manifest.json", "test_dedup.inst"] {
        assert!(tmp.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn mfs_plus_base_training_set_is_deduplicated_union() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, seed) in [("train", 31), ("dev", 32), ("test", 33)] {
        random_corpus(seed, 30, 8)
            .save(tmp.path().join(format!("{name}.jsonl")))
            .unwrap();
    }
    let m = manifest(tmp.path(), Strategy::MfsPlusBase, vec![13, 17]);
    let r = run_experiment(&m).unwrap();

    let load = |n: &str| convgraph::Corpus::load(tmp.path().join(n), convgraph::Split::Train).unwrap();
    let (train_c, dev_c, test_c) = (load("train.jsonl"), load("dev.jsonl"), load("test.jsonl"));
    let v = Vocabulary::build(&[&train_c, &dev_c, &test_c]).unwrap();
    let g = build_graph(&[&train_c], &v, true).unwrap();
    let base = extract_instances(&train_c, &v, 4).unwrap();
    let mfs = mfs_augment(&g, &MfsConfig::default()).unwrap();
    let union: HashSet<_> = base.instances.iter().chain(&mfs.instances).collect();
    assert_eq!(r.result.train_set_size, union.len());
    assert_eq!(r.data.train_instances, base.len());

    let baseline = r.baseline.as_ref().unwrap();
    assert_eq!(baseline.strategy, Strategy::Base);
    assert_eq!(baseline.train_set_size, base.len());
    let sig = r.significance.as_ref().unwrap();
    assert!((0.0..=1.0).contains(&sig.test.hard_f1.p) || sig.test.hard_f1.p.is_nan());
}

#[test]
fn every_strategy_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, seed) in [("train", 41), ("dev", 42), ("test", 43)] {
        random_corpus(seed, 20, 8)
            .save(tmp.path().join(format!("{name}.jsonl")))
            .unwrap();
    }
    for strategy in Strategy::ALL {
        let mut m = manifest(tmp.path(), strategy, vec![5]);
        m.compare_with_base = false;
        m.loss = LossKind::Sbce;
        m.hyper.max_epochs = 3;
        let r = run_experiment(&m).unwrap();
        assert_eq!(r.result.strategy, strategy);
        assert!(r.significance.is_none());
    }
}

#[test]
fn missing_corpus_is_a_stage_tagged_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let m = manifest(tmp.path(), Strategy::Base, vec![1, 2]);
    let err = run_experiment(&m).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "validate manifest", .. }));
    assert!(err.is_data_error());
    assert!(err.to_string().contains("train.jsonl"));
}

#[test]
fn duplicate_seeds_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_f1(tmp.path());
    let m = manifest(tmp.path(), Strategy::Base, vec![3, 3]);
    assert!(run_experiment(&m).is_err());
}

#[test]
fn training_is_reproducible_and_diverges_cleanly() {
    let c = random_corpus(77, 30, 8);
    let v = Vocabulary::build(&[&c]).unwrap();
    let g = build_graph(&[&c], &v, true).unwrap();
    let set = extract_instances(&c, &v, 3).unwrap();
    let cfg = TrainConfig {
        loss: LossKind::Sbce,
        hidden: 12,
        max_epochs: 8,
        ..TrainConfig::default()
    };
    let (m1, l1) = train(&set, &set, &g, &cfg).unwrap();
    let (m2, l2) = train(&set, &set, &g, &cfg).unwrap();
    assert_eq!(m1.to_bytes(), m2.to_bytes());
    assert_eq!(l1, l2);
    assert!(l1.best_epoch >= 1 && l1.best_epoch <= l1.epochs.len());

    let wild = TrainConfig {
        learning_rate: 1e300,
        ..cfg
    };
    match train(&set, &set, &g, &wild) {
        Err(Error::Divergence { last_finite, .. }) => assert!(last_finite.is_finite()),
        other => panic!("expected divergence, got {:?}", other.map(|(_, l)| l)),
    }
}

#[test]
fn single_instance_bce_converges() {
    use convgraph::{Corpus, Dialogue, DialogueAct, Speaker, Split, Turn};
    let turn = |speaker, intent| Turn {
        speaker,
        acts: vec![DialogueAct::new(intent, &[])],
        belief: Default::default(),
    };
    let c = Corpus::new(
        Split::Train,
        vec![Dialogue {
            id: "one".into(),
            turns: vec![turn(Speaker::User, "hello"), turn(Speaker::Agent, "bye")],
            resets: vec![],
        }],
    );
    let v = Vocabulary::build(&[&c]).unwrap();
    let g = build_graph(&[&c], &v, true).unwrap();
    let set = extract_instances(&c, &v, 1).unwrap();
    assert_eq!(set.len(), 1);
    let cfg = TrainConfig {
        batch_size: 1,
        learning_rate: 0.1,
        max_epochs: 500,
        patience: 500,
        ..TrainConfig::default()
    };
    let (_, log) = train(&set, &set, &g, &cfg).unwrap();
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 500);
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(*losses.last().unwrap() < 1e-3, "{}", losses.last().unwrap());
}
