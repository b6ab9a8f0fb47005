//! Comparisons against the brute-force values in `tests/golden/`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use convgraph::augment::{mfs_augment, MfsConfig};
use convgraph::{build_graph, extract_instances, ConvGraph, Corpus, Split, Vocabulary};
use serde_json::Value;

use crate::ensure_eq;

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn read_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(golden(name)).unwrap()).unwrap()
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

pub struct Built {
    pub vocab: Vocabulary,
    pub corpus: Corpus,
    pub graph: ConvGraph,
}

pub fn build(prefix: &str) -> Built {
    let corpus = Corpus::load(golden(&format!("{prefix}_corpus.jsonl")), Split::Train).unwrap();
    let vocab = Vocabulary::build(&[&corpus]).unwrap();
    let graph = build_graph(&[&corpus], &vocab, true).unwrap();
    Built {
        vocab,
        corpus,
        graph,
    }
}

pub fn check_vocab(prefix: &str, b: &Built) -> Result<(), String> {
    let v = read_json(&format!("{prefix}_vocab.json"));
    ensure_eq!(b.vocab.act_labels, strings(&v["act_labels"]));
    ensure_eq!(b.vocab.belief_slots, strings(&v["belief_slots"]));
    Ok(())
}

pub fn check_graph(prefix: &str, b: &Built) -> Result<(), String> {
    let v = read_json(&format!("{prefix}_graph.json"));
    let ids: Vec<String> = b.graph.nodes().iter().map(|k| k.id()).collect();
    ensure_eq!(ids, strings(&v["nodes"]));
    let edges: Vec<(String, String, u64)> = b
        .graph
        .edges()
        .iter()
        .map(|e| (ids[e.from].clone(), ids[e.to].clone(), e.freq))
        .collect();
    let expected: Vec<(String, String, u64)> = v["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e[0].as_str().unwrap().to_string(),
                e[1].as_str().unwrap().to_string(),
                e[2].as_u64().unwrap(),
            )
        })
        .collect();
    ensure_eq!(edges, expected);
    Ok(())
}

pub fn check_stats(prefix: &str, b: &Built) -> Result<(), String> {
    let v = read_json(&format!("{prefix}_stats.json"));
    let s = b.graph.stats();
    ensure_eq!(s.edges as u64, v["edges"].as_u64().unwrap());
    ensure_eq!(s.nodes as u64, v["nodes"].as_u64().unwrap());
    ensure_eq!(s.n_dialogues, v["n_dialogues"].as_u64().unwrap());
    ensure_eq!(s.repetition, v["repetition"].as_f64().unwrap());
    ensure_eq!(s.mnd, v["mnd"].as_f64().unwrap());
    Ok(())
}

pub fn check_valid_actions(prefix: &str, b: &Built) -> Result<(), String> {
    let v = read_json(&format!("{prefix}_valid_actions.json"));
    let mut got = BTreeMap::new();
    for (i, k) in b.graph.nodes().iter().enumerate() {
        let actions = b.graph.valid_actions(i).unwrap();
        if !actions.is_empty() {
            let list: Vec<(String, u64)> = actions.iter().map(|(a, f)| (a.to_string(), *f)).collect();
            got.insert(k.id(), list);
        }
    }
    let expected: BTreeMap<String, Vec<(String, u64)>> = v
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, list)| {
            let list = list
                .as_array()
                .unwrap()
                .iter()
                .map(|p| (p[0].as_str().unwrap().to_string(), p[1].as_u64().unwrap()))
                .collect();
            (k.clone(), list)
        })
        .collect();
    ensure_eq!(got, expected);
    Ok(())
}

fn instance_pairs(v: &Value) -> Vec<(Vec<String>, String)> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|i| (strings(&i["history"]), i["target"].as_str().unwrap().to_string()))
        .collect()
}

pub fn check_instances(prefix: &str, b: &Built) -> Result<(), String> {
    let v = read_json(&format!("{prefix}_instances.json"));
    for (n, expected) in v.as_object().unwrap() {
        let set = extract_instances(&b.corpus, &b.vocab, n.parse().unwrap()).unwrap();
        ensure_eq!(set.len() as u64, expected["count"].as_u64().unwrap(), "n={n}");
        ensure_eq!(set.unique_count() as u64, expected["unique"].as_u64().unwrap(), "n={n}");
        let got: Vec<(Vec<String>, String)> = set
            .instances
            .iter()
            .map(|i| (i.history.iter().map(ToString::to_string).collect(), i.target.to_string()))
            .collect();
        ensure_eq!(got, instance_pairs(&expected["instances"]), "n={n}");
    }
    Ok(())
}

pub fn check_mfs(prefix: &str, b: &Built) -> Result<(), String> {
    let v = read_json(&format!("{prefix}_mfs.json"));
    for (key, expected) in v.as_object().unwrap() {
        let (n, cap) = key.split_once('/').unwrap();
        let cfg = MfsConfig {
            n: n.parse().unwrap(),
            max_histories_per_node: cap.parse().unwrap(),
            combine_with_base: false,
        };
        let set = mfs_augment(&b.graph, &cfg).unwrap();
        let got: Vec<(Vec<String>, String)> = set
            .instances
            .iter()
            .map(|i| (i.history.iter().map(ToString::to_string).collect(), i.target.to_string()))
            .collect();
        ensure_eq!(got, instance_pairs(expected), "n/cap = {key}");
    }
    Ok(())
}

