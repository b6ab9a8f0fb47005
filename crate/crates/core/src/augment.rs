//! Training-data manipulation strategies: most frequent sampling from the
//! graph, oracle filtering, downsampling and dialogue duplication.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::dialogue::{Corpus, Dialogue};
use crate::error::{Error, Result};
use crate::graph::{ConvGraph, Level};
use crate::instances::{InstanceSet, TrainingInstance, DEFAULT_HISTORY, MAX_HISTORY};

pub const DEFAULT_CAP: usize = 64;

pub const ORACLE_NOTE: &str = "oracle augmentation: theoretical baseline only";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MfsConfig {
    pub n: usize,
    pub max_histories_per_node: usize,
    pub combine_with_base: bool,
}

impl Default for MfsConfig {
    fn default() -> Self {
        MfsConfig {
            n: DEFAULT_HISTORY,
            max_histories_per_node: DEFAULT_CAP,
            combine_with_base: false,
        }
    }
}

/// A partial backward path, ordered so that the max-heap pops the most
/// probable path first and, among equally probable ones, the path with the
/// smallest node sequence.
struct Partial {
    prob: f64,
    path: Vec<usize>,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prob
            .total_cmp(&other.prob)
            .then_with(|| other.path.cmp(&self.path))
    }
}

/// Up to `cap` distinct histories of length `n` ending at `node`, most
/// probable first.
///
/// Paths are extended backwards one predecessor at a time; a path's weight is
/// the product over its steps of `freq(pred -> x) / in_freq(x)`. Paths that
/// reach the start state are padded with zero states.
pub fn backward_histories(g: &ConvGraph, node: usize, n: usize, cap: usize) -> Vec<Vec<BitVector>> {
    let width = g.state_width();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Partial {
        prob: 1.0,
        path: vec![node],
    });
    while let Some(Partial { prob, path }) = heap.pop() {
        let last = *path.last().expect("non-empty path");
        let mut preds: BTreeMap<usize, u64> = BTreeMap::new();
        if path.len() < n && last != g.start() {
            for e in g.in_edges(last) {
                *preds.entry(e.from).or_insert(0) += e.freq;
            }
        }
        if preds.is_empty() {
            let mut history: Vec<BitVector> = path
                .iter()
                .map(|&i| g.nodes()[i].state.clone())
                .collect();
            history.resize(n, BitVector::zeros(width));
            if seen.insert(history.clone()) {
                out.push(history);
                if out.len() >= cap {
                    break;
                }
            }
            continue;
        }
        let total: u64 = preds.values().sum();
        for (pred, freq) in preds {
            let mut next = path.clone();
            next.push(pred);
            heap.push(Partial {
                prob: prob * (freq as f64 / total as f64),
                path: next,
            });
        }
    }
    out
}

/// Pairs the most frequent agent action of every agent node with up to
/// `max_histories_per_node` backward histories. The result is deduplicated
/// and ordered by node then history rank.
pub fn mfs_augment(g: &ConvGraph, cfg: &MfsConfig) -> Result<InstanceSet> {
    if !(1..=MAX_HISTORY).contains(&cfg.n) {
        return Err(Error::InvalidConfig(format!(
            "history length must be in 1..={MAX_HISTORY}"
        )));
    }
    if cfg.max_histories_per_node == 0 {
        return Err(Error::InvalidConfig("history cap must be at least 1".into()));
    }
    let agent_nodes = g.agent_nodes();
    if agent_nodes.is_empty() {
        return Err(Error::NoAgentNodes);
    }
    let per_node: Vec<Vec<TrainingInstance>> = agent_nodes
        .par_iter()
        .map(|&node| {
            let actions = g.valid_actions(node)?;
            // agent nodes have at least one agent response
            let target = actions[0].0.clone();
            Ok(
                backward_histories(g, node, cfg.n, cfg.max_histories_per_node)
                    .into_iter()
                    .map(|history| TrainingInstance {
                        history,
                        target: target.clone(),
                    })
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let mut set = InstanceSet::new(cfg.n, g.vocab_hash());
    set.instances = per_node.into_iter().flatten().collect();
    let mut set = set.dedupe();
    set.meta.insert("strategy".into(), "mfs".into());
    set.meta.insert("cap".into(), cfg.max_histories_per_node.to_string());
    Ok(set)
}

/// `dedupe(base ++ mfs)`.
pub fn combine_with_base(base: &InstanceSet, aug: &InstanceSet) -> Result<InstanceSet> {
    let mut out = base.concat(aug)?.dedupe();
    out.meta = aug.meta.clone();
    out.meta.insert("combined_with_base".into(), "true".into());
    Ok(out)
}

/// MFS honouring `cfg.combine_with_base`.
pub fn apply_mfs(g: &ConvGraph, cfg: &MfsConfig, base: &InstanceSet) -> Result<InstanceSet> {
    let mfs = mfs_augment(g, cfg)?;
    if cfg.combine_with_base {
        combine_with_base(base, &mfs)
    } else {
        Ok(mfs)
    }
}

/// The generated instances that also occur in the development or test data
/// and are not already part of the base training data.
pub fn oracle_augment(
    mfs: &InstanceSet,
    dev: &InstanceSet,
    test: &InstanceSet,
    base: &InstanceSet,
) -> Result<InstanceSet> {
    mfs.ensure_compatible(dev)?;
    mfs.ensure_compatible(test)?;
    mfs.ensure_compatible(base)?;
    let held_out: HashSet<&TrainingInstance> =
        dev.instances.iter().chain(&test.instances).collect();
    let known: HashSet<&TrainingInstance> = base.instances.iter().collect();
    let mut out = mfs.clone_header();
    out.instances = mfs
        .instances
        .iter()
        .filter(|i| held_out.contains(i) && !known.contains(i))
        .cloned()
        .collect();
    let mut out = out.dedupe();
    out.meta.insert("strategy".into(), "oracle".into());
    out.meta.insert("note".into(), ORACLE_NOTE.into());
    Ok(out)
}

pub fn downsample(s: &InstanceSet) -> InstanceSet {
    let mut out = s.dedupe();
    out.meta.insert("strategy".into(), "downsample".into());
    out
}

/// Keeps the original dialogues and appends `(factor - 1) * len` new ones,
/// each the concatenation of a seeded random ordered pair of originals. The
/// second dialogue restarts from a fresh state: its own belief states are
/// kept as they are and a reset marker records the junction.
pub fn duplicate_dialogues(corpus: &Corpus, factor: usize, seed: u64) -> Result<Corpus> {
    if factor == 0 {
        return Err(Error::InvalidConfig("duplication factor must be at least 1".into()));
    }
    let originals = &corpus.dialogues;
    let n = originals.len();
    let mut out = corpus.clone();
    if factor == 1 || n == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..(factor - 1) * n {
        let a = rng.random_range(0..n);
        let b = if n == 1 {
            0
        } else {
            let r = rng.random_range(0..n - 1);
            if r >= a {
                r + 1
            } else {
                r
            }
        };
        out.dialogues
            .push(concat_dialogues(&originals[a], &originals[b], k));
    }
    out.validate()?;
    Ok(out)
}

fn concat_dialogues(first: &Dialogue, second: &Dialogue, k: usize) -> Dialogue {
    let offset = first.turns.len();
    let mut resets = first.resets.clone();
    resets.push(offset);
    resets.extend(second.resets.iter().map(|r| r + offset));
    Dialogue {
        id: format!("{}+{}#{k}", first.id, second.id),
        turns: first.turns.iter().chain(&second.turns).cloned().collect(),
        resets,
    }
}

/// Resolves each history position to a node of `g`, assuming the positions
/// alternate user/agent levels back from the decision node. Zero states
/// resolve to `None`.
pub fn history_nodes(g: &ConvGraph, history: &[BitVector]) -> Vec<Option<usize>> {
    history
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if s.is_zero() {
                None
            } else {
                let level = if k % 2 == 0 { Level::User } else { Level::Agent };
                g.find(level, s)
            }
        })
        .collect()
}
