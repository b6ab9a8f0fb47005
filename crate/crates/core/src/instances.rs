//! Supervised (history -> agent act) instances.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::dialogue::{Corpus, Speaker, Vocabulary};
use crate::error::{Error, Result};
use crate::graph::{Level, NodeKey};

pub const MAX_HISTORY: usize = 8;
pub const DEFAULT_HISTORY: usize = 4;

/// The `n` dialogue states preceding an agent turn (most recent first) and
/// the agent's act vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub history: Vec<BitVector>,
    pub target: BitVector,
}

impl TrainingInstance {
    /// The agent decision node this instance was observed at.
    pub fn decision_node(&self) -> NodeKey {
        NodeKey::new(Level::User, self.history[0].clone())
    }

    /// Concatenated history as model input.
    pub fn input(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.history.len() * self.history[0].len());
        for s in &self.history {
            s.extend_f64(&mut x);
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceSet {
    pub n: usize,
    pub vocab_hash: String,
    pub instances: Vec<TrainingInstance>,
    /// Free-form provenance written into the file header. The keys `n` and
    /// `vocab_hash` are reserved and not written.
    pub meta: BTreeMap<String, String>,
}

const RESERVED_KEYS: [&str; 2] = ["n", "vocab_hash"];

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    vocab_hash: String,
    #[serde(flatten)]
    meta: BTreeMap<String, String>,
}

fn check_history_len(n: usize) -> Result<()> {
    if (1..=MAX_HISTORY).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "history length must be in 1..={MAX_HISTORY}, got {n}"
        )))
    }
}

/// One instance per agent turn, in dialogue then turn order. Histories are
/// left-padded with zero states before the dialogue start.
pub fn extract_instances(corpus: &Corpus, vocab: &Vocabulary, n: usize) -> Result<InstanceSet> {
    check_history_len(n)?;
    corpus.validate()?;
    let zero = BitVector::zeros(vocab.state_width());
    let mut instances = Vec::with_capacity(corpus.n_agent_turns());
    for d in &corpus.dialogues {
        let states = d
            .turns
            .iter()
            .map(|t| vocab.encode_state(t))
            .collect::<Result<Vec<_>>>()?;
        for (i, turn) in d.turns.iter().enumerate() {
            if turn.speaker != Speaker::Agent {
                continue;
            }
            let history = (1..=n)
                .map(|k| {
                    i.checked_sub(k)
                        .map_or_else(|| zero.clone(), |j| states[j].clone())
                })
                .collect();
            instances.push(TrainingInstance {
                history,
                target: vocab.act_segment(&states[i]),
            });
        }
    }
    Ok(InstanceSet {
        n,
        vocab_hash: vocab.hash(),
        instances,
        meta: BTreeMap::new(),
    })
}

impl InstanceSet {
    pub fn new(n: usize, vocab_hash: impl Into<String>) -> Self {
        InstanceSet {
            n,
            vocab_hash: vocab_hash.into(),
            instances: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ensure_compatible(&self, other: &InstanceSet) -> Result<()> {
        if self.n != other.n || self.vocab_hash != other.vocab_hash {
            return Err(Error::ConfigMismatch(format!(
                "instance sets differ: n={} vocab={} vs n={} vocab={}",
                self.n, self.vocab_hash, other.n, other.vocab_hash
            )));
        }
        Ok(())
    }

    /// Keeps the first occurrence of every (history, target) pair.
    pub fn dedupe(&self) -> InstanceSet {
        let mut seen = HashSet::with_capacity(self.instances.len());
        let instances = self
            .instances
            .iter()
            .filter(|i| seen.insert(*i))
            .cloned()
            .collect();
        InstanceSet {
            instances,
            ..self.clone_header()
        }
    }

    pub fn unique_count(&self) -> usize {
        self.instances.iter().collect::<HashSet<_>>().len()
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &InstanceSet) -> Result<InstanceSet> {
        self.ensure_compatible(other)?;
        let mut out = self.clone();
        out.instances.extend(other.instances.iter().cloned());
        Ok(out)
    }

    pub(crate) fn clone_header(&self) -> InstanceSet {
        InstanceSet {
            n: self.n,
            vocab_hash: self.vocab_hash.clone(),
            instances: Vec::new(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            n: self.n,
            vocab_hash: self.vocab_hash.clone(),
            meta: self
                .meta
                .iter()
                .filter(|(k, _)| !RESERVED_KEYS.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<InstanceSet> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Format("instance file has no header".into()))?;
        let header: Header = serde_json::from_str(first).map_err(|e| Error::Parse {
            line: 1,
            message: format!("header: {e}"),
        })?;
        check_history_len(header.n)?;
        let mut set = InstanceSet {
            n: header.n,
            vocab_hash: header.vocab_hash,
            instances: Vec::new(),
            meta: header.meta,
        };
        let mut widths = None;
        for (i, line) in lines {
            let inst: TrainingInstance = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if inst.history.len() != set.n {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("history has {} states, expected {}", inst.history.len(), set.n),
                });
            }
            let w = (inst.history[0].len(), inst.target.len());
            if inst.history.iter().any(|s| s.len() != w.0) || *widths.get_or_insert(w) != w {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "inconsistent vector widths".into(),
                });
            }
            set.instances.push(inst);
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<InstanceSet> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::DialogueAct;
    use crate::fixtures;

    fn f1(n: usize) -> (Vocabulary, InstanceSet) {
        let c = fixtures::f1_corpus();
        let v = Vocabulary::build(&[&c]).unwrap();
        let s = extract_instances(&c, &v, n).unwrap();
        (v, s)
    }

    #[test]
    fn f1_extraction() {
        let (v, s) = f1(4);
        assert_eq!(s.len(), 6);
        let d1 = fixtures::booking_dialogue("d1", true);
        let first = &s.instances[0];
        assert_eq!(first.history[0], v.encode_state(&d1.turns[0]).unwrap());
        assert!(first.history[1..].iter().all(BitVector::is_zero));
        assert_eq!(
            first.target,
            v.encode_act(&[DialogueAct::new("request", &[("time", "")])])
                .unwrap()
        );
        let second = &s.instances[1];
        assert_eq!(second.history[0], v.encode_state(&d1.turns[2]).unwrap());
        assert_eq!(second.history[1], v.encode_state(&d1.turns[1]).unwrap());
        assert_eq!(second.history[2], v.encode_state(&d1.turns[0]).unwrap());
        assert!(second.history[3].is_zero());
    }

    #[test]
    fn history_of_one_is_previous_user_state() {
        let (v, s) = f1(1);
        let d1 = fixtures::booking_dialogue("d1", true);
        assert_eq!(s.instances[1].history, vec![v.encode_state(&d1.turns[2]).unwrap()]);
    }

    #[test]
    fn n_changes_histories_not_targets() {
        let (_, a) = f1(1);
        let (_, b) = f1(6);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.instances.iter().zip(&b.instances) {
            assert_eq!(x.target, y.target);
        }
    }

    #[test]
    fn invalid_history_length() {
        let c = fixtures::f1_corpus();
        let v = Vocabulary::build(&[&c]).unwrap();
        assert!(extract_instances(&c, &v, 0).is_err());
        assert!(extract_instances(&c, &v, 9).is_err());
    }

    #[test]
    fn dedupe_f1() {
        let (_, s) = f1(4);
        let d = s.dedupe();
        // d2 repeats d1; d3 shares the first instance
        assert_eq!(d.len(), 3);
        assert_eq!(s.unique_count(), 3);
        assert_eq!(d.dedupe(), d);
        assert_eq!(d.instances[..2], s.instances[..2]);
    }

    #[test]
    fn unique_count_edge_cases() {
        let (_, s) = f1(4);
        let empty = s.clone_header();
        assert_eq!(empty.unique_count(), 0);
        let mut copies = s.clone_header();
        copies.instances = vec![s.instances[0].clone(); 5];
        assert_eq!(copies.unique_count(), 1);
    }

    #[test]
    fn jsonl_roundtrip_with_meta() {
        let (_, mut s) = f1(3);
        s.meta.insert("strategy".into(), "mfs".into());
        let text = s.to_jsonl();
        let back = InstanceSet::from_jsonl(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_jsonl(), text);
    }
}
