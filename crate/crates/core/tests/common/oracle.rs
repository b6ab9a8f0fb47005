//! Naive reference implementations used as test oracles.

use std::collections::{HashMap, HashSet};

use convgraph::{Corpus, Speaker, Vocabulary};

/// A graph as a set of node ids and a map of `(from, to)` id pairs to
/// frequencies, computed from each dialogue's sequence of state ids.
pub struct NaiveGraph {
    pub nodes: HashSet<String>,
    pub edges: HashMap<(String, String), u64>,
}

pub fn naive_graph(corpora: &[&Corpus], vocab: &Vocabulary, append_final: bool) -> NaiveGraph {
    let zero = "0".repeat(vocab.state_width());
    let mut nodes = HashSet::new();
    let mut edges = HashMap::new();
    for c in corpora {
        for d in &c.dialogues {
            let mut seq = vec![format!("s:{zero}")];
            for t in &d.turns {
                let tag = match t.speaker {
                    Speaker::User => 'u',
                    Speaker::Agent => 'a',
                };
                seq.push(format!("{tag}:{}", vocab.encode_state(t).unwrap()));
            }
            if append_final {
                seq.push(format!("f:{zero}"));
            }
            for pair in seq.windows(2) {
                *edges.entry((pair[0].clone(), pair[1].clone())).or_insert(0) += 1;
            }
            nodes.extend(seq);
        }
    }
    NaiveGraph { nodes, edges }
}

/// Instance count and distinct (history, target) count by direct slicing of
/// the per-dialogue state sequences.
pub fn naive_extraction(corpus: &Corpus, vocab: &Vocabulary, n: usize) -> (usize, usize) {
    let zero = "0".repeat(vocab.state_width());
    let mut seen = HashSet::new();
    let mut count = 0;
    for d in &corpus.dialogues {
        let states: Vec<String> = d
            .turns
            .iter()
            .map(|t| vocab.encode_state(t).unwrap().to_string())
            .collect();
        for (i, t) in d.turns.iter().enumerate() {
            if t.speaker == Speaker::Agent {
                count += 1;
                let history: Vec<String> = (1..=n)
                    .map(|k| if i >= k { states[i - k].clone() } else { zero.clone() })
                    .collect();
                seen.insert((history, states[i][..vocab.act_width()].to_string()));
            }
        }
    }
    (count, seen.len())
}
