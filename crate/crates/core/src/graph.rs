//! The conversation graph: dialogues unified on identical dialogue states.
//!
//! Every dialogue is walked from the all-zeros start state; each turn becomes
//! a node keyed by its speaker level and encoded state, and each transition
//! becomes an edge whose frequency counts how often it was observed. Nodes
//! and edges are stored in canonical order so that a graph is independent of
//! the order in which dialogues were added.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitVector;
use crate::dialogue::{Corpus, Dialogue, Speaker, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Start,
    User,
    Agent,
    Final,
}

impl Level {
    fn tag(self) -> char {
        match self {
            Level::Start => 's',
            Level::User => 'u',
            Level::Agent => 'a',
            Level::Final => 'f',
        }
    }

    /// The level whose acts answer a node of this level.
    pub fn responder(self) -> Option<Level> {
        match self {
            Level::Start | Level::Agent => Some(Level::User),
            Level::User => Some(Level::Agent),
            Level::Final => None,
        }
    }
}

impl From<Speaker> for Level {
    fn from(s: Speaker) -> Self {
        match s {
            Speaker::User => Level::User,
            Speaker::Agent => Level::Agent,
        }
    }
}

/// Node identity: speaker level plus encoded dialogue state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub level: Level,
    pub state: BitVector,
}

impl NodeKey {
    pub fn new(level: Level, state: BitVector) -> Self {
        NodeKey { level, state }
    }

    pub fn start(width: usize) -> Self {
        NodeKey::new(Level::Start, BitVector::zeros(width))
    }

    pub fn final_state(width: usize) -> Self {
        NodeKey::new(Level::Final, BitVector::zeros(width))
    }

    /// The string id used in graph files, e.g. `u:01100000010`.
    pub fn id(&self) -> String {
        format!("{}:{}", self.level.tag(), self.state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Act segment of the destination state.
    pub act: BitVector,
    pub freq: u64,
}

/// An immutable conversation graph. Construct it with [`build_graph`],
/// [`GraphBuilder`], [`merge_graphs`] or [`ConvGraph::load`].
#[derive(Debug, Clone)]
pub struct ConvGraph {
    vocab_hash: String,
    act_width: usize,
    state_width: usize,
    nodes: Vec<NodeKey>,
    edges: Vec<Edge>,
    start: usize,
    index: HashMap<NodeKey, usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl PartialEq for ConvGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vocab_hash == other.vocab_hash
            && self.act_width == other.act_width
            && self.state_width == other.state_width
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.start == other.start
    }
}

impl Eq for ConvGraph {}

/// Mutable accumulator of transitions.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    vocab_hash: String,
    act_width: usize,
    state_width: usize,
    nodes: HashSet<NodeKey>,
    edges: HashMap<(NodeKey, NodeKey, BitVector), u64>,
}

impl GraphBuilder {
    pub fn new(vocab: &Vocabulary) -> Self {
        Self::with_widths(vocab.hash(), vocab.act_width(), vocab.state_width())
    }

    fn with_widths(vocab_hash: String, act_width: usize, state_width: usize) -> Self {
        let mut nodes = HashSet::new();
        nodes.insert(NodeKey::start(state_width));
        GraphBuilder {
            vocab_hash,
            act_width,
            state_width,
            nodes,
            edges: HashMap::new(),
        }
    }

    pub fn add_transition(&mut self, from: &NodeKey, to: &NodeKey, freq: u64) {
        let act = to.state.slice(0, self.act_width);
        self.nodes.insert(from.clone());
        self.nodes.insert(to.clone());
        *self
            .edges
            .entry((from.clone(), to.clone(), act))
            .or_insert(0) += freq;
    }

    /// Walks one dialogue from the start state. With `append_final` the last
    /// state is linked to the shared artificial final state.
    pub fn add_dialogue(
        &mut self,
        dialogue: &Dialogue,
        vocab: &Vocabulary,
        append_final: bool,
    ) -> Result<()> {
        let mut last = NodeKey::start(self.state_width);
        for turn in &dialogue.turns {
            let key = NodeKey::new(turn.speaker.into(), vocab.encode_state(turn)?);
            self.add_transition(&last, &key, 1);
            last = key;
        }
        if append_final {
            self.add_transition(&last, &NodeKey::final_state(self.state_width), 1);
        }
        Ok(())
    }

    pub fn finish(self) -> ConvGraph {
        let mut nodes: Vec<NodeKey> = self.nodes.into_iter().collect();
        nodes.sort_unstable();
        let index: HashMap<NodeKey, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        let mut edges: Vec<Edge> = self
            .edges
            .into_iter()
            .map(|((from, to, act), freq)| Edge {
                from: index[&from],
                to: index[&to],
                act,
                freq,
            })
            .collect();
        edges.sort_unstable_by(|a, b| (a.from, a.to, &a.act).cmp(&(b.from, b.to, &b.act)));
        let start = index[&NodeKey::start(self.state_width)];
        ConvGraph::assemble(
            self.vocab_hash,
            self.act_width,
            self.state_width,
            nodes,
            edges,
            start,
            index,
        )
    }
}

/// Builds a graph over all dialogues of `corpora`.
pub fn build_graph(
    corpora: &[&Corpus],
    vocab: &Vocabulary,
    append_final: bool,
) -> Result<ConvGraph> {
    let mut builder = GraphBuilder::new(vocab);
    for corpus in corpora {
        corpus.validate()?;
        for d in &corpus.dialogues {
            builder.add_dialogue(d, vocab, append_final)?;
        }
    }
    Ok(builder.finish())
}

/// Unions node sets and sums edge frequencies.
pub fn merge_graphs(graphs: &[&ConvGraph]) -> Result<ConvGraph> {
    let first = graphs.first().ok_or(Error::EmptyInput)?;
    for g in &graphs[1..] {
        if g.vocab_hash != first.vocab_hash
            || g.state_width != first.state_width
            || g.act_width != first.act_width
        {
            return Err(Error::VocabMismatch(format!(
                "cannot merge graphs built with vocabularies {} and {}",
                first.vocab_hash, g.vocab_hash
            )));
        }
    }
    // Partial builders are merged pairwise; the canonical sort in `finish`
    // makes the result independent of the reduction order.
    let builder = graphs
        .par_iter()
        .map(|g| {
            let mut b = GraphBuilder::with_widths(
                first.vocab_hash.clone(),
                first.act_width,
                first.state_width,
            );
            for k in &g.nodes {
                b.nodes.insert(k.clone());
            }
            for e in &g.edges {
                b.add_transition(&g.nodes[e.from], &g.nodes[e.to], e.freq);
            }
            b
        })
        .reduce_with(|mut a, b| {
            a.nodes.extend(b.nodes);
            for (k, f) in b.edges {
                *a.edges.entry(k).or_insert(0) += f;
            }
            a
        })
        .expect("non-empty");
    Ok(builder.finish())
}

/// Table-style summary of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub edges: usize,
    /// Percentage of edges traversed more than once.
    pub repetition: f64,
    pub nodes: usize,
    /// Mean number of outgoing edges per node.
    pub mnd: f64,
    pub n_dialogues: u64,
}

impl ConvGraph {
    fn assemble(
        vocab_hash: String,
        act_width: usize,
        state_width: usize,
        nodes: Vec<NodeKey>,
        edges: Vec<Edge>,
        start: usize,
        index: HashMap<NodeKey, usize>,
    ) -> ConvGraph {
        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            out_edges[e.from].push(i);
            in_edges[e.to].push(i);
        }
        ConvGraph {
            vocab_hash,
            act_width,
            state_width,
            nodes,
            edges,
            start,
            index,
            out_edges,
            in_edges,
        }
    }

    /// A graph holding only the start state.
    pub fn empty(vocab: &Vocabulary) -> ConvGraph {
        GraphBuilder::new(vocab).finish()
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn act_width(&self) -> usize {
        self.act_width
    }

    pub fn state_width(&self) -> usize {
        self.state_width
    }

    pub fn nodes(&self) -> &[NodeKey] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn node_index(&self, key: &NodeKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn find(&self, level: Level, state: &BitVector) -> Option<usize> {
        self.node_index(&NodeKey::new(level, state.clone()))
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.out_edges[node].iter().map(move |&i| &self.edges[i])
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.in_edges[node].iter().map(move |&i| &self.edges[i])
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn total_frequency(&self) -> u64 {
        self.edges.iter().map(|e| e.freq).sum()
    }

    /// Frequency of the edge `from -> to`, summed over act labels.
    pub fn edge_frequency(&self, from: usize, to: usize) -> u64 {
        self.out_edges(from)
            .filter(|e| e.to == to)
            .map(|e| e.freq)
            .sum()
    }

    /// Acts observed in response to `node`, with their frequencies, most
    /// frequent first (ties in canonical act order).
    ///
    /// Only transitions into the responding party's level count as actions:
    /// the end-of-dialogue transition and junctions between concatenated
    /// dialogues are not.
    pub fn valid_actions(&self, node: usize) -> Result<Vec<(BitVector, u64)>> {
        let key = self
            .nodes
            .get(node)
            .ok_or_else(|| Error::NodeNotFound(format!("#{node}")))?;
        let Some(responder) = key.level.responder() else {
            return Ok(Vec::new());
        };
        let mut by_act: BTreeMap<&BitVector, u64> = BTreeMap::new();
        for e in self.out_edges(node) {
            if self.nodes[e.to].level == responder {
                *by_act.entry(&e.act).or_insert(0) += e.freq;
            }
        }
        let mut actions: Vec<(BitVector, u64)> =
            by_act.into_iter().map(|(a, f)| (a.clone(), f)).collect();
        actions.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(actions)
    }

    pub fn valid_actions_for(&self, key: &NodeKey) -> Result<Vec<(BitVector, u64)>> {
        let node = self
            .node_index(key)
            .ok_or_else(|| Error::NodeNotFound(key.id()))?;
        self.valid_actions(node)
    }

    /// Nodes at which the agent acts next: user-level states with at least
    /// one observed agent response.
    pub fn agent_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| {
                self.nodes[i].level == Level::User
                    && self
                        .out_edges(i)
                        .any(|e| self.nodes[e.to].level == Level::Agent)
            })
            .collect()
    }

    pub fn stats(&self) -> GraphStats {
        let edges = self.edges.len();
        let repeated = self.edges.iter().filter(|e| e.freq > 1).count();
        let nodes = self.nodes.len();
        GraphStats {
            edges,
            repetition: if edges == 0 {
                0.0
            } else {
                100.0 * repeated as f64 / edges as f64
            },
            nodes,
            mnd: if nodes == 0 {
                0.0
            } else {
                edges as f64 / nodes as f64
            },
            n_dialogues: self.out_edges(self.start).map(|e| e.freq).sum(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            vocab_hash: self.vocab_hash.clone(),
            act_width: self.act_width,
            nodes: self
                .nodes
                .iter()
                .map(|k| NodeRecord {
                    id: k.id(),
                    level: k.level,
                    state: k.state.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    from: self.nodes[e.from].id(),
                    to: self.nodes[e.to].id(),
                    freq: e.freq,
                })
                .collect(),
            start: self.nodes[self.start].id(),
        };
        let mut s = serde_json::to_string(&file).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ConvGraph> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("graph: {e}")))?;
        let state_width = file
            .nodes
            .first()
            .map(|n| n.state.len())
            .ok_or_else(|| Error::Format("graph has no nodes".into()))?;
        if file.act_width > state_width {
            return Err(Error::Format("act_width exceeds state width".into()));
        }
        let mut builder = GraphBuilder::with_widths(file.vocab_hash, file.act_width, state_width);
        let mut by_id = HashMap::new();
        for n in file.nodes {
            if n.state.len() != state_width {
                return Err(Error::WidthMismatch {
                    expected: state_width,
                    actual: n.state.len(),
                });
            }
            let key = NodeKey::new(n.level, n.state);
            if key.id() != n.id {
                return Err(Error::Format(format!("node id {} does not match its state", n.id)));
            }
            builder.nodes.insert(key.clone());
            by_id.insert(n.id, key);
        }
        let lookup = |id: &str| {
            by_id
                .get(id)
                .ok_or_else(|| Error::NodeNotFound(id.to_string()))
        };
        for e in &file.edges {
            if e.freq == 0 {
                return Err(Error::Format("edge frequency must be positive".into()));
            }
            builder.add_transition(lookup(&e.from)?, lookup(&e.to)?, e.freq);
        }
        let start = lookup(&file.start)?;
        if start.level != Level::Start {
            return Err(Error::Format("start node must have level start".into()));
        }
        Ok(builder.finish())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ConvGraph> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Graphviz rendering with act labels on edges.
    pub fn to_dot(&self, vocab: &Vocabulary) -> String {
        let mut out = String::from("digraph convgraph {\n  rankdir=LR;\n");
        for (i, k) in self.nodes.iter().enumerate() {
            let label = match k.level {
                Level::Start => "START".to_string(),
                Level::Final => "END".to_string(),
                _ => vocab.describe_act(&vocab.act_segment(&k.state)),
            };
            let shape = if k.level == Level::Agent { "box" } else { "ellipse" };
            let _ = writeln!(out, "  n{i} [label=\"{label}\", shape={shape}];");
        }
        for e in &self.edges {
            let label = match self.nodes[e.to].level {
                Level::Final => "end".to_string(),
                _ => vocab.describe_act(&e.act),
            };
            let _ = writeln!(
                out,
                "  n{} -> n{} [label=\"{} x{}\"];",
                e.from, e.to, label, e.freq
            );
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    level: Level,
    state: BitVector,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    from: String,
    to: String,
    freq: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    vocab_hash: String,
    act_width: usize,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    start: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{DialogueAct, Split};
    use crate::fixtures;

    fn f1() -> (Vocabulary, ConvGraph) {
        let c = fixtures::f1_corpus();
        let v = Vocabulary::build(&[&c]).unwrap();
        let g = build_graph(&[&c], &v, true).unwrap();
        (v, g)
    }

    fn divergence_node(v: &Vocabulary, g: &ConvGraph) -> usize {
        let d = fixtures::booking_dialogue("x", true);
        let state = v.encode_state(&d.turns[2]).unwrap();
        g.find(Level::User, &state).unwrap()
    }

    #[test]
    fn f1_structure() {
        let (v, g) = f1();
        assert_eq!(g.nodes().len(), 8);
        assert_eq!(g.edge_count(), 8);
        assert_eq!(g.total_frequency(), 18);

        let div = divergence_node(&v, &g);
        let out: Vec<u64> = g.out_edges(div).map(|e| e.freq).collect();
        assert_eq!(out.len(), 2);
        let actions = g.valid_actions(div).unwrap();
        let confirm_both = v
            .encode_act(&[DialogueAct::new("confirm", &[("date", ""), ("time", "")])])
            .unwrap();
        let confirm_time = v
            .encode_act(&[DialogueAct::new("confirm", &[("time", "")])])
            .unwrap();
        assert_eq!(actions, vec![(confirm_both, 2), (confirm_time, 1)]);

        // shared prefix
        let first = g.out_edges(g.start()).next().unwrap();
        assert_eq!(first.freq, 3);
    }

    #[test]
    fn one_turn_dialogue() {
        let c = fixtures::one_turn_corpus();
        let v = Vocabulary::build(&[&c]).unwrap();
        let g = build_graph(&[&c], &v, true).unwrap();
        assert_eq!(g.nodes().len(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(g.edges().iter().all(|e| e.freq == 1));
        assert_eq!(g.stats().repetition, 0.0);
    }

    #[test]
    fn building_twice_doubles_frequencies() {
        let c = fixtures::f1_corpus();
        let v = Vocabulary::build(&[&c]).unwrap();
        let g1 = build_graph(&[&c], &v, true).unwrap();
        let g2 = build_graph(&[&c, &c], &v, true).unwrap();
        assert_eq!(g1.nodes(), g2.nodes());
        for (a, b) in g1.edges().iter().zip(g2.edges()) {
            assert_eq!(2 * a.freq, b.freq);
        }
    }

    #[test]
    fn merge_identities() {
        let (v, g) = f1();
        let empty = ConvGraph::empty(&v);
        assert_eq!(merge_graphs(&[&g, &empty]).unwrap(), g);

        let c = fixtures::f1_corpus();
        let parts: Vec<ConvGraph> = c
            .dialogues
            .iter()
            .map(|d| {
                let single = Corpus::new(Split::Train, vec![d.clone()]);
                build_graph(&[&single], &v, true).unwrap()
            })
            .collect();
        let refs: Vec<&ConvGraph> = parts.iter().collect();
        assert_eq!(merge_graphs(&refs).unwrap(), g);

        let doubled = merge_graphs(&[&g, &g]).unwrap();
        assert_eq!(doubled.nodes(), g.nodes());
        assert!(doubled
            .edges()
            .iter()
            .zip(g.edges())
            .all(|(d, e)| d.freq == 2 * e.freq));
    }

    #[test]
    fn merge_rejects_other_vocabularies() {
        let (_, g) = f1();
        let c = fixtures::one_turn_corpus();
        let v2 = Vocabulary::build(&[&c]).unwrap();
        let other = build_graph(&[&c], &v2, true).unwrap();
        assert!(matches!(
            merge_graphs(&[&g, &other]),
            Err(Error::VocabMismatch(_))
        ));
    }

    #[test]
    fn final_node_has_no_actions() {
        let (_, g) = f1();
        let fin = g
            .node_index(&NodeKey::final_state(g.state_width()))
            .unwrap();
        assert!(g.valid_actions(fin).unwrap().is_empty());
        assert!(matches!(g.valid_actions(999), Err(Error::NodeNotFound(_))));
    }

    #[test]
    fn agent_nodes_exclude_terminal_user_states() {
        let (_, g) = f1();
        // inform(date) and inform(time) states; affirm only leads to the end
        assert_eq!(g.agent_nodes().len(), 2);
    }

    #[test]
    fn json_roundtrip() {
        let (_, g) = f1();
        let text = g.to_json();
        let back = ConvGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn dot_export_labels_edges() {
        let (v, g) = f1();
        let dot = g.to_dot(&v);
        assert!(dot.contains("confirm(date,time) x2"));
        assert!(dot.contains("START"));
    }

    #[test]
    fn unknown_labels_propagate() {
        let c = fixtures::f1_corpus();
        let v = Vocabulary::build(&[&fixtures::one_turn_corpus()]).unwrap();
        assert!(matches!(
            build_graph(&[&c], &v, true),
            Err(Error::UnknownLabel(_))
        ));
    }
}
