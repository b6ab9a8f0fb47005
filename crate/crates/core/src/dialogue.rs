//! Dialogue corpora, the symbolic vocabulary and the encoding of turns into
//! fixed-width dialogue-state vectors.
//!
//! A dialogue state is the concatenation of the turn's dialogue-act vector
//! (one bit per intent and one per intent-qualified slot) and a belief-state
//! vector holding one "filled" flag per tracked slot. Literal slot values are
//! abstracted away, so two turns that differ only in slot values encode to the
//! same state.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::BitVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotValue {
    pub slot: String,
    pub value: String,
}

/// An intent with its slot-value pairs, e.g. `inform(date=friday)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueAct {
    pub intent: String,
    #[serde(default)]
    pub slots: Vec<SlotValue>,
}

impl DialogueAct {
    pub fn new(intent: &str, slots: &[(&str, &str)]) -> Self {
        DialogueAct {
            intent: intent.to_string(),
            slots: slots
                .iter()
                .map(|(s, v)| SlotValue {
                    slot: s.to_string(),
                    value: v.to_string(),
                })
                .collect(),
        }
    }

    /// The act labels expressed by this act: the intent itself and one
    /// `intent.slot` label per slot.
    pub fn labels(&self) -> impl Iterator<Item = String> + '_ {
        std::iter::once(self.intent.clone()).chain(
            self.slots
                .iter()
                .map(move |s| qualified_label(&self.intent, &s.slot)),
        )
    }
}

pub fn qualified_label(intent: &str, slot: &str) -> String {
    format!("{intent}.{slot}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub acts: Vec<DialogueAct>,
    /// Belief state after this turn.
    #[serde(default)]
    pub belief: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
    /// Turn indices at which a concatenated dialogue restarts from a fresh
    /// dialogue state. Empty for ordinary dialogues.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resets: Vec<usize>,
}

impl Dialogue {
    /// Checks the per-dialogue invariants: non-empty, every turn has at least
    /// one act, and within each segment speakers alternate starting with the
    /// user.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidDialogue {
            dialogue: self.id.clone(),
            message,
        };
        if self.turns.is_empty() {
            return Err(invalid("dialogue has no turns".into()));
        }
        let mut prev_reset = None;
        for &r in &self.resets {
            if r == 0 || r >= self.turns.len() || prev_reset.is_some_and(|p| r <= p) {
                return Err(invalid(format!("invalid reset index {r}")));
            }
            prev_reset = Some(r);
        }
        let mut expected = Speaker::User;
        for (i, turn) in self.turns.iter().enumerate() {
            if self.resets.binary_search(&i).is_ok() {
                expected = Speaker::User;
            }
            if turn.acts.is_empty() {
                return Err(invalid(format!("turn {i} has no dialogue acts")));
            }
            if turn.speaker != expected {
                return Err(Error::AlternationViolation {
                    dialogue: self.id.clone(),
                    turn: i,
                });
            }
            expected = match expected {
                Speaker::User => Speaker::Agent,
                Speaker::Agent => Speaker::User,
            };
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub split: Split,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn new(split: Split, dialogues: Vec<Dialogue>) -> Self {
        Corpus { split, dialogues }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.dialogues {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
            d.validate()?;
        }
        Ok(())
    }

    pub fn n_turns(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn n_agent_turns(&self) -> usize {
        self.dialogues
            .iter()
            .flat_map(|d| &d.turns)
            .filter(|t| t.speaker == Speaker::Agent)
            .count()
    }

    /// Parses a JSONL corpus (one dialogue per line) and validates it.
    pub fn from_jsonl(text: &str, split: Split) -> Result<Self> {
        let mut dialogues = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let d: Dialogue = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            dialogues.push(d);
        }
        let corpus = Corpus::new(split, dialogues);
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.dialogues {
            out.push_str(&serde_json::to_string(d).expect("dialogue serializes"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>, split: Split) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// One problem found while validating a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

/// Reports every schema, alternation and empty-act problem in a corpus file,
/// with 1-based line numbers. An empty result means the file is clean.
pub fn validate_corpus_file(path: impl AsRef<Path>) -> Result<Vec<Diagnostic>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut diagnostics = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = match serde_json::from_str(&line) {
            Ok(d) => d,
            Err(e) => {
                diagnostics.push(Diagnostic {
                    line: lineno,
                    message: format!("parse error: {e}"),
                });
                continue;
            }
        };
        if !ids.insert(d.id.clone()) {
            diagnostics.push(Diagnostic {
                line: lineno,
                message: Error::DuplicateId(d.id.clone()).to_string(),
            });
        }
        if let Err(e) = d.validate() {
            diagnostics.push(Diagnostic {
                line: lineno,
                message: e.to_string(),
            });
        }
    }
    Ok(diagnostics)
}

/// The canonical label space of a set of corpora.
///
/// All lists are sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub intents: Vec<String>,
    pub slots: Vec<String>,
    pub act_labels: Vec<String>,
    pub belief_slots: Vec<String>,
}

impl Vocabulary {
    pub fn build(corpora: &[&Corpus]) -> Result<Self> {
        let mut intents = BTreeSet::new();
        let mut slots = BTreeSet::new();
        let mut act_labels = BTreeSet::new();
        let mut belief_slots = BTreeSet::new();
        let mut any_turn = false;
        for turn in corpora
            .iter()
            .flat_map(|c| &c.dialogues)
            .flat_map(|d| &d.turns)
        {
            any_turn = true;
            for act in &turn.acts {
                intents.insert(act.intent.clone());
                for sv in &act.slots {
                    slots.insert(sv.slot.clone());
                }
                act_labels.extend(act.labels());
            }
            for slot in turn.belief.keys() {
                slots.insert(slot.clone());
                belief_slots.insert(slot.clone());
            }
        }
        if !any_turn {
            return Err(Error::EmptyCorpus);
        }
        Ok(Vocabulary {
            intents: intents.into_iter().collect(),
            slots: slots.into_iter().collect(),
            act_labels: act_labels.into_iter().collect(),
            belief_slots: belief_slots.into_iter().collect(),
        })
    }

    /// Output width `|da|`.
    pub fn act_width(&self) -> usize {
        self.act_labels.len()
    }

    /// Belief-state width `|bs|`.
    pub fn belief_width(&self) -> usize {
        self.belief_slots.len()
    }

    /// Dialogue-state width `|ds| = |da| + |bs|`.
    pub fn state_width(&self) -> usize {
        self.act_width() + self.belief_width()
    }

    pub fn act_index(&self, label: &str) -> Result<usize> {
        self.act_labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .map_err(|_| Error::UnknownLabel(label.to_string()))
    }

    pub fn encode_act(&self, acts: &[DialogueAct]) -> Result<BitVector> {
        let mut v = BitVector::zeros(self.act_width());
        for act in acts {
            for label in act.labels() {
                v.set(self.act_index(&label)?);
            }
        }
        Ok(v)
    }

    pub fn encode_belief(&self, belief: &BTreeMap<String, String>) -> Result<BitVector> {
        let mut v = BitVector::zeros(self.belief_width());
        for (slot, value) in belief {
            let j = self
                .belief_slots
                .binary_search(slot)
                .map_err(|_| Error::UnknownLabel(slot.clone()))?;
            if !value.is_empty() {
                v.set(j);
            }
        }
        Ok(v)
    }

    /// Dialogue state of a turn: act multi-hot followed by belief flags.
    pub fn encode_state(&self, turn: &Turn) -> Result<BitVector> {
        Ok(self
            .encode_act(&turn.acts)?
            .concat(&self.encode_belief(&turn.belief)?))
    }

    /// The act segment of a dialogue-state vector.
    pub fn act_segment(&self, state: &BitVector) -> BitVector {
        state.slice(0, self.act_width())
    }

    /// Human-readable labels of an act vector, e.g. `confirm(date,time)`.
    pub fn describe_act(&self, act: &BitVector) -> String {
        let labels: Vec<&str> = act.ones().map(|i| self.act_labels[i].as_str()).collect();
        let mut parts: Vec<String> = Vec::new();
        for label in &labels {
            match label.split_once('.') {
                None => parts.push(format!("{label}()")),
                Some((intent, slot)) => {
                    let prefix = format!("{intent}(");
                    match parts.iter_mut().find(|p| p.starts_with(&prefix)) {
                        Some(p) => {
                            p.pop();
                            if !p.ends_with('(') {
                                p.push(',');
                            }
                            p.push_str(slot);
                            p.push(')');
                        }
                        None => parts.push(format!("{intent}({slot})")),
                    }
                }
            }
        }
        parts.join(" ")
    }

    /// Short content hash identifying this vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("vocabulary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Vocabulary =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("vocabulary: {e}")))?;
        for list in [&v.intents, &v.slots, &v.act_labels, &v.belief_slots] {
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Format(
                    "vocabulary lists must be sorted and duplicate-free".into(),
                ));
            }
        }
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn f1_vocab() -> Vocabulary {
        Vocabulary::build(&[&fixtures::f1_corpus()]).unwrap()
    }

    #[test]
    fn f1_vocabulary() {
        let v = f1_vocab();
        assert_eq!(v.intents, ["affirm", "confirm", "inform", "request"]);
        assert_eq!(
            v.act_labels,
            [
                "affirm",
                "confirm",
                "confirm.date",
                "confirm.time",
                "inform",
                "inform.date",
                "inform.time",
                "request",
                "request.time"
            ]
        );
        assert_eq!(v.belief_slots, ["date", "time"]);
        assert_eq!(v.slots, ["date", "time"]);
        assert_eq!(v.state_width(), 11);
    }

    #[test]
    fn vocabulary_is_idempotent_and_order_independent() {
        let c = fixtures::f1_corpus();
        let once = Vocabulary::build(&[&c]).unwrap();
        assert_eq!(Vocabulary::build(&[&c, &c]).unwrap(), once);
        let mut rev = c.clone();
        rev.dialogues.reverse();
        assert_eq!(Vocabulary::build(&[&rev]).unwrap(), once);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let c = Corpus::new(Split::Train, vec![]);
        assert!(matches!(Vocabulary::build(&[&c]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn encode_act_examples() {
        let v = f1_vocab();
        let bits = v
            .encode_act(&[DialogueAct::new("confirm", &[("date", "x"), ("time", "y")])])
            .unwrap();
        // confirm, confirm.date, confirm.time
        assert_eq!(bits.to_string(), "011100000");
        let bits = v
            .encode_act(&[
                DialogueAct::new("inform", &[("date", "x")]),
                DialogueAct::new("request", &[("time", "")]),
            ])
            .unwrap();
        // inform, inform.date, request, request.time
        assert_eq!(bits.to_string(), "000011011");
        assert!(matches!(
            v.encode_act(&[DialogueAct::new("bye", &[])]),
            Err(Error::UnknownLabel(l)) if l == "bye"
        ));
    }

    #[test]
    fn encode_state_abstracts_values() {
        let v = f1_vocab();
        let mut turn = Turn {
            speaker: Speaker::User,
            acts: vec![DialogueAct::new("inform", &[("date", "friday")])],
            belief: BTreeMap::from([("date".to_string(), "friday".to_string())]),
        };
        let s = v.encode_state(&turn).unwrap();
        assert_eq!(s.to_string(), "000011000".to_string() + "10");
        turn.belief.insert("date".into(), "monday".into());
        turn.acts[0].slots[0].value = "monday".into();
        assert_eq!(v.encode_state(&turn).unwrap(), s);

        turn.belief.clear();
        assert!(v.slice_belief_is_zero(&v.encode_state(&turn).unwrap()));

        // empty values count as unfilled
        turn.belief.insert("time".into(), String::new());
        assert!(v.slice_belief_is_zero(&v.encode_state(&turn).unwrap()));
    }

    impl Vocabulary {
        fn slice_belief_is_zero(&self, s: &BitVector) -> bool {
            s.slice(self.act_width(), self.state_width()).is_zero()
        }
    }

    #[test]
    fn alternation_is_enforced() {
        let mut d = fixtures::f1_corpus().dialogues[0].clone();
        d.turns.remove(0);
        assert!(matches!(
            d.validate(),
            Err(Error::AlternationViolation { turn: 0, .. })
        ));
    }

    #[test]
    fn resets_restart_alternation() {
        let c = fixtures::f1_corpus();
        let mut d = c.dialogues[0].clone();
        let n = d.turns.len();
        d.turns.extend(c.dialogues[2].turns.clone());
        assert!(d.validate().is_err());
        d.resets = vec![n];
        d.validate().unwrap();
    }

    #[test]
    fn empty_acts_rejected() {
        let mut d = fixtures::f1_corpus().dialogues[0].clone();
        d.turns[1].acts.clear();
        assert!(matches!(d.validate(), Err(Error::InvalidDialogue { .. })));
    }

    #[test]
    fn describe_act_groups_slots() {
        let v = f1_vocab();
        let bits = v
            .encode_act(&[DialogueAct::new("confirm", &[("date", "x"), ("time", "y")])])
            .unwrap();
        assert_eq!(v.describe_act(&bits), "confirm(date,time)");
        let bits = v.encode_act(&[DialogueAct::new("affirm", &[])]).unwrap();
        assert_eq!(v.describe_act(&bits), "affirm()");
    }

    #[test]
    fn jsonl_ignores_text_and_roundtrips() {
        let line = r#"{"id":"x","turns":[{"speaker":"user","text":"hi there","acts":[{"intent":"inform","slots":[{"slot":"date","value":"fri"}]}],"belief":{"date":"fri"}}]}"#;
        let c = Corpus::from_jsonl(line, Split::Dev).unwrap();
        let again = Corpus::from_jsonl(&c.to_jsonl(), Split::Dev).unwrap();
        assert_eq!(c, again);
        assert!(!c.to_jsonl().contains("text"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = fixtures::f1_corpus().to_jsonl() + "{\"id\": \"broken\", \"tur\n";
        match Corpus::from_jsonl(&text, Split::Train) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
