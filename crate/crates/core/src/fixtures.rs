//! Small hand-checkable corpora shared by unit tests, integration tests and
//! the CLI smoke tests.

use std::collections::BTreeMap;

use crate::dialogue::{Corpus, Dialogue, DialogueAct, Speaker, Split, Turn};

fn turn(speaker: Speaker, acts: Vec<DialogueAct>, belief: &[(&str, &str)]) -> Turn {
    Turn {
        speaker,
        acts,
        belief: belief
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<BTreeMap<_, _>>(),
    }
}

/// A date/time booking dialogue. With `confirm_date` the agent confirms
/// both slots in its second turn, otherwise only the time.
pub fn booking_dialogue(id: &str, confirm_date: bool) -> Dialogue {
    use Speaker::*;
    let date = [("date", "friday")];
    let both = [("date", "friday"), ("time", "7pm")];
    let confirm = if confirm_date {
        DialogueAct::new("confirm", &[("date", "friday"), ("time", "7pm")])
    } else {
        DialogueAct::new("confirm", &[("time", "7pm")])
    };
    Dialogue {
        id: id.to_string(),
        turns: vec![
            turn(User, vec![DialogueAct::new("inform", &[("date", "friday")])], &date),
            turn(Agent, vec![DialogueAct::new("request", &[("time", "")])], &date),
            turn(User, vec![DialogueAct::new("inform", &[("time", "7pm")])], &both),
            turn(Agent, vec![confirm], &both),
            turn(User, vec![DialogueAct::new("affirm", &[])], &both),
        ],
        resets: vec![],
    }
}

/// Three booking dialogues: `d1` and `d2` are identical, `d3` differs only in
/// the agent's second act (`confirm(time)` instead of `confirm(date,time)`).
pub fn f1_corpus() -> Corpus {
    Corpus::new(
        Split::Train,
        vec![
            booking_dialogue("d1", true),
            booking_dialogue("d2", true),
            booking_dialogue("d3", false),
        ],
    )
}

/// A corpus holding one dialogue with a single user turn.
pub fn one_turn_corpus() -> Corpus {
    Corpus::new(
        Split::Train,
        vec![Dialogue {
            id: "solo".into(),
            turns: vec![turn(
                Speaker::User,
                vec![DialogueAct::new("inform", &[("date", "friday")])],
                &[("date", "friday")],
            )],
            resets: vec![],
        }],
    )
}

const USER_INTENTS: [&str; 3] = ["affirm", "inform", "request"];
const AGENT_INTENTS: [&str; 4] = ["bye", "confirm", "offer", "request"];
const SLOTS: [&str; 3] = ["date", "people", "time"];

/// A seeded random corpus over a small booking domain. Dialogues have
/// between 1 and `max_turns` alternating turns; the small label space makes
/// repeated transitions likely.
pub fn random_corpus(seed: u64, n_dialogues: usize, max_turns: usize) -> Corpus {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dialogues = (0..n_dialogues)
        .map(|k| {
            let len = rng.random_range(1..=max_turns.max(1));
            let mut belief = BTreeMap::new();
            let turns = (0..len)
                .map(|i| {
                    let (speaker, intents) = if i % 2 == 0 {
                        (Speaker::User, &USER_INTENTS[..])
                    } else {
                        (Speaker::Agent, &AGENT_INTENTS[..])
                    };
                    let n_acts = rng.random_range(1..=2);
                    let acts: Vec<DialogueAct> = (0..n_acts)
                        .map(|_| {
                            let intent = intents[rng.random_range(0..intents.len())];
                            let slots: Vec<(&str, &str)> = SLOTS
                                .iter()
                                .filter(|_| rng.random_bool(0.3))
                                .map(|s| (*s, "x"))
                                .collect();
                            DialogueAct::new(intent, &slots)
                        })
                        .collect();
                    if speaker == Speaker::User {
                        for a in acts.iter().filter(|a| a.intent == "inform") {
                            for s in &a.slots {
                                belief.insert(s.slot.clone(), s.value.clone());
                            }
                        }
                    }
                    Turn {
                        speaker,
                        acts,
                        belief: belief.clone(),
                    }
                })
                .collect();
            Dialogue {
                id: format!("r{seed}-{k}"),
                turns,
                resets: vec![],
            }
        })
        .collect();
    Corpus::new(Split::Train, dialogues)
}
