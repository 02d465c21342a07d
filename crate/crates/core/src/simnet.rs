//! A deterministic star network: one coordinator, `m` machines, synchronous
//! rounds, and a ledger that meters every word sent.
//!
//! Machine state lives inside [`SimNet`]; a machine round only ever sees its own
//! state and inbox, and the coordinator only sees its inbox. Messages sent in
//! round `r` are delivered at the barrier closing round `r`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, WeightedPointSet};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    Coordinator,
    /// 1-based machine index.
    Machine(usize),
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Coordinator => f.write_str("coordinator"),
            PartyId::Machine(i) => write!(f, "machine {i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Yes,
    No,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Scalar(f64),
    Scalars(Vec<f64>),
    Token(Token),
    Points(Vec<Point>),
    Weighted(WeightedPointSet),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostingRule {
    pub words_per_point: usize,
    pub words_per_scalar: usize,
    pub words_per_weight: usize,
}

impl CostingRule {
    /// One word per coordinate.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            words_per_point: dim.max(1),
            words_per_scalar: 1,
            words_per_weight: 1,
        }
    }

    /// A point costs a single word, as in a general metric.
    pub fn unit() -> Self {
        Self::for_dim(1)
    }

    pub fn cost_of(&self, payload: &Payload) -> usize {
        match payload {
            Payload::Scalar(_) | Payload::Token(_) => self.words_per_scalar,
            Payload::Scalars(v) => v.len() * self.words_per_scalar,
            Payload::Points(p) => p.len() * self.words_per_point,
            Payload::Weighted(w) => w.len() * (self.words_per_point + self.words_per_weight),
        }
    }
}

pub fn cost_of(payload: &Payload, rule: &CostingRule) -> usize {
    rule.cost_of(payload)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub from: PartyId,
    pub to: PartyId,
    pub round: usize,
    pub payload: Payload,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundWords {
    pub round: usize,
    pub up_words: usize,
    pub down_words: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub rounds: usize,
    pub total_words: usize,
    pub per_round: Vec<RoundWords>,
}

impl CommLedger {
    fn open_round(&mut self) {
        self.rounds += 1;
        self.per_round.push(RoundWords {
            round: self.rounds,
            ..Default::default()
        });
    }

    fn record(&mut self, msg: &Message, words: usize) {
        let slot = &mut self.per_round[msg.round - 1];
        match msg.from {
            PartyId::Coordinator => slot.down_words += words,
            PartyId::Machine(_) => slot.up_words += words,
        }
        self.total_words += words;
    }

    /// Charges a transfer outside any simulated protocol (e.g. shipping a whole
    /// dataset to the coordinator for a centralized baseline).
    pub fn charge_upload(&mut self, words: usize) {
        self.open_round();
        self.per_round.last_mut().expect("just opened").up_words += words;
        self.total_words += words;
    }

    pub fn words_in_round(&self, round: usize) -> usize {
        self.per_round
            .get(round.wrapping_sub(1))
            .map_or(0, |r| r.up_words + r.down_words)
    }

    pub fn up_words(&self) -> usize {
        self.per_round.iter().map(|r| r.up_words).sum()
    }

    pub fn down_words(&self) -> usize {
        self.per_round.iter().map(|r| r.down_words).sum()
    }

    /// Combines an instance that ran in the same rounds as `self`.
    pub fn merge_parallel(&mut self, other: &CommLedger) {
        while self.rounds < other.rounds {
            self.open_round();
        }
        for r in &other.per_round {
            let slot = &mut self.per_round[r.round - 1];
            slot.up_words += r.up_words;
            slot.down_words += r.down_words;
        }
        self.total_words += other.total_words;
    }

    /// Appends an instance that ran after `self` finished.
    pub fn append_sequential(&mut self, other: &CommLedger) {
        let offset = self.rounds;
        for r in &other.per_round {
            self.per_round.push(RoundWords {
                round: r.round + offset,
                ..*r
            });
        }
        self.rounds += other.rounds;
        self.total_words += other.total_words;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Messages produced by one party during one round.
#[derive(Debug)]
pub struct Outbox {
    party: PartyId,
    round: usize,
    messages: Vec<Message>,
}

impl Outbox {
    fn new(party: PartyId, round: usize) -> Self {
        Self {
            party,
            round,
            messages: Vec::new(),
        }
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn send(&mut self, to: PartyId, payload: Payload) {
        self.messages.push(Message {
            from: self.party,
            to,
            round: self.round,
            payload,
        });
    }

    pub fn send_to_coordinator(&mut self, payload: Payload) {
        self.send(PartyId::Coordinator, payload);
    }

    /// Queues a fully formed message; it is validated at the round barrier.
    pub fn post(&mut self, message: Message) {
        self.messages.push(message);
    }
}

pub struct SimNet<S> {
    states: Vec<S>,
    machine_inbox: Vec<Vec<Payload>>,
    coordinator_inbox: Vec<(usize, Payload)>,
    rule: CostingRule,
    ledger: CommLedger,
    max_rounds: usize,
    seed: u64,
}

impl<S: Send> SimNet<S> {
    pub fn new(states: Vec<S>, rule: CostingRule, max_rounds: usize, seed: u64) -> Self {
        let m = states.len();
        Self {
            states,
            machine_inbox: vec![Vec::new(); m],
            coordinator_inbox: Vec::new(),
            rule,
            ledger: CommLedger::default(),
            max_rounds,
            seed,
        }
    }

    pub fn machines(&self) -> usize {
        self.states.len()
    }

    pub fn rounds_run(&self) -> usize {
        self.ledger.rounds
    }

    pub fn rule(&self) -> CostingRule {
        self.rule
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    /// Seed reserved for the coordinator's own randomness.
    pub fn coordinator_seed(&self) -> u64 {
        derive_seed(self.seed, 0)
    }

    fn begin(&mut self) -> Result<usize> {
        if self.ledger.rounds >= self.max_rounds {
            return Err(Error::TooManyRounds { max: self.max_rounds });
        }
        self.ledger.open_round();
        Ok(self.ledger.rounds)
    }

    /// Every machine runs `step(index, state, inbox, outbox)` concurrently; `index` is 1-based.
    pub fn machine_round<F>(&mut self, step: F) -> Result<()>
    where
        F: Fn(usize, &mut S, Vec<Payload>, &mut Outbox) -> Result<()> + Sync,
    {
        let round = self.begin()?;
        let inboxes: Vec<Vec<Payload>> = self.machine_inbox.iter_mut().map(std::mem::take).collect();
        let outboxes: Vec<Result<Outbox>> = self
            .states
            .par_iter_mut()
            .zip(inboxes)
            .enumerate()
            .map(|(i, (state, inbox))| {
                let mut out = Outbox::new(PartyId::Machine(i + 1), round);
                step(i + 1, state, inbox, &mut out)?;
                Ok(out)
            })
            .collect();
        for out in outboxes {
            self.deliver(out?)?;
        }
        Ok(())
    }

    /// The coordinator consumes its inbox (`(machine index, payload)` in machine order).
    pub fn coordinator_round<T, F>(&mut self, step: F) -> Result<T>
    where
        F: FnOnce(Vec<(usize, Payload)>, &mut Outbox) -> Result<T>,
    {
        let round = self.begin()?;
        let inbox = std::mem::take(&mut self.coordinator_inbox);
        let mut out = Outbox::new(PartyId::Coordinator, round);
        let value = step(inbox, &mut out)?;
        self.deliver(out)?;
        Ok(value)
    }

    /// Hands the coordinator its pending messages without opening a round; for
    /// local computation after the last delivery.
    pub fn collect(&mut self) -> Vec<(usize, Payload)> {
        std::mem::take(&mut self.coordinator_inbox)
    }

    fn deliver(&mut self, out: Outbox) -> Result<()> {
        let m = self.states.len();
        for msg in out.messages {
            if msg.from != out.party {
                return Err(Error::Spoofed {
                    party: out.party,
                    claimed: msg.from,
                });
            }
            if msg.round != out.round {
                return Err(Error::StaleRound {
                    from: msg.from,
                    stamped: msg.round,
                    current: out.round,
                });
            }
            let legal = match (msg.from, msg.to) {
                (PartyId::Machine(_), PartyId::Coordinator) => true,
                (PartyId::Coordinator, PartyId::Machine(j)) => (1..=m).contains(&j),
                _ => false,
            };
            if !legal {
                return Err(Error::IllegalLink {
                    from: msg.from,
                    to: msg.to,
                });
            }
            let words = self.rule.cost_of(&msg.payload);
            self.ledger.record(&msg, words);
            match (msg.from, msg.to) {
                (PartyId::Machine(i), _) => self.coordinator_inbox.push((i, msg.payload)),
                (_, PartyId::Machine(j)) => self.machine_inbox[j - 1].push(msg.payload),
                _ => unreachable!("checked above"),
            }
        }
        Ok(())
    }

    pub fn into_parts(self) -> (Vec<S>, CommLedger) {
        (self.states, self.ledger)
    }
}

/// A round-structured program: per-machine setup plus a driver that advances
/// the network round by round.
pub trait Protocol: Sync {
    type Input;
    type State: Send;
    type Output;

    fn max_rounds(&self) -> usize;

    /// `machine` is 1-based; `seed` is private to that machine.
    fn setup(&self, machine: usize, input: Self::Input, seed: u64) -> Self::State;

    fn execute(&self, net: &mut SimNet<Self::State>) -> Result<Self::Output>;
}

#[derive(Debug)]
pub struct ProtocolRun<O, S> {
    pub output: O,
    pub machine_states: Vec<S>,
    pub ledger: CommLedger,
}

pub fn run_protocol<P: Protocol>(
    protocol: &P,
    inputs: Vec<P::Input>,
    rule: CostingRule,
    seed: u64,
) -> Result<ProtocolRun<P::Output, P::State>> {
    let states = inputs
        .into_iter()
        .enumerate()
        .map(|(i, input)| protocol.setup(i + 1, input, derive_seed(seed, i as u64 + 1)))
        .collect();
    let mut net = SimNet::new(states, rule, protocol.max_rounds(), seed);
    let output = protocol.execute(&mut net)?;
    let (machine_states, ledger) = net.into_parts();
    Ok(ProtocolRun {
        output,
        machine_states,
        ledger,
    })
}
