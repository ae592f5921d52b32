//! Deterministic multi-agent execution of the consistency algorithm.
//!
//! One agent owns one variable and its [`NogoodStore`]. Agents talk only
//! through per-ordered-pair FIFO channels. Two schedulers drive them:
//!
//! * [`run_synchronous`] runs lock-step rounds. Round 0 is full generation;
//!   in round `r ≥ 1` every agent first applies all messages sent in round
//!   `r − 1` (ordered by sender, then emission order) and then resolves over
//!   the tails it gained.
//! * [`run_async`] is a discrete-event loop with seeded random delays. An
//!   agent applies everything delivered to it at one tick, then resolves
//!   once over the tails it gained.
//!
//! A run ends with [`Outcome::Refuted`] as soon as some agent derives the
//! empty nogood, or with [`Outcome::Saturated`] when no messages remain.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KbError, NogoodStore, Policy, UpdateStatus};
use crate::metrics::{MetricEvent, RunReport};
use crate::model::{validate_instance, CspInstance, Nogood, VarId, Violation};
use crate::resolver::{generate_full, generate_incremental, GenerationBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    AddNogood,
    Halt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nogood: Option<Nogood>,
    pub sender: VarId,
    pub send_tick: u64,
}

impl Message {
    fn add(sender: VarId, nogood: Nogood, send_tick: u64) -> Self {
        Message {
            kind: MessageKind::AddNogood,
            nogood: Some(nogood),
            sender,
            send_tick,
        }
    }

    fn halt(sender: VarId, send_tick: u64) -> Self {
        Message {
            kind: MessageKind::Halt,
            nogood: None,
            sender,
            send_tick,
        }
    }
}

/// FIFO link from `src` to `dst`. Loopback channels (`src == dst`) exist
/// for resolvents that mention their generator's own variable.
#[derive(Clone, Debug)]
pub struct Channel {
    pub src: VarId,
    pub dst: VarId,
    queue: VecDeque<(u64, u64, Message)>,
    last_deliver: u64,
    next_seq: u64,
}

impl Channel {
    fn new(src: VarId, dst: VarId) -> Self {
        Channel {
            src,
            dst,
            queue: VecDeque::new(),
            last_deliver: 0,
            next_seq: 0,
        }
    }

    /// Enqueues with `deliver_tick` raised to keep the queue in send order.
    fn push(&mut self, deliver_tick: u64, msg: Message) -> (u64, u64) {
        let tick = deliver_tick.max(self.last_deliver);
        self.last_deliver = tick;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push_back((tick, seq, msg));
        (tick, seq)
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct AgentState {
    pub var: VarId,
    pub store: NogoodStore,
    pub halted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Refuted,
    Saturated,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Refuted => "refuted",
            Outcome::Saturated => "saturated",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    /// Rounds executed (synchronous) or last tick + 1 (asynchronous).
    pub rounds: u64,
    /// The empty nogood, for refutations.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Nogood>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Send,
    Deliver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryOutcome {
    Added,
    DroppedDuplicate,
    DroppedSubsumed,
    /// Arrived at an agent that had already halted.
    Ignored,
    Halted,
}

impl From<UpdateStatus> for DeliveryOutcome {
    fn from(s: UpdateStatus) -> Self {
        match s {
            UpdateStatus::Added => DeliveryOutcome::Added,
            UpdateStatus::DroppedDuplicate => DeliveryOutcome::DroppedDuplicate,
            UpdateStatus::DroppedSubsumed => DeliveryOutcome::DroppedSubsumed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub kind: TraceKind,
    pub sender: VarId,
    pub receiver: VarId,
    /// Position of the message in its channel's send order.
    pub seq: u64,
    pub message: Message,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outcome: Option<DeliveryOutcome>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events are plain data"));
            out.push('\n');
        }
        out
    }

    /// Checks that every channel delivered its messages in send order and
    /// delivered only messages that were sent.
    pub fn fifo_violations(&self) -> usize {
        use std::collections::HashMap;
        let mut sent: HashMap<(VarId, VarId), Vec<u64>> = HashMap::new();
        let mut delivered: HashMap<(VarId, VarId), Vec<u64>> = HashMap::new();
        for e in &self.events {
            let key = (e.sender, e.receiver);
            match e.kind {
                TraceKind::Send => sent.entry(key).or_default().push(e.seq),
                TraceKind::Deliver => delivered.entry(key).or_default().push(e.seq),
            }
        }
        delivered
            .iter()
            .map(|(key, seqs)| {
                let sent = sent.get(key).map(Vec::as_slice).unwrap_or(&[]);
                let prefix_ok = seqs.len() <= sent.len() && seqs[..] == sent[..seqs.len()];
                usize::from(!prefix_ok)
            })
            .sum()
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub verdict: Verdict,
    pub report: RunReport,
    pub trace: Trace,
    /// Every distinct resolvent generated by any agent.
    pub generated: BTreeSet<Nogood>,
    /// Final contents of each agent's store.
    pub final_stores: Vec<BTreeSet<Nogood>>,
}

impl SimOutcome {
    pub fn truncated(&self) -> bool {
        self.report.truncated
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidInstance(Vec<Violation>),
    #[error("{name} must be positive")]
    NonPositive { name: &'static str },
    #[error(transparent)]
    Kb(#[from] KbError),
}

/// The agents that must hear about `n`: every variable occurring in it.
pub fn related_agents(n: &Nogood) -> BTreeSet<VarId> {
    n.variables().into_iter().collect()
}

struct Network {
    n: usize,
    channels: Vec<Channel>,
    trace: Trace,
}

impl Network {
    fn new(n: usize) -> Self {
        let channels = (0..n * n)
            .map(|i| Channel::new(VarId((i / n) as u32), VarId((i % n) as u32)))
            .collect();
        Network {
            n,
            channels,
            trace: Trace::default(),
        }
    }

    fn channel_id(&self, src: VarId, dst: VarId) -> usize {
        src.index() * self.n + dst.index()
    }

    fn send(&mut self, dst: VarId, msg: Message, deliver_tick: u64) -> (usize, u64, u64) {
        let id = self.channel_id(msg.sender, dst);
        let send_tick = msg.send_tick;
        let sender = msg.sender;
        let (tick, seq) = self.channels[id].push(deliver_tick, msg.clone());
        self.trace.events.push(TraceEvent {
            tick: send_tick,
            kind: TraceKind::Send,
            sender,
            receiver: dst,
            seq,
            message: msg,
            outcome: None,
        });
        (id, tick, seq)
    }

    fn pop(&mut self, id: usize) -> (u64, u64, Message) {
        self.channels[id]
            .queue
            .pop_front()
            .expect("scheduled message is queued")
    }

    fn log_delivery(&mut self, tick: u64, dst: VarId, seq: u64, msg: Message, outcome: DeliveryOutcome) {
        self.trace.events.push(TraceEvent {
            tick,
            kind: TraceKind::Deliver,
            sender: msg.sender,
            receiver: dst,
            seq,
            message: msg,
            outcome: Some(outcome),
        });
    }
}

fn prepare(inst: &CspInstance, policy: Policy) -> Result<(Vec<AgentState>, RunReport), SimError> {
    validate_instance(inst).map_err(SimError::InvalidInstance)?;
    let agents: Vec<AgentState> = inst
        .vars()
        .map(|v| AgentState {
            var: v,
            store: NogoodStore::init(v, inst, policy),
            halted: false,
        })
        .collect();
    let sizes: Vec<usize> = agents.iter().map(|a| a.store.store_size()).collect();
    let report = RunReport::new(policy, inst, &sizes);
    Ok((agents, report))
}

fn final_stores(agents: &[AgentState]) -> Vec<BTreeSet<Nogood>> {
    agents.iter().map(|a| a.store.stored().clone()).collect()
}

fn record(report: &mut RunReport, round: u64, event: MetricEvent<'_>) {
    report
        .record_event(round, event)
        .expect("simulator records rounds in order for known agents");
}

/// Lock-step rounds; see the module docs.
pub fn run_synchronous(inst: &CspInstance, policy: Policy, max_rounds: u64) -> Result<SimOutcome, SimError> {
    if max_rounds == 0 {
        return Err(SimError::NonPositive { name: "max_rounds" });
    }
    let (mut agents, mut report) = prepare(inst, policy)?;
    let mut net = Network::new(agents.len());
    let mut generated = BTreeSet::new();

    // an empty initial nogood refutes before anyone resolves
    if inst.nogoods().iter().any(Nogood::is_empty) {
        let verdict = Verdict {
            outcome: Outcome::Refuted,
            rounds: 1,
            witness: Some(Nogood::empty()),
        };
        report.finish(verdict.clone(), false);
        return Ok(SimOutcome {
            verdict,
            report,
            trace: net.trace,
            generated,
            final_stores: final_stores(&agents),
        });
    }

    // messages sent in the previous round: (destination channel id, seq)
    let mut in_flight: Vec<usize> = Vec::new();
    let mut round = 0u64;
    loop {
        for id in std::mem::take(&mut in_flight) {
            let (_, seq, msg) = net.pop(id);
            let dst = net.channels[id].dst;
            let nogood = msg.nogood.clone().expect("only nogoods travel between rounds");
            let outcome = agents[dst.index()].store.update(nogood, policy)?;
            record(
                &mut report,
                round,
                MetricEvent::Received {
                    agent: dst,
                    outcome: &outcome,
                },
            );
            net.log_delivery(round, dst, seq, msg, outcome.status.into());
        }

        let mut batches: Vec<(VarId, GenerationBatch)> = Vec::new();
        for agent in agents.iter_mut() {
            let batch = if round == 0 {
                agent.store.take_new_tails();
                generate_full(&agent.store, policy)
            } else if agent.store.has_new_tails() {
                let fresh = agent.store.take_new_tails();
                generate_incremental(&agent.store, &fresh, policy)
            } else {
                continue;
            };
            record(
                &mut report,
                round,
                MetricEvent::Generated {
                    agent: agent.var,
                    raw_count: batch.raw_count,
                },
            );
            generated.extend(batch.distinct().cloned());
            batches.push((agent.var, batch));
        }

        if batches.iter().any(|(_, b)| b.contains_refutation()) {
            for (var, _) in batches.iter().filter(|(_, b)| b.contains_refutation()) {
                for dst in inst.vars().filter(|d| d != var) {
                    net.send(dst, Message::halt(*var, round), round + 1);
                }
            }
            for a in agents.iter_mut() {
                a.halted = true;
            }
            let verdict = Verdict {
                outcome: Outcome::Refuted,
                rounds: round + 1,
                witness: Some(Nogood::empty()),
            };
            report.finish(verdict.clone(), false);
            return Ok(SimOutcome {
                verdict,
                report,
                trace: net.trace,
                generated,
                final_stores: final_stores(&agents),
            });
        }

        for (var, batch) in batches {
            let mut sent = 0;
            for n in batch.counts.into_keys() {
                for dst in related_agents(&n) {
                    let (id, _, _) = net.send(dst, Message::add(var, n.clone(), round), round + 1);
                    in_flight.push(id);
                    sent += 1;
                }
            }
            record(
                &mut report,
                round,
                MetricEvent::Sent {
                    agent: var,
                    count: sent,
                },
            );
        }

        let quiet = in_flight.is_empty();
        if quiet || round + 1 >= max_rounds {
            let verdict = Verdict {
                outcome: Outcome::Saturated,
                rounds: round + 1,
                witness: None,
            };
            report.finish(verdict.clone(), !quiet);
            return Ok(SimOutcome {
                verdict,
                report,
                trace: net.trace,
                generated,
                final_stores: final_stores(&agents),
            });
        }
        round += 1;
    }
}

/// Discrete-event run with seeded random per-message delays in
/// `1..=max_delay`, clamped per channel to preserve FIFO order. Events are
/// processed in `(deliver_tick, channel id, send order)` order. Metrics
/// rounds are ticks.
pub fn run_async(
    inst: &CspInstance,
    policy: Policy,
    seed: u64,
    max_delay: u64,
    max_events: u64,
) -> Result<SimOutcome, SimError> {
    if max_delay == 0 {
        return Err(SimError::NonPositive { name: "max_delay" });
    }
    if max_events == 0 {
        return Err(SimError::NonPositive { name: "max_events" });
    }
    let (mut agents, mut report) = prepare(inst, policy)?;
    let mut net = Network::new(agents.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue: BinaryHeap<Reverse<(u64, usize, u64)>> = BinaryHeap::new();
    let mut generated = BTreeSet::new();
    let mut refuted = inst.nogoods().iter().any(Nogood::is_empty);
    let mut last_tick = 0u64;

    let dispatch = |net: &mut Network,
                    queue: &mut BinaryHeap<Reverse<(u64, usize, u64)>>,
                    rng: &mut ChaCha8Rng,
                    dst: VarId,
                    msg: Message| {
        let delay = rng.gen_range(1..=max_delay);
        let (id, tick, seq) = net.send(dst, msg.clone(), msg.send_tick + delay);
        queue.push(Reverse((tick, id, seq)));
    };

    // Routes a batch from `var` at `tick`, or floods Halt if it refutes.
    // Returns true on refutation.
    let emit = |net: &mut Network,
                queue: &mut BinaryHeap<Reverse<(u64, usize, u64)>>,
                rng: &mut ChaCha8Rng,
                report: &mut RunReport,
                generated: &mut BTreeSet<Nogood>,
                var: VarId,
                tick: u64,
                batch: GenerationBatch| {
        record(
            report,
            tick,
            MetricEvent::Generated {
                agent: var,
                raw_count: batch.raw_count,
            },
        );
        generated.extend(batch.distinct().cloned());
        if batch.contains_refutation() {
            for dst in inst.vars().filter(|d| *d != var) {
                dispatch(net, queue, rng, dst, Message::halt(var, tick));
            }
            return true;
        }
        let mut sent = 0;
        for n in batch.counts.into_keys() {
            for dst in related_agents(&n) {
                dispatch(net, queue, rng, dst, Message::add(var, n.clone(), tick));
                sent += 1;
            }
        }
        record(
            report,
            tick,
            MetricEvent::Sent {
                agent: var,
                count: sent,
            },
        );
        false
    };

    if !refuted {
        for agent in agents.iter_mut() {
            agent.store.take_new_tails();
            let batch = generate_full(&agent.store, policy);
            if emit(
                &mut net,
                &mut queue,
                &mut rng,
                &mut report,
                &mut generated,
                agent.var,
                0,
                batch,
            ) {
                agent.halted = true;
                refuted = true;
                break;
            }
        }
    }

    // Agents that added something at `last_tick` and still owe a
    // generation pass. Each agent takes in everything delivered to it at a
    // tick before generating once over all of its new tails.
    let mut pending: BTreeSet<VarId> = BTreeSet::new();
    let mut events = 0u64;
    let mut truncated = false;
    loop {
        let next_tick = queue.peek().map(|Reverse((t, _, _))| *t);
        if next_tick != Some(last_tick) && !pending.is_empty() {
            for var in std::mem::take(&mut pending) {
                let agent = &mut agents[var.index()];
                if agent.halted {
                    continue;
                }
                let fresh = agent.store.take_new_tails();
                let batch = generate_incremental(&agent.store, &fresh, policy);
                if emit(
                    &mut net,
                    &mut queue,
                    &mut rng,
                    &mut report,
                    &mut generated,
                    var,
                    last_tick,
                    batch,
                ) {
                    agent.halted = true;
                    refuted = true;
                }
            }
            continue;
        }
        let Some(Reverse((tick, id, _))) = queue.pop() else {
            break;
        };
        if events >= max_events {
            truncated = true;
            break;
        }
        events += 1;
        last_tick = tick;
        let (_, seq, msg) = net.pop(id);
        let dst = net.channels[id].dst;
        let agent = &mut agents[dst.index()];
        match msg.kind {
            MessageKind::Halt => {
                agent.halted = true;
                net.log_delivery(tick, dst, seq, msg, DeliveryOutcome::Halted);
            }
            MessageKind::AddNogood if agent.halted => {
                net.log_delivery(tick, dst, seq, msg, DeliveryOutcome::Ignored);
            }
            MessageKind::AddNogood => {
                let nogood = msg.nogood.clone().expect("add messages carry a nogood");
                let outcome = agent.store.update(nogood, policy)?;
                record(
                    &mut report,
                    tick,
                    MetricEvent::Received {
                        agent: dst,
                        outcome: &outcome,
                    },
                );
                net.log_delivery(tick, dst, seq, msg, outcome.status.into());
                if outcome.is_added() {
                    pending.insert(dst);
                }
            }
        }
    }

    let verdict = Verdict {
        outcome: if refuted { Outcome::Refuted } else { Outcome::Saturated },
        rounds: last_tick + 1,
        witness: refuted.then(Nogood::empty),
    };
    report.finish(verdict.clone(), truncated);
    Ok(SimOutcome {
        verdict,
        report,
        trace: net.trace,
        generated,
        final_stores: final_stores(&agents),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complete_graph_coloring, ng};

    #[test]
    fn related_agents_examples() {
        assert_eq!(related_agents(&ng(&[(1, 1), (2, 2)])), [VarId(1), VarId(2)].into());
        assert_eq!(related_agents(&ng(&[(2, 2)])), [VarId(2)].into());
        assert_eq!(related_agents(&ng(&[(0, 1), (0, 2)])), [VarId(0)].into());
        assert!(related_agents(&Nogood::empty()).is_empty());
    }

    #[test]
    fn channel_clamps_to_fifo() {
        let mut c = Channel::new(VarId(0), VarId(1));
        let m = Message::halt(VarId(0), 0);
        assert_eq!(c.push(5, m.clone()), (5, 0));
        assert_eq!(c.push(2, m.clone()), (5, 1));
        assert_eq!(c.push(9, m), (9, 2));
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn sync_triangle_refutes_in_three_rounds() {
        for policy in [Policy::Baseline, Policy::Ekbm] {
            let out = run_synchronous(&complete_graph_coloring(3, 2), policy, 50).unwrap();
            assert_eq!(out.verdict.outcome, Outcome::Refuted);
            assert_eq!(out.verdict.rounds, 3);
        }
    }

    #[test]
    fn single_unconstrained_variable_saturates_quietly() {
        let inst = CspInstance::uniform(1, 2);
        let out = run_async(&inst, Policy::Ekbm, 7, 3, 100).unwrap();
        assert_eq!(out.verdict.outcome, Outcome::Saturated);
        assert!(out.trace.events.is_empty());
        let out = run_synchronous(&inst, Policy::Ekbm, 10).unwrap();
        assert_eq!(out.verdict.outcome, Outcome::Saturated);
        assert_eq!(out.report.rounds.len(), 1);
    }

    #[test]
    fn empty_initial_nogood_refutes_immediately() {
        let inst = CspInstance::uniform(2, 2).with_nogoods([Nogood::empty()]);
        assert_eq!(
            run_synchronous(&inst, Policy::Ekbm, 5).unwrap().verdict.outcome,
            Outcome::Refuted
        );
        assert_eq!(
            run_async(&inst, Policy::Ekbm, 1, 2, 5).unwrap().verdict.outcome,
            Outcome::Refuted
        );
    }

    #[test]
    fn bounds_are_checked() {
        let inst = complete_graph_coloring(3, 2);
        assert!(matches!(
            run_synchronous(&inst, Policy::Ekbm, 0),
            Err(SimError::NonPositive { .. })
        ));
        assert!(matches!(
            run_async(&inst, Policy::Ekbm, 0, 0, 10),
            Err(SimError::NonPositive { .. })
        ));
        assert!(matches!(
            run_async(&inst, Policy::Ekbm, 0, 1, 0),
            Err(SimError::NonPositive { .. })
        ));
        let bad = CspInstance::uniform(1, 2).with_nogoods([ng(&[(0, 9)])]);
        assert!(matches!(
            run_synchronous(&bad, Policy::Ekbm, 3),
            Err(SimError::InvalidInstance(_))
        ));
    }

    #[test]
    fn truncation_is_reported() {
        let out = run_synchronous(&complete_graph_coloring(3, 2), Policy::Baseline, 2).unwrap();
        assert_eq!(out.verdict.outcome, Outcome::Saturated);
        assert!(out.truncated());
        let out = run_async(&complete_graph_coloring(3, 2), Policy::Baseline, 3, 4, 5).unwrap();
        assert!(out.truncated());
    }

    #[test]
    fn async_halts_stop_traffic() {
        let out = run_async(&complete_graph_coloring(3, 2), Policy::Ekbm, 11, 4, 100_000).unwrap();
        assert_eq!(out.verdict.outcome, Outcome::Refuted);
        // once an agent has been halted it sends no more nogoods
        let mut halted = BTreeSet::new();
        for e in &out.trace.events {
            match (e.kind, e.message.kind) {
                (TraceKind::Deliver, MessageKind::Halt) => {
                    halted.insert(e.receiver);
                }
                (TraceKind::Send, MessageKind::Halt) => {
                    halted.insert(e.sender);
                }
                (TraceKind::Send, MessageKind::AddNogood) => assert!(!halted.contains(&e.sender)),
                _ => {}
            }
        }
        assert_eq!(out.trace.fifo_violations(), 0);
    }
}
