//! Sequential message-passing simulator.
//!
//! Every application message goes through [`Network::deliver`], which checks
//! that sender and receiver are neighbours, appends it to the receiver's FIFO
//! mailbox and bumps the per-kind counter. Solvers drain mailboxes themselves;
//! [`run`] fails if anything is left undelivered at the end.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ccocoa::CostMap;
use crate::model::{AgentId, Assignment, ModelError, Problem};

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentState {
    Idle,
    Active,
    Hold,
    Done,
}

impl AgentState {
    pub fn can_become(self, next: AgentState) -> bool {
        use AgentState::*;
        matches!(
            (self, next),
            (Idle, Active) | (Active, Hold) | (Active, Done) | (Hold, Active)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentState::Idle => "IDLE",
            AgentState::Active => "ACTIVE",
            AgentState::Hold => "HOLD",
            AgentState::Done => "DONE",
        }
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    UpdateState,
    Inquiry,
    CostMapReply,
    SetValue,
    MaxSumQ,
    MaxSumR,
}

impl MessageKind {
    pub const ALL: [MessageKind; 6] = [
        MessageKind::UpdateState,
        MessageKind::Inquiry,
        MessageKind::CostMapReply,
        MessageKind::SetValue,
        MessageKind::MaxSumQ,
        MessageKind::MaxSumR,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::UpdateState => "UpdateState",
            MessageKind::Inquiry => "Inquiry",
            MessageKind::CostMapReply => "CostMapReply",
            MessageKind::SetValue => "SetValue",
            MessageKind::MaxSumQ => "MaxSumQ",
            MessageKind::MaxSumR => "MaxSumR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    UpdateState(AgentState),
    Inquiry {
        cpa: Assignment,
    },
    CostMapReply(CostMap),
    SetValue {
        variable: AgentId,
        value: f64,
        cpa: Assignment,
    },
    /// Variable-to-factor message for the factor on `edge`.
    MaxSumQ {
        edge: usize,
        values: Vec<f64>,
    },
    /// Factor-to-variable message from the factor on `edge`.
    MaxSumR {
        edge: usize,
        values: Vec<f64>,
    },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::UpdateState(_) => MessageKind::UpdateState,
            Payload::Inquiry { .. } => MessageKind::Inquiry,
            Payload::CostMapReply(_) => MessageKind::CostMapReply,
            Payload::SetValue { .. } => MessageKind::SetValue,
            Payload::MaxSumQ { .. } => MessageKind::MaxSumQ,
            Payload::MaxSumR { .. } => MessageKind::MaxSumR,
        }
    }

    fn summary(&self) -> String {
        fn cpa(a: &Assignment) -> String {
            let parts: Vec<String> = a.iter().map(|(k, v)| format!("x{k}={v:.3}")).collect();
            format!("{{{}}}", parts.join(", "))
        }
        fn vector(v: &[f64]) -> String {
            let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
            format!("[{}]", parts.join(", "))
        }
        match self {
            Payload::UpdateState(s) => s.to_string(),
            Payload::Inquiry { cpa: a } => format!("cpa={}", cpa(a)),
            Payload::CostMapReply(z) => z.to_string(),
            Payload::SetValue {
                variable,
                value,
                cpa: a,
            } => format!("x{variable}={value:.3} cpa={}", cpa(a)),
            Payload::MaxSumQ { edge, values } | Payload::MaxSumR { edge, values } => {
                format!("edge={edge} {}", vector(values))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub payload: Payload,
}

/// Message totals broken down by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MessageCounts {
    by_kind: [u64; 6],
}

impl MessageCounts {
    pub fn get(&self, kind: MessageKind) -> u64 {
        self.by_kind[kind.index()]
    }

    pub fn total(&self) -> u64 {
        self.by_kind.iter().sum()
    }

    fn bump(&mut self, kind: MessageKind) {
        self.by_kind[kind.index()] += 1;
    }
}

/// One line of a `--trace` dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub seq: u64,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub kind: MessageKind,
    pub local: bool,
    pub summary: String,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>6} a{} -> a{} {}{} {}",
            self.seq,
            self.sender,
            self.receiver,
            self.kind.name(),
            if self.local { " (local)" } else { "" },
            self.summary
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("agent {sender} cannot message non-neighbour {receiver}")]
    NotNeighbor { sender: AgentId, receiver: AgentId },
    #[error("agent {0} cannot message itself")]
    SelfMessage(AgentId),
    #[error("illegal state transition for agent {agent}: {from} -> {to}")]
    IllegalTransition {
        agent: AgentId,
        from: AgentState,
        to: AgentState,
    },
    #[error("agent {0} committed a value twice")]
    CommitTwice(AgentId),
    #[error("agent {agent} committed {value} outside its domain")]
    OutOfDomain { agent: AgentId, value: f64 },
    #[error("agent {receiver} saw x{variable} change from {old} to {new}")]
    CommitmentChanged {
        receiver: AgentId,
        variable: AgentId,
        old: f64,
        new: f64,
    },
    #[error("beta reached {beta}, above the cap {cap}: every candidate ties at every agent")]
    Livelock { beta: u32, cap: u32 },
    #[error("agent {agent} received an unexpected {kind} message")]
    UnexpectedMessage { agent: AgentId, kind: &'static str },
    #[error("{0} messages left undelivered at termination")]
    Undelivered(u64),
    #[error("cost map of length {got}, expected {expected}")]
    CostMapLength { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// FIFO mailboxes plus message accounting.
#[derive(Debug)]
pub struct Network<'p> {
    problem: &'p Problem,
    mailboxes: Vec<VecDeque<Message>>,
    counts: MessageCounts,
    sent_by: Vec<MessageCounts>,
    enqueued: u64,
    dequeued: u64,
    seq: u64,
    trace: Option<Vec<TraceEntry>>,
}

impl<'p> Network<'p> {
    pub fn new(problem: &'p Problem, trace: bool) -> Self {
        let n = problem.num_agents();
        Self {
            problem,
            mailboxes: vec![VecDeque::new(); n],
            counts: MessageCounts::default(),
            sent_by: vec![MessageCounts::default(); n],
            enqueued: 0,
            dequeued: 0,
            seq: 0,
            trace: trace.then(Vec::new),
        }
    }

    /// Enqueues `msg` at its receiver. Only neighbours may talk.
    pub fn deliver(&mut self, msg: Message) -> Result<(), EngineError> {
        let (s, r) = (msg.sender, msg.receiver);
        let n = self.problem.num_agents();
        if s >= n {
            return Err(ModelError::NoSuchAgent(s).into());
        }
        if r >= n {
            return Err(ModelError::NoSuchAgent(r).into());
        }
        if s == r {
            return Err(EngineError::SelfMessage(s));
        }
        if !self.problem.are_neighbors(s, r) {
            return Err(EngineError::NotNeighbor {
                sender: s,
                receiver: r,
            });
        }
        self.account(s, r, &msg.payload, false);
        self.mailboxes[r].push_back(msg);
        self.enqueued += 1;
        Ok(())
    }

    /// Counts a message between co-located nodes (same agent) that never
    /// touches a mailbox.
    pub fn record_local(&mut self, agent: AgentId, payload: &Payload) {
        self.account(agent, agent, payload, true);
    }

    fn account(&mut self, s: AgentId, r: AgentId, payload: &Payload, local: bool) {
        let kind = payload.kind();
        self.counts.bump(kind);
        self.sent_by[s].bump(kind);
        self.seq += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                seq: self.seq,
                sender: s,
                receiver: r,
                kind,
                local,
                summary: payload.summary(),
            });
        }
    }

    pub fn next(&mut self, agent: AgentId) -> Option<Message> {
        let msg = self.mailboxes[agent].pop_front();
        if msg.is_some() {
            self.dequeued += 1;
        }
        msg
    }

    pub fn pending(&self) -> u64 {
        self.enqueued - self.dequeued
    }

    pub fn counts(&self) -> MessageCounts {
        self.counts
    }

    pub fn sent_by(&self, agent: AgentId) -> MessageCounts {
        self.sent_by[agent]
    }
}

/// Per-agent protocol state.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub id: AgentId,
    pub state: AgentState,
    /// Known neighbour commitments; only ever grows.
    pub cpa: Assignment,
    pub committed: Option<f64>,
    /// This agent's view of its neighbours' states.
    pub view: BTreeMap<AgentId, AgentState>,
    /// Neighbour whose commitment arrived most recently.
    pub last_commit: Option<AgentId>,
    eligible: bool,
    holds: u64,
}

/// How the next agent is picked at each selection point.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Schedule {
    /// Uniformly among eligible agents, using the run's RNG.
    #[default]
    Random,
    /// First eligible agent in this order; unlisted agents follow in id order.
    Priority(Vec<AgentId>),
}

/// What happened during one agent activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub agent: AgentId,
    pub beta: u32,
    /// Cost maps in neighbour order.
    pub cost_maps: Vec<(AgentId, CostMap)>,
    pub totals: Vec<f64>,
    pub rho: Vec<usize>,
    pub outcome: ActivationOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationOutcome {
    /// Selected point index, its value, and the committed (possibly refined) value.
    Committed {
        point: usize,
        theta: f64,
        value: f64,
    },
    Held,
}

/// Mutable state of one run.
#[derive(Debug)]
pub struct Simulation<'p> {
    problem: &'p Problem,
    pub network: Network<'p>,
    agents: Vec<AgentRuntime>,
    beta: u32,
    beta_cap: u32,
    beta_increments: u64,
    hold_events: u64,
    done: usize,
    /// Discretization points per agent, once the solver has drawn them.
    pub points: Vec<Vec<f64>>,
    pub activations: Vec<ActivationRecord>,
}

impl<'p> Simulation<'p> {
    pub fn new(problem: &'p Problem, trace: bool, beta0: u32, beta_cap: u32) -> Self {
        let agents = problem
            .agents()
            .map(|id| AgentRuntime {
                id,
                state: AgentState::Idle,
                cpa: Assignment::new(),
                committed: None,
                view: problem
                    .neighbors(id)
                    .map(|j| (j, AgentState::Idle))
                    .collect(),
                last_commit: None,
                eligible: true,
                holds: 0,
            })
            .collect();
        Self {
            problem,
            network: Network::new(problem, trace),
            agents,
            beta: beta0,
            beta_cap,
            beta_increments: 0,
            hold_events: 0,
            done: 0,
            points: Vec::new(),
            activations: Vec::new(),
        }
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn agent(&self, i: AgentId) -> &AgentRuntime {
        &self.agents[i]
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn hold_events(&self) -> u64 {
        self.hold_events
    }

    pub fn beta_increments(&self) -> u64 {
        self.beta_increments
    }

    pub fn all_done(&self) -> bool {
        self.done == self.agents.len()
    }

    pub fn send(
        &mut self,
        sender: AgentId,
        receiver: AgentId,
        payload: Payload,
    ) -> Result<(), EngineError> {
        self.network.deliver(Message {
            sender,
            receiver,
            payload,
        })
    }

    /// Moves agent `i` to `to`, enforcing the state machine.
    pub fn transition(&mut self, i: AgentId, to: AgentState) -> Result<(), EngineError> {
        let agent = &mut self.agents[i];
        if !agent.state.can_become(to) {
            return Err(EngineError::IllegalTransition {
                agent: i,
                from: agent.state,
                to,
            });
        }
        agent.state = to;
        match to {
            AgentState::Hold => {
                agent.holds += 1;
                agent.eligible = false;
                self.hold_events += 1;
            }
            AgentState::Done => self.done += 1,
            _ => {}
        }
        Ok(())
    }

    /// Records `value` as agent `i`'s one and only commitment.
    pub fn commit(&mut self, i: AgentId, value: f64) -> Result<(), EngineError> {
        if !self.problem.domain(i).contains(value) {
            return Err(EngineError::OutOfDomain { agent: i, value });
        }
        let agent = &mut self.agents[i];
        if agent.committed.is_some() {
            return Err(EngineError::CommitTwice(i));
        }
        agent.committed = Some(value);
        Ok(())
    }

    /// Agent `receiver` learns that neighbour `sender` is now in state `s`.
    pub fn record_state(
        &mut self,
        receiver: AgentId,
        sender: AgentId,
        s: AgentState,
    ) -> Result<(), EngineError> {
        let view = self.agents[receiver]
            .view
            .get_mut(&sender)
            .ok_or(EngineError::NotNeighbor { sender, receiver })?;
        if !view.can_become(s) {
            return Err(EngineError::IllegalTransition {
                agent: sender,
                from: *view,
                to: s,
            });
        }
        *view = s;
        Ok(())
    }

    /// Agent `receiver` learns the committed value of `variable`.
    pub fn record_commitment(
        &mut self,
        receiver: AgentId,
        variable: AgentId,
        value: f64,
    ) -> Result<(), EngineError> {
        let agent = &mut self.agents[receiver];
        if let Some(old) = agent.cpa.insert(variable, value) {
            if old.to_bits() != value.to_bits() {
                return Err(EngineError::CommitmentChanged {
                    receiver,
                    variable,
                    old,
                    new: value,
                });
            }
        }
        agent.last_commit = Some(variable);
        Ok(())
    }

    /// Neighbours of `i` that `i` believes are IDLE or ACTIVE.
    pub fn idle_active_neighbors(&self, i: AgentId) -> usize {
        self.agents[i]
            .view
            .values()
            .filter(|s| matches!(s, AgentState::Idle | AgentState::Active))
            .count()
    }

    /// Makes agent `i` eligible for reselection if it is on hold.
    pub fn wake(&mut self, i: AgentId) {
        if self.agents[i].state == AgentState::Hold {
            self.agents[i].eligible = true;
        }
    }

    pub fn wake_all_held(&mut self) {
        for a in &mut self.agents {
            if a.state == AgentState::Hold {
                a.eligible = true;
            }
        }
    }

    /// Increments the run-wide beta and wakes every held agent.
    pub fn raise_beta(&mut self) -> Result<(), EngineError> {
        self.beta += 1;
        self.beta_increments += 1;
        if self.beta > self.beta_cap {
            return Err(EngineError::Livelock {
                beta: self.beta,
                cap: self.beta_cap,
            });
        }
        self.wake_all_held();
        Ok(())
    }

    fn eligible(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents
            .iter()
            .filter(|a| match a.state {
                AgentState::Idle => true,
                AgentState::Hold => a.eligible,
                _ => false,
            })
            .map(|a| a.id)
    }

    /// Picks the next agent to activate, or `None` once everyone is done.
    /// If unassigned agents remain but none is eligible the run is
    /// deadlocked, so beta is raised and every held agent woken.
    pub fn select_next(
        &mut self,
        rng: &mut SimRng,
        schedule: &Schedule,
    ) -> Result<Option<AgentId>, EngineError> {
        if self.all_done() {
            return Ok(None);
        }
        let mut candidates: Vec<AgentId> = self.eligible().collect();
        if candidates.is_empty() {
            self.raise_beta()?;
            candidates = self.eligible().collect();
        }
        debug_assert!(!candidates.is_empty());
        let pick = match schedule {
            Schedule::Random => candidates[rng.random_range(0..candidates.len())],
            Schedule::Priority(order) => order
                .iter()
                .copied()
                .find(|a| candidates.contains(a))
                .unwrap_or(candidates[0]),
        };
        Ok(Some(pick))
    }

    pub fn assignment(&self) -> Assignment {
        self.agents
            .iter()
            .filter_map(|a| a.committed.map(|v| (a.id, v)))
            .collect()
    }
}

/// A protocol that can be driven to completion by [`run`].
pub trait Solver {
    fn name(&self) -> &'static str;

    fn initial_beta(&self) -> u32 {
        1
    }

    fn beta_cap(&self) -> u32 {
        u32::MAX
    }

    /// Runs the protocol until every agent has committed.
    fn drive(&self, sim: &mut Simulation<'_>, rng: &mut SimRng) -> Result<(), EngineError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub algorithm: &'static str,
    pub assignment: Assignment,
    pub cost: f64,
    pub messages: MessageCounts,
    pub sent_by: Vec<MessageCounts>,
    pub hold_events: u64,
    pub beta_final: u32,
    pub beta_increments: u64,
    pub elapsed: Duration,
    pub seed: u64,
    pub points: Vec<Vec<f64>>,
    pub activations: Vec<ActivationRecord>,
    pub trace: Option<Vec<TraceEntry>>,
}

impl RunMetrics {
    pub fn elapsed_secs(&self) -> f64 {
        self.elapsed.as_secs_f64()
    }

    /// Equality on everything except wall-clock time.
    pub fn same_outcome(&self, other: &RunMetrics) -> bool {
        let mut a = self.clone();
        a.elapsed = other.elapsed;
        a == *other
    }
}

/// Drives `solver` on `p` with a RNG seeded from `seed` and collects metrics.
pub fn run<S: Solver + ?Sized>(
    solver: &S,
    p: &Problem,
    seed: u64,
    opts: RunOptions,
) -> Result<RunMetrics, EngineError> {
    let start = Instant::now();
    let mut sim = Simulation::new(p, opts.trace, solver.initial_beta(), solver.beta_cap());
    let mut rng = SimRng::seed_from_u64(seed);
    solver.drive(&mut sim, &mut rng)?;

    let pending = sim.network.pending();
    if pending != 0 {
        return Err(EngineError::Undelivered(pending));
    }
    let assignment = sim.assignment();
    let cost = p.global_cost(&assignment)?;
    let elapsed = start.elapsed();
    Ok(RunMetrics {
        algorithm: solver.name(),
        assignment,
        cost,
        messages: sim.network.counts(),
        sent_by: p.agents().map(|i| sim.network.sent_by(i)).collect(),
        hold_events: sim.hold_events,
        beta_final: sim.beta,
        beta_increments: sim.beta_increments,
        elapsed,
        seed,
        points: std::mem::take(&mut sim.points),
        activations: std::mem::take(&mut sim.activations),
        trace: sim.network.trace.take(),
    })
}
