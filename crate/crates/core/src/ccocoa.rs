//! C-CoCoA: each agent samples `k` points from its interval, elects one of
//! them through the CoCoA inquiry / cost-map protocol with the unique-first
//! rule, then polishes it with gradient descent on its local objective
//! before committing exactly once.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;

use crate::engine::{
    self, ActivationOutcome, ActivationRecord, AgentState, EngineError, Payload, RunMetrics,
    RunOptions, Schedule, SimRng, Simulation, Solver,
};
use crate::model::{AgentId, Assignment, IntervalDomain, ModelError, Problem};

/// Which committed neighbours stay fixed during local refinement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FreezePolicy {
    /// Every neighbour already in the agent's CPA is held constant.
    #[default]
    AllCommitted,
    /// Only the neighbour whose commitment arrived last is held constant;
    /// earlier commitments move with the other copies and are discarded.
    LatestCommitted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Discrete points sampled per domain.
    pub k: usize,
    pub beta0: u32,
    /// Gradient-descent learning rate.
    pub alpha: f64,
    pub max_refine_iters: usize,
    /// Refinement stops once no variable moves by this much.
    pub refine_tol: f64,
    /// Relative slack when deciding that two aggregated costs tie.
    pub tie_tol: f64,
    pub seed: u64,
    pub freeze: FreezePolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 3,
            beta0: 1,
            alpha: 0.01,
            max_refine_iters: 100,
            refine_tol: 1e-8,
            tie_tol: 1e-9,
            seed: 0,
            freeze: FreezePolicy::AllCommitted,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.beta0 == 0 {
            return bad("beta0 must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if self.max_refine_iters == 0 {
            return bad("max_refine_iters must be at least 1");
        }
        if self.refine_tol.is_nan() || self.refine_tol <= 0.0 {
            return bad("refine_tol must be positive");
        }
        if self.tie_tol.is_nan() || self.tie_tol < 0.0 {
            return bad("tie_tol must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostMapEntry {
    /// Responder value achieving `cost`.
    pub value: f64,
    pub cost: f64,
}

/// A responder's reply: one entry per inquirer point, in the inquirer's order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostMap(pub Vec<CostMapEntry>);

impl CostMap {
    pub fn entries(&self) -> &[CostMapEntry] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for CostMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (n, e) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{:.3}: {:.3}", e.value, e.cost)?;
        }
        f.write_str("]")
    }
}

/// Draws `k` distinct values uniformly from `d`, in draw order.
pub fn discretize<R: Rng + ?Sized>(d: &IntervalDomain, k: usize, rng: &mut R) -> Vec<f64> {
    let mut points: Vec<f64> = Vec::with_capacity(k);
    let mut attempts = 0;
    while points.len() < k && attempts < 64 * k {
        let v = rng.random_range(d.lb()..=d.ub());
        if !points.contains(&v) {
            points.push(v);
        }
        attempts += 1;
    }
    // Only reachable when the interval holds fewer representable values than k.
    let mut t = 0;
    while points.len() < k {
        let v = d.clamp(d.lb() + (d.ub() - d.lb()) * (t as f64 + 0.5) / k as f64);
        if !points.contains(&v) {
            points.push(v);
        }
        t += 1;
        if t > 4 * k {
            points.push(v);
        }
    }
    points
}

/// What the responding agent knows when it answers an inquiry.
#[derive(Debug, Clone, Copy)]
pub struct Responder<'a> {
    pub id: AgentId,
    pub points: &'a [f64],
    pub committed: Option<f64>,
}

/// Computes the cost map agent `responder` returns to `inquirer`.
///
/// For each inquirer point, the responder minimises the cost of the shared
/// constraint over its candidate values: its own committed value if it has
/// one (or if the inquirer's CPA already holds it), otherwise its `k` points.
/// Ties keep the earliest candidate.
pub fn inquiry_reply(
    p: &Problem,
    responder: Responder<'_>,
    inquirer: AgentId,
    cpa_of_inquirer: &Assignment,
    inquirer_points: &[f64],
) -> Result<CostMap, EngineError> {
    let edge = p
        .edge_between(responder.id, inquirer)
        .ok_or(EngineError::NotNeighbor {
            sender: inquirer,
            receiver: responder.id,
        })?;
    let fixed = cpa_of_inquirer.get(responder.id).or(responder.committed);
    let fixed = fixed.map(|v| [v]);
    let candidates: &[f64] = match &fixed {
        Some(v) => v,
        None => responder.points,
    };
    let entries = inquirer_points
        .iter()
        .map(|&x_i| {
            let mut best = CostMapEntry {
                value: f64::NAN,
                cost: f64::INFINITY,
            };
            for &x_j in candidates {
                let cost = edge.cost_from(responder.id, x_j, x_i);
                if cost < best.cost || best.value.is_nan() {
                    best = CostMapEntry { value: x_j, cost };
                }
            }
            best
        })
        .collect();
    Ok(CostMap(entries))
}

/// Aggregated cost maps at the inquiring agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Summed cost per inquirer point.
    pub totals: Vec<f64>,
    pub delta: f64,
    /// Indices of the points whose total ties with `delta`.
    pub rho: Vec<usize>,
}

impl Aggregate {
    /// Neighbour values that produced the cost map entries at `point`.
    pub fn chi(maps: &[(AgentId, CostMap)], point: usize) -> Assignment {
        maps.iter().map(|(j, z)| (*j, z.0[point].value)).collect()
    }
}

pub fn aggregate(zetas: &[CostMap], k: usize, tie_tol: f64) -> Result<Aggregate, EngineError> {
    let mut totals = vec![0.0; k];
    for z in zetas {
        if z.len() != k {
            return Err(EngineError::CostMapLength {
                expected: k,
                got: z.len(),
            });
        }
        for (t, e) in totals.iter_mut().zip(z.entries()) {
            *t += e.cost;
        }
    }
    let delta = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = tie_tol * delta.abs().max(1.0);
    let rho = totals
        .iter()
        .enumerate()
        .filter(|(_, &t)| (t - delta).abs() <= slack)
        .map(|(idx, _)| idx)
        .collect();
    Ok(Aggregate { totals, delta, rho })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Assign(usize),
    Hold,
}

/// Accepts when the optimum is unique enough (`|rho| <= beta`) or when no
/// neighbour could still provide more information.
pub fn unique_first<R: Rng + ?Sized>(
    rho: &[usize],
    beta: u32,
    idle_active: usize,
    rng: &mut R,
) -> Decision {
    assert!(!rho.is_empty(), "rho is never empty");
    if rho.len() <= beta as usize || idle_active == 0 {
        Decision::Assign(rho[rng.random_range(0..rho.len())])
    } else {
        Decision::Hold
    }
}

/// Gradient descent on one agent's local objective, updating every
/// non-frozen variable simultaneously from the previous iterate and
/// clamping each into its domain.
#[derive(Debug, Clone)]
pub struct LocalRefiner<'p> {
    problem: &'p Problem,
    agent: AgentId,
    // position 0 is the agent, then its neighbours in id order
    values: Vec<f64>,
    frozen: Vec<bool>,
}

impl<'p> LocalRefiner<'p> {
    pub fn new(
        problem: &'p Problem,
        agent: AgentId,
        start: &Assignment,
        frozen: &BTreeSet<AgentId>,
    ) -> Result<Self, ModelError> {
        let vars: Vec<AgentId> = std::iter::once(agent)
            .chain(problem.neighbors(agent))
            .collect();
        let values = vars
            .iter()
            .map(|&v| {
                start
                    .get(v)
                    .ok_or(ModelError::MissingValue { agent, missing: v })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let frozen = vars
            .iter()
            .enumerate()
            .map(|(pos, v)| pos > 0 && frozen.contains(v))
            .collect();
        Ok(Self {
            problem,
            agent,
            values,
            frozen,
        })
    }

    pub fn value(&self) -> f64 {
        self.values[0]
    }

    pub fn objective(&self) -> f64 {
        let own = self.values[0];
        self.problem
            .incident(self.agent)
            .iter()
            .enumerate()
            .map(|(pos, &(_, idx))| {
                self.problem
                    .edge(idx)
                    .cost_from(self.agent, own, self.values[pos + 1])
            })
            .sum()
    }

    fn gradient(&self) -> Vec<f64> {
        let own = self.values[0];
        let mut g = vec![0.0; self.values.len()];
        for (pos, &(_, idx)) in self.problem.incident(self.agent).iter().enumerate() {
            let (g_own, g_other) =
                self.problem
                    .edge(idx)
                    .gradient_from(self.agent, own, self.values[pos + 1]);
            g[0] += g_own;
            g[pos + 1] += g_other;
        }
        g
    }

    /// One simultaneous update; returns the largest move.
    pub fn step(&mut self, alpha: f64) -> f64 {
        let g = self.gradient();
        let mut moved: f64 = 0.0;
        let own = std::iter::once(self.agent);
        let vars: Vec<AgentId> = own.chain(self.problem.neighbors(self.agent)).collect();
        for (pos, var) in vars.into_iter().enumerate() {
            if self.frozen[pos] {
                continue;
            }
            let next = self
                .problem
                .domain(var)
                .clamp(self.values[pos] - alpha * g[pos]);
            moved = moved.max((next - self.values[pos]).abs());
            self.values[pos] = next;
        }
        moved
    }

    /// Runs until `max_iters` steps or a step moves less than `tol`.
    pub fn run(&mut self, alpha: f64, max_iters: usize, tol: f64) -> f64 {
        for _ in 0..max_iters {
            if self.step(alpha) < tol {
                break;
            }
        }
        self.value()
    }
}

/// Refined value for `agent`, starting from `chi` (which must hold the
/// agent's own elected point and a value for every neighbour).
pub fn local_refine(
    p: &Problem,
    agent: AgentId,
    chi: &Assignment,
    frozen: &BTreeSet<AgentId>,
    cfg: &SolverConfig,
) -> Result<f64, ModelError> {
    let mut r = LocalRefiner::new(p, agent, chi, frozen)?;
    Ok(r.run(cfg.alpha, cfg.max_refine_iters, cfg.refine_tol))
}

/// Local objective value at the start and after every refinement step.
pub fn refine_trajectory(
    p: &Problem,
    agent: AgentId,
    chi: &Assignment,
    frozen: &BTreeSet<AgentId>,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, ModelError> {
    let mut r = LocalRefiner::new(p, agent, chi, frozen)?;
    let mut out = vec![r.objective()];
    for _ in 0..cfg.max_refine_iters {
        let moved = r.step(cfg.alpha);
        out.push(r.objective());
        if moved < cfg.refine_tol {
            break;
        }
    }
    Ok(out)
}

/// Agent `receiver` processes an UpdateState from neighbour `sender`.
///
/// Returns `true` when the receiver detects a deadlock: it is on hold, the
/// sender just went on hold, and none of the receiver's neighbours is idle
/// or active any more. A DONE from a neighbour wakes a held receiver.
pub fn handle_update_state(
    sim: &mut Simulation<'_>,
    receiver: AgentId,
    sender: AgentId,
    s: AgentState,
) -> Result<bool, EngineError> {
    sim.record_state(receiver, sender, s)?;
    let held = sim.agent(receiver).state == AgentState::Hold;
    match s {
        AgentState::Hold if held && sim.idle_active_neighbors(receiver) == 0 => Ok(true),
        AgentState::Done if held => {
            sim.wake(receiver);
            Ok(false)
        }
        _ => Ok(false),
    }
}

/// The CoCoA protocol, with or without gradient refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct CCoCoA {
    pub config: SolverConfig,
    /// When false the elected discrete point is committed as is.
    pub refine: bool,
    /// Use these points instead of sampling.
    pub points: Option<Vec<Vec<f64>>>,
    pub schedule: Schedule,
}

impl CCoCoA {
    pub fn new(config: SolverConfig) -> Self {
        Self {
            config,
            refine: true,
            points: None,
            schedule: Schedule::Random,
        }
    }

    /// Plain discrete CoCoA.
    pub fn discrete(config: SolverConfig) -> Self {
        Self {
            refine: false,
            ..Self::new(config)
        }
    }

    pub fn with_points(mut self, points: Vec<Vec<f64>>) -> Self {
        self.points = Some(points);
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    fn draw_points(&self, p: &Problem, rng: &mut SimRng) -> Result<Vec<Vec<f64>>, EngineError> {
        let k = self.config.k;
        match &self.points {
            Some(points) => {
                if points.len() != p.num_agents() {
                    return Err(EngineError::InvalidConfig(format!(
                        "{} point sets for {} agents",
                        points.len(),
                        p.num_agents()
                    )));
                }
                for (i, pts) in points.iter().enumerate() {
                    if pts.len() != k || !pts.iter().all(|&v| p.domain(i).contains(v)) {
                        return Err(EngineError::InvalidConfig(format!(
                            "agent {i} needs {k} points inside its domain"
                        )));
                    }
                }
                Ok(points.clone())
            }
            None => Ok(p.domains().iter().map(|d| discretize(d, k, rng)).collect()),
        }
    }

    /// Lets agent `j` work through its mailbox.
    fn process(&self, sim: &mut Simulation<'_>, j: AgentId) -> Result<bool, EngineError> {
        let mut deadlock = false;
        while let Some(msg) = sim.network.next(j) {
            match msg.payload {
                Payload::UpdateState(s) => deadlock |= handle_update_state(sim, j, msg.sender, s)?,
                Payload::Inquiry { cpa } => {
                    let agent = sim.agent(j);
                    let committed = agent.committed;
                    let p = sim.problem();
                    let responder = Responder {
                        id: j,
                        points: &sim.points[j],
                        committed,
                    };
                    let z = inquiry_reply(p, responder, msg.sender, &cpa, &sim.points[msg.sender])?;
                    sim.send(j, msg.sender, Payload::CostMapReply(z))?;
                }
                Payload::SetValue {
                    variable, value, ..
                } => {
                    if variable != msg.sender {
                        return Err(EngineError::UnexpectedMessage {
                            agent: j,
                            kind: "SetValue for another agent's variable",
                        });
                    }
                    sim.record_commitment(j, variable, value)?;
                }
                other => {
                    return Err(EngineError::UnexpectedMessage {
                        agent: j,
                        kind: other.kind().name(),
                    })
                }
            }
        }
        Ok(deadlock)
    }

    fn frozen(&self, sim: &Simulation<'_>, i: AgentId) -> BTreeSet<AgentId> {
        let agent = sim.agent(i);
        match self.config.freeze {
            FreezePolicy::AllCommitted => agent.cpa.iter().map(|(v, _)| v).collect(),
            FreezePolicy::LatestCommitted => agent.last_commit.into_iter().collect(),
        }
    }

    fn activate(
        &self,
        sim: &mut Simulation<'_>,
        i: AgentId,
        rng: &mut SimRng,
    ) -> Result<(), EngineError> {
        let p = sim.problem();
        sim.transition(i, AgentState::Active)?;
        let cpa = sim.agent(i).cpa.clone();
        let neighbors: Vec<AgentId> = p.neighbors(i).collect();

        for &j in &neighbors {
            sim.send(i, j, Payload::UpdateState(AgentState::Active))?;
            sim.send(i, j, Payload::Inquiry { cpa: cpa.clone() })?;
            self.process(sim, j)?;
        }
        let mut maps = Vec::with_capacity(neighbors.len());
        while let Some(msg) = sim.network.next(i) {
            match msg.payload {
                Payload::CostMapReply(z) => maps.push((msg.sender, z)),
                other => {
                    return Err(EngineError::UnexpectedMessage {
                        agent: i,
                        kind: other.kind().name(),
                    })
                }
            }
        }
        let zetas: Vec<CostMap> = maps.iter().map(|(_, z)| z.clone()).collect();
        let agg = aggregate(&zetas, self.config.k, self.config.tie_tol)?;
        let beta = sim.beta();
        let decision = unique_first(&agg.rho, beta, sim.idle_active_neighbors(i), rng);

        let outcome = match decision {
            Decision::Assign(point) => {
                let theta = sim.points[i][point];
                let value = if self.refine {
                    let mut chi = Aggregate::chi(&maps, point);
                    chi.insert(i, theta);
                    local_refine(p, i, &chi, &self.frozen(sim, i), &self.config)?
                } else {
                    theta
                };
                sim.commit(i, value)?;
                sim.transition(i, AgentState::Done)?;
                for &j in &neighbors {
                    sim.send(i, j, Payload::UpdateState(AgentState::Done))?;
                    sim.send(
                        i,
                        j,
                        Payload::SetValue {
                            variable: i,
                            value,
                            cpa: cpa.clone(),
                        },
                    )?;
                    self.process(sim, j)?;
                }
                sim.wake_all_held();
                ActivationOutcome::Committed {
                    point,
                    theta,
                    value,
                }
            }
            Decision::Hold => {
                sim.transition(i, AgentState::Hold)?;
                let mut deadlock = false;
                for &j in &neighbors {
                    sim.send(i, j, Payload::UpdateState(AgentState::Hold))?;
                    deadlock |= self.process(sim, j)?;
                }
                if deadlock {
                    sim.raise_beta()?;
                }
                ActivationOutcome::Held
            }
        };
        sim.activations.push(ActivationRecord {
            agent: i,
            beta,
            cost_maps: maps,
            totals: agg.totals,
            rho: agg.rho,
            outcome,
        });
        Ok(())
    }
}

impl Solver for CCoCoA {
    fn name(&self) -> &'static str {
        if self.refine {
            "ccocoa"
        } else {
            "cocoa"
        }
    }

    fn initial_beta(&self) -> u32 {
        self.config.beta0
    }

    fn beta_cap(&self) -> u32 {
        (self.config.k as u32).max(self.config.beta0)
    }

    fn drive(&self, sim: &mut Simulation<'_>, rng: &mut SimRng) -> Result<(), EngineError> {
        self.config.validate()?;
        sim.points = self.draw_points(sim.problem(), rng)?;
        while let Some(i) = sim.select_next(rng, &self.schedule)? {
            self.activate(sim, i, rng)?;
        }
        Ok(())
    }
}

/// Runs C-CoCoA with a RNG seeded from `cfg.seed`.
pub fn solve(p: &Problem, cfg: &SolverConfig) -> Result<RunMetrics, EngineError> {
    engine::run(
        &CCoCoA::new(cfg.clone()),
        p,
        cfg.seed,
        RunOptions::default(),
    )
}
