//! Functional DCOP instances: agents owning one continuous variable each,
//! interval domains, and binary cost functions on the edges of a connected
//! constraint graph.
//!
//! Agent `i` controls variable `i`, so agent ids double as variable ids.

mod format;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use format::{parse_problem, serialize_problem, FormatError};

/// Index of an agent, and of the variable it controls.
pub type AgentId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("problem has no agents")]
    Empty,
    #[error("agent {agent}: domain [{lb}, {ub}] must be finite with lb < ub")]
    InvalidDomain { agent: AgentId, lb: f64, ub: f64 },
    #[error("edge ({0}, {0}) is a self-edge")]
    SelfEdge(AgentId),
    #[error("edge ({i}, {j}) refers to an agent outside 0..{n}")]
    UnknownAgent { i: AgentId, j: AgentId, n: usize },
    #[error("duplicate edge between agents {0} and {1}")]
    DuplicateEdge(AgentId, AgentId),
    #[error("edge ({i}, {j}) has a non-finite coefficient")]
    NonFiniteCost { i: AgentId, j: AgentId },
    #[error("constraint graph is disconnected; agents {0:?} are unreachable from agent 0")]
    Disconnected(Vec<AgentId>),
    #[error("assignment is incomplete; missing variables {0:?}")]
    Incomplete(Vec<AgentId>),
    #[error("local objective of agent {agent} needs a value for variable {missing}")]
    MissingValue { agent: AgentId, missing: AgentId },
    #[error("agent {0} does not exist")]
    NoSuchAgent(AgentId),
}

/// Closed interval `[lb, ub]` with `lb < ub`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalDomain {
    lb: f64,
    ub: f64,
}

impl IntervalDomain {
    pub fn new(lb: f64, ub: f64) -> Option<Self> {
        (lb.is_finite() && ub.is_finite() && lb < ub).then_some(Self { lb, ub })
    }

    pub fn lb(&self) -> f64 {
        self.lb
    }

    pub fn ub(&self) -> f64 {
        self.ub
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lb <= v && v <= self.ub
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lb, self.ub)
    }
}

/// A cost over an ordered pair of variables `(x, y)`.
pub trait BinaryCost {
    fn evaluate(&self, x: f64, y: f64) -> f64;
    /// Partial derivatives `(df/dx, df/dy)`.
    fn gradient(&self, x: f64, y: f64) -> (f64, f64);
}

/// `a*x^2 + b*x*y + c*y^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticCost {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

impl BinaryCost for QuadraticCost {
    fn evaluate(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + self.b * x * y + self.c * y * y
    }

    fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (2.0 * self.a * x + self.b * y, self.b * x + 2.0 * self.c * y)
    }
}

pub fn evaluate_edge(cost: &QuadraticCost, x: f64, y: f64) -> f64 {
    cost.evaluate(x, y)
}

pub fn edge_gradient(cost: &QuadraticCost, x: f64, y: f64) -> (f64, f64) {
    cost.gradient(x, y)
}

/// A constraint between `first` (the x role) and `second` (the y role).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub first: AgentId,
    pub second: AgentId,
    pub cost: QuadraticCost,
}

impl Edge {
    pub fn new(first: AgentId, second: AgentId, cost: QuadraticCost) -> Self {
        Self {
            first,
            second,
            cost,
        }
    }

    pub fn other(&self, agent: AgentId) -> AgentId {
        if agent == self.first {
            self.second
        } else {
            self.first
        }
    }

    /// Cost with `agent` taking `own` and the other endpoint taking `other`.
    pub fn cost_from(&self, agent: AgentId, own: f64, other: f64) -> f64 {
        if agent == self.first {
            self.cost.evaluate(own, other)
        } else {
            self.cost.evaluate(other, own)
        }
    }

    /// `(d/d own, d/d other)` seen from `agent`.
    pub fn gradient_from(&self, agent: AgentId, own: f64, other: f64) -> (f64, f64) {
        if agent == self.first {
            self.cost.gradient(own, other)
        } else {
            let (gx, gy) = self.cost.gradient(other, own);
            (gy, gx)
        }
    }
}

/// Values for some or all variables. Also used as a current partial
/// assignment (CPA).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment(BTreeMap<AgentId, f64>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: &[f64]) -> Self {
        Self(values.iter().copied().enumerate().collect())
    }

    pub fn get(&self, var: AgentId) -> Option<f64> {
        self.0.get(&var).copied()
    }

    pub fn insert(&mut self, var: AgentId, value: f64) -> Option<f64> {
        self.0.insert(var, value)
    }

    pub fn contains(&self, var: AgentId) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, f64)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    /// Dense vector of values when every variable in `0..n` is assigned.
    pub fn to_dense(&self, n: usize) -> Option<Vec<f64>> {
        (0..n).map(|i| self.get(i)).collect()
    }
}

impl FromIterator<(AgentId, f64)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (AgentId, f64)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Immutable, validated F-DCOP instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    domains: Vec<IntervalDomain>,
    edges: Vec<Edge>,
    // per agent: (neighbour, edge index), sorted by neighbour
    incident: Vec<Vec<(AgentId, usize)>>,
}

impl Problem {
    /// Validates the instance: at least one agent, finite domains with
    /// `lb < ub`, no self-edges, at most one edge per unordered pair, and a
    /// connected constraint graph in which every agent has a neighbour.
    pub fn new(domains: Vec<(f64, f64)>, edges: Vec<Edge>) -> Result<Self, ModelError> {
        let n = domains.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        let domains = domains
            .into_iter()
            .enumerate()
            .map(|(agent, (lb, ub))| {
                IntervalDomain::new(lb, ub).ok_or(ModelError::InvalidDomain { agent, lb, ub })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut seen = BTreeSet::new();
        let mut incident = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            let (i, j) = (e.first, e.second);
            if i >= n || j >= n {
                return Err(ModelError::UnknownAgent { i, j, n });
            }
            if i == j {
                return Err(ModelError::SelfEdge(i));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(ModelError::DuplicateEdge(i.min(j), i.max(j)));
            }
            if !e.cost.is_finite() {
                return Err(ModelError::NonFiniteCost { i, j });
            }
            incident[i].push((j, idx));
            incident[j].push((i, idx));
        }
        for list in &mut incident {
            list.sort_unstable();
        }

        let unreachable = unreachable_from_zero(&incident);
        if !unreachable.is_empty() || (n == 1 && edges.is_empty()) {
            let unreachable = if unreachable.is_empty() {
                vec![0]
            } else {
                unreachable
            };
            return Err(ModelError::Disconnected(unreachable));
        }

        Ok(Self {
            domains,
            edges,
            incident,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.domains.len()
    }

    pub fn agents(&self) -> std::ops::Range<AgentId> {
        0..self.domains.len()
    }

    pub fn domain(&self, agent: AgentId) -> &IntervalDomain {
        &self.domains[agent]
    }

    pub fn domains(&self) -> &[IntervalDomain] {
        &self.domains
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    /// Neighbours of `agent` in increasing id order.
    pub fn neighbors(&self, agent: AgentId) -> impl ExactSizeIterator<Item = AgentId> + '_ {
        self.incident[agent].iter().map(|&(j, _)| j)
    }

    /// `(neighbour, edge index)` pairs for `agent`.
    pub fn incident(&self, agent: AgentId) -> &[(AgentId, usize)] {
        &self.incident[agent]
    }

    pub fn degree(&self, agent: AgentId) -> usize {
        self.incident[agent].len()
    }

    pub fn edge_between(&self, i: AgentId, j: AgentId) -> Option<&Edge> {
        self.incident
            .get(i)?
            .binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|pos| &self.edges[self.incident[i][pos].1])
    }

    pub fn are_neighbors(&self, i: AgentId, j: AgentId) -> bool {
        self.edge_between(i, j).is_some()
    }

    /// Sum of edge costs under a complete assignment.
    pub fn global_cost(&self, a: &Assignment) -> Result<f64, ModelError> {
        let values = self.dense(a)?;
        Ok(self.global_cost_dense(&values))
    }

    /// Like [`Problem::global_cost`] for a dense value vector indexed by agent.
    pub fn global_cost_dense(&self, values: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|e| e.cost.evaluate(values[e.first], values[e.second]))
            .sum()
    }

    fn dense(&self, a: &Assignment) -> Result<Vec<f64>, ModelError> {
        a.to_dense(self.num_agents()).ok_or_else(|| {
            ModelError::Incomplete(self.agents().filter(|&i| !a.contains(i)).collect())
        })
    }

    /// Local objective of `agent`: the sum of its incident edge costs and the
    /// gradient with respect to the agent's variable and every neighbour's.
    pub fn local_objective(
        &self,
        agent: AgentId,
        a: &Assignment,
    ) -> Result<LocalObjective, ModelError> {
        if agent >= self.num_agents() {
            return Err(ModelError::NoSuchAgent(agent));
        }
        let own = a.get(agent).ok_or(ModelError::MissingValue {
            agent,
            missing: agent,
        })?;
        let mut value = 0.0;
        let mut own_grad = 0.0;
        let mut gradient = BTreeMap::new();
        for &(j, idx) in &self.incident[agent] {
            let other = a
                .get(j)
                .ok_or(ModelError::MissingValue { agent, missing: j })?;
            let e = &self.edges[idx];
            value += e.cost_from(agent, own, other);
            let (g_own, g_other) = e.gradient_from(agent, own, other);
            own_grad += g_own;
            gradient.insert(j, g_other);
        }
        gradient.insert(agent, own_grad);
        Ok(LocalObjective { value, gradient })
    }
}

/// Value and gradient of an agent's local objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalObjective {
    pub value: f64,
    pub gradient: BTreeMap<AgentId, f64>,
}

fn unreachable_from_zero(incident: &[Vec<(AgentId, usize)>]) -> Vec<AgentId> {
    let n = incident.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &(w, _) in &incident[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    (0..n).filter(|&i| !seen[i]).collect()
}

/// The four-agent example instance with domains `[-20, 20]`.
pub fn worked_example() -> Problem {
    Problem::new(
        vec![(-20.0, 20.0); 4],
        vec![
            Edge::new(0, 1, QuadraticCost::new(1.0, -2.0, 2.0)),
            Edge::new(0, 2, QuadraticCost::new(0.0, 1.0, 3.0)),
            Edge::new(0, 3, QuadraticCost::new(0.0, 1.0, 1.0)),
            Edge::new(1, 2, QuadraticCost::new(1.0, -1.0, 2.0)),
        ],
    )
    .expect("example instance is valid")
}
