//! Comparison solvers run on the same engine as C-CoCoA.
//!
//! * discrete CoCoA: the C-CoCoA protocol without gradient refinement.
//! * HCMS: synchronous min-sum over each agent's `k` sampled points, with a
//!   gradient adjustment of those points after every round.
//!
//! HCMS hosts the factor of each edge at the edge's x-role endpoint. Per
//! round and edge, four factor-graph messages are counted: the q and r
//! messages of both endpoints. The two that cross the edge go through the
//! network; the host's own pair is recorded as local.

use crate::ccocoa::{discretize, CCoCoA, SolverConfig};
use crate::engine::{
    self, EngineError, Payload, RunMetrics, RunOptions, SimRng, Simulation, Solver,
};
use crate::model::{AgentId, Problem};

/// Discrete CoCoA: commits the elected sample point directly.
pub fn cocoa_solve(p: &Problem, cfg: &SolverConfig) -> Result<RunMetrics, EngineError> {
    engine::run(
        &CCoCoA::discrete(cfg.clone()),
        p,
        cfg.seed,
        RunOptions::default(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcmsConfig {
    pub max_sum_iters: usize,
    /// Gradient-adjust the sample points after every round.
    pub adjust: bool,
}

impl Default for HcmsConfig {
    fn default() -> Self {
        Self {
            max_sum_iters: 100,
            adjust: true,
        }
    }
}

/// Min-sum messages over the factor graph, aligned with the current points.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSumState {
    pub points: Vec<Vec<f64>>,
    /// `q[e][s]`: from the variable at side `s` of edge `e` (0 = x role) to its factor.
    pub q: Vec<[Vec<f64>; 2]>,
    /// `r[e][s]`: from the factor of edge `e` to the variable at side `s`.
    pub r: Vec<[Vec<f64>; 2]>,
    pub iteration: usize,
}

fn side(p: &Problem, edge: usize, agent: AgentId) -> usize {
    usize::from(p.edge(edge).first != agent)
}

fn normalize(v: &mut [f64]) {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        for x in v {
            *x -= min;
        }
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

impl MaxSumState {
    pub fn new(p: &Problem, points: Vec<Vec<f64>>) -> Self {
        let zeros = |e: usize, s: usize| {
            let owner = if s == 0 {
                p.edge(e).first
            } else {
                p.edge(e).second
            };
            vec![0.0; points[owner].len()]
        };
        let q = (0..p.edges().len())
            .map(|e| [zeros(e, 0), zeros(e, 1)])
            .collect();
        let r = (0..p.edges().len())
            .map(|e| [zeros(e, 0), zeros(e, 1)])
            .collect();
        Self {
            points,
            q,
            r,
            iteration: 0,
        }
    }

    /// Sum of incoming factor messages at agent `i`.
    pub fn belief(&self, p: &Problem, i: AgentId) -> Vec<f64> {
        let mut b = vec![0.0; self.points[i].len()];
        for &(_, e) in p.incident(i) {
            for (x, m) in b.iter_mut().zip(&self.r[e][side(p, e, i)]) {
                *x += m;
            }
        }
        b
    }

    /// Point index with the smallest belief; lowest index on ties.
    pub fn best(&self, p: &Problem, i: AgentId) -> usize {
        argmin(&self.belief(p, i))
    }

    fn q_message(&self, p: &Problem, i: AgentId, exclude: usize) -> Vec<f64> {
        let mut q = vec![0.0; self.points[i].len()];
        for &(_, e) in p.incident(i) {
            if e == exclude {
                continue;
            }
            for (x, m) in q.iter_mut().zip(&self.r[e][side(p, e, i)]) {
                *x += m;
            }
        }
        normalize(&mut q);
        q
    }

    /// Message from the factor of `edge` to the variable at `to_side`.
    fn r_message(&self, p: &Problem, edge: usize, to_side: usize, q_other: &[f64]) -> Vec<f64> {
        let e = p.edge(edge);
        let (me, other) = if to_side == 0 {
            (e.first, e.second)
        } else {
            (e.second, e.first)
        };
        let mut r: Vec<f64> = self.points[me]
            .iter()
            .map(|&v| {
                self.points[other]
                    .iter()
                    .zip(q_other)
                    .map(|(&w, &q)| e.cost_from(me, v, w) + q)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        normalize(&mut r);
        r
    }

    /// One synchronous flooding round, with every message routed through `sim`.
    pub fn round(&mut self, sim: &mut Simulation<'_>) -> Result<(), EngineError> {
        let p = sim.problem();
        let mut q_new = self.q.clone();

        for i in p.agents() {
            for &(_, e) in p.incident(i) {
                let values = self.q_message(p, i, e);
                let host = p.edge(e).first;
                if i == host {
                    sim.network.record_local(
                        i,
                        &Payload::MaxSumQ {
                            edge: e,
                            values: values.clone(),
                        },
                    );
                    q_new[e][0] = values;
                } else {
                    sim.send(i, host, Payload::MaxSumQ { edge: e, values })?;
                }
            }
        }
        for host in p.agents() {
            while let Some(msg) = sim.network.next(host) {
                match msg.payload {
                    Payload::MaxSumQ { edge, values } => q_new[edge][1] = values,
                    other => {
                        return Err(EngineError::UnexpectedMessage {
                            agent: host,
                            kind: other.kind().name(),
                        })
                    }
                }
            }
        }
        self.q = q_new;

        for e in 0..p.edges().len() {
            let host = p.edge(e).first;
            let to_host = self.r_message(p, e, 0, &self.q[e][1]);
            let to_other = self.r_message(p, e, 1, &self.q[e][0]);
            sim.network.record_local(
                host,
                &Payload::MaxSumR {
                    edge: e,
                    values: to_host.clone(),
                },
            );
            self.r[e][0] = to_host;
            sim.send(
                host,
                p.edge(e).second,
                Payload::MaxSumR {
                    edge: e,
                    values: to_other,
                },
            )?;
        }
        for i in p.agents() {
            while let Some(msg) = sim.network.next(i) {
                match msg.payload {
                    Payload::MaxSumR { edge, values } => self.r[edge][1] = values,
                    other => {
                        return Err(EngineError::UnexpectedMessage {
                            agent: i,
                            kind: other.kind().name(),
                        })
                    }
                }
            }
        }
        self.iteration += 1;
        Ok(())
    }

    /// Moves every sample point one gradient step against the neighbours'
    /// current best points.
    pub fn adjust(&mut self, p: &Problem, alpha: f64) {
        let best: Vec<f64> = p
            .agents()
            .map(|i| self.points[i][self.best(p, i)])
            .collect();
        for i in p.agents() {
            let d = p.domain(i);
            for t in 0..self.points[i].len() {
                let v = self.points[i][t];
                let g: f64 = p
                    .incident(i)
                    .iter()
                    .map(|&(j, e)| p.edge(e).gradient_from(i, v, best[j]).0)
                    .sum();
                self.points[i][t] = d.clamp(v - alpha * g);
            }
        }
    }
}

/// Hybrid continuous Max-Sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Hcms {
    pub config: SolverConfig,
    pub hcms: HcmsConfig,
    pub points: Option<Vec<Vec<f64>>>,
}

impl Hcms {
    pub fn new(config: SolverConfig, hcms: HcmsConfig) -> Self {
        Self {
            config,
            hcms,
            points: None,
        }
    }

    pub fn with_points(mut self, points: Vec<Vec<f64>>) -> Self {
        self.points = Some(points);
        self
    }
}

impl Solver for Hcms {
    fn name(&self) -> &'static str {
        "hcms"
    }

    fn drive(&self, sim: &mut Simulation<'_>, rng: &mut SimRng) -> Result<(), EngineError> {
        self.config.validate()?;
        let p = sim.problem();
        let points = match &self.points {
            Some(pts) => pts.clone(),
            None => p
                .domains()
                .iter()
                .map(|d| discretize(d, self.config.k, rng))
                .collect(),
        };
        let mut state = MaxSumState::new(p, points);
        for _ in 0..self.hcms.max_sum_iters {
            state.round(sim)?;
            if self.hcms.adjust {
                state.adjust(p, self.config.alpha);
            }
        }
        for i in p.agents() {
            let v = state.points[i][state.best(p, i)];
            sim.commit(i, v)?;
        }
        sim.points = state.points;
        Ok(())
    }
}

pub fn hcms_solve(
    p: &Problem,
    cfg: &SolverConfig,
    hcms: HcmsConfig,
) -> Result<RunMetrics, EngineError> {
    engine::run(
        &Hcms::new(cfg.clone(), hcms),
        p,
        cfg.seed,
        RunOptions::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::MessageKind;
    use crate::model::{worked_example, Edge, QuadraticCost};
    use crate::oracle::discrete_search;

    #[test]
    fn cocoa_commits_sample_points() {
        let p = worked_example();
        let solver = CCoCoA::discrete(SolverConfig {
            k: 2,
            ..Default::default()
        })
        .with_points(vec![
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![7.0, 8.0],
            vec![5.0, 9.0],
        ])
        .with_schedule(engine::Schedule::Priority(vec![0, 1, 2, 3]));
        let m = engine::run(&solver, &p, 0, RunOptions::default()).unwrap();
        assert_eq!(m.assignment.get(0), Some(1.0));
        for i in p.agents() {
            assert!(m.points[i].contains(&m.assignment.get(i).unwrap()));
        }
    }

    #[test]
    fn cocoa_k1_uses_the_single_sample() {
        let p = worked_example();
        let cfg = SolverConfig {
            k: 1,
            seed: 11,
            ..Default::default()
        };
        let m = cocoa_solve(&p, &cfg).unwrap();
        for i in p.agents() {
            assert_eq!(m.assignment.get(i), Some(m.points[i][0]));
        }
    }

    #[test]
    fn single_edge_picks_grid_point_nearest_minimizer() {
        // separable convex edge, minimiser at the origin
        let p = Problem::new(
            vec![(-2.0, 2.0); 2],
            vec![Edge::new(0, 1, QuadraticCost::new(1.0, 0.0, 2.0))],
        )
        .unwrap();
        let grid: Vec<f64> = (0..9).map(|t| -2.0 + 0.5 * t as f64).collect();
        let points = vec![grid.clone(), grid.clone()];
        let solver = Hcms::new(
            SolverConfig {
                k: 9,
                ..Default::default()
            },
            HcmsConfig {
                max_sum_iters: 5,
                adjust: false,
            },
        )
        .with_points(points.clone());
        let m = engine::run(&solver, &p, 0, RunOptions::default()).unwrap();
        let oracle = discrete_search(&p, &points, 1_000).unwrap();
        assert_eq!(m.assignment.to_dense(2).unwrap(), oracle.assignment);
        assert_eq!(oracle.assignment, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_costs_give_zero() {
        let zero = QuadraticCost::new(0.0, 0.0, 0.0);
        let p = Problem::new(
            vec![(-5.0, 5.0); 3],
            vec![Edge::new(0, 1, zero), Edge::new(2, 1, zero)],
        )
        .unwrap();
        let m = hcms_solve(&p, &SolverConfig::default(), HcmsConfig::default()).unwrap();
        assert_eq!(m.cost, 0.0);
        assert_eq!(m.assignment.len(), 3);
    }

    #[test]
    fn message_count_is_four_per_edge_per_round() {
        let p = worked_example();
        for iters in [0, 1, 7, 100] {
            let m = hcms_solve(
                &p,
                &SolverConfig::default(),
                HcmsConfig {
                    max_sum_iters: iters,
                    adjust: true,
                },
            )
            .unwrap();
            let e = p.edges().len() as u64;
            assert_eq!(m.messages.total(), 4 * e * iters as u64);
            assert_eq!(m.messages.get(MessageKind::MaxSumQ), 2 * e * iters as u64);
            assert_eq!(m.messages.get(MessageKind::MaxSumR), 2 * e * iters as u64);
        }
    }

    #[test]
    fn messages_stay_normalized_and_finite() {
        let p = worked_example();
        let mut sim = Simulation::new(&p, false, 1, 1);
        let points = vec![vec![-3.0, 0.5, 4.0]; 4];
        let mut state = MaxSumState::new(&p, points);
        for _ in 0..20 {
            state.round(&mut sim).unwrap();
            state.adjust(&p, 0.01);
            for m in state.q.iter().chain(&state.r).flatten() {
                assert_eq!(m.len(), 3);
                assert!(m.iter().all(|x| x.is_finite()));
                assert_eq!(m.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            }
        }
        assert_eq!(state.iteration, 20);
    }

    #[test]
    fn zero_rounds_pick_first_point() {
        let p = worked_example();
        let solver = Hcms::new(
            SolverConfig {
                k: 2,
                ..Default::default()
            },
            HcmsConfig {
                max_sum_iters: 0,
                adjust: true,
            },
        );
        let m = engine::run(&solver, &p, 5, RunOptions::default()).unwrap();
        for i in p.agents() {
            assert_eq!(m.assignment.get(i), Some(m.points[i][0]));
        }
        assert_eq!(m.messages.total(), 0);
    }
}
