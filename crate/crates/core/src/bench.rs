//! Random instance generators and the experiment runner behind the `bench`
//! CLI.
//!
//! Every instance draws binary quadratic costs with coefficients uniform in
//! `coeff_range` and gives every agent the same `domain_range` interval.

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::baselines::{Hcms, HcmsConfig};
use crate::ccocoa::{CCoCoA, SolverConfig};
use crate::engine::{self, RunMetrics, RunOptions, SimRng, Solver};
use crate::exec::{self, Execution};
use crate::model::{AgentId, Edge, ModelError, Problem, QuadraticCost};

pub const CSV_HEADER: [&str; 10] = [
    "topology",
    "n",
    "k",
    "algo",
    "seed",
    "cost",
    "messages",
    "hold_events",
    "time_s",
    "status",
];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("generated instance is invalid: {0}")]
    Model(#[from] ModelError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    SparseEr,
    DenseEr,
    ScaleFree,
    Tree,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::SparseEr,
        Topology::DenseEr,
        Topology::ScaleFree,
        Topology::Tree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::SparseEr => "sparse",
            Topology::DenseEr => "dense",
            Topology::ScaleFree => "scalefree",
            Topology::Tree => "tree",
        }
    }

    pub fn is_erdos_renyi(self) -> bool {
        matches!(self, Topology::SparseEr | Topology::DenseEr)
    }

    pub fn default_edge_prob(self) -> f64 {
        match self {
            Topology::DenseEr => 0.6,
            _ => 0.2,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparse" | "sparse-er" => Ok(Topology::SparseEr),
            "dense" | "dense-er" => Ok(Topology::DenseEr),
            "scalefree" | "scale-free" => Ok(Topology::ScaleFree),
            "tree" => Ok(Topology::Tree),
            other => Err(format!(
                "unknown topology `{other}` (expected sparse, dense, scalefree or tree)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub topology: Topology,
    pub n: usize,
    /// Only used by the Erdős–Rényi topologies.
    pub edge_prob: f64,
    /// Only used by the scale-free topology.
    pub attach: usize,
    pub coeff_range: (f64, f64),
    pub domain_range: (f64, f64),
}

impl GeneratorConfig {
    /// The standard setup for `topology`: p = 0.2 (sparse) or 0.6 (dense),
    /// two attachments per new scale-free node, coefficients in [-5, 5] and
    /// domains [-50, 50].
    pub fn preset(topology: Topology, n: usize) -> Self {
        Self {
            topology,
            n,
            edge_prob: topology.default_edge_prob(),
            attach: 2,
            coeff_range: (-5.0, 5.0),
            domain_range: (-50.0, 50.0),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidSpec(m));
        if self.n < 2 {
            return bad(format!("need at least 2 agents, got {}", self.n));
        }
        if self.topology.is_erdos_renyi() && !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return bad(format!(
                "edge probability {} outside (0, 1]",
                self.edge_prob
            ));
        }
        if self.topology == Topology::ScaleFree && (self.attach == 0 || self.attach >= self.n) {
            return bad(format!(
                "attach must be in 1..{}, got {}",
                self.n, self.attach
            ));
        }
        let (lo, hi) = self.coeff_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("bad coefficient range [{lo}, {hi}]"));
        }
        let (lb, ub) = self.domain_range;
        if !(lb.is_finite() && ub.is_finite() && lb < ub) {
            return bad(format!("bad domain range [{lb}, {ub}]"));
        }
        Ok(())
    }

    /// Builds the instance for `seed`; the same seed always yields the same
    /// problem.
    pub fn generate(&self, seed: u64) -> Result<Problem, BenchError> {
        self.validate()?;
        let mut rng = SimRng::seed_from_u64(seed);
        let pairs = match self.topology {
            Topology::SparseEr | Topology::DenseEr => {
                erdos_renyi_pairs(self.n, self.edge_prob, &mut rng)
            }
            Topology::ScaleFree => scale_free_pairs(self.n, self.attach, &mut rng),
            Topology::Tree => tree_pairs(self.n, &mut rng),
        };
        Ok(self.with_costs(pairs, &mut rng)?)
    }

    fn with_costs<R: Rng + ?Sized>(
        &self,
        pairs: Vec<(AgentId, AgentId)>,
        rng: &mut R,
    ) -> Result<Problem, ModelError> {
        let (lo, hi) = self.coeff_range;
        let edges = pairs
            .into_iter()
            .map(|(i, j)| {
                let a = rng.random_range(lo..=hi);
                let b = rng.random_range(lo..=hi);
                let c = rng.random_range(lo..=hi);
                Edge::new(i, j, QuadraticCost::new(a, b, c))
            })
            .collect();
        Problem::new(vec![self.domain_range; self.n], edges)
    }
}

/// Erdős–Rényi instance with the standard coefficient and domain ranges.
/// Disconnected draws are repaired by adding random cross-component edges.
pub fn gen_erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Problem {
    assert!(n >= 2 && p > 0.0 && p <= 1.0, "need n >= 2 and p in (0, 1]");
    let pairs = erdos_renyi_pairs(n, p, rng);
    GeneratorConfig::preset(Topology::SparseEr, n)
        .with_costs(pairs, rng)
        .expect("generator output is a valid problem")
}

/// Barabási–Albert instance grown from a clique of `attach` agents.
pub fn gen_scale_free<R: Rng + ?Sized>(n: usize, attach: usize, rng: &mut R) -> Problem {
    assert!(
        n >= 2 && attach >= 1 && attach < n,
        "need n >= 2 and 1 <= attach < n"
    );
    let pairs = scale_free_pairs(n, attach, rng);
    GeneratorConfig::preset(Topology::ScaleFree, n)
        .with_costs(pairs, rng)
        .expect("generator output is a valid problem")
}

/// Uniformly random labelled tree, decoded from a random Prüfer sequence.
pub fn gen_random_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Problem {
    assert!(n >= 2, "need n >= 2");
    let pairs = tree_pairs(n, rng);
    GeneratorConfig::preset(Topology::Tree, n)
        .with_costs(pairs, rng)
        .expect("generator output is a valid problem")
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
        ra != rb
    }
}

fn erdos_renyi_pairs<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<(AgentId, AgentId)> {
    let mut pairs = Vec::new();
    let mut sets = DisjointSet::new(n);
    let mut components = n;
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                pairs.push((i, j));
                if sets.union(i, j) {
                    components -= 1;
                }
            }
        }
    }
    // a uniformly random pair straddling two components joins them
    while components > 1 {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if sets.find(u) != sets.find(v) {
            sets.union(u, v);
            components -= 1;
            pairs.push((u.min(v), u.max(v)));
        }
    }
    pairs
}

fn scale_free_pairs<R: Rng + ?Sized>(
    n: usize,
    attach: usize,
    rng: &mut R,
) -> Vec<(AgentId, AgentId)> {
    let mut pairs = Vec::new();
    // each agent appears once per incident edge, so uniform draws are
    // degree-weighted
    let mut ends: Vec<AgentId> = Vec::new();
    for i in 0..attach {
        for j in i + 1..attach {
            pairs.push((i, j));
            ends.extend([i, j]);
        }
    }
    for new in attach..n {
        let mut targets = BTreeSet::new();
        while targets.len() < attach {
            let t = if ends.is_empty() {
                rng.random_range(0..new)
            } else {
                ends[rng.random_range(0..ends.len())]
            };
            targets.insert(t);
        }
        for t in targets {
            pairs.push((t, new));
            ends.extend([t, new]);
        }
    }
    pairs
}

fn tree_pairs<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(AgentId, AgentId)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let code: Vec<AgentId> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &v in &code {
        degree[v] += 1;
    }
    let mut leaves: BTreeSet<AgentId> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut pairs = Vec::with_capacity(n - 1);
    for &v in &code {
        let leaf = leaves
            .pop_first()
            .expect("a Prüfer decode always has a leaf");
        pairs.push((leaf.min(v), leaf.max(v)));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.insert(v);
        }
    }
    let last: Vec<AgentId> = leaves.into_iter().collect();
    pairs.push((last[0], last[1]));
    pairs
}

/// One solver entry of an experiment, with its own configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    CCoCoA(SolverConfig),
    CoCoA(SolverConfig),
    Hcms(SolverConfig, HcmsConfig),
}

impl Algorithm {
    /// Parses `ccocoa`, `cocoa`, `hcms` (100 rounds) or `hcms<rounds>`.
    pub fn parse(name: &str, config: SolverConfig) -> Result<Self, String> {
        match name {
            "ccocoa" => Ok(Algorithm::CCoCoA(config)),
            "cocoa" => Ok(Algorithm::CoCoA(config)),
            "hcms" => Ok(Algorithm::Hcms(config, HcmsConfig::default())),
            other => match other.strip_prefix("hcms").map(str::parse::<usize>) {
                Some(Ok(iters)) => Ok(Algorithm::Hcms(
                    config,
                    HcmsConfig {
                        max_sum_iters: iters,
                        ..HcmsConfig::default()
                    },
                )),
                _ => Err(format!(
                    "unknown algorithm `{other}` (expected ccocoa, cocoa, hcms or hcms<iters>)"
                )),
            },
        }
    }

    /// The label used in the `algo` column.
    pub fn label(&self) -> String {
        match self {
            Algorithm::CCoCoA(_) => "ccocoa".into(),
            Algorithm::CoCoA(_) => "cocoa".into(),
            Algorithm::Hcms(_, h) => format!("hcms{}", h.max_sum_iters),
        }
    }

    pub fn config(&self) -> &SolverConfig {
        match self {
            Algorithm::CCoCoA(c) | Algorithm::CoCoA(c) | Algorithm::Hcms(c, _) => c,
        }
    }

    pub fn solver(&self) -> Box<dyn Solver + Send + Sync> {
        match self {
            Algorithm::CCoCoA(c) => Box::new(CCoCoA::new(c.clone())),
            Algorithm::CoCoA(c) => Box::new(CCoCoA::discrete(c.clone())),
            Algorithm::Hcms(c, h) => Box::new(Hcms::new(c.clone(), *h)),
        }
    }

    /// Runs on `p` with the solver RNG seeded from `seed`.
    pub fn run(&self, p: &Problem, seed: u64) -> Result<RunMetrics, engine::EngineError> {
        self.run_with(p, seed, RunOptions::default())
    }

    pub fn run_with(
        &self,
        p: &Problem,
        seed: u64,
        opts: RunOptions,
    ) -> Result<RunMetrics, engine::EngineError> {
        engine::run(self.solver().as_ref(), p, seed, opts)
    }
}

/// C-CoCoA plus HCMS at 100 and 500 rounds, all with `k` points.
pub fn default_algorithms(k: usize) -> Vec<Algorithm> {
    let cfg = SolverConfig {
        k,
        ..SolverConfig::default()
    };
    ["ccocoa", "hcms100", "hcms500"]
        .iter()
        .map(|name| Algorithm::parse(name, cfg.clone()).expect("known name"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub generator: GeneratorConfig,
    pub algorithms: Vec<Algorithm>,
    pub instances: usize,
    /// Instance `i` (1-based) is generated and solved with seed `base_seed + i`.
    pub base_seed: u64,
}

impl ExperimentSpec {
    pub fn new(generator: GeneratorConfig, algorithms: Vec<Algorithm>) -> Self {
        Self {
            generator,
            algorithms,
            instances: 50,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.generator.validate()?;
        if self.instances == 0 {
            return Err(BenchError::InvalidSpec("need at least one instance".into()));
        }
        if self.algorithms.is_empty() {
            return Err(BenchError::InvalidSpec(
                "need at least one algorithm".into(),
            ));
        }
        Ok(())
    }

    pub fn instance_seed(&self, instance: usize) -> u64 {
        self.base_seed.wrapping_add(instance as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub topology: Topology,
    pub n: usize,
    pub k: usize,
    pub algo: String,
    pub seed: u64,
    /// `Err` holds the failure message.
    pub outcome: Result<RunOutcome, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub cost: f64,
    pub messages: u64,
    pub hold_events: u64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub topology: Topology,
    pub n: usize,
    pub k: usize,
    pub algo: String,
    pub mean_cost: f64,
    pub mean_messages: f64,
    pub mean_hold_events: f64,
    pub mean_time_s: f64,
    pub succeeded: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    /// Ordered by instance, then by algorithm as listed in the spec.
    pub runs: Vec<RunRow>,
    /// One per algorithm, in spec order.
    pub aggregates: Vec<AggregateRow>,
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

impl ExperimentTable {
    pub fn aggregate(&self, algo: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.algo == algo)
    }

    /// Writes the header, every run row and then the aggregate rows. In an
    /// aggregate row `seed` reads `mean` and the numeric columns hold means
    /// over successful runs.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.runs {
            let (cost, messages, holds, time, status) = match &r.outcome {
                Ok(o) => (
                    num(o.cost),
                    o.messages.to_string(),
                    o.hold_events.to_string(),
                    num(o.time_s),
                    "ok".to_string(),
                ),
                Err(e) => (
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("error: {e}"),
                ),
            };
            w.write_record([
                r.topology.name().to_string(),
                r.n.to_string(),
                r.k.to_string(),
                r.algo.clone(),
                r.seed.to_string(),
                cost,
                messages,
                holds,
                time,
                status,
            ])?;
        }
        for a in &self.aggregates {
            w.write_record([
                a.topology.name().to_string(),
                a.n.to_string(),
                a.k.to_string(),
                a.algo.clone(),
                "mean".to_string(),
                num(a.mean_cost),
                num(a.mean_messages),
                num(a.mean_hold_events),
                num(a.mean_time_s),
                format!("aggregate runs={} excluded={}", a.succeeded, a.excluded),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, BenchError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable, BenchError> {
    run_experiment_with(spec, Execution::default())
}

/// Runs every algorithm on every instance. Instances are independent and may
/// run in parallel; each run is single-threaded and rows come back in
/// (instance, algorithm) order regardless of `mode`.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    mode: Execution,
) -> Result<ExperimentTable, BenchError> {
    spec.validate()?;
    let g = &spec.generator;
    let seeds: Vec<u64> = (1..=spec.instances)
        .map(|i| spec.instance_seed(i))
        .collect();
    let per_instance = exec::map(mode, seeds, |seed| -> Result<Vec<RunRow>, BenchError> {
        let p = g.generate(seed)?;
        Ok(spec
            .algorithms
            .iter()
            .map(|alg| RunRow {
                topology: g.topology,
                n: g.n,
                k: alg.config().k,
                algo: alg.label(),
                seed,
                outcome: alg
                    .run(&p, seed)
                    .map(|m| RunOutcome {
                        cost: m.cost,
                        messages: m.messages.total(),
                        hold_events: m.hold_events,
                        time_s: m.elapsed_secs(),
                    })
                    .map_err(|e| e.to_string()),
            })
            .collect())
    });
    let mut runs = Vec::with_capacity(spec.instances * spec.algorithms.len());
    for rows in per_instance {
        runs.extend(rows?);
    }

    let aggregates = spec
        .algorithms
        .iter()
        .enumerate()
        .map(|(idx, alg)| {
            let ok: Vec<RunOutcome> = runs
                .iter()
                .skip(idx)
                .step_by(spec.algorithms.len())
                .filter_map(|r| r.outcome.as_ref().ok().copied())
                .collect();
            let mean = |f: fn(&RunOutcome) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(f).sum::<f64>() / ok.len() as f64
                }
            };
            AggregateRow {
                topology: g.topology,
                n: g.n,
                k: alg.config().k,
                algo: alg.label(),
                mean_cost: mean(|o| o.cost),
                mean_messages: mean(|o| o.messages as f64),
                mean_hold_events: mean(|o| o.hold_events as f64),
                mean_time_s: mean(|o| o.time_s),
                succeeded: ok.len(),
                excluded: spec.instances - ok.len(),
            }
        })
        .collect();
    Ok(ExperimentTable { runs, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_tree(p: &Problem) -> bool {
        // Problem::new already guarantees connectivity
        p.edges().len() == p.num_agents() - 1
    }

    fn max_degree(p: &Problem) -> usize {
        p.agents().map(|i| p.degree(i)).max().unwrap()
    }

    #[test]
    fn erdos_renyi_edge_count_moments() {
        let trials = 200;
        let counts: Vec<f64> = (0..trials)
            .map(|s| {
                gen_erdos_renyi(50, 0.2, &mut SimRng::seed_from_u64(s))
                    .edges()
                    .len() as f64
            })
            .collect();
        let sigma = (1225.0f64 * 0.2 * 0.8).sqrt();
        assert!(
            counts.iter().all(|&c| (c - 245.0).abs() <= 4.0 * sigma),
            "{counts:?}"
        );
        let mean = counts.iter().sum::<f64>() / trials as f64;
        assert!(
            (mean - 245.0).abs() <= 4.0 * sigma / (trials as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn erdos_renyi_boundaries() {
        let mut rng = SimRng::seed_from_u64(3);
        assert_eq!(gen_erdos_renyi(10, 1.0, &mut rng).edges().len(), 45);
        for s in 0..20 {
            let p = gen_erdos_renyi(2, 0.01, &mut SimRng::seed_from_u64(s));
            assert_eq!(p.edges().len(), 1);
        }
        // sparse small graphs are usually disconnected before repair
        for s in 0..50 {
            gen_erdos_renyi(12, 0.05, &mut SimRng::seed_from_u64(s));
        }
    }

    #[test]
    fn generated_values_respect_ranges() {
        let p = gen_erdos_renyi(20, 0.3, &mut SimRng::seed_from_u64(9));
        for e in p.edges() {
            for v in [e.cost.a, e.cost.b, e.cost.c] {
                assert!((-5.0..=5.0).contains(&v));
            }
        }
        assert!(p
            .domains()
            .iter()
            .all(|d| d.lb() == -50.0 && d.ub() == 50.0));
    }

    #[test]
    fn trees_have_n_minus_one_edges() {
        for s in 0..50 {
            let p = gen_random_tree(50, &mut SimRng::seed_from_u64(s));
            assert_eq!(p.edges().len(), 49);
            assert!(is_tree(&p));
        }
        assert_eq!(
            gen_random_tree(2, &mut SimRng::seed_from_u64(0))
                .edges()
                .len(),
            1
        );
    }

    #[test]
    fn scale_free_edge_counts() {
        for attach in 1..=4usize {
            for s in 0..10 {
                let p = gen_scale_free(50, attach, &mut SimRng::seed_from_u64(s));
                let expected = attach * (50 - attach) + attach * (attach - 1) / 2;
                assert_eq!(p.edges().len(), expected, "attach {attach}");
            }
        }
        assert!(is_tree(&gen_scale_free(
            50,
            1,
            &mut SimRng::seed_from_u64(1)
        )));
    }

    #[test]
    fn scale_free_has_heavier_tail_than_erdos_renyi() {
        let n = 50;
        let edges = 2 * (n - 2) + 1;
        let p = edges as f64 / (n * (n - 1) / 2) as f64;
        let (mut sf, mut er) = (0usize, 0usize);
        for s in 0..50 {
            sf += max_degree(&gen_scale_free(n, 2, &mut SimRng::seed_from_u64(s)));
            er += max_degree(&gen_erdos_renyi(n, p, &mut SimRng::seed_from_u64(s)));
        }
        assert!(sf as f64 > 1.5 * er as f64, "scale-free {sf} vs ER {er}");
    }

    #[test]
    fn generation_is_seed_deterministic() {
        for t in Topology::ALL {
            let g = GeneratorConfig::preset(t, 12);
            assert_eq!(g.generate(5).unwrap(), g.generate(5).unwrap());
            assert_ne!(g.generate(5).unwrap(), g.generate(6).unwrap());
        }
    }

    #[test]
    fn invalid_generator_configs() {
        let mut g = GeneratorConfig::preset(Topology::SparseEr, 10);
        g.edge_prob = 0.0;
        assert!(g.validate().is_err());
        let mut g = GeneratorConfig::preset(Topology::ScaleFree, 3);
        g.attach = 3;
        assert!(g.validate().is_err());
        assert!(GeneratorConfig::preset(Topology::Tree, 1)
            .validate()
            .is_err());
    }

    #[test]
    fn parses_names() {
        assert_eq!("scale-free".parse::<Topology>(), Ok(Topology::ScaleFree));
        assert!("ring".parse::<Topology>().is_err());
        let cfg = SolverConfig::default();
        assert_eq!(
            Algorithm::parse("hcms", cfg.clone()).unwrap().label(),
            "hcms100"
        );
        assert_eq!(
            Algorithm::parse("hcms500", cfg.clone()).unwrap().label(),
            "hcms500"
        );
        assert!(Algorithm::parse("dpop", cfg).is_err());
    }

    fn small_spec(algorithms: Vec<Algorithm>, instances: usize) -> ExperimentSpec {
        ExperimentSpec {
            instances,
            base_seed: 100,
            ..ExperimentSpec::new(GeneratorConfig::preset(Topology::SparseEr, 8), algorithms)
        }
    }

    #[test]
    fn one_instance_one_algorithm() {
        let spec = small_spec(vec![Algorithm::CCoCoA(SolverConfig::default())], 1);
        let table = run_experiment(&spec).unwrap();
        assert_eq!(table.runs.len(), 1);
        assert_eq!(table.aggregates.len(), 1);
        assert_eq!(table.runs[0].seed, 101);
        let csv = table.to_csv_string().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER.join(","));
    }

    #[test]
    fn algorithms_share_instances() {
        let cfg = SolverConfig::default();
        let spec = small_spec(
            vec![
                Algorithm::CCoCoA(cfg.clone()),
                Algorithm::Hcms(cfg.clone(), HcmsConfig::default()),
            ],
            3,
        );
        let table = run_experiment(&spec).unwrap();
        for (idx, row) in table.runs.iter().enumerate() {
            let p = spec.generator.generate(row.seed).unwrap();
            let direct = spec.algorithms[idx % 2].run(&p, row.seed).unwrap();
            assert_eq!(row.outcome.as_ref().unwrap().cost, direct.cost);
        }
        let hcms = table.aggregate("hcms100").unwrap();
        assert_eq!(hcms.succeeded, 3);
    }

    #[test]
    fn failures_are_rows_not_errors() {
        let broken = SolverConfig {
            k: 0,
            ..SolverConfig::default()
        };
        let spec = small_spec(
            vec![
                Algorithm::CCoCoA(broken),
                Algorithm::CoCoA(SolverConfig::default()),
            ],
            2,
        );
        let table = run_experiment(&spec).unwrap();
        assert!(table.runs[0].outcome.is_err());
        let agg = table.aggregate("ccocoa").unwrap();
        assert_eq!((agg.succeeded, agg.excluded), (0, 2));
        assert!(agg.mean_cost.is_nan());
        assert_eq!(table.aggregate("cocoa").unwrap().excluded, 0);
        let csv = table.to_csv_string().unwrap();
        assert!(csv.contains("error: "));
        assert!(csv.contains("aggregate runs=0 excluded=2"));
    }

    #[test]
    fn sequential_and_parallel_tables_match() {
        let spec = small_spec(default_algorithms(3), 4);
        let strip = |t: ExperimentTable| {
            t.runs
                .into_iter()
                .map(|r| r.outcome.map(|o| (o.cost, o.messages, o.hold_events)))
                .collect::<Vec<_>>()
        };
        assert_eq!(
            strip(run_experiment_with(&spec, Execution::Sequential).unwrap()),
            strip(run_experiment_with(&spec, Execution::Parallel).unwrap())
        );
    }

    #[test]
    fn empty_specs_rejected() {
        assert!(run_experiment(&small_spec(vec![], 1)).is_err());
        assert!(run_experiment(&small_spec(default_algorithms(3), 0)).is_err());
    }
}
