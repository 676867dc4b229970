//! Independent references for checking solvers: exhaustive grid search, the
//! closed-form minimum of a convex quadratic instance, and central
//! finite-difference gradient checks.

use thiserror::Error;

use crate::exec::{self, Execution};
use crate::model::{AgentId, Assignment, BinaryCost, IntervalDomain, Problem, QuadraticCost};

pub const DEFAULT_GRID_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("joint grid has {size} points, above the cap of {cap}")]
    CapExceeded { size: u128, cap: u64 },
    #[error("need one candidate list per agent ({expected}), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("agent {0} has no candidate values")]
    EmptyAxis(AgentId),
}

/// Uniform grid over every domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points_per_variable: usize,
    /// Include both interval endpoints; otherwise use cell midpoints.
    pub inclusive: bool,
    pub cap: u64,
}

impl GridSpec {
    pub fn new(points_per_variable: usize) -> Self {
        Self {
            points_per_variable,
            inclusive: true,
            cap: DEFAULT_GRID_CAP,
        }
    }

    pub fn axis(&self, d: &IntervalDomain) -> Vec<f64> {
        let m = self.points_per_variable;
        let (lb, w) = (d.lb(), d.ub() - d.lb());
        match (m, self.inclusive) {
            (0, _) => Vec::new(),
            (1, _) => vec![lb + 0.5 * w],
            (_, true) => (0..m).map(|t| lb + w * t as f64 / (m - 1) as f64).collect(),
            (_, false) => (0..m)
                .map(|t| lb + w * (t as f64 + 0.5) / m as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub assignment: Vec<f64>,
    pub cost: f64,
    /// Candidate index chosen for every agent.
    pub index: Vec<usize>,
}

pub fn grid_search(p: &Problem, g: &GridSpec) -> Result<SearchResult, OracleError> {
    grid_search_with(p, g, Execution::default())
}

pub fn grid_search_with(
    p: &Problem,
    g: &GridSpec,
    mode: Execution,
) -> Result<SearchResult, OracleError> {
    let axes: Vec<Vec<f64>> = p.domains().iter().map(|d| g.axis(d)).collect();
    discrete_search_with(p, &axes, g.cap, mode)
}

/// Exact minimiser of the global cost over the product of per-agent
/// candidate lists. Ties go to the lexicographically smallest index vector.
pub fn discrete_search(
    p: &Problem,
    candidates: &[Vec<f64>],
    cap: u64,
) -> Result<SearchResult, OracleError> {
    discrete_search_with(p, candidates, cap, Execution::default())
}

pub fn discrete_search_with(
    p: &Problem,
    candidates: &[Vec<f64>],
    cap: u64,
    mode: Execution,
) -> Result<SearchResult, OracleError> {
    let n = p.num_agents();
    if candidates.len() != n {
        return Err(OracleError::Arity {
            expected: n,
            got: candidates.len(),
        });
    }
    if let Some(i) = candidates.iter().position(Vec::is_empty) {
        return Err(OracleError::EmptyAxis(i));
    }
    let size = candidates
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128));
    let size = match size {
        Some(s) if s <= cap as u128 => s as u64,
        Some(s) => return Err(OracleError::CapExceeded { size: s, cap }),
        None => {
            return Err(OracleError::CapExceeded {
                size: u128::MAX,
                cap,
            })
        }
    };

    let chunk = size.div_ceil(256).max(1);
    let ranges: Vec<(u64, u64)> = (0..size)
        .step_by(chunk as usize)
        .map(|start| (start, (start + chunk).min(size)))
        .collect();
    let best = exec::map(mode, ranges, |(start, end)| scan(p, candidates, start, end))
        .into_iter()
        .fold(None::<(f64, u64)>, |acc, cur| match acc {
            Some(a) if a.0 <= cur.0 => Some(a),
            _ => Some(cur),
        })
        .expect("grid is non-empty");

    let index = decode(candidates, best.1);
    let assignment = index.iter().zip(candidates).map(|(&t, c)| c[t]).collect();
    Ok(SearchResult {
        assignment,
        cost: best.0,
        index,
    })
}

// variable 0 is the most significant digit, so linear order is lexicographic
fn decode(candidates: &[Vec<f64>], mut linear: u64) -> Vec<usize> {
    let mut index = vec![0; candidates.len()];
    for (slot, c) in index.iter_mut().zip(candidates).rev() {
        let len = c.len() as u64;
        *slot = (linear % len) as usize;
        linear /= len;
    }
    index
}

fn scan(p: &Problem, candidates: &[Vec<f64>], start: u64, end: u64) -> (f64, u64) {
    let mut index = decode(candidates, start);
    let mut values: Vec<f64> = index.iter().zip(candidates).map(|(&t, c)| c[t]).collect();
    let mut best = (f64::INFINITY, start);
    for linear in start..end {
        let cost = p.global_cost_dense(&values);
        if cost < best.0 {
            best = (cost, linear);
        }
        for var in (0..index.len()).rev() {
            index[var] += 1;
            if index[var] < candidates[var].len() {
                values[var] = candidates[var][index[var]];
                break;
            }
            index[var] = 0;
            values[var] = candidates[var][0];
        }
    }
    best
}

/// Hessian of the global objective: `2a` or `2c` on the diagonal per incident
/// edge, `b` off the diagonal.
pub fn hessian(p: &Problem) -> Vec<Vec<f64>> {
    let n = p.num_agents();
    let mut h = vec![vec![0.0; n]; n];
    for e in p.edges() {
        let QuadraticCost { a, b, c } = e.cost;
        h[e.first][e.first] += 2.0 * a;
        h[e.second][e.second] += 2.0 * c;
        h[e.first][e.second] += b;
        h[e.second][e.first] += b;
    }
    h
}

/// Lower-triangular Cholesky factor, or `None` unless `a` is positive definite.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d.is_nan() || d <= 0.0 {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                let (top, rest) = m.split_at_mut(row);
                for (dst, src) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                    *dst -= f * src;
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    Some(x)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadraticMin {
    Minimum {
        assignment: Vec<f64>,
        cost: f64,
        /// Whether the unconstrained minimiser lies inside every domain.
        feasible: bool,
    },
    /// The Hessian is not positive definite.
    Indefinite,
}

/// Unconstrained global minimum of a problem built from quadratic edges.
pub fn quadratic_global_min(p: &Problem) -> QuadraticMin {
    let h = hessian(p);
    if cholesky(&h).is_none() {
        return QuadraticMin::Indefinite;
    }
    // no linear terms: the stationarity system is H x = 0
    let rhs = vec![0.0; p.num_agents()];
    let Some(mut x) = solve_linear(&h, &rhs) else {
        return QuadraticMin::Indefinite;
    };
    // normalise -0.0
    x.iter_mut().for_each(|v| *v += 0.0);
    let feasible = x.iter().enumerate().all(|(i, &v)| p.domain(i).contains(v));
    QuadraticMin::Minimum {
        cost: p.global_cost_dense(&x),
        assignment: x,
        feasible,
    }
}

/// Largest deviation between `grad` and central differences of `f` at
/// `point`: relative for partials of magnitude above 1, absolute otherwise.
pub fn finite_diff_check<F, G>(f: F, grad: G, point: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    assert!(h > 0.0, "step must be positive");
    let analytic = grad(point);
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..point.len() {
        x[k] = point[k] + h;
        let up = f(&x);
        x[k] = point[k] - h;
        let down = f(&x);
        x[k] = point[k];
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs()).max(1.0);
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    worst
}

pub fn edge_gradient_check(cost: &QuadraticCost, x: f64, y: f64, h: f64) -> f64 {
    finite_diff_check(
        |v| cost.evaluate(v[0], v[1]),
        |v| {
            let (gx, gy) = cost.gradient(v[0], v[1]);
            vec![gx, gy]
        },
        &[x, y],
        h,
    )
}

/// Checks the analytic gradient of `agent`'s local objective at `point`
/// (a dense vector over all agents).
pub fn local_objective_check(p: &Problem, agent: AgentId, point: &[f64], h: f64) -> f64 {
    let vars: Vec<AgentId> = std::iter::once(agent).chain(p.neighbors(agent)).collect();
    let embed = |local: &[f64]| {
        let mut full = point.to_vec();
        for (&v, &x) in vars.iter().zip(local) {
            full[v] = x;
        }
        Assignment::from_values(&full)
    };
    let start: Vec<f64> = vars.iter().map(|&v| point[v]).collect();
    finite_diff_check(
        |local| {
            p.local_objective(agent, &embed(local))
                .expect("complete point")
                .value
        },
        |local| {
            let lo = p
                .local_objective(agent, &embed(local))
                .expect("complete point");
            vars.iter().map(|v| lo.gradient[v]).collect()
        },
        &start,
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{worked_example, Edge};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, seed: u64) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeff = || rng.random_range(-5.0..=5.0);
        let mut edges: Vec<Edge> = (1..n)
            .map(|j| Edge::new(j - 1, j, QuadraticCost::new(coeff(), coeff(), coeff())))
            .collect();
        if n > 2 {
            edges.push(Edge::new(
                0,
                n - 1,
                QuadraticCost::new(coeff(), coeff(), coeff()),
            ));
        }
        Problem::new(vec![(-3.0, 3.0); n], edges).unwrap()
    }

    #[test]
    fn worked_example_grid_hits_origin() {
        let r = grid_search(&worked_example(), &GridSpec::new(41)).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.assignment, vec![0.0; 4]);
        assert_eq!(r.index, vec![20; 4]);
    }

    #[test]
    fn separable_squares_grid() {
        let p = Problem::new(
            vec![(-1.0, 1.0); 2],
            vec![Edge::new(0, 1, QuadraticCost::new(1.0, 0.0, 1.0))],
        )
        .unwrap();
        let r = grid_search(&p, &GridSpec::new(11)).unwrap();
        assert_eq!(r.assignment, vec![0.0, 0.0]);
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn one_point_grid() {
        let p = Problem::new(
            vec![(0.0, 2.0), (-4.0, 0.0)],
            vec![Edge::new(0, 1, QuadraticCost::new(1.0, 1.0, 1.0))],
        )
        .unwrap();
        let r = grid_search(&p, &GridSpec::new(1)).unwrap();
        assert_eq!(r.assignment, vec![1.0, -2.0]);
        assert_eq!(r.cost, 1.0 - 2.0 + 4.0);
    }

    #[test]
    fn grid_cap_is_enforced() {
        let g = GridSpec {
            cap: 1000,
            ..GridSpec::new(41)
        };
        assert_eq!(
            grid_search(&worked_example(), &g),
            Err(OracleError::CapExceeded {
                size: 41u128.pow(4),
                cap: 1000
            })
        );
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let zero = QuadraticCost::new(0.0, 0.0, 0.0);
        let p = Problem::new(
            vec![(-1.0, 1.0); 3],
            vec![Edge::new(0, 1, zero), Edge::new(1, 2, zero)],
        )
        .unwrap();
        let r = grid_search(&p, &GridSpec::new(5)).unwrap();
        assert_eq!(r.index, vec![0, 0, 0]);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        for seed in 0..5 {
            let p = random_problem(4, seed);
            let g = GridSpec::new(9);
            assert_eq!(
                grid_search_with(&p, &g, Execution::Sequential).unwrap(),
                grid_search_with(&p, &g, Execution::Parallel).unwrap()
            );
        }
    }

    #[test]
    fn nested_grids_never_get_worse() {
        for seed in 0..10 {
            let p = random_problem(4, seed);
            let costs: Vec<f64> = [3, 5, 9, 17]
                .iter()
                .map(|&m| grid_search(&p, &GridSpec::new(m)).unwrap().cost)
                .collect();
            assert!(costs.windows(2).all(|w| w[1] <= w[0]), "{costs:?}");
        }
    }

    #[test]
    fn worked_example_hessian_and_minimum() {
        let p = worked_example();
        assert_eq!(
            hessian(&p),
            vec![
                vec![2.0, -2.0, 1.0, 1.0],
                vec![-2.0, 6.0, -1.0, 0.0],
                vec![1.0, -1.0, 10.0, 0.0],
                vec![1.0, 0.0, 0.0, 2.0],
            ]
        );
        assert_eq!(
            quadratic_global_min(&p),
            QuadraticMin::Minimum {
                assignment: vec![0.0; 4],
                cost: 0.0,
                feasible: true
            }
        );
    }

    #[test]
    fn negative_diagonal_is_indefinite() {
        let p = Problem::new(
            vec![(-1.0, 1.0); 2],
            vec![Edge::new(0, 1, QuadraticCost::new(-5.0, 1.0, 1.0))],
        )
        .unwrap();
        assert_eq!(quadratic_global_min(&p), QuadraticMin::Indefinite);
        // singular: x^2 + 2xy + y^2 = (x + y)^2
        let p = Problem::new(
            vec![(-1.0, 1.0); 2],
            vec![Edge::new(0, 1, QuadraticCost::new(1.0, 2.0, 1.0))],
        )
        .unwrap();
        assert_eq!(quadratic_global_min(&p), QuadraticMin::Indefinite);
    }

    #[test]
    fn linear_solver() {
        let a = vec![
            vec![0.0, 2.0, 1.0],
            vec![1.0, -1.0, 0.0],
            vec![3.0, 0.0, 4.0],
        ];
        let x = solve_linear(&a, &[6.0, -1.0, 11.0]).unwrap();
        for (got, want) in x.iter().zip([1.0, 2.0, 2.0]) {
            assert!((got - want).abs() < 1e-12, "{x:?}");
        }
        assert!(solve_linear(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn gradient_checks() {
        assert_eq!(
            finite_diff_check(|_| 0.0, |p| vec![0.0; p.len()], &[1.0, -2.0, 3.0], 1e-5),
            0.0
        );
        let p = worked_example();
        assert!(local_objective_check(&p, 0, &[1.0, 3.0, 7.0, 5.0], 1e-5) < 1e-6);
        // a wrong gradient is caught
        let err = finite_diff_check(|x| x[0] * x[0], |x| vec![3.0 * x[0]], &[2.0], 1e-5);
        assert!(err > 0.1);
    }

    proptest! {
        #[test]
        fn edge_gradients_match_central_differences(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
            x in -5.0f64..5.0, y in -5.0f64..5.0,
        ) {
            prop_assert!(edge_gradient_check(&QuadraticCost::new(a, b, c), x, y, 1e-5) < 1e-6);
        }

        #[test]
        fn grid_never_beats_convex_minimum(seed in 0u64..500) {
            let p = random_problem(3, seed);
            if let QuadraticMin::Minimum { cost, .. } = quadratic_global_min(&p) {
                let g = grid_search(&p, &GridSpec::new(15)).unwrap();
                prop_assert!(g.cost >= cost - 1e-9);
            }
        }
    }
}
