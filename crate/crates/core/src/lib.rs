//! C-CoCoA for functional DCOPs.
//!
//! Agents own continuous variables joined by binary quadratic costs. The
//! solver elects values by a cooperative, non-iterative protocol over `k`
//! sampled points per domain, then refines each elected value by local
//! gradient descent before committing it.
//!
//! * [`model`]: problems, domains, costs and the text format.
//! * [`engine`]: a deterministic message-passing simulator with exact counts.
//! * [`ccocoa`]: the C-CoCoA protocol.
//! * [`baselines`]: discrete CoCoA and HCMS.
//! * [`oracle`]: exhaustive and closed-form references.
//! * [`bench`]: instance generators and the experiment runner.

pub mod baselines;
pub mod bench;
pub mod ccocoa;
pub mod engine;
pub mod exec;
pub mod model;
pub mod oracle;

pub use ccocoa::{solve, CCoCoA, FreezePolicy, SolverConfig};
pub use engine::{run, EngineError, RunMetrics, RunOptions};
pub use model::{AgentId, Assignment, Edge, Problem, QuadraticCost};
