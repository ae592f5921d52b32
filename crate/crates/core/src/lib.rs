//! Hyper-resolution consistency for distributed constraint satisfaction.
//!
//! Each variable is owned by an agent holding a knowledge base of nogoods.
//! Agents resolve their domain clause against their stored nogoods, send the
//! resolvents to the agents of the variables they mention, and stop when the
//! empty nogood appears (the instance is unsatisfiable) or when no new
//! nogood can be produced.
//!
//! Two knowledge-base policies are provided: [`Policy::Baseline`] keeps every
//! distinct nogood it receives, [`Policy::Ekbm`] drops resolvents that can
//! never be violated and removes stored nogoods subsumed by a new arrival.

pub mod gen;
pub mod io;
pub mod kb;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod resolver;
pub mod simnet;

pub use kb::{NogoodStore, Policy, Tail, UpdateOutcome, UpdateStatus};
pub use metrics::{compare_reports, emit_report, Comparison, ReportFormat, RunReport};
pub use model::{
    canonicalize, compile_neq_constraint, is_false_nogood, subsumes, validate_instance, CspInstance, Literal, Nogood,
    Value, VarId,
};
pub use oracle::{brute_force_solve, entails, OracleResult, SatStatus};
pub use resolver::{generate_full, generate_incremental, GenerationBatch};
pub use simnet::{related_agents, run_async, run_synchronous, Outcome, SimOutcome, Verdict};
