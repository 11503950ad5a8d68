//! A TPC-C style order-entry workload with many clerks per warehouse.
//!
//! [`population`] builds the initial database, [`tasks`] holds the five clerk
//! transactions and [`bench`] drives clerk threads against either engine.

pub mod audit;
pub mod bench;
pub mod population;
pub mod report;
pub mod schema;
pub mod tasks;

pub use audit::audit;
pub use bench::{run_benchmark, EngineKind, Metrics, RunOutput, TpccConfig};
pub use population::{generate, Scale};
