//! An embedded transactional engine over immutable snapshots.
//!
//! Optimistic transactions ([`occ`]) read a published [`store::SnapshotRoot`]
//! and are validated first-committer-wins inside one commit section. A strict
//! two-phase locking engine ([`twopl`]) shares the same interface and log.
//! [`oracle`] checks commit logs for conflict serializability.

pub mod db;
pub mod log;
pub mod occ;
pub mod oracle;
pub mod pmap;
pub mod relational;
pub mod store;
pub mod twopl;
pub mod txn;
pub mod value;
pub mod writeset;

pub use db::Database;
pub use pmap::PersistentMap;
pub use relational::{ColumnId, KeyRange, Row, Schema, TableId, TableSpec, Tables};
pub use store::SnapshotRoot;
pub use txn::{CommitOutcome, Engine, ScanOpts, Transaction, TxnError};
pub use value::{Decimal, Key, Value, ValueKind};
