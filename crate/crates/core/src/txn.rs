//! The session interface shared by both engines.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::relational::{ColumnId, KeyRange, RelError, Row, TableId, Tables};
use crate::value::{Key, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConflictKind {
    WriteWrite,
    ReadWrite,
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictKind::WriteWrite => "ww",
            ConflictKind::ReadWrite => "rw",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub table: String,
    /// Serial of the committed transaction that won.
    pub serial: u64,
    pub detail: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxnError {
    #[error("{} conflict on {} with serial {}: {}", .0.kind, .0.table, .0.serial, .0.detail)]
    Conflict(Conflict),
    #[error("deadlock victim")]
    Deadlock,
    #[error(transparent)]
    Constraint(#[from] RelError),
    #[error("deferred check {name} failed: {detail}")]
    DeferredCheck { name: String, detail: String },
    #[error("transaction is no longer active")]
    Inactive,
    #[error("{0}")]
    Usage(String),
    #[error("log write failed: {0}")]
    Io(String),
}

impl TxnError {
    pub fn is_conflict(&self) -> bool {
        matches!(self, TxnError::Conflict(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitOutcome {
    /// Published as this serial.
    Written { serial: u64 },
    /// Nothing to write; no serial consumed. Carries the epoch the reads saw.
    ReadOnly { epoch: u64 },
}

impl CommitOutcome {
    pub fn serial(self) -> Option<u64> {
        match self {
            CommitOutcome::Written { serial } => Some(serial),
            CommitOutcome::ReadOnly { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScanHint {
    /// Track the columns read across the whole table.
    #[default]
    Columns,
    /// Unique selection is known to be impossible; any write to the table conflicts.
    Block,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ScanOpts {
    pub hint: ScanHint,
    pub limit: Option<usize>,
}

impl ScanOpts {
    pub fn block() -> Self {
        ScanOpts {
            hint: ScanHint::Block,
            limit: None,
        }
    }

    pub fn first(n: usize) -> Self {
        ScanOpts {
            hint: ScanHint::Columns,
            limit: Some(n),
        }
    }
}

type Predicate = dyn Fn(&Tables) -> Result<(), String> + Send + Sync;

/// A predicate evaluated once at commit against the state the commit would publish.
#[derive(Clone)]
pub struct DeferredCheck {
    pub name: String,
    check: Arc<Predicate>,
}

impl DeferredCheck {
    pub fn new(name: &str, check: impl Fn(&Tables) -> Result<(), String> + Send + Sync + 'static) -> Self {
        DeferredCheck {
            name: name.to_string(),
            check: Arc::new(check),
        }
    }

    pub fn run(&self, tables: &Tables) -> Result<(), TxnError> {
        (self.check)(tables).map_err(|detail| TxnError::DeferredCheck {
            name: self.name.clone(),
            detail,
        })
    }
}

impl fmt::Debug for DeferredCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("DeferredCheck").field(&self.name).finish()
    }
}

/// One transaction on either engine. Statement errors leave the transaction
/// active; `commit` and `rollback` end it whatever the outcome.
pub trait Transaction: Send {
    fn id(&self) -> u64;

    fn get(&mut self, table: TableId, pk: &Key, cols: &[ColumnId]) -> Result<Option<Arc<Row>>, TxnError>;

    /// Exact-match read through the primary key or a declared unique key.
    fn lookup_unique(
        &mut self,
        table: TableId,
        key_cols: &[ColumnId],
        key: &Key,
        cols: &[ColumnId],
    ) -> Result<Option<(Key, Arc<Row>)>, TxnError>;

    fn scan(
        &mut self,
        table: TableId,
        range: &KeyRange,
        cols: &[ColumnId],
        opts: ScanOpts,
    ) -> Result<Vec<(Key, Arc<Row>)>, TxnError>;

    fn insert(&mut self, table: TableId, values: Vec<Value>) -> Result<Key, TxnError>;

    fn update(&mut self, table: TableId, pk: &Key, changes: &[(ColumnId, Value)]) -> Result<(), TxnError>;

    /// Deletes the row and, following foreign key actions, its dependents.
    fn delete(&mut self, table: TableId, pk: &Key) -> Result<(), TxnError>;

    fn defer_check(&mut self, check: DeferredCheck) -> Result<(), TxnError>;

    fn commit(&mut self) -> Result<CommitOutcome, TxnError>;

    fn rollback(&mut self) -> Result<(), TxnError>;
}

pub trait Engine: Send + Sync {
    fn name(&self) -> &'static str;

    fn begin(&self) -> Box<dyn Transaction>;
}
