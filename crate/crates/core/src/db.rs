//! The live database: published root, commit section and commit log.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use crate::log::{now_micros, CommitRecord, LogWriter, TableRead};
use crate::relational::Schema;
use crate::store::{RootCell, SnapshotRoot};
use crate::txn::{Conflict, DeferredCheck, TxnError};
use crate::writeset::{apply_writes, TableWrites};

/// State guarded by the commit section.
pub struct CommitLog {
    /// Every record committed since the database was opened, in serial order.
    records: Vec<Arc<CommitRecord>>,
    base_epoch: u64,
    sink: Option<LogWriter>,
}

impl CommitLog {
    /// Records with serial greater than `start`.
    pub fn suffix(&self, start: u64) -> &[Arc<CommitRecord>] {
        let skip = start.saturating_sub(self.base_epoch) as usize;
        &self.records[skip.min(self.records.len())..]
    }
}

pub(crate) type Validator<'a> = &'a dyn Fn(&[Arc<CommitRecord>]) -> Result<(), Conflict>;

pub(crate) struct CommitRequest<'a> {
    pub txn: u64,
    /// Epoch the reads were taken at; `None` means "just before this commit".
    pub start: Option<u64>,
    pub writes: Vec<TableWrites>,
    pub reads: Vec<TableRead>,
    pub validator: Option<Validator<'a>>,
    pub deferred: &'a [DeferredCheck],
}

pub struct Database {
    cell: RootCell<CommitLog>,
    schema: Arc<Schema>,
    next_txn: AtomicU64,
    validation: AtomicBool,
}

impl Database {
    pub fn new(root: SnapshotRoot) -> Arc<Self> {
        Self::open(root, None)
    }

    /// Every commit is appended and flushed to `sink` before it is published.
    pub fn with_log(root: SnapshotRoot, sink: LogWriter) -> Arc<Self> {
        Self::open(root, Some(sink))
    }

    fn open(root: SnapshotRoot, sink: Option<LogWriter>) -> Arc<Self> {
        let schema = root.schema().clone();
        let log = CommitLog {
            records: Vec::new(),
            base_epoch: root.epoch,
            sink,
        };
        Arc::new(Database {
            cell: RootCell::new(root, log),
            schema,
            next_txn: AtomicU64::new(1),
            validation: AtomicBool::new(true),
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn load(&self) -> Arc<SnapshotRoot> {
        self.cell.load()
    }

    pub fn epoch(&self) -> u64 {
        self.cell.epoch()
    }

    pub fn next_txn_id(&self) -> u64 {
        self.next_txn.fetch_add(1, Ordering::Relaxed)
    }

    /// Test hook: with validation off, optimistic commits skip conflict checks
    /// and plain snapshot isolation results.
    pub fn set_validation(&self, enabled: bool) {
        self.validation.store(enabled, Ordering::SeqCst);
    }

    /// Copies of every record committed through this handle.
    pub fn records(&self) -> Vec<Arc<CommitRecord>> {
        let mut g = self.cell.enter();
        g.state().records.clone()
    }

    /// The commit section: apply, deferred checks, validation, log, publish.
    pub(crate) fn commit(&self, req: CommitRequest<'_>) -> Result<u64, TxnError> {
        let mut g = self.cell.enter();
        let current = g.current();
        let serial = current.epoch + 1;
        let start = req.start.unwrap_or(current.epoch);
        let mut tables = current.tables.clone();
        let applied = apply_writes(&mut tables, &req.writes, serial);
        let deferred = match applied {
            Ok(()) => req.deferred.iter().try_for_each(|d| d.run(&tables)),
            Err(_) => Ok(()),
        };
        if let Some(validate) = req.validator {
            if self.validation.load(Ordering::SeqCst) {
                validate(g.state().suffix(start)).map_err(TxnError::Conflict)?;
            }
        }
        applied?;
        deferred?;
        let record = CommitRecord {
            serial,
            txn: req.txn,
            start,
            writes: req.writes,
            reads: req.reads,
            ts: now_micros(),
        };
        if let Some(sink) = g.state().sink.as_mut() {
            sink.append(&record.to_log(&self.schema))
                .map_err(|e| TxnError::Io(e.to_string()))?;
        }
        g.state().records.push(Arc::new(record));
        g.publish(SnapshotRoot { epoch: serial, tables })
            .expect("commit section owns the epoch sequence");
        Ok(serial)
    }
}
