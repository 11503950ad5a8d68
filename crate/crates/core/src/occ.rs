//! Optimistic transactions validated first-committer-wins at commit.
//!
//! Reads go to the snapshot taken at begin, overlaid with the transaction's
//! own writes. What was read is summarized per table as a [`ReadConstraint`];
//! at commit the constraint and the write set are checked against every
//! record committed after the snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::db::{CommitRequest, Database};
use crate::log::{CommitRecord, ReadMode, RowRead, TableRead};
use crate::relational::{ColumnId, DeleteMode, KeyRange, Row, Schema, TableId, Tables, PENDING_WRITER};
use crate::store::SnapshotRoot;
use crate::txn::{CommitOutcome, Conflict, ConflictKind, DeferredCheck, Engine, ScanHint, ScanOpts, Transaction, TxnError};
use crate::value::{Key, Value};
use crate::writeset::{TableWrites, WriteSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecificRead {
    pub cols: BTreeSet<ColumnId>,
    pub ver: u64,
}

/// What one transaction read from one table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReadConstraint {
    /// Rows selected by unique key values, with the columns read from each.
    Specific {
        rows: BTreeMap<Key, SpecificRead>,
        keycols: BTreeSet<ColumnId>,
    },
    /// Columns read anywhere in the table.
    ColumnSet(BTreeSet<ColumnId>),
    /// Any write to the table conflicts.
    Block,
}

impl ReadConstraint {
    pub fn mode(&self) -> ReadMode {
        match self {
            ReadConstraint::Specific { .. } => ReadMode::Specific,
            ReadConstraint::ColumnSet(_) => ReadMode::Columns,
            ReadConstraint::Block => ReadMode::Block,
        }
    }

    fn note_row(&mut self, pk: Key, cols: &[ColumnId], ver: u64, keycols: &[ColumnId]) {
        match self {
            ReadConstraint::Specific { rows, keycols: kc } => {
                let e = rows.entry(pk).or_insert_with(|| SpecificRead {
                    cols: BTreeSet::new(),
                    ver,
                });
                e.cols.extend(cols);
                kc.extend(keycols);
            }
            ReadConstraint::ColumnSet(set) => {
                set.extend(cols);
                set.extend(keycols);
            }
            ReadConstraint::Block => {}
        }
    }

    fn escalate_columns(&mut self, cols: &[ColumnId]) {
        match self {
            ReadConstraint::Specific { rows, keycols } => {
                let mut set: BTreeSet<ColumnId> = cols.iter().copied().collect();
                set.extend(keycols.iter());
                for r in rows.values() {
                    set.extend(r.cols.iter());
                }
                *self = ReadConstraint::ColumnSet(set);
            }
            ReadConstraint::ColumnSet(set) => set.extend(cols),
            ReadConstraint::Block => {}
        }
    }

    fn to_read(&self, table: TableId) -> TableRead {
        let (rows, cols, keycols) = match self {
            ReadConstraint::Specific { rows, keycols } => (
                rows.iter()
                    .map(|(pk, r)| RowRead {
                        pk: pk.clone(),
                        cols: r.cols.iter().copied().collect(),
                        ver: r.ver,
                    })
                    .collect(),
                Vec::new(),
                keycols.iter().copied().collect(),
            ),
            ReadConstraint::ColumnSet(set) => (Vec::new(), set.iter().copied().collect(), Vec::new()),
            ReadConstraint::Block => (Vec::new(), Vec::new(), Vec::new()),
        };
        TableRead {
            table,
            mode: self.mode(),
            rows,
            cols,
            keycols,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReadSet {
    tables: BTreeMap<TableId, ReadConstraint>,
}

impl ReadSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, table: TableId) -> Option<&ReadConstraint> {
        self.tables.get(&table)
    }

    fn entry(&mut self, table: TableId) -> &mut ReadConstraint {
        self.tables.entry(table).or_insert_with(|| ReadConstraint::Specific {
            rows: BTreeMap::new(),
            keycols: BTreeSet::new(),
        })
    }

    pub fn note_row(&mut self, table: TableId, pk: Key, cols: &[ColumnId], ver: u64, keycols: &[ColumnId]) {
        self.entry(table).note_row(pk, cols, ver, keycols);
    }

    pub fn escalate_columns(&mut self, table: TableId, cols: &[ColumnId]) {
        self.entry(table).escalate_columns(cols);
    }

    pub fn escalate_block(&mut self, table: TableId) {
        *self.entry(table) = ReadConstraint::Block;
    }

    pub fn to_reads(&self) -> Vec<TableRead> {
        self.tables.iter().map(|(&t, c)| c.to_read(t)).collect()
    }
}

fn intersects(a: impl IntoIterator<Item = ColumnId>, b: &BTreeSet<ColumnId>) -> bool {
    a.into_iter().any(|c| b.contains(&c))
}

fn read_conflict(c: &ReadConstraint, w: &TableWrites) -> Option<String> {
    match c {
        ReadConstraint::Block => (!w.is_empty()).then(|| "table written".to_string()),
        ReadConstraint::ColumnSet(set) => {
            if let Some(k) = w.ins.first().map(|(k, _)| k).or(w.del.first()) {
                return Some(format!("row {k} inserted or deleted"));
            }
            w.upd
                .iter()
                .find(|u| intersects(u.cols(), set))
                .map(|u| format!("row {} updated on a column read", u.pk))
        }
        ReadConstraint::Specific { rows, keycols } => {
            if let Some(k) = w.ins.first().map(|(k, _)| k).or(w.del.first()) {
                return Some(format!("row {k} inserted or deleted"));
            }
            w.upd.iter().find_map(|u| {
                if intersects(u.cols(), keycols) {
                    Some(format!("row {} updated on a key column", u.pk))
                } else if rows.get(&u.pk).is_some_and(|r| intersects(u.cols(), &r.cols)) {
                    Some(format!("row {} updated on a column read", u.pk))
                } else {
                    None
                }
            })
        }
    }
}

/// First-committer-wins decision against the records committed after the
/// transaction's snapshot.
pub fn validate(
    reads: &ReadSet,
    writes: &[TableWrites],
    suffix: &[Arc<CommitRecord>],
    schema: &Schema,
) -> Result<(), Conflict> {
    let mine: BTreeMap<TableId, BTreeSet<&Key>> = writes.iter().map(|w| (w.table, w.touched().collect())).collect();
    for rec in suffix {
        for w in &rec.writes {
            if let Some(own) = mine.get(&w.table) {
                if let Some(k) = w.touched().find(|k| own.contains(k)) {
                    return Err(Conflict {
                        kind: ConflictKind::WriteWrite,
                        table: schema.table(w.table).name.clone(),
                        serial: rec.serial,
                        detail: format!("row {k} written by both"),
                    });
                }
            }
        }
        for w in &rec.writes {
            if let Some(detail) = reads.get(w.table).and_then(|c| read_conflict(c, w)) {
                return Err(Conflict {
                    kind: ConflictKind::ReadWrite,
                    table: schema.table(w.table).name.clone(),
                    serial: rec.serial,
                    detail,
                });
            }
        }
    }
    Ok(())
}

pub struct OccEngine {
    db: Arc<Database>,
}

impl OccEngine {
    pub fn new(db: Arc<Database>) -> Self {
        OccEngine { db }
    }

    pub fn db(&self) -> &Arc<Database> {
        &self.db
    }

    pub fn begin_occ(&self) -> OccTxn {
        OccTxn::begin(self.db.clone())
    }
}

impl Engine for OccEngine {
    fn name(&self) -> &'static str {
        "occ"
    }

    fn begin(&self) -> Box<dyn Transaction> {
        Box::new(self.begin_occ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Active,
    Committed(CommitOutcome),
    Aborted,
}

pub struct OccTxn {
    db: Arc<Database>,
    id: u64,
    snapshot: Arc<SnapshotRoot>,
    /// Snapshot with this transaction's writes applied.
    working: Tables,
    reads: ReadSet,
    writes: WriteSet,
    deferred: Vec<DeferredCheck>,
    status: Status,
}

impl OccTxn {
    pub fn begin(db: Arc<Database>) -> Self {
        let snapshot = db.load();
        OccTxn {
            id: db.next_txn_id(),
            working: snapshot.tables.clone(),
            snapshot,
            db,
            reads: ReadSet::new(),
            writes: WriteSet::new(),
            deferred: Vec::new(),
            status: Status::Active,
        }
    }

    pub fn start_epoch(&self) -> u64 {
        self.snapshot.epoch
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn reads(&self) -> &ReadSet {
        &self.reads
    }

    pub fn writes(&self) -> &WriteSet {
        &self.writes
    }

    fn active(&self) -> Result<(), TxnError> {
        match self.status {
            Status::Active => Ok(()),
            _ => Err(TxnError::Inactive),
        }
    }

    fn snapshot_version(&self, table: TableId, pk: &Key) -> u64 {
        self.snapshot.tables.get(table, pk).map_or(0, |r| r.writer)
    }
}

impl Transaction for OccTxn {
    fn id(&self) -> u64 {
        self.id
    }

    fn get(&mut self, table: TableId, pk: &Key, cols: &[ColumnId]) -> Result<Option<Arc<Row>>, TxnError> {
        let pk_cols = self.db.schema().table(table).primary_key.clone();
        Ok(self.lookup_unique(table, &pk_cols, pk, cols)?.map(|(_, r)| r))
    }

    fn lookup_unique(
        &mut self,
        table: TableId,
        key_cols: &[ColumnId],
        key: &Key,
        cols: &[ColumnId],
    ) -> Result<Option<(Key, Arc<Row>)>, TxnError> {
        self.active()?;
        let found = self
            .working
            .lookup_unique(table, key_cols, key)
            .map_err(|e| TxnError::Usage(e.to_string()))?;
        let cols = if cols.is_empty() { key_cols } else { cols };
        let is_pk = key_cols == self.db.schema().table(table).primary_key.as_slice();
        match &found {
            Some((pk, _)) => {
                let ver = self.snapshot_version(table, pk);
                self.reads.note_row(table, pk.clone(), cols, ver, key_cols);
            }
            None if is_pk => {
                let ver = self.snapshot_version(table, key);
                self.reads.note_row(table, key.clone(), cols, ver, key_cols);
            }
            // Absence under a secondary key names no row to track.
            None => {
                let mut all = key_cols.to_vec();
                all.extend_from_slice(cols);
                self.reads.escalate_columns(table, &all);
            }
        }
        Ok(found)
    }

    fn scan(
        &mut self,
        table: TableId,
        range: &KeyRange,
        cols: &[ColumnId],
        opts: ScanOpts,
    ) -> Result<Vec<(Key, Arc<Row>)>, TxnError> {
        self.active()?;
        let iter = self.working.range(table, range)?;
        let rows: Vec<_> = iter
            .take(opts.limit.unwrap_or(usize::MAX))
            .map(|(k, r)| (k.clone(), r.clone()))
            .collect();
        match opts.hint {
            ScanHint::Block => self.reads.escalate_block(table),
            ScanHint::Columns => self.reads.escalate_columns(table, cols),
        }
        Ok(rows)
    }

    fn insert(&mut self, table: TableId, values: Vec<Value>) -> Result<Key, TxnError> {
        self.active()?;
        let pk = self.working.insert(table, values.clone(), PENDING_WRITER)?;
        let pk_cols = &self.db.schema().table(table).primary_key;
        self.writes.insert(table, pk.clone(), values, pk_cols);
        Ok(pk)
    }

    fn update(&mut self, table: TableId, pk: &Key, changes: &[(ColumnId, Value)]) -> Result<(), TxnError> {
        self.active()?;
        let schema = self.db.schema().clone();
        let def = schema.table(table);
        if !changes.iter().any(|(c, _)| def.is_pk_column(*c)) {
            self.working.update(table, pk, changes, PENDING_WRITER)?;
            self.writes.update(table, pk, changes);
            return Ok(());
        }
        // A key change is a delete of the old row plus an insert of the new one.
        let old = self.working.get(table, pk).cloned().ok_or_else(|| crate::relational::RelError::NotFound {
            table: def.name.clone(),
            key: pk.clone(),
        })?;
        let mut values = old.values().to_vec();
        for (c, v) in changes {
            values[*c] = v.clone();
        }
        let mut next = self.working.clone();
        next.delete(table, pk, DeleteMode::Restrict)?;
        let new_pk = next.insert(table, values.clone(), PENDING_WRITER)?;
        self.working = next;
        self.writes.delete(table, pk);
        self.writes.insert(table, new_pk, values, &def.primary_key);
        Ok(())
    }

    fn delete(&mut self, table: TableId, pk: &Key) -> Result<(), TxnError> {
        self.active()?;
        for (t, k) in self.working.delete(table, pk, DeleteMode::FollowActions)? {
            self.writes.delete(t, &k);
        }
        Ok(())
    }

    fn defer_check(&mut self, check: DeferredCheck) -> Result<(), TxnError> {
        self.active()?;
        self.deferred.push(check);
        Ok(())
    }

    fn commit(&mut self) -> Result<CommitOutcome, TxnError> {
        self.active()?;
        self.status = Status::Aborted;
        if self.writes.is_empty() {
            for d in &self.deferred {
                d.run(&self.working)?;
            }
            let outcome = CommitOutcome::ReadOnly {
                epoch: self.snapshot.epoch,
            };
            self.status = Status::Committed(outcome);
            return Ok(outcome);
        }
        let writes = self.writes.freeze();
        let schema = self.db.schema().clone();
        let reads = &self.reads;
        let validator = |suffix: &[Arc<CommitRecord>]| validate(reads, &writes, suffix, &schema);
        let serial = self.db.commit(CommitRequest {
            txn: self.id,
            start: Some(self.snapshot.epoch),
            writes: writes.clone(),
            reads: self.reads.to_reads(),
            validator: Some(&validator),
            deferred: &self.deferred,
        })?;
        let outcome = CommitOutcome::Written { serial };
        self.status = Status::Committed(outcome);
        Ok(outcome)
    }

    fn rollback(&mut self) -> Result<(), TxnError> {
        self.active()?;
        self.status = Status::Aborted;
        Ok(())
    }
}
