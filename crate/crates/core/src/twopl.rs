//! Strict two-phase locking baseline.
//!
//! Rows take S or X locks; scans take a table S lock and writers a table IX
//! lock, so a scan excludes concurrent writers of the table. Every lock is
//! held until commit or abort. Waiters queue FIFO, except upgrades, which are
//! placed at the front. Whenever a request blocks, the waits-for graph is
//! searched and the youngest transaction on each cycle is aborted.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

use crate::db::{CommitRequest, Database};
use crate::log::{ReadMode, RowRead, TableRead};
use crate::relational::{ColumnId, DeleteMode, KeyRange, RelError, Row, TableId, Tables, PENDING_WRITER};
use crate::txn::{CommitOutcome, DeferredCheck, Engine, ScanOpts, Transaction, TxnError};
use crate::value::{Key, Value};
use crate::writeset::{apply_writes, WriteSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockMode {
    S,
    X,
    /// Table-level intent to write rows.
    IX,
}

impl LockMode {
    fn bit(self) -> u8 {
        match self {
            LockMode::S => 1,
            LockMode::X => 2,
            LockMode::IX => 4,
        }
    }

    fn compatible(self, other: LockMode) -> bool {
        matches!((self, other), (LockMode::S, LockMode::S) | (LockMode::IX, LockMode::IX))
    }
}

fn modes(bits: u8) -> impl Iterator<Item = LockMode> {
    [LockMode::S, LockMode::X, LockMode::IX]
        .into_iter()
        .filter(move |m| bits & m.bit() != 0)
}

fn bits_compatible(held: u8, m: LockMode) -> bool {
    modes(held).all(|h| h.compatible(m))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LockTarget {
    Row(TableId, Key),
    Table(TableId),
}

#[derive(Clone, Copy, Debug)]
struct Waiter {
    txn: u64,
    mode: LockMode,
}

#[derive(Debug, Default)]
struct Lock {
    holders: Vec<(u64, u8)>,
    queue: VecDeque<Waiter>,
}

impl Lock {
    fn held_by(&self, txn: u64) -> u8 {
        self.holders.iter().find(|(t, _)| *t == txn).map_or(0, |(_, b)| *b)
    }

    fn others_compatible(&self, txn: u64, m: LockMode) -> bool {
        self.holders
            .iter()
            .all(|(t, b)| *t == txn || bits_compatible(*b, m))
    }

    fn position(&self, txn: u64) -> Option<usize> {
        self.queue.iter().position(|w| w.txn == txn)
    }

    /// Whether `txn` may take `m` now, given the holders and everyone queued ahead.
    fn grantable(&self, txn: u64, m: LockMode, ahead: usize) -> bool {
        self.others_compatible(txn, m) && self.queue.iter().take(ahead).all(|w| w.mode.compatible(m))
    }

    /// Transactions `txn` is waiting for.
    fn blockers(&self, txn: u64) -> Vec<u64> {
        let Some(pos) = self.position(txn) else {
            return Vec::new();
        };
        let m = self.queue[pos].mode;
        let mut out: Vec<u64> = self
            .holders
            .iter()
            .filter(|(t, b)| *t != txn && !bits_compatible(*b, m))
            .map(|(t, _)| *t)
            .collect();
        out.extend(
            self.queue
                .iter()
                .take(pos)
                .filter(|w| !w.mode.compatible(m))
                .map(|w| w.txn),
        );
        out
    }
}

fn covers(held: u8, m: LockMode) -> bool {
    held & m.bit() != 0 || (held & LockMode::X.bit() != 0 && m == LockMode::S)
}

#[derive(Default)]
struct Inner {
    locks: HashMap<LockTarget, Lock>,
    owned: HashMap<u64, Vec<LockTarget>>,
    waiting: HashMap<u64, LockTarget>,
    victims: HashSet<u64>,
}

impl Inner {
    fn grant(&mut self, txn: u64, target: &LockTarget, m: LockMode) {
        let lock = self.locks.entry(target.clone()).or_default();
        match lock.holders.iter_mut().find(|(t, _)| *t == txn) {
            Some((_, b)) => *b |= m.bit(),
            None => {
                lock.holders.push((txn, m.bit()));
                self.owned.entry(txn).or_default().push(target.clone());
            }
        }
    }

    fn release(&mut self, txn: u64) {
        if let Some(target) = self.waiting.remove(&txn) {
            if let Some(lock) = self.locks.get_mut(&target) {
                lock.queue.retain(|w| w.txn != txn);
                if lock.holders.is_empty() && lock.queue.is_empty() {
                    self.locks.remove(&target);
                }
            }
        }
        for target in self.owned.remove(&txn).unwrap_or_default() {
            if let Some(lock) = self.locks.get_mut(&target) {
                lock.holders.retain(|(t, _)| *t != txn);
                if lock.holders.is_empty() && lock.queue.is_empty() {
                    self.locks.remove(&target);
                }
            }
        }
    }

    fn edges(&self, txn: u64) -> Vec<u64> {
        self.waiting
            .get(&txn)
            .and_then(|t| self.locks.get(t))
            .map(|l| l.blockers(txn))
            .unwrap_or_default()
    }

    /// Some cycle in the waits-for graph, if any.
    fn find_cycle(&self) -> Option<Vec<u64>> {
        let mut done: HashSet<u64> = HashSet::new();
        let mut starts: Vec<u64> = self.waiting.keys().copied().collect();
        starts.sort_unstable();
        for s in starts {
            if done.contains(&s) {
                continue;
            }
            // Iterative depth-first search keeping the current path.
            let mut path: Vec<u64> = vec![s];
            let mut stack: Vec<Vec<u64>> = vec![self.edges(s)];
            let mut on_path: HashSet<u64> = [s].into();
            while let Some(next) = stack.last_mut() {
                match next.pop() {
                    Some(n) if on_path.contains(&n) => {
                        let i = path.iter().position(|&p| p == n).expect("on path");
                        return Some(path[i..].to_vec());
                    }
                    Some(n) if done.contains(&n) => {}
                    Some(n) => {
                        path.push(n);
                        on_path.insert(n);
                        stack.push(self.edges(n));
                    }
                    None => {
                        stack.pop();
                        let n = path.pop().expect("path follows stack");
                        on_path.remove(&n);
                        done.insert(n);
                    }
                }
            }
        }
        None
    }
}

pub struct LockManager {
    inner: Mutex<Inner>,
    cv: Condvar,
    deadlocks: AtomicU64,
}

impl Default for LockManager {
    fn default() -> Self {
        Self::new()
    }
}

impl LockManager {
    pub fn new() -> Self {
        LockManager {
            inner: Mutex::new(Inner::default()),
            cv: Condvar::new(),
            deadlocks: AtomicU64::new(0),
        }
    }

    /// Number of victims chosen so far.
    pub fn deadlocks(&self) -> u64 {
        self.deadlocks.load(Ordering::Relaxed)
    }

    /// Blocks until granted. Returns `Deadlock` if `txn` was chosen as a
    /// victim, in which case all its locks are already released.
    pub fn acquire(&self, txn: u64, target: LockTarget, m: LockMode) -> Result<(), TxnError> {
        let mut g = self.inner.lock();
        if g.victims.remove(&txn) {
            return Err(TxnError::Deadlock);
        }
        let lock = g.locks.entry(target.clone()).or_default();
        let held = lock.held_by(txn);
        if covers(held, m) {
            return Ok(());
        }
        let upgrade = held != 0;
        let grant_now = if upgrade {
            lock.others_compatible(txn, m)
        } else {
            lock.queue.is_empty() && lock.others_compatible(txn, m)
        };
        if grant_now {
            g.grant(txn, &target, m);
            return Ok(());
        }
        let w = Waiter { txn, mode: m };
        if upgrade {
            lock.queue.push_front(w);
        } else {
            lock.queue.push_back(w);
        }
        g.waiting.insert(txn, target.clone());
        loop {
            let mut broke = false;
            while let Some(cycle) = g.find_cycle() {
                let victim = *cycle.iter().max().expect("non-empty cycle");
                g.release(victim);
                g.victims.insert(victim);
                self.deadlocks.fetch_add(1, Ordering::Relaxed);
                broke = true;
            }
            if broke {
                self.cv.notify_all();
            }
            if g.victims.remove(&txn) {
                return Err(TxnError::Deadlock);
            }
            let lock = g.locks.get(&target).expect("queued lock exists");
            let pos = lock.position(txn).expect("still queued");
            if lock.grantable(txn, m, pos) {
                g.locks.get_mut(&target).expect("exists").queue.remove(pos);
                g.waiting.remove(&txn);
                g.grant(txn, &target, m);
                // Others queued behind may now be compatible.
                self.cv.notify_all();
                return Ok(());
            }
            self.cv.wait(&mut g);
        }
    }

    pub fn release_all(&self, txn: u64) {
        let mut g = self.inner.lock();
        g.release(txn);
        g.victims.remove(&txn);
        drop(g);
        self.cv.notify_all();
    }

    pub fn held(&self, txn: u64) -> Vec<(LockTarget, Vec<LockMode>)> {
        let g = self.inner.lock();
        g.owned
            .get(&txn)
            .map(|ts| {
                ts.iter()
                    .map(|t| (t.clone(), modes(g.locks[t].held_by(txn)).collect()))
                    .collect()
            })
            .unwrap_or_default()
    }
}

pub struct TplEngine {
    db: Arc<Database>,
    locks: Arc<LockManager>,
}

impl TplEngine {
    pub fn new(db: Arc<Database>) -> Self {
        TplEngine {
            db,
            locks: Arc::new(LockManager::new()),
        }
    }

    pub fn db(&self) -> &Arc<Database> {
        &self.db
    }

    pub fn locks(&self) -> &Arc<LockManager> {
        &self.locks
    }

    pub fn begin_tpl(&self) -> TplTxn {
        TplTxn {
            id: self.db.next_txn_id(),
            db: self.db.clone(),
            locks: self.locks.clone(),
            writes: WriteSet::new(),
            reads: BTreeMap::new(),
            deferred: Vec::new(),
            active: true,
        }
    }
}

impl Engine for TplEngine {
    fn name(&self) -> &'static str {
        "2pl"
    }

    fn begin(&self) -> Box<dyn Transaction> {
        Box::new(self.begin_tpl())
    }
}

enum LockedRead {
    Rows(BTreeMap<Key, u64>),
    Table,
}

pub struct TplTxn {
    db: Arc<Database>,
    locks: Arc<LockManager>,
    id: u64,
    writes: WriteSet,
    reads: BTreeMap<TableId, LockedRead>,
    deferred: Vec<DeferredCheck>,
    active: bool,
}

impl TplTxn {
    fn check_active(&self) -> Result<(), TxnError> {
        if self.active {
            Ok(())
        } else {
            Err(TxnError::Inactive)
        }
    }

    fn end(&mut self) {
        self.active = false;
        self.locks.release_all(self.id);
    }

    fn lock(&mut self, target: LockTarget, m: LockMode) -> Result<(), TxnError> {
        let r = self.locks.acquire(self.id, target, m);
        if r.is_err() {
            self.end();
        }
        r
    }

    fn lock_row_write(&mut self, table: TableId, pk: &Key) -> Result<(), TxnError> {
        self.lock(LockTarget::Table(table), LockMode::IX)?;
        self.lock(LockTarget::Row(table, pk.clone()), LockMode::X)
    }

    /// Latest committed state with this transaction's writes on top. Rows it
    /// holds locks on cannot change underneath it.
    fn view(&self) -> Tables {
        let mut tables = self.db.load().tables.clone();
        if !self.writes.is_empty() {
            apply_writes(&mut tables, &self.writes.freeze(), PENDING_WRITER)
                .expect("own writes apply under held locks");
        }
        tables
    }

    fn note_row(&mut self, table: TableId, pk: &Key) {
        let ver = self.db.load().tables.get(table, pk).map_or(0, |r| r.writer);
        match self.reads.entry(table).or_insert_with(|| LockedRead::Rows(BTreeMap::new())) {
            LockedRead::Rows(rows) => {
                rows.entry(pk.clone()).or_insert(ver);
            }
            LockedRead::Table => {}
        }
    }

    fn to_reads(&self) -> Vec<TableRead> {
        let schema = self.db.schema();
        self.reads
            .iter()
            .map(|(&table, r)| {
                let def = schema.table(table);
                match r {
                    LockedRead::Rows(rows) => TableRead {
                        table,
                        mode: ReadMode::Specific,
                        rows: rows
                            .iter()
                            .map(|(pk, &ver)| RowRead {
                                pk: pk.clone(),
                                cols: (0..def.columns.len()).collect(),
                                ver,
                            })
                            .collect(),
                        cols: Vec::new(),
                        keycols: def.primary_key.clone(),
                    },
                    LockedRead::Table => TableRead {
                        table,
                        mode: ReadMode::Block,
                        rows: Vec::new(),
                        cols: Vec::new(),
                        keycols: Vec::new(),
                    },
                }
            })
            .collect()
    }
}

impl Drop for TplTxn {
    fn drop(&mut self) {
        if self.active {
            self.end();
        }
    }
}

impl Transaction for TplTxn {
    fn id(&self) -> u64 {
        self.id
    }

    fn get(&mut self, table: TableId, pk: &Key, _cols: &[ColumnId]) -> Result<Option<Arc<Row>>, TxnError> {
        self.check_active()?;
        self.lock(LockTarget::Row(table, pk.clone()), LockMode::S)?;
        self.note_row(table, pk);
        if self.writes.touches(table, pk) {
            Ok(self.view().get(table, pk).cloned())
        } else {
            Ok(self.db.load().tables.get(table, pk).cloned())
        }
    }

    fn lookup_unique(
        &mut self,
        table: TableId,
        key_cols: &[ColumnId],
        key: &Key,
        cols: &[ColumnId],
    ) -> Result<Option<(Key, Arc<Row>)>, TxnError> {
        self.check_active()?;
        if key_cols == self.db.schema().table(table).primary_key.as_slice() {
            return Ok(self.get(table, key, cols)?.map(|r| (key.clone(), r)));
        }
        // Without key-range locks a secondary lookup locks the table.
        self.db
            .load()
            .tables
            .lookup_unique(table, key_cols, key)
            .map_err(|e| TxnError::Usage(e.to_string()))?;
        self.lock(LockTarget::Table(table), LockMode::S)?;
        self.reads.insert(table, LockedRead::Table);
        self.view()
            .lookup_unique(table, key_cols, key)
            .map_err(|e| TxnError::Usage(e.to_string()))
    }

    fn scan(
        &mut self,
        table: TableId,
        range: &KeyRange,
        _cols: &[ColumnId],
        opts: ScanOpts,
    ) -> Result<Vec<(Key, Arc<Row>)>, TxnError> {
        self.check_active()?;
        self.lock(LockTarget::Table(table), LockMode::S)?;
        self.reads.insert(table, LockedRead::Table);
        let view = self.view();
        let rows = view
            .range(table, range)?
            .take(opts.limit.unwrap_or(usize::MAX))
            .map(|(k, r)| (k.clone(), r.clone()))
            .collect();
        Ok(rows)
    }

    fn insert(&mut self, table: TableId, values: Vec<Value>) -> Result<Key, TxnError> {
        self.check_active()?;
        let def = self.db.schema().tables()[table].clone();
        if values.len() != def.columns.len() {
            return Err(RelError::Usage {
                table: def.name.clone(),
                detail: format!("expected {} values, got {}", def.columns.len(), values.len()),
            }
            .into());
        }
        let pk = def.pk_of(&values);
        self.lock_row_write(table, &pk)?;
        let mut view = self.view();
        view.insert(table, values.clone(), PENDING_WRITER)?;
        self.writes.insert(table, pk.clone(), values, &def.primary_key);
        Ok(pk)
    }

    fn update(&mut self, table: TableId, pk: &Key, changes: &[(ColumnId, Value)]) -> Result<(), TxnError> {
        self.check_active()?;
        let def = self.db.schema().tables()[table].clone();
        self.lock_row_write(table, pk)?;
        let mut view = self.view();
        if !changes.iter().any(|(c, _)| def.is_pk_column(*c)) {
            view.update(table, pk, changes, PENDING_WRITER)?;
            self.writes.update(table, pk, changes);
            return Ok(());
        }
        let old = view.get(table, pk).cloned().ok_or_else(|| RelError::NotFound {
            table: def.name.clone(),
            key: pk.clone(),
        })?;
        let mut values = old.values().to_vec();
        for (c, v) in changes {
            values[*c] = v.clone();
        }
        let new_pk = def.pk_of(&values);
        self.lock_row_write(table, &new_pk)?;
        let mut view = self.view();
        view.delete(table, pk, DeleteMode::Restrict)?;
        view.insert(table, values.clone(), PENDING_WRITER)?;
        self.writes.delete(table, pk);
        self.writes.insert(table, new_pk, values, &def.primary_key);
        Ok(())
    }

    fn delete(&mut self, table: TableId, pk: &Key) -> Result<(), TxnError> {
        self.check_active()?;
        self.lock_row_write(table, pk)?;
        // Lock every dependent the cascade reaches until the set stops growing.
        loop {
            let mut view = self.view();
            let deleted = view.delete(table, pk, DeleteMode::FollowActions)?;
            let before = self.locks.held(self.id).len();
            for (t, k) in &deleted {
                self.lock_row_write(*t, k)?;
            }
            if self.locks.held(self.id).len() == before {
                for (t, k) in deleted {
                    self.writes.delete(t, &k);
                }
                return Ok(());
            }
        }
    }

    fn defer_check(&mut self, check: DeferredCheck) -> Result<(), TxnError> {
        self.check_active()?;
        self.deferred.push(check);
        Ok(())
    }

    fn commit(&mut self) -> Result<CommitOutcome, TxnError> {
        self.check_active()?;
        if self.writes.is_empty() {
            let view = self.view();
            let r = self.deferred.iter().try_for_each(|d| d.run(&view));
            let epoch = self.db.epoch();
            self.end();
            r?;
            return Ok(CommitOutcome::ReadOnly { epoch });
        }
        let r = self.db.commit(CommitRequest {
            txn: self.id,
            start: None,
            writes: self.writes.freeze(),
            reads: self.to_reads(),
            validator: None,
            deferred: &self.deferred,
        });
        self.end();
        r.map(|serial| CommitOutcome::Written { serial })
    }

    fn rollback(&mut self) -> Result<(), TxnError> {
        self.check_active()?;
        self.end();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key;
    use crate::relational::{Schema, TableSpec};
    use crate::store::SnapshotRoot;
    use crate::value::ValueKind;
    use std::sync::Barrier;
    use std::thread;
    use std::time::Duration;

    fn engine() -> TplEngine {
        let schema = Schema::new()
            .define_table(
                TableSpec::new("T")
                    .column("ID", ValueKind::Int)
                    .column("V", ValueKind::Int)
                    .primary_key(&["ID"]),
            )
            .unwrap();
        let db = Database::new(SnapshotRoot::genesis(Arc::new(schema)));
        let e = TplEngine::new(db);
        let mut t = e.begin_tpl();
        for i in 1..=4 {
            t.insert(0, vec![i.into(), 0.into()]).unwrap();
        }
        t.commit().unwrap();
        e
    }

    fn row(i: i64) -> LockTarget {
        LockTarget::Row(0, key![i])
    }

    #[test]
    fn uncontended_and_upgrade() {
        let lm = LockManager::new();
        lm.acquire(1, row(1), LockMode::X).unwrap();
        lm.acquire(2, row(2), LockMode::S).unwrap();
        lm.acquire(2, row(2), LockMode::X).unwrap();
        lm.acquire(2, row(2), LockMode::S).unwrap();
        assert_eq!(lm.held(2), vec![(row(2), vec![LockMode::S, LockMode::X])]);
        lm.release_all(1);
        lm.release_all(2);
        assert!(lm.held(1).is_empty());
    }

    #[test]
    fn two_txn_cycle_has_exactly_one_victim() {
        for _ in 0..50 {
            let lm = Arc::new(LockManager::new());
            lm.acquire(1, row(1), LockMode::X).unwrap();
            lm.acquire(2, row(2), LockMode::X).unwrap();
            let barrier = Arc::new(Barrier::new(2));
            let spawn = |txn: u64, want: i64| {
                let lm = lm.clone();
                let barrier = barrier.clone();
                thread::spawn(move || {
                    barrier.wait();
                    let r = lm.acquire(txn, row(want), LockMode::X);
                    lm.release_all(txn);
                    r
                })
            };
            let a = spawn(1, 2);
            let b = spawn(2, 1);
            let (ra, rb) = (a.join().unwrap(), b.join().unwrap());
            assert!(ra.is_ok(), "older transaction survives");
            assert_eq!(rb, Err(TxnError::Deadlock));
            assert_eq!(lm.deadlocks(), 1);
        }
    }

    #[test]
    fn upgrade_deadlock_found() {
        let lm = Arc::new(LockManager::new());
        lm.acquire(1, row(1), LockMode::S).unwrap();
        lm.acquire(2, row(1), LockMode::S).unwrap();
        let l2 = lm.clone();
        let h = thread::spawn(move || {
            let r = l2.acquire(1, row(1), LockMode::X);
            l2.release_all(1);
            r
        });
        thread::sleep(Duration::from_millis(20));
        assert_eq!(lm.acquire(2, row(1), LockMode::X), Err(TxnError::Deadlock));
        lm.release_all(2);
        assert!(h.join().unwrap().is_ok());
    }

    #[test]
    fn reader_blocks_writer_until_commit() {
        let e = engine();
        let mut r = e.begin_tpl();
        assert_eq!(r.get(0, &key![1], &[1]).unwrap().unwrap().int(1), 0);
        let locks = e.locks().clone();
        let db = e.db().clone();
        let (tx, rx) = std::sync::mpsc::channel();
        let h = thread::spawn(move || {
            let e2 = TplEngine { db, locks };
            let mut w = e2.begin_tpl();
            w.update(0, &key![1], &[(1, 7.into())]).unwrap();
            tx.send(()).unwrap();
            w.commit().unwrap()
        });
        thread::sleep(Duration::from_millis(50));
        assert!(rx.try_recv().is_err(), "writer must wait for the reader");
        r.commit().unwrap();
        rx.recv().unwrap();
        assert!(matches!(h.join().unwrap(), CommitOutcome::Written { .. }));
        assert_eq!(e.db().load().tables.get(0, &key![1]).unwrap().int(1), 7);
    }

    #[test]
    fn fifo_queue_blocks_later_readers() {
        let lm = Arc::new(LockManager::new());
        lm.acquire(1, row(1), LockMode::S).unwrap();
        let l = lm.clone();
        let writer = thread::spawn(move || {
            l.acquire(2, row(1), LockMode::X).unwrap();
            l.release_all(2);
        });
        thread::sleep(Duration::from_millis(20));
        let l = lm.clone();
        let (tx, rx) = std::sync::mpsc::channel();
        let reader = thread::spawn(move || {
            l.acquire(3, row(1), LockMode::S).unwrap();
            tx.send(()).unwrap();
            l.release_all(3);
        });
        thread::sleep(Duration::from_millis(20));
        assert!(rx.try_recv().is_err(), "S request queued behind X waiter");
        lm.release_all(1);
        writer.join().unwrap();
        reader.join().unwrap();
    }

    #[test]
    fn commit_record_cites_locked_versions() {
        let e = engine();
        let mut t = e.begin_tpl();
        t.get(0, &key![2], &[]).unwrap();
        t.update(0, &key![2], &[(1, 1.into())]).unwrap();
        t.scan(0, &KeyRange::All, &[], ScanOpts::default()).unwrap();
        let serial = t.commit().unwrap().serial().unwrap();
        let recs = e.db().records();
        let rec = recs.last().unwrap();
        assert_eq!(rec.serial, serial);
        assert_eq!(rec.start, serial - 1);
        assert_eq!(rec.reads[0].mode, ReadMode::Block);
        assert!(e.locks().held(t.id()).is_empty());
        assert_eq!(t.get(0, &key![1], &[]), Err(TxnError::Inactive));
    }

    #[test]
    fn concurrent_increments_are_serialized() {
        let e = Arc::new(engine());
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let e = e.clone();
                thread::spawn(move || {
                    let mut done = 0;
                    let mut deadlocks = 0;
                    while done < 25 {
                        let mut t = e.begin_tpl();
                        let r = t
                            .get(0, &key![1], &[1])
                            .and_then(|row| t.update(0, &key![1], &[(1, (row.unwrap().int(1) + 1).into())]))
                            .and_then(|_| t.commit());
                        match r {
                            Ok(_) => done += 1,
                            Err(TxnError::Deadlock) => deadlocks += 1,
                            Err(other) => panic!("{other:?}"),
                        }
                    }
                    deadlocks
                })
            })
            .collect();
        let victims: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(e.db().load().tables.get(0, &key![1]).unwrap().int(1), 100);
        assert_eq!(victims, e.locks().deadlocks());
    }
}
