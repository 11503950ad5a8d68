//! Serializability verification of commit logs.
//!
//! The graph check works at cell granularity: a row read names columns, the
//! selecting key columns, and the row's existence. A read depends on the last
//! committed writer of each such cell at or before its snapshot, and precedes
//! the next writer of that cell. Writers of the same row are ordered by serial.
//! Column-set and block reads depend on every qualifying table write.
//!
//! [`brute_force_check`] answers the same question by trying serial orders.

pub mod random;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::log::{LogRecord, LogWrites, ReadMode};
use crate::value::Key;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HistoryError {
    #[error("record {index}: serial {serial} breaks the dense sequence")]
    NotDense { index: usize, serial: u64 },
    #[error("serial {serial}: start {start} is not before the commit")]
    BadStart { serial: u64, start: u64 },
    #[error("serial {serial}: {table}{pk} written twice in one record")]
    DuplicateWrite { serial: u64, table: String, pk: Key },
    #[error("serial {serial}: read of {table}{pk} cites version {ver}, {detail}")]
    UnknownVersion {
        serial: u64,
        table: String,
        pk: Key,
        ver: u64,
        detail: String,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("brute force supports at most {max} transactions, got {got}")]
    TooLarge { max: usize, got: usize },
    #[error(transparent)]
    History(#[from] HistoryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    WW,
    WR,
    RW,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::WW => "ww",
            EdgeKind::WR => "wr",
            EdgeKind::RW => "rw",
        })
    }
}

/// A dependency between two committed transactions, identified by serial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: u64,
    pub to: u64,
    pub kind: EdgeKind,
    pub table: String,
    /// Absent for table-wide reads.
    pub pk: Option<Key>,
    /// Column name; absent for row existence and table-wide reads.
    pub cell: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ConflictGraph {
    /// Serials in log order.
    pub nodes: Vec<u64>,
    /// Serial to transaction id.
    pub txn: HashMap<u64, u64>,
    /// First witness of each distinct (from, to) pair.
    pub edges: Vec<Edge>,
    /// Edges contributed by column-set and block reads.
    pub conservative_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub serializable: bool,
    /// Transaction ids in an equivalent serial order.
    pub witness: Vec<u64>,
    /// Transaction ids around one cycle, in edge order.
    pub cycle: Vec<u64>,
    pub conservative_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum WriteOp {
    Ins,
    Upd(BTreeSet<String>),
    Del,
}

impl WriteOp {
    /// `None` is the existence cell.
    pub(crate) fn touches(&self, cell: Option<&str>) -> bool {
        match (self, cell) {
            (WriteOp::Ins | WriteOp::Del, _) => true,
            (WriteOp::Upd(cols), Some(c)) => cols.contains(c),
            (WriteOp::Upd(_), None) => false,
        }
    }
}

pub(crate) fn ops(w: &LogWrites) -> impl Iterator<Item = (&Key, WriteOp)> {
    w.ins
        .iter()
        .map(|k| (k, WriteOp::Ins))
        .chain(w.upd.iter().map(|u| (&u.pk, WriteOp::Upd(u.cols.iter().cloned().collect()))))
        .chain(w.del.iter().map(|k| (k, WriteOp::Del)))
}

/// Whether a table-wide read of `cols` in `mode` can see the effect of `w`.
pub(crate) fn qualifies(mode: ReadMode, cols: &[String], w: &LogWrites) -> bool {
    match mode {
        ReadMode::Block => !(w.ins.is_empty() && w.upd.is_empty() && w.del.is_empty()),
        _ => {
            !w.ins.is_empty()
                || !w.del.is_empty()
                || w.upd.iter().any(|u| u.cols.iter().any(|c| cols.contains(c)))
        }
    }
}

type RowId = (String, Key);

struct Builder {
    edges: Vec<Edge>,
    seen: HashSet<(u64, u64)>,
    conservative: usize,
}

impl Builder {
    fn add(&mut self, e: Edge, conservative: bool) {
        if e.from == e.to {
            return;
        }
        if self.seen.insert((e.from, e.to)) {
            if conservative {
                self.conservative += 1;
            }
            self.edges.push(e);
        }
    }
}

fn check_dense(history: &[LogRecord]) -> Result<u64, HistoryError> {
    let Some(first) = history.first() else {
        return Ok(0);
    };
    for (i, r) in history.iter().enumerate() {
        if r.serial != first.serial + i as u64 {
            return Err(HistoryError::NotDense { index: i, serial: r.serial });
        }
        if r.start >= r.serial {
            return Err(HistoryError::BadStart {
                serial: r.serial,
                start: r.start,
            });
        }
    }
    Ok(first.serial - 1)
}

pub fn build_graph(history: &[LogRecord]) -> Result<ConflictGraph, HistoryError> {
    let base = check_dense(history)?;
    let mut rows: HashMap<RowId, Vec<(u64, WriteOp)>> = HashMap::new();
    for r in history {
        let mut mine = HashSet::new();
        for w in &r.writes {
            for (pk, op) in ops(w) {
                if !mine.insert((w.table.as_str(), pk)) {
                    return Err(HistoryError::DuplicateWrite {
                        serial: r.serial,
                        table: w.table.clone(),
                        pk: pk.clone(),
                    });
                }
                rows.entry((w.table.clone(), pk.clone())).or_default().push((r.serial, op));
            }
        }
    }
    let mut b = Builder {
        edges: Vec::new(),
        seen: HashSet::new(),
        conservative: 0,
    };
    for ((table, pk), ws) in &rows {
        for pair in ws.windows(2) {
            b.add(
                Edge {
                    from: pair[0].0,
                    to: pair[1].0,
                    kind: EdgeKind::WW,
                    table: table.clone(),
                    pk: Some(pk.clone()),
                    cell: None,
                },
                false,
            );
        }
    }
    let empty = Vec::new();
    for r in history {
        for read in &r.reads {
            match read.mode {
                ReadMode::Specific => {
                    for rr in &read.rows {
                        let id = (read.table.clone(), rr.pk.clone());
                        let ws = rows.get(&id).unwrap_or(&empty);
                        let before: Vec<&(u64, WriteOp)> = ws.iter().filter(|(s, _)| *s <= r.start).collect();
                        let bad = |detail: &str| HistoryError::UnknownVersion {
                            serial: r.serial,
                            table: read.table.clone(),
                            pk: rr.pk.clone(),
                            ver: rr.ver,
                            detail: detail.to_string(),
                        };
                        if rr.ver > r.start {
                            return Err(bad("which is after the snapshot"));
                        }
                        match (rr.ver, before.last()) {
                            (0, None | Some((_, WriteOp::Del))) => {}
                            (0, Some(_)) => return Err(bad("but the row existed at the snapshot")),
                            (v, None) if v <= base => {}
                            (v, Some((s, op))) if *s == v && *op != WriteOp::Del => {}
                            _ => return Err(bad("which is not the row's version at the snapshot")),
                        }
                        let cells = rr
                            .cols
                            .iter()
                            .chain(&read.keycols)
                            .map(|c| Some(c.as_str()))
                            .chain([None]);
                        for cell in cells {
                            let edge = |from, to, kind| Edge {
                                from,
                                to,
                                kind,
                                table: read.table.clone(),
                                pk: Some(rr.pk.clone()),
                                cell: cell.map(str::to_string),
                            };
                            if let Some((s, _)) = before.iter().rev().find(|(_, op)| op.touches(cell)) {
                                b.add(edge(*s, r.serial, EdgeKind::WR), false);
                            }
                            if let Some((s, _)) = ws.iter().find(|(s, op)| *s > r.start && op.touches(cell)) {
                                b.add(edge(r.serial, *s, EdgeKind::RW), false);
                            }
                        }
                    }
                }
                ReadMode::Columns | ReadMode::Block => {
                    for other in history {
                        if other.serial == r.serial {
                            continue;
                        }
                        let hit = other
                            .writes
                            .iter()
                            .any(|w| w.table == read.table && qualifies(read.mode, &read.cols, w));
                        if !hit {
                            continue;
                        }
                        let (from, to, kind) = if other.serial <= r.start {
                            (other.serial, r.serial, EdgeKind::WR)
                        } else {
                            (r.serial, other.serial, EdgeKind::RW)
                        };
                        b.add(
                            Edge {
                                from,
                                to,
                                kind,
                                table: read.table.clone(),
                                pk: None,
                                cell: None,
                            },
                            true,
                        );
                    }
                }
            }
        }
    }
    Ok(ConflictGraph {
        nodes: history.iter().map(|r| r.serial).collect(),
        txn: history.iter().map(|r| (r.serial, r.txn)).collect(),
        edges: b.edges,
        conservative_edges: b.conservative,
    })
}

impl ConflictGraph {
    /// Topological order (smallest serial first among ready nodes), or a cycle.
    pub fn order(&self) -> Result<Vec<u64>, Vec<u64>> {
        let mut indeg: HashMap<u64, usize> = self.nodes.iter().map(|&n| (n, 0)).collect();
        let mut succ: HashMap<u64, Vec<u64>> = HashMap::new();
        let mut pred: HashMap<u64, Vec<u64>> = HashMap::new();
        for e in &self.edges {
            *indeg.get_mut(&e.to).expect("edge endpoint is a node") += 1;
            succ.entry(e.from).or_default().push(e.to);
            pred.entry(e.to).or_default().push(e.from);
        }
        let mut ready: BinaryHeap<Reverse<u64>> =
            indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| Reverse(n)).collect();
        let mut out = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(n)) = ready.pop() {
            out.push(n);
            for &m in succ.get(&n).into_iter().flatten() {
                let d = indeg.get_mut(&m).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(m));
                }
            }
        }
        if out.len() == self.nodes.len() {
            return Ok(out);
        }
        // Every remaining node has a remaining predecessor; walk back until one repeats.
        let remaining: HashSet<u64> = indeg.iter().filter(|(_, &d)| d > 0).map(|(&n, _)| n).collect();
        let mut at = *remaining.iter().min().expect("some node remains");
        let mut path = vec![at];
        let mut pos: HashMap<u64, usize> = [(at, 0)].into();
        loop {
            at = *pred[&at].iter().filter(|p| remaining.contains(p)).min().expect("remaining predecessor");
            if let Some(&i) = pos.get(&at) {
                let mut cycle = path[i..].to_vec();
                cycle.reverse();
                return Err(cycle);
            }
            pos.insert(at, path.len());
            path.push(at);
        }
    }
}

pub fn is_serializable(history: &[LogRecord]) -> Result<Verdict, HistoryError> {
    let g = build_graph(history)?;
    let ids = |v: Vec<u64>| v.into_iter().map(|s| g.txn[&s]).collect();
    Ok(match g.order() {
        Ok(order) => Verdict {
            serializable: true,
            witness: ids(order),
            cycle: Vec::new(),
            conservative_edges: g.conservative_edges,
        },
        Err(cycle) => Verdict {
            serializable: false,
            witness: Vec::new(),
            cycle: ids(cycle),
            conservative_edges: g.conservative_edges,
        },
    })
}

/// Whether `order` (transaction ids) is a permutation of the history that
/// respects every edge of its conflict graph.
pub fn check_order(history: &[LogRecord], order: &[u64]) -> Result<bool, HistoryError> {
    let g = build_graph(history)?;
    let pos: HashMap<u64, usize> = order.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    if pos.len() != history.len() || order.len() != history.len() {
        return Ok(false);
    }
    let mut at = HashMap::new();
    for r in history {
        match pos.get(&r.txn) {
            Some(&p) => at.insert(r.serial, p),
            None => return Ok(false),
        };
    }
    Ok(g.edges.iter().all(|e| at[&e.from] < at[&e.to]))
}

pub const BRUTE_FORCE_MAX: usize = 8;

/// Searches for a serial order in which every transaction reads the cell
/// values its summary cites and overwrites the same row versions as in the
/// log, which also leaves the same final state.
pub fn brute_force_check(history: &[LogRecord]) -> Result<bool, OracleError> {
    let n = history.len();
    if n > BRUTE_FORCE_MAX {
        return Err(OracleError::TooLarge {
            max: BRUTE_FORCE_MAX,
            got: n,
        });
    }
    let base = check_dense(history)?;
    let index_of = |serial: u64| (serial - base - 1) as usize;

    let mut last_writer: HashMap<RowId, usize> = HashMap::new();
    let mut txns: Vec<BruteTxn> = Vec::with_capacity(n);
    for (i, r) in history.iter().enumerate() {
        let mut writes = Vec::new();
        for w in &r.writes {
            for (pk, op) in ops(w) {
                let row = (w.table.clone(), pk.clone());
                let prev = last_writer.insert(row.clone(), i);
                writes.push((row, op, prev));
            }
        }
        txns.push(BruteTxn {
            writes,
            cells: Vec::new(),
            before: 0,
            after: 0,
        });
    }
    // Visible value of a cell as of a log epoch: its last toucher at or before it.
    let toucher_as_of = |row: &RowId, cell: Option<&str>, epoch: u64| -> Option<usize> {
        history
            .iter()
            .take_while(|r| r.serial <= epoch)
            .filter(|r| {
                r.writes.iter().any(|w| {
                    w.table == row.0 && ops(w).any(|(pk, op)| *pk == row.1 && op.touches(cell))
                })
            })
            .last()
            .map(|r| index_of(r.serial))
    };
    for (i, r) in history.iter().enumerate() {
        for read in &r.reads {
            match read.mode {
                ReadMode::Specific => {
                    for rr in &read.rows {
                        let row = (read.table.clone(), rr.pk.clone());
                        let as_of = if rr.ver > base { rr.ver } else { r.start };
                        let cells = rr
                            .cols
                            .iter()
                            .chain(&read.keycols)
                            .map(|c| Some(c.clone()))
                            .chain([None]);
                        for cell in cells {
                            let want = toucher_as_of(&row, cell.as_deref(), as_of);
                            txns[i].cells.push((row.clone(), cell, want));
                        }
                    }
                }
                ReadMode::Columns | ReadMode::Block => {
                    for (j, other) in history.iter().enumerate() {
                        if j == i
                            || !other
                                .writes
                                .iter()
                                .any(|w| w.table == read.table && qualifies(read.mode, &read.cols, w))
                        {
                            continue;
                        }
                        if other.serial <= r.start {
                            txns[i].before |= 1 << j;
                        } else {
                            txns[i].after |= 1 << j;
                        }
                    }
                }
            }
        }
    }

    Ok(search(&txns, 0, &HashMap::new(), &mut HashSet::new()))
}

/// Simulated state of one row during a brute-force replay.
#[derive(Clone, Debug, Default)]
struct RowSim {
    last: Option<usize>,
    /// Last insert or delete; it overwrote every cell.
    whole: Option<usize>,
    /// Updates since `whole`.
    cols: HashMap<String, usize>,
}

impl RowSim {
    fn visible(&self, cell: Option<&str>) -> Option<usize> {
        match cell {
            None => self.whole,
            Some(c) => self.cols.get(c).copied().or(self.whole),
        }
    }

    fn apply(&mut self, op: &WriteOp, by: usize) {
        self.last = Some(by);
        match op {
            WriteOp::Ins | WriteOp::Del => {
                self.whole = Some(by);
                self.cols.clear();
            }
            WriteOp::Upd(cols) => {
                for c in cols {
                    self.cols.insert(c.clone(), by);
                }
            }
        }
    }
}

struct BruteTxn {
    /// (row, op, previous writer of the row in log order)
    writes: Vec<(RowId, WriteOp, Option<usize>)>,
    /// (row, cell, writer whose value must be visible)
    cells: Vec<(RowId, Option<String>, Option<usize>)>,
    /// Transactions that must come before, and after, because of table-wide reads.
    before: u32,
    after: u32,
}

fn search(txns: &[BruteTxn], placed: u32, sim: &HashMap<RowId, RowSim>, failed: &mut HashSet<u32>) -> bool {
    if placed.count_ones() as usize == txns.len() {
        return true;
    }
    if failed.contains(&placed) {
        return false;
    }
    let none = RowSim::default();
    for (i, t) in txns.iter().enumerate() {
        if placed & (1 << i) != 0 || t.before & !placed != 0 || t.after & placed != 0 {
            continue;
        }
        let reads_ok = t
            .cells
            .iter()
            .all(|(row, cell, want)| sim.get(row).unwrap_or(&none).visible(cell.as_deref()) == *want);
        let chain_ok = t
            .writes
            .iter()
            .all(|(row, _, prev)| sim.get(row).unwrap_or(&none).last == *prev);
        if !(reads_ok && chain_ok) {
            continue;
        }
        let mut next = sim.clone();
        for (row, op, _) in &t.writes {
            next.entry(row.clone()).or_default().apply(op, i);
        }
        if search(txns, placed | (1 << i), &next, failed) {
            return true;
        }
    }
    failed.insert(placed);
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key;
    use crate::log::{LogRead, LogRowRead, LogUpdate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn upd(table: &str, k: i64, cols: &[&str]) -> LogWrites {
        LogWrites {
            table: table.into(),
            ins: vec![],
            upd: vec![LogUpdate {
                pk: key![k],
                cols: cols.iter().map(|c| c.to_string()).collect(),
                vals: vec![],
            }],
            del: vec![],
            rows: vec![],
        }
    }

    fn read(table: &str, rows: &[(i64, &str, u64)]) -> LogRead {
        LogRead {
            table: table.into(),
            mode: ReadMode::Specific,
            rows: rows
                .iter()
                .map(|&(k, c, ver)| LogRowRead {
                    pk: key![k],
                    cols: vec![c.to_string()],
                    ver,
                })
                .collect(),
            cols: vec![],
            keycols: vec!["ID".into()],
        }
    }

    fn rec(serial: u64, txn: u64, start: u64, writes: Vec<LogWrites>, reads: Vec<LogRead>) -> LogRecord {
        LogRecord {
            serial,
            txn,
            start,
            writes,
            reads,
            ts: 0,
        }
    }

    /// Both read x and y at the base and each writes one of them.
    fn write_skew() -> Vec<LogRecord> {
        vec![
            rec(2, 1, 1, vec![upd("T", 1, &["v"])], vec![read("T", &[(1, "v", 1), (2, "v", 1)])]),
            rec(3, 2, 1, vec![upd("T", 2, &["v"])], vec![read("T", &[(1, "v", 1), (2, "v", 1)])]),
        ]
    }

    #[test]
    fn empty_and_single() {
        let g = build_graph(&[]).unwrap();
        assert!(g.edges.is_empty() && g.nodes.is_empty());
        assert!(is_serializable(&[]).unwrap().serializable);
        let one = vec![rec(1, 9, 0, vec![upd("T", 1, &["v"])], vec![])];
        assert_eq!(is_serializable(&one).unwrap().witness, vec![9]);
        assert!(brute_force_check(&one).unwrap());
    }

    #[test]
    fn single_wr_edge() {
        let h = vec![
            rec(1, 1, 0, vec![upd("T", 1, &["v"])], vec![]),
            rec(2, 2, 1, vec![], vec![read("T", &[(1, "v", 1)])]),
        ];
        let g = build_graph(&h).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!((g.edges[0].from, g.edges[0].to, g.edges[0].kind), (1, 2, EdgeKind::WR));
        assert!(check_order(&h, &[1, 2]).unwrap());
        assert!(!check_order(&h, &[2, 1]).unwrap());
        assert!(brute_force_check(&h).unwrap());
    }

    #[test]
    fn write_skew_is_a_two_cycle() {
        let h = write_skew();
        let g = build_graph(&h).unwrap();
        let rw: Vec<_> = g.edges.iter().filter(|e| e.kind == EdgeKind::RW).map(|e| (e.from, e.to)).collect();
        assert!(rw.contains(&(2, 3)) && rw.contains(&(3, 2)));
        let v = is_serializable(&h).unwrap();
        assert!(!v.serializable);
        let mut c = v.cycle.clone();
        c.sort();
        assert_eq!(c, vec![1, 2]);
        assert!(!brute_force_check(&h).unwrap());
    }

    #[test]
    fn disjoint_columns_do_not_depend() {
        let h = vec![
            rec(2, 1, 1, vec![upd("T", 1, &["b"])], vec![]),
            rec(3, 2, 1, vec![upd("T", 2, &["v"])], vec![read("T", &[(1, "a", 1)])]),
        ];
        let g = build_graph(&h).unwrap();
        assert!(g.edges.is_empty());
        assert!(brute_force_check(&h).unwrap());
    }

    #[test]
    fn history_errors() {
        let gap = vec![rec(1, 1, 0, vec![], vec![]), rec(3, 2, 0, vec![], vec![])];
        assert!(matches!(build_graph(&gap), Err(HistoryError::NotDense { .. })));
        let future = vec![rec(1, 1, 0, vec![], vec![read("T", &[(1, "v", 5)])])];
        assert!(matches!(build_graph(&future), Err(HistoryError::UnknownVersion { .. })));
        let stale = vec![
            rec(2, 1, 1, vec![upd("T", 1, &["v"])], vec![]),
            rec(3, 2, 2, vec![], vec![read("T", &[(1, "v", 1)])]),
        ];
        assert!(matches!(build_graph(&stale), Err(HistoryError::UnknownVersion { .. })));
        let bad_start = vec![rec(1, 1, 1, vec![], vec![])];
        assert!(matches!(build_graph(&bad_start), Err(HistoryError::BadStart { .. })));
        let big: Vec<_> = (1..=9).map(|s| rec(s, s, s - 1, vec![], vec![])).collect();
        assert!(matches!(brute_force_check(&big), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn random_histories_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut yes, mut no) = (0, 0);
        for _ in 0..500 {
            let h = random::random_history(&mut rng, 8);
            let v = is_serializable(&h).unwrap();
            let b = brute_force_check(&h).unwrap();
            assert_eq!(v.serializable, b, "disagreement on {h:#?}");
            if v.serializable {
                assert!(check_order(&h, &v.witness).unwrap());
                yes += 1;
            } else {
                no += 1;
            }
        }
        assert!(yes > 50 && no > 50, "{yes} serializable, {no} not");
    }
}
