//! Random small histories for cross-checking the two verdicts.
//!
//! A tiny multiversion store with two tables of up to four rows. Each
//! transaction picks a snapshot, reads from it, and writes against the latest
//! state without any validation, so both serializable and anomalous
//! histories come out.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::log::{LogRead, LogRecord, LogRowRead, LogUpdate, LogWrites, ReadMode};
use crate::Key;

const TABLES: [&str; 2] = ["A", "B"];
const COLS: [&str; 2] = ["a", "b"];
/// Serial of the state the history starts from.
pub const BASE: u64 = 1;

type State = BTreeMap<(usize, i64), u64>;

fn pick_cols<R: Rng>(rng: &mut R) -> Vec<String> {
    match rng.gen_range(0..3) {
        0 => vec![COLS[0].to_string()],
        1 => vec![COLS[1].to_string()],
        _ => COLS.iter().map(|c| c.to_string()).collect(),
    }
}

pub fn random_history<R: Rng>(rng: &mut R, max_txns: usize) -> Vec<LogRecord> {
    let n = rng.gen_range(1..=max_txns);
    let tables = rng.gen_range(1..=TABLES.len());
    let rows = rng.gen_range(2..=4i64);
    let mut base = State::new();
    for t in 0..tables {
        for r in 1..=rows {
            if rng.gen_bool(0.7) {
                base.insert((t, r), BASE);
            }
        }
    }
    // states[e - BASE] is the state after serial e.
    let mut states = vec![base];
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let serial = BASE + 1 + i;
        let start = rng.gen_range(BASE..serial);
        let snap = &states[(start - BASE) as usize];
        let mut reads: BTreeMap<usize, LogRead> = BTreeMap::new();
        for _ in 0..rng.gen_range(0..=3) {
            let t = rng.gen_range(0..tables);
            let entry = reads.entry(t).or_insert_with(|| LogRead {
                table: TABLES[t].to_string(),
                mode: ReadMode::Specific,
                rows: Vec::new(),
                cols: Vec::new(),
                keycols: vec!["K".to_string()],
            });
            let roll = rng.gen_range(0..20);
            if roll == 0 {
                entry.mode = ReadMode::Block;
                entry.rows.clear();
                entry.cols.clear();
                entry.keycols.clear();
            } else if roll <= 3 && entry.mode != ReadMode::Block {
                entry.mode = ReadMode::Columns;
                let mut cols = pick_cols(rng);
                cols.extend(entry.rows.drain(..).flat_map(|r| r.cols));
                cols.extend(entry.keycols.drain(..));
                cols.extend(entry.cols.drain(..));
                cols.sort();
                cols.dedup();
                entry.cols = cols;
            } else if entry.mode == ReadMode::Specific {
                let r = rng.gen_range(1..=rows);
                let pk = Key::new(vec![r.into()]);
                if !entry.rows.iter().any(|x| x.pk == pk) {
                    let ver = snap.get(&(t, r)).copied().unwrap_or(0);
                    entry.rows.push(LogRowRead {
                        pk,
                        cols: pick_cols(rng),
                        ver,
                    });
                }
            }
        }
        let mut state = states.last().expect("base state").clone();
        let mut writes: BTreeMap<usize, LogWrites> = BTreeMap::new();
        let mut targets: Vec<(usize, i64)> = (0..tables).flat_map(|t| (1..=rows).map(move |r| (t, r))).collect();
        targets.shuffle(rng);
        for &(t, r) in targets.iter().take(rng.gen_range(0..=3)) {
            let w = writes.entry(t).or_insert_with(|| LogWrites {
                table: TABLES[t].to_string(),
                ins: Vec::new(),
                upd: Vec::new(),
                del: Vec::new(),
                rows: Vec::new(),
            });
            let pk = Key::new(vec![r.into()]);
            if state.contains_key(&(t, r)) {
                if rng.gen_bool(0.2) {
                    w.del.push(pk);
                    state.remove(&(t, r));
                } else {
                    w.upd.push(LogUpdate {
                        pk,
                        cols: pick_cols(rng),
                        vals: Vec::new(),
                    });
                    state.insert((t, r), serial);
                }
            } else {
                w.ins.push(pk);
                state.insert((t, r), serial);
            }
        }
        states.push(state);
        out.push(LogRecord {
            serial,
            txn: 100 + i,
            start,
            writes: writes.into_values().collect(),
            reads: reads.into_values().filter(|r| r.mode != ReadMode::Specific || !r.rows.is_empty()).collect(),
            ts: 0,
        });
    }
    out
}
