use std::sync::Arc;
use std::thread;

use fcwdb::log::replay;
use fcwdb::occ::OccEngine;
use fcwdb::oracle::is_serializable;
use fcwdb::{key, Database, Engine, Schema, SnapshotRoot, TableSpec, TxnError, Value, ValueKind};

fn counters(n: i64) -> SnapshotRoot {
    let schema = Schema::new()
        .define_table(
            TableSpec::new("C")
                .column("ID", ValueKind::Int)
                .column("N", ValueKind::Int)
                .column("TAG", ValueKind::Text)
                .primary_key(&["ID"]),
        )
        .unwrap();
    let mut root = SnapshotRoot::genesis(Arc::new(schema));
    for id in 0..n {
        root.tables.insert(0, vec![Value::Int(id), Value::Int(0), Value::text("")], 0).unwrap();
    }
    root
}

fn logged(db: &Database) -> Vec<fcwdb::log::LogRecord> {
    db.records().iter().map(|r| r.to_log(db.schema())).collect()
}

#[test]
fn disjoint_writers_all_commit_with_dense_serials() {
    let base = counters(1000);
    let db = Database::new(base.clone());
    let engine = OccEngine::new(db.clone());
    let serials = thread::scope(|s| {
        let handles: Vec<_> = (0..10)
            .map(|t| {
                let engine = &engine;
                s.spawn(move || {
                    (0..100)
                        .map(|i| {
                            let mut tx = engine.begin();
                            let pk = key![t * 100 + i];
                            let n = tx.get(0, &pk, &[1]).unwrap().unwrap().int(1);
                            tx.update(0, &pk, &[(1, Value::Int(n + 1))]).unwrap();
                            tx.commit().unwrap().serial().unwrap()
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect::<Vec<_>>()
    });
    let mut sorted = serials.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (1..=1000).collect::<Vec<u64>>());
    let last = db.load();
    assert_eq!(last.epoch, 1000);
    assert!((0..1000).all(|id| last.tables.get(0, &key![id]).unwrap().int(1) == 1));
    let log = logged(&db);
    assert!(is_serializable(&log).unwrap().serializable);
    assert!(replay(base, &log).unwrap().tables == last.tables);
}

#[test]
fn hot_counter_loses_no_updates() {
    let base = counters(2);
    let db = Database::new(base.clone());
    let engine = OccEngine::new(db.clone());
    let aborts: u64 = thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let engine = &engine;
                s.spawn(move || {
                    let mut aborts = 0;
                    for _ in 0..50 {
                        loop {
                            let mut tx = engine.begin();
                            let n = tx.get(0, &key![0], &[1]).unwrap().unwrap().int(1);
                            tx.update(0, &key![0], &[(1, Value::Int(n + 1))]).unwrap();
                            match tx.commit() {
                                Ok(_) => break,
                                Err(TxnError::Conflict(_)) => aborts += 1,
                                Err(e) => panic!("{e}"),
                            }
                        }
                    }
                    aborts
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    });
    let last = db.load();
    assert_eq!(last.tables.get(0, &key![0]).unwrap().int(1), 400);
    assert_eq!(last.epoch, 400);
    let log = logged(&db);
    assert!(is_serializable(&log).unwrap().serializable);
    assert!(replay(base, &log).unwrap().tables == last.tables);
    eprintln!("{aborts} conflicts resolved by retry");
}

#[test]
fn disjoint_columns_of_one_row_both_commit() {
    let db = Database::new(counters(1));
    let engine = OccEngine::new(db.clone());
    for _ in 0..100 {
        let mut a = engine.begin();
        let mut b = engine.begin();
        let n = a.get(0, &key![0], &[1]).unwrap().unwrap().int(1);
        a.update(0, &key![0], &[(1, Value::Int(n + 1))]).unwrap();
        b.get(0, &key![0], &[2]).unwrap();
        b.insert(0, vec![Value::Int(99), Value::Int(0), Value::text("x")]).unwrap();
        b.delete(0, &key![99]).unwrap();
        a.commit().unwrap();
        b.commit().unwrap();
    }
}
