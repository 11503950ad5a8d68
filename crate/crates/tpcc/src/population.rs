//! Deterministic initial population.


use fcwdb::log::CommitRecord;
use fcwdb::relational::project;
use fcwdb::writeset::TableWrites;
use fcwdb::{Decimal, Key, SnapshotRoot, Tables, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::schema::*;

/// Serial of the population commit. Benchmark commits follow it.
pub const GENESIS_SERIAL: u64 = 1;
/// Entry date stamped on every populated order, 2026-01-01T00:00:00Z.
pub const POPULATION_TS: i64 = 1_767_225_600_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub warehouses: i64,
    pub districts: i64,
    /// Customers per district; each has exactly one populated order.
    pub customers: i64,
    pub items: i64,
}

impl Scale {
    pub fn standard(warehouses: i64) -> Self {
        Scale {
            warehouses,
            districts: 10,
            customers: 3000,
            items: 100_000,
        }
    }

    /// A few hundred rows, for tests.
    pub fn tiny() -> Self {
        Scale {
            warehouses: 1,
            districts: 4,
            customers: 30,
            items: 200,
        }
    }

    /// Orders at or above this id start out undelivered.
    pub fn first_undelivered(&self) -> i64 {
        self.customers * 7 / 10 + 1
    }

    pub fn orders_per_district(&self) -> i64 {
        self.customers
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Counts {
    pub order: usize,
    pub new_order: usize,
    pub order_line: usize,
    pub history: usize,
}

impl Counts {
    pub fn of(tables: &Tables) -> Self {
        Counts {
            order: tables.len(ORDER),
            new_order: tables.len(NEW_ORDER),
            order_line: tables.len(ORDER_LINE),
            history: tables.len(HISTORY),
        }
    }
}

const SYLLABLES: [&str; 10] = ["BAR", "OUGHT", "ABLE", "PRI", "PRES", "ESE", "ANTI", "CALLY", "ATION", "EING"];

pub fn last_name(n: i64) -> String {
    let n = n.rem_euclid(1000) as usize;
    format!("{}{}{}", SYLLABLES[n / 100], SYLLABLES[n / 10 % 10], SYLLABLES[n % 10])
}

fn cents(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> Value {
    Value::Decimal(Decimal::from_cents(rng.gen_range(lo..=hi)))
}

fn int(v: i64) -> Value {
    Value::Int(v)
}

/// Rows for every table, each list sorted by primary key.
pub fn population_rows(scale: Scale, seed: u64) -> Vec<Vec<Vec<Value>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: Vec<Vec<Vec<Value>>> = vec![Vec::new(); TABLE_NAMES.len()];
    let undelivered = scale.first_undelivered();

    for i in 1..=scale.items {
        t[ITEM].push(vec![int(i), Value::text(&format!("item-{i}")), cents(&mut rng, 100, 10_000)]);
    }
    for w in 1..=scale.warehouses {
        t[WAREHOUSE].push(vec![
            int(w),
            Value::text(&format!("W{w}")),
            cents(&mut rng, 0, 20),
            Value::Decimal(Decimal::from_units(300_000)),
        ]);
        for i in 1..=scale.items {
            t[STOCK].push(vec![int(w), int(i), int(rng.gen_range(10..=100)), int(0), int(0)]);
        }
        for d in 1..=scale.districts {
            t[DISTRICT].push(vec![
                int(w),
                int(d),
                Value::text(&format!("D{w}-{d}")),
                cents(&mut rng, 0, 20),
                Value::Decimal(Decimal::from_units(30_000)),
                int(scale.orders_per_district() + 1),
            ]);
            let mut owner: Vec<i64> = (1..=scale.customers).collect();
            owner.shuffle(&mut rng);
            let mut last_order = vec![0i64; scale.customers as usize + 1];
            for (o, c) in owner.iter().enumerate() {
                last_order[*c as usize] = o as i64 + 1;
            }
            for c in 1..=scale.customers {
                let name = if c <= 1000 { c - 1 } else { rng.gen_range(0..1000) };
                t[CUSTOMER].push(vec![
                    int(w),
                    int(d),
                    int(c),
                    Value::text(&last_name(name)),
                    cents(&mut rng, 0, 50),
                    Value::Decimal(Decimal::from_cents(-1000)),
                    Value::Decimal(Decimal::from_cents(1000)),
                    int(1),
                    int(0),
                    int(last_order[c as usize]),
                ]);
                let seq = t[HISTORY].len() as i64 + 1;
                t[HISTORY].push(vec![
                    int(0),
                    int(seq),
                    int(w),
                    int(d),
                    int(c),
                    int(w),
                    int(d),
                    Value::Timestamp(POPULATION_TS),
                    Value::Decimal(Decimal::from_cents(1000)),
                ]);
            }
            for o in 1..=scale.orders_per_district() {
                let delivered = o < undelivered;
                let lines = rng.gen_range(5..=14);
                t[ORDER].push(vec![
                    int(w),
                    int(d),
                    int(o),
                    int(owner[o as usize - 1]),
                    Value::Timestamp(POPULATION_TS),
                    if delivered { int(rng.gen_range(1..=10)) } else { Value::Null },
                    int(lines),
                ]);
                if !delivered {
                    t[NEW_ORDER].push(vec![int(w), int(d), int(o)]);
                }
                for n in 1..=lines {
                    t[ORDER_LINE].push(vec![
                        int(w),
                        int(d),
                        int(o),
                        int(n),
                        int(rng.gen_range(1..=scale.items)),
                        int(w),
                        if delivered { Value::Timestamp(POPULATION_TS) } else { Value::Null },
                        int(5),
                        if delivered {
                            Value::Decimal(Decimal::ZERO)
                        } else {
                            cents(&mut rng, 1, 999_999)
                        },
                    ]);
                }
            }
        }
    }
    t
}

/// The populated database as one commit record with serial [`GENESIS_SERIAL`],
/// and the root that results from applying it.
pub fn generate(scale: Scale, seed: u64) -> (CommitRecord, SnapshotRoot) {
    let schema = tpcc_schema();
    let mut tables = Tables::empty(schema.clone());
    let mut writes = Vec::new();
    for (table, rows) in population_rows(scale, seed).into_iter().enumerate() {
        let pk_cols = &schema.table(table).primary_key;
        let ins = rows.iter().map(|r| (project(r, pk_cols), r.clone())).collect::<Vec<(Key, _)>>();
        tables
            .load_sorted(table, rows, GENESIS_SERIAL)
            .expect("population satisfies the schema");
        writes.push(TableWrites {
            table,
            ins,
            ..TableWrites::default()
        });
    }
    let record = CommitRecord {
        serial: GENESIS_SERIAL,
        txn: 0,
        start: GENESIS_SERIAL - 1,
        writes,
        reads: Vec::new(),
        ts: POPULATION_TS,
    };
    let root = SnapshotRoot {
        epoch: GENESIS_SERIAL,
        tables,
    };
    (record, root)
}

/// An empty root to replay the genesis record onto.
pub fn empty_root() -> SnapshotRoot {
    SnapshotRoot::genesis(tpcc_schema())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(last_name(0), "BARBARBAR");
        assert_eq!(last_name(371), "PRICALLYOUGHT");
    }

    #[test]
    fn tiny_counts() {
        let s = Scale::tiny();
        let (rec, root) = generate(s, 7);
        let c = Counts::of(&root.tables);
        let per = (s.warehouses * s.districts) as usize;
        assert_eq!(c.order, per * s.customers as usize);
        assert_eq!(c.new_order, per * (s.customers - s.first_undelivered() + 1) as usize);
        assert_eq!(c.history, per * s.customers as usize);
        assert!(c.order_line >= 5 * c.order && c.order_line <= 14 * c.order);
        assert_eq!(rec.writes.len(), TABLE_NAMES.len());
        root.tables.check_all().unwrap();
    }

    #[test]
    fn deterministic() {
        let (_, a) = generate(Scale::tiny(), 3);
        let (_, b) = generate(Scale::tiny(), 3);
        let (_, c) = generate(Scale::tiny(), 4);
        assert!(a.tables == b.tables);
        assert!(a.tables != c.tables);
    }
}
