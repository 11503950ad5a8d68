//! Clerk scripts and the multi-clerk benchmark driver.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use fcwdb::log::{now_micros, LogWriter};
use fcwdb::occ::OccEngine;
use fcwdb::twopl::TplEngine;
use fcwdb::{Database, Decimal, Engine, SnapshotRoot, Tables, TxnError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::{Counts, Scale};
use crate::schema::*;
use crate::tasks::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineKind {
    #[serde(rename = "occ")]
    Occ,
    #[serde(rename = "2pl")]
    TwoPhase,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Occ => "occ",
            EngineKind::TwoPhase => "2pl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "occ" => Some(EngineKind::Occ),
            "2pl" => Some(EngineKind::TwoPhase),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TpccConfig {
    #[serde(default = "one")]
    pub warehouses: i64,
    /// Clerks per warehouse.
    #[serde(default = "one")]
    pub clerks: i64,
    /// Simulated seconds each clerk keeps starting tasks for.
    #[serde(default = "ten_minutes")]
    pub duration: f64,
    /// Real seconds per simulated second.
    #[serde(default = "one_f")]
    pub time_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "occ")]
    pub engine: EngineKind,
    #[serde(default)]
    pub retry_on_conflict: bool,
}

fn one() -> i64 {
    1
}
fn one_f() -> f64 {
    1.0
}
fn ten_minutes() -> f64 {
    600.0
}
fn occ() -> EngineKind {
    EngineKind::Occ
}

impl TpccConfig {
    pub fn new(engine: EngineKind, clerks: i64, duration: f64, time_scale: f64, seed: u64) -> Self {
        TpccConfig {
            warehouses: 1,
            clerks,
            duration,
            time_scale,
            seed,
            engine,
            retry_on_conflict: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.clerks < 1 {
            return Err(ConfigError::Invalid("clerks must be at least 1".into()));
        }
        if self.warehouses < 1 {
            return Err(ConfigError::Invalid("warehouses must be at least 1".into()));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(ConfigError::Invalid("timeScale must be positive".into()));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(ConfigError::Invalid("duration must be non-negative".into()));
        }
        Ok(())
    }

    pub fn total_clerks(&self) -> i64 {
        self.clerks * self.warehouses
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("database has {have} warehouses, configuration needs {want}")]
    Warehouses { have: i64, want: i64 },
}

/// Simulated-second delays around each task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delays {
    pub keying: f64,
    pub per_line: f64,
    pub think: f64,
}

pub fn delays(kind: TaskKind) -> Delays {
    match kind {
        TaskKind::NewOrder => Delays {
            keying: 2.0,
            per_line: 0.8,
            think: 10.0,
        },
        TaskKind::Payment => Delays {
            keying: 3.0,
            per_line: 0.0,
            think: 10.0,
        },
        _ => Delays {
            keying: 2.0,
            per_line: 0.0,
            think: 5.0,
        },
    }
}

/// NewOrders a clerk may start in one window.
pub const NEW_ORDER_CAP: u32 = 16;
/// Window length in simulated seconds.
pub const CAP_WINDOW: f64 = 600.0;

/// The seeded task stream of one clerk.
pub struct ClerkScript {
    rng: ChaCha8Rng,
    scale: Scale,
    pub w: i64,
    pub home_district: i64,
    window: i64,
    in_window: u32,
}

impl ClerkScript {
    /// `index` counts clerks from 0 across all warehouses.
    pub fn new(seed: u64, index: i64, clerks_per_warehouse: i64, scale: Scale) -> Self {
        let stream = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1);
        ClerkScript {
            rng: ChaCha8Rng::seed_from_u64(stream),
            scale,
            w: index / clerks_per_warehouse + 1,
            home_district: (index % clerks_per_warehouse) % scale.districts + 1,
            window: 0,
            in_window: 0,
        }
    }

    fn draw_kind(&mut self, scripted: f64) -> TaskKind {
        let window = (scripted / CAP_WINDOW).floor() as i64;
        if window != self.window {
            self.window = window;
            self.in_window = 0;
        }
        loop {
            let kind = match self.rng.gen_range(0..100) {
                0..=44 => TaskKind::NewOrder,
                45..=87 => TaskKind::Payment,
                88..=91 => TaskKind::OrderStatus,
                92..=95 => TaskKind::Delivery,
                _ => TaskKind::StockLevel,
            };
            if kind == TaskKind::NewOrder {
                if self.in_window >= NEW_ORDER_CAP {
                    continue;
                }
                self.in_window += 1;
            }
            return kind;
        }
    }

    /// Next task, given the simulated seconds of delay the script has consumed.
    pub fn next_task(&mut self, scripted: f64) -> Task {
        let s = self.scale;
        let (w, d) = (self.w, self.home_district);
        match self.draw_kind(scripted) {
            TaskKind::NewOrder => {
                let n = self.rng.gen_range(5..=14usize).min(s.items as usize);
                let mut items = BTreeSet::new();
                let mut lines = Vec::with_capacity(n);
                while lines.len() < n {
                    let item = self.rng.gen_range(1..=s.items);
                    if items.insert(item) {
                        lines.push(OrderLineInput {
                            item,
                            supply_w: w,
                            quantity: self.rng.gen_range(1..=10),
                        });
                    }
                }
                Task::NewOrder(NewOrderInput {
                    w,
                    d,
                    c: self.rng.gen_range(1..=s.customers),
                    lines,
                    block_warehouse: false,
                })
            }
            TaskKind::Payment => Task::Payment(PaymentInput {
                w,
                d,
                c: self.rng.gen_range(1..=s.customers),
                amount: Decimal::from_cents(self.rng.gen_range(100..=500_000)),
            }),
            TaskKind::OrderStatus => Task::OrderStatus(OrderStatusInput {
                w,
                d,
                c: self.rng.gen_range(1..=s.customers),
            }),
            TaskKind::Delivery => Task::Delivery(DeliveryInput {
                w,
                districts: s.districts,
                carrier: self.rng.gen_range(1..=10),
            }),
            TaskKind::StockLevel => Task::StockLevel(StockLevelInput {
                w,
                d,
                threshold: self.rng.gen_range(10..=20),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TaskStats {
    pub commits: u64,
    pub conflicts: u64,
    pub deadlocks: u64,
    /// Failures other than conflicts and deadlocks.
    pub errors: u64,
}

impl TaskStats {
    pub fn aborts(&self) -> u64 {
        self.conflicts + self.deadlocks + self.errors
    }

    fn add(&mut self, o: &TaskStats) {
        self.commits += o.commits;
        self.conflicts += o.conflicts;
        self.deadlocks += o.deadlocks;
        self.errors += o.errors;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClerkStats {
    pub commits: u64,
    pub aborts: u64,
    /// Longest run of consecutive aborted attempts.
    pub max_abort_streak: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub engine: String,
    pub clerks: i64,
    pub warehouses: i64,
    pub duration: f64,
    pub time_scale: f64,
    pub seed: u64,
    pub commits: u64,
    pub exceptions: u64,
    pub per_task: [TaskStats; 5],
    pub per_clerk: Vec<ClerkStats>,
    pub order: usize,
    pub new_order: usize,
    pub order_line: usize,
    pub history: usize,
    /// Districts delivered by committed Delivery tasks.
    pub delivery: u64,
    /// Committed payment totals per (warehouse, district).
    pub payments: BTreeMap<(i64, i64), Decimal>,
    /// Committed NewOrders per (warehouse, district).
    pub new_orders: BTreeMap<(i64, i64), u64>,
    /// Final NEW_ORDER rows removed by committed deliveries.
    pub delivered_orders: u64,
    pub wall_secs: f64,
}

impl Metrics {
    /// Counts of a freshly populated database, before any clerk has run.
    pub fn initial(tables: &Tables) -> Self {
        let mut m = Metrics {
            engine: "initial".into(),
            ..Metrics::default()
        };
        m.set_counts(Counts::of(tables));
        m
    }

    fn set_counts(&mut self, c: Counts) {
        self.order = c.order;
        self.new_order = c.new_order;
        self.order_line = c.order_line;
        self.history = c.history;
    }

    pub fn task(&self, kind: TaskKind) -> &TaskStats {
        &self.per_task[kind.index()]
    }

    pub fn deadlocks(&self) -> u64 {
        self.per_task.iter().map(|t| t.deadlocks).sum()
    }

    pub fn max_abort_streak(&self) -> u64 {
        self.per_clerk.iter().map(|c| c.max_abort_streak).max().unwrap_or(0)
    }

    fn merge(&mut self, c: &ClerkRun) {
        for (mine, theirs) in self.per_task.iter_mut().zip(&c.per_task) {
            mine.add(theirs);
        }
        for (k, v) in &c.payments {
            *self.payments.entry(*k).or_insert(Decimal::ZERO) += *v;
        }
        for (k, v) in &c.new_orders {
            *self.new_orders.entry(*k).or_insert(0) += *v;
        }
        self.delivered_orders += c.delivered;
        self.delivery += c.delivered;
        self.per_clerk.push(c.stats);
    }
}

#[derive(Default)]
struct ClerkRun {
    per_task: [TaskStats; 5],
    stats: ClerkStats,
    streak: u64,
    payments: BTreeMap<(i64, i64), Decimal>,
    new_orders: BTreeMap<(i64, i64), u64>,
    delivered: u64,
}

impl ClerkRun {
    fn record(&mut self, kind: TaskKind, result: &Result<Outcome, TxnError>) {
        let t = &mut self.per_task[kind.index()];
        match result {
            Ok(outcome) => {
                t.commits += 1;
                self.stats.commits += 1;
                self.streak = 0;
                match outcome {
                    Outcome::NewOrder { w, d, .. } => *self.new_orders.entry((*w, *d)).or_insert(0) += 1,
                    Outcome::Payment { w, d, amount } => {
                        *self.payments.entry((*w, *d)).or_insert(Decimal::ZERO) += *amount
                    }
                    Outcome::Delivery { delivered } => self.delivered += delivered.len() as u64,
                    _ => {}
                }
            }
            Err(e) => {
                match e {
                    TxnError::Conflict(_) => t.conflicts += 1,
                    TxnError::Deadlock => t.deadlocks += 1,
                    _ => t.errors += 1,
                }
                self.stats.aborts += 1;
                self.streak += 1;
                self.stats.max_abort_streak = self.stats.max_abort_streak.max(self.streak);
            }
        }
    }
}

/// Runs one task as a whole transaction: body, then commit, rolling back on failure.
pub fn attempt(engine: &dyn Engine, task: &Task, ctx: Ctx, pause: &mut dyn FnMut(Step)) -> Result<Outcome, TxnError> {
    let mut tx = engine.begin();
    match run_task(tx.as_mut(), task, ctx, pause) {
        Ok(outcome) => tx.commit().map(|_| outcome),
        Err(e) => {
            let _ = tx.rollback();
            Err(e)
        }
    }
}

/// Scale of a populated database.
pub fn scale_of(tables: &Tables) -> Scale {
    let warehouses = tables.len(WAREHOUSE) as i64;
    let districts = if warehouses == 0 { 0 } else { tables.len(DISTRICT) as i64 / warehouses };
    let customers = if districts == 0 {
        0
    } else {
        tables.len(CUSTOMER) as i64 / (warehouses * districts)
    };
    Scale {
        warehouses,
        districts,
        customers,
        items: tables.len(ITEM) as i64,
    }
}

pub fn make_engine(kind: EngineKind, db: Arc<Database>) -> Box<dyn Engine> {
    match kind {
        EngineKind::Occ => Box::new(OccEngine::new(db)),
        EngineKind::TwoPhase => Box::new(TplEngine::new(db)),
    }
}

pub struct RunOutput {
    pub metrics: Metrics,
    pub db: Arc<Database>,
}

/// Runs every clerk on its own thread against a database opened at `base`.
pub fn run_benchmark(base: &SnapshotRoot, cfg: &TpccConfig, log: Option<LogWriter>) -> Result<RunOutput, ConfigError> {
    cfg.validate()?;
    let scale = scale_of(&base.tables);
    if scale.warehouses < cfg.warehouses {
        return Err(ConfigError::Warehouses {
            have: scale.warehouses,
            want: cfg.warehouses,
        });
    }
    let db = match log {
        Some(sink) => Database::with_log(base.clone(), sink),
        None => Database::new(base.clone()),
    };
    let engine = make_engine(cfg.engine, db.clone());
    let engine: &dyn Engine = engine.as_ref();
    let runs = Mutex::new(Vec::new());
    let started = Instant::now();
    let sim_now = || started.elapsed().as_secs_f64() / cfg.time_scale;

    thread::scope(|s| {
        for index in 0..cfg.total_clerks() {
            let runs = &runs;
            s.spawn(move || {
                let run = clerk(engine, cfg, scale, index, &sim_now);
                runs.lock().unwrap().push((index, run));
            });
        }
    });

    let mut runs = runs.into_inner().unwrap();
    runs.sort_by_key(|(i, _)| *i);
    let mut m = Metrics {
        engine: cfg.engine.name().into(),
        clerks: cfg.clerks,
        warehouses: cfg.warehouses,
        duration: cfg.duration,
        time_scale: cfg.time_scale,
        seed: cfg.seed,
        ..Metrics::default()
    };
    for (_, run) in &runs {
        m.merge(run);
    }
    m.commits = m.per_task.iter().map(|t| t.commits).sum();
    m.exceptions = m.per_task.iter().map(|t| t.aborts()).sum();
    m.set_counts(Counts::of(&db.load().tables));
    m.wall_secs = started.elapsed().as_secs_f64();
    Ok(RunOutput { metrics: m, db })
}

fn sleep_sim(cfg: &TpccConfig, secs: f64) {
    if secs > 0.0 {
        thread::sleep(Duration::from_secs_f64(secs * cfg.time_scale));
    }
}

fn clerk(engine: &dyn Engine, cfg: &TpccConfig, scale: Scale, index: i64, sim_now: &dyn Fn() -> f64) -> ClerkRun {
    let mut script = ClerkScript::new(cfg.seed, index, cfg.clerks, scale);
    let mut run = ClerkRun::default();
    let mut scripted = 0.0;
    let mut seq = 0;
    while sim_now() < cfg.duration {
        let task = script.next_task(scripted);
        let kind = task.kind();
        let d = delays(kind);
        loop {
            seq += 1;
            let ctx = Ctx {
                clerk: index + 1,
                seq,
                now: now_micros(),
            };
            let mut pause = |step: Step| {
                let secs = match step {
                    Step::Keying => d.keying,
                    Step::Line => d.per_line,
                };
                sleep_sim(cfg, secs);
            };
            let result = attempt(engine, &task, ctx, &mut pause);
            run.record(kind, &result);
            let retry = matches!(result, Err(TxnError::Conflict(_) | TxnError::Deadlock));
            if !(retry && cfg.retry_on_conflict && sim_now() < cfg.duration) {
                break;
            }
        }
        let keyed = d.keying
            + match &task {
                Task::NewOrder(i) => d.per_line * i.lines.len() as f64,
                _ => 0.0,
            };
        scripted += keyed + d.think;
        sleep_sim(cfg, d.think);
    }
    run
}
