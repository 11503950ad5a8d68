//! The `fcwdb` command: `init`, `run`, `verify` and `report`.
//!
//! Exit codes: 0 success, 1 I/O or data error, 2 usage error, 3 the log is
//! not serializable.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use fcwdb::log::{read_log, read_log_file, replay, LogError, LogWriter};
use fcwdb::oracle::is_serializable;
use fcwdb::{Database, SnapshotRoot};
use fcwdb_tpcc::bench::{EngineKind, Metrics, TpccConfig};
use fcwdb_tpcc::population::{empty_root, generate, Scale};
use fcwdb_tpcc::report::{self, RunRow};
use fcwdb_tpcc::schema::TABLE_NAMES;
use fcwdb_tpcc::tasks::TaskKind;
use thiserror::Error;

pub const GENESIS_FILE: &str = "genesis.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Parser)]
#[command(name = "fcwdb", about = "Order-entry benchmark over optimistic and locking engines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Populate a new database directory.
    Init(InitArgs),
    /// Run clerks against a database and record the commit log.
    Run(RunArgs),
    /// Check a commit log for conflict serializability.
    Verify(VerifyArgs),
    /// Summarize a results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub db: PathBuf,
    /// JSON configuration; only `warehouses` and `seed` matter here.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replace an existing database.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub db: PathBuf,
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["occ", "2pl"])]
    pub engine: Option<String>,
    #[arg(long)]
    pub clerks: Option<i64>,
    /// Simulated seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Real seconds per simulated second.
    #[arg(long)]
    pub timescale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Retry a task after a conflict or deadlock.
    #[arg(long)]
    pub retry: bool,
    /// Results CSV to append to; defaults to results.csv in the database directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Commit log path; defaults to <engine>-c<clerks>-s<seed>.jsonl in the database directory.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// Write the plot CSV here instead of printing it.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// ORDER rows before the runs; new orders are measured from here.
    #[arg(long, default_value_t = 30_000)]
    pub base_order: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Init(a) => cmd_init(&a).map(|r| {
            let _ = write!(out, "{}", format_counts(&r.root));
            0
        }),
        Command::Run(a) => cmd_run(&a).map(|r| {
            let _ = write!(out, "{}", format_run(&r));
            0
        }),
        Command::Verify(a) => cmd_verify(&a.log).map(|v| {
            let _ = writeln!(out, "{}", v.line);
            if v.serializable {
                0
            } else {
                3
            }
        }),
        Command::Report(a) => cmd_report(&a).map(|text| {
            let _ = write!(out, "{text}");
            0
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<Option<TpccConfig>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub struct InitReport {
    pub root: SnapshotRoot,
    pub genesis: PathBuf,
}

pub fn cmd_init(a: &InitArgs) -> Result<InitReport, CliError> {
    let cfg = read_config(a.config.as_deref())?.unwrap_or_else(|| TpccConfig::new(EngineKind::Occ, 1, 600.0, 1.0, 0));
    if cfg.warehouses < 1 {
        return Err(CliError::Usage("warehouses must be at least 1".into()));
    }
    if a.db.exists() {
        if !a.force {
            return Err(data(format!("{} already exists; pass --force to replace it", a.db.display())));
        }
        fs::remove_dir_all(&a.db).map_err(data)?;
    }
    fs::create_dir_all(&a.db).map_err(data)?;
    let (record, root) = generate(Scale::standard(cfg.warehouses), cfg.seed);
    let genesis = a.db.join(GENESIS_FILE);
    let mut w = LogWriter::create(&genesis).map_err(data)?;
    w.append(&record.to_log(root.schema())).map_err(data)?;
    let cfg_text = serde_json::to_string_pretty(&cfg).map_err(data)?;
    fs::write(a.db.join(CONFIG_FILE), cfg_text + "\n").map_err(data)?;
    Ok(InitReport { root, genesis })
}

/// Rebuilds the populated state from a database directory.
pub fn load_genesis(db: &Path) -> Result<SnapshotRoot, CliError> {
    let path = db.join(GENESIS_FILE);
    let records = read_log_file(&path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    replay(empty_root(), &records).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// The configuration a run uses: the database's own, then --config, then flags.
pub fn run_config(a: &RunArgs) -> Result<TpccConfig, CliError> {
    let mut cfg = match read_config(a.config.as_deref())? {
        Some(c) => c,
        None => {
            let own = a.db.join(CONFIG_FILE);
            read_config(Some(own.as_path()).filter(|p| p.exists()))?
                .unwrap_or_else(|| TpccConfig::new(EngineKind::Occ, 1, 600.0, 1.0, 0))
        }
    };
    if let Some(e) = &a.engine {
        cfg.engine = EngineKind::parse(e).ok_or_else(|| CliError::Usage(format!("unknown engine {e}")))?;
    }
    if let Some(c) = a.clerks {
        cfg.clerks = c;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    if let Some(t) = a.timescale {
        cfg.time_scale = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.retry_on_conflict |= a.retry;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn default_log_path(db: &Path, cfg: &TpccConfig) -> PathBuf {
    db.join(format!("{}-c{}-s{}.jsonl", cfg.engine.name(), cfg.clerks, cfg.seed))
}

pub struct RunReport {
    pub config: TpccConfig,
    pub metrics: Metrics,
    pub db: Arc<Database>,
    pub log: PathBuf,
    pub csv: PathBuf,
}

pub fn cmd_run(a: &RunArgs) -> Result<RunReport, CliError> {
    let cfg = run_config(a)?;
    let base = load_genesis(&a.db)?;
    run_on(&base, a, cfg)
}

/// `run` against an already loaded base state.
pub fn run_on(base: &SnapshotRoot, a: &RunArgs, cfg: TpccConfig) -> Result<RunReport, CliError> {
    let log = a.log.clone().unwrap_or_else(|| default_log_path(&a.db, &cfg));
    let csv = a.out.clone().unwrap_or_else(|| a.db.join(RESULTS_FILE));
    let sink = LogWriter::create(&log).map_err(|e| data(format!("{}: {e}", log.display())))?;
    let out = fcwdb_tpcc::run_benchmark(base, &cfg, Some(sink)).map_err(|e| CliError::Usage(e.to_string()))?;
    report::append_csv(&csv, &RunRow::of(&out.metrics)).map_err(|e| data(format!("{}: {e}", csv.display())))?;
    Ok(RunReport {
        config: cfg,
        metrics: out.metrics,
        db: out.db,
        log,
        csv,
    })
}

pub struct VerifyReport {
    pub serializable: bool,
    pub records: usize,
    pub line: String,
}

pub fn cmd_verify(path: &Path) -> Result<VerifyReport, CliError> {
    let file = fs::File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let records = read_log(std::io::BufReader::new(file)).map_err(|e| match e {
        LogError::Malformed { line, detail } => data(format!("{}:{line}: malformed record: {detail}", path.display())),
        other => data(other),
    })?;
    let v = is_serializable(&records).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let line = if v.serializable {
        format!(
            "SERIALIZABLE witness={} records={} conservative_edges={}",
            v.witness.len(),
            records.len(),
            v.conservative_edges
        )
    } else {
        let mut cycle = v.cycle.clone();
        if let Some(first) = cycle.iter().enumerate().min_by_key(|(_, t)| **t).map(|(i, _)| i) {
            cycle.rotate_left(first);
        }
        let ids: Vec<String> = cycle.iter().map(|t| format!("T{t}")).collect();
        format!("CYCLE({})", ids.join(","))
    };
    Ok(VerifyReport {
        serializable: v.serializable,
        records: records.len(),
        line,
    })
}

pub fn cmd_report(a: &ReportArgs) -> Result<String, CliError> {
    let text = fs::read_to_string(&a.csv).map_err(|e| data(format!("{}: {e}", a.csv.display())))?;
    let rows = report::parse_csv(&text).map_err(|e| data(format!("{}: {e}", a.csv.display())))?;
    let groups = report::group(&rows);
    let mut out = report::format_tables(&groups, None);
    let plot = report::plot_csv(&groups, a.base_order);
    match &a.plot {
        Some(p) => fs::write(p, plot).map_err(data)?,
        None => out.push_str(&plot),
    }
    Ok(out)
}

/// Row counts of every table, one per line.
pub fn format_counts(root: &SnapshotRoot) -> String {
    let mut s = format!("{:<12}{:>10}\n", "Name", "Initial");
    for (id, name) in TABLE_NAMES.iter().enumerate() {
        s.push_str(&format!("{name:<12}{:>10}\n", root.tables.len(id)));
    }
    s
}

pub fn format_run(r: &RunReport) -> String {
    let m = &r.metrics;
    let mut s = format!(
        "{} engine, {} clerk(s), {} simulated s at scale {}, seed {}\n",
        m.engine, m.clerks, m.duration, m.time_scale, m.seed
    );
    for (name, v) in [
        ("Commits", m.commits as usize),
        ("Exceptions", m.exceptions as usize),
        ("ORDER", m.order),
        ("NEW_ORDER", m.new_order),
        ("ORDER_LINE", m.order_line),
        ("DELIVERY", m.delivery as usize),
    ] {
        s.push_str(&format!("{name:<12}{v:>10}\n"));
    }
    s.push_str(&format!("\n{:<14}{:>8}{:>10}{:>10}{:>8}\n", "task", "commits", "conflicts", "deadlocks", "errors"));
    for k in TaskKind::ALL {
        let t = m.task(k);
        s.push_str(&format!(
            "{:<14}{:>8}{:>10}{:>10}{:>8}\n",
            k.name(),
            t.commits,
            t.conflicts,
            t.deadlocks,
            t.errors
        ));
    }
    let worst = m.per_clerk.iter().map(|c| c.aborts).max().unwrap_or(0);
    s.push_str(&format!(
        "\nmost aborts by one clerk {worst}, longest abort streak {}\nwall {:.1} s, log {}, results {}\n",
        m.max_abort_streak(),
        m.wall_secs,
        r.log.display(),
        r.csv.display()
    ));
    s
}
