//! Result rows: the per-run CSV and the grouped comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::Metrics;

pub const CSV_HEADER: &str = "engine,clerks,duration,timescale,seed,commits,exceptions,order,new_order,order_line,delivery";

/// One line of the results CSV. Field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub engine: String,
    pub clerks: i64,
    pub duration: f64,
    pub timescale: f64,
    pub seed: u64,
    pub commits: u64,
    pub exceptions: u64,
    pub order: u64,
    pub new_order: u64,
    pub order_line: u64,
    pub delivery: u64,
}

impl RunRow {
    pub fn of(m: &Metrics) -> Self {
        RunRow {
            engine: m.engine.clone(),
            clerks: m.clerks,
            duration: m.duration,
            timescale: m.time_scale,
            seed: m.seed,
            commits: m.commits,
            exceptions: m.exceptions,
            order: m.order as u64,
            new_order: m.new_order as u64,
            order_line: m.order_line as u64,
            delivery: m.delivery,
        }
    }
}

/// Appends `row` to a results file, writing the header first when the file is new or empty.
pub fn append_csv(path: &Path, row: &RunRow) -> Result<(), csv::Error> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

/// Parses a results CSV with a header line.
pub fn parse_csv(text: &str) -> Result<Vec<RunRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

/// New orders a clerk population could place at most: 16 per clerk per ten minutes.
pub fn max_possible(clerks: i64, duration: f64) -> u64 {
    (16.0 * clerks as f64 * duration / 600.0).floor() as u64
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Median of each counter across the runs of one engine and clerk count.
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub engine: String,
    pub clerks: i64,
    pub runs: usize,
    pub duration: f64,
    pub commits: u64,
    pub exceptions: u64,
    pub order: u64,
    pub new_order: u64,
    pub order_line: u64,
    pub delivery: u64,
}

pub fn group(rows: &[RunRow]) -> Vec<Group> {
    let mut by: BTreeMap<(String, i64), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        by.entry((r.engine.clone(), r.clerks)).or_default().push(r);
    }
    by.into_iter()
        .map(|((engine, clerks), rs)| {
            let m = |f: fn(&RunRow) -> u64| median(rs.iter().map(|r| f(r)).collect());
            Group {
                engine,
                clerks,
                runs: rs.len(),
                duration: rs[0].duration,
                commits: m(|r| r.commits),
                exceptions: m(|r| r.exceptions),
                order: m(|r| r.order),
                new_order: m(|r| r.new_order),
                order_line: m(|r| r.order_line),
                delivery: m(|r| r.delivery),
            }
        })
        .collect()
}

/// Table-I layout: one column per clerk count, one block per engine. The
/// optional initial column shows the populated counts.
pub fn format_tables(groups: &[Group], initial: Option<&Metrics>) -> String {
    let mut out = String::new();
    let mut engines: Vec<&str> = groups.iter().map(|g| g.engine.as_str()).collect();
    engines.dedup();
    for engine in engines {
        let cols: Vec<&Group> = groups.iter().filter(|g| g.engine == engine).collect();
        let _ = writeln!(out, "{engine}");
        let mut header = format!("{:<12}", "Name");
        if initial.is_some() {
            let _ = write!(header, "{:>10}", "Initial");
        }
        for g in &cols {
            let _ = write!(header, "{:>12}", format!("{} clerk{}", g.clerks, if g.clerks == 1 { "" } else { "s" }));
        }
        let _ = writeln!(out, "{}", header.trim_end());
        let rows: [(&str, fn(&Group) -> u64, u64); 7] = [
            ("Commits", |g| g.commits, 0),
            ("Exceptions", |g| g.exceptions, 0),
            ("ORDER", |g| g.order, initial.map_or(0, |m| m.order as u64)),
            ("NEW_ORDER", |g| g.new_order, initial.map_or(0, |m| m.new_order as u64)),
            ("ORDER_LINE", |g| g.order_line, initial.map_or(0, |m| m.order_line as u64)),
            ("DELIVERY", |g| g.delivery, 0),
            ("Max orders", |g| max_possible(g.clerks, g.duration), 0),
        ];
        for (name, f, init) in rows {
            let mut line = format!("{name:<12}");
            if initial.is_some() {
                let _ = write!(line, "{init:>10}");
            }
            for g in &cols {
                let _ = write!(line, "{:>12}", f(g));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out.push('\n');
    }
    out
}

/// Plot-ready CSV: one row per clerk count, new orders per engine next to the
/// maximum possible. New orders are ORDER growth over `base_order`.
pub fn plot_csv(groups: &[Group], base_order: u64) -> String {
    let mut engines: Vec<String> = groups.iter().map(|g| g.engine.clone()).collect();
    engines.sort();
    engines.dedup();
    let mut clerks: BTreeMap<i64, (f64, BTreeMap<String, u64>)> = BTreeMap::new();
    for g in groups {
        let e = clerks.entry(g.clerks).or_insert((g.duration, BTreeMap::new()));
        e.1.insert(g.engine.clone(), g.order.saturating_sub(base_order));
    }
    let mut out = String::from("clerks,max_possible");
    for e in &engines {
        let _ = write!(out, ",{e}_new_orders");
    }
    out.push('\n');
    for (c, (duration, per)) in clerks {
        let _ = write!(out, "{c},{}", max_possible(c, duration));
        for e in &engines {
            match per.get(e) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(engine: &str, clerks: i64, commits: u64) -> RunRow {
        RunRow {
            engine: engine.into(),
            clerks,
            duration: 600.0,
            timescale: 1.0 / 60.0,
            seed: 1,
            commits,
            exceptions: 2,
            order: 30_100,
            new_order: 9_090,
            order_line: 286_000,
            delivery: 3,
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("fcwdb-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("runs.csv");
        let _ = std::fs::remove_file(&path);
        let rows = vec![row("occ", 10, 300), row("2pl", 30, 200)];
        for r in &rows {
            append_csv(&path, r).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_csv(&text).unwrap(), rows);
        assert!(parse_csv("engine,clerks\nocc,1\n").is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn max_possible_matches_cap() {
        assert_eq!(max_possible(30, 600.0), 480);
        assert_eq!(max_possible(1, 600.0), 16);
        assert_eq!(max_possible(10, 300.0), 80);
    }

    #[test]
    fn grouping_takes_medians() {
        let rows = vec![row("occ", 10, 5), row("occ", 10, 9), row("occ", 10, 7), row("2pl", 10, 1)];
        let g = group(&rows);
        assert_eq!(g.len(), 2);
        let occ = g.iter().find(|g| g.engine == "occ").unwrap();
        assert_eq!((occ.runs, occ.commits), (3, 7));
        let table = format_tables(&g, None);
        assert!(table.contains("Commits"));
        assert!(table.contains("10 clerks"));
        let plot = plot_csv(&g, 30_000);
        assert_eq!(plot.lines().next().unwrap(), "clerks,max_possible,2pl_new_orders,occ_new_orders");
        assert_eq!(plot.lines().nth(1).unwrap(), "10,160,100,100");
    }
}
