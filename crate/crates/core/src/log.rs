//! Commit records, their JSON-lines encoding, and replay.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relational::{ColumnId, RelError, Schema, TableDef, TableId};
use crate::store::SnapshotRoot;
use crate::value::{Key, Value};
use crate::writeset::{apply_writes, RowUpdate, TableWrites};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadMode {
    Specific,
    Columns,
    Block,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowRead {
    pub pk: Key,
    pub cols: Vec<ColumnId>,
    /// Writer serial of the version read; 0 when the row was absent.
    pub ver: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRead {
    pub table: TableId,
    pub mode: ReadMode,
    pub rows: Vec<RowRead>,
    pub cols: Vec<ColumnId>,
    pub keycols: Vec<ColumnId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRecord {
    pub serial: u64,
    pub txn: u64,
    pub start: u64,
    pub writes: Vec<TableWrites>,
    pub reads: Vec<TableRead>,
    /// Wall clock at commit, microseconds since the Unix epoch.
    pub ts: i64,
}

/// Schema-free form of a record, one JSON object per line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub serial: u64,
    pub txn: u64,
    pub start: u64,
    pub writes: Vec<LogWrites>,
    pub reads: Vec<LogRead>,
    pub ts: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogWrites {
    pub table: String,
    pub ins: Vec<Key>,
    pub upd: Vec<LogUpdate>,
    pub del: Vec<Key>,
    /// Full values of each inserted row, parallel to `ins`.
    #[serde(default)]
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogUpdate {
    pub pk: Key,
    pub cols: Vec<String>,
    /// New values, parallel to `cols`.
    #[serde(default)]
    pub vals: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRead {
    pub table: String,
    pub mode: ReadMode,
    pub rows: Vec<LogRowRead>,
    pub cols: Vec<String>,
    pub keycols: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRowRead {
    pub pk: Key,
    pub cols: Vec<String>,
    pub ver: u64,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("serial {serial}: expected serial {expected}")]
    Gap { serial: u64, expected: u64 },
    #[error("serial {serial}: {detail}")]
    Corrupt { serial: u64, detail: String },
    #[error("serial {serial}: {source}")]
    Apply { serial: u64, source: RelError },
}

fn col_names(def: &TableDef, cols: &[ColumnId]) -> Vec<String> {
    cols.iter().map(|&c| def.column_name(c).to_string()).collect()
}

impl CommitRecord {
    pub fn to_log(&self, schema: &Schema) -> LogRecord {
        let writes = self
            .writes
            .iter()
            .map(|w| {
                let def = schema.table(w.table);
                LogWrites {
                    table: def.name.clone(),
                    ins: w.ins.iter().map(|(k, _)| k.clone()).collect(),
                    upd: w
                        .upd
                        .iter()
                        .map(|u| LogUpdate {
                            pk: u.pk.clone(),
                            cols: u.cols().map(|c| def.column_name(c).to_string()).collect(),
                            vals: u.changes.iter().map(|(_, v)| v.clone()).collect(),
                        })
                        .collect(),
                    del: w.del.clone(),
                    rows: w.ins.iter().map(|(_, v)| v.clone()).collect(),
                }
            })
            .collect();
        let reads = self
            .reads
            .iter()
            .map(|r| {
                let def = schema.table(r.table);
                LogRead {
                    table: def.name.clone(),
                    mode: r.mode,
                    rows: r
                        .rows
                        .iter()
                        .map(|rr| LogRowRead {
                            pk: rr.pk.clone(),
                            cols: col_names(def, &rr.cols),
                            ver: rr.ver,
                        })
                        .collect(),
                    cols: col_names(def, &r.cols),
                    keycols: col_names(def, &r.keycols),
                }
            })
            .collect();
        LogRecord {
            serial: self.serial,
            txn: self.txn,
            start: self.start,
            writes,
            reads,
            ts: self.ts,
        }
    }

    /// Resolves names against `schema` and restores typed values.
    pub fn from_log(rec: &LogRecord, schema: &Schema) -> Result<CommitRecord, String> {
        let table = |name: &str| -> Result<&TableDef, String> {
            schema
                .table_id(name)
                .map(|id| schema.table(id))
                .ok_or_else(|| format!("unknown table {name}"))
        };
        let cols = |def: &TableDef, names: &[String]| -> Result<Vec<ColumnId>, String> {
            names
                .iter()
                .map(|n| def.column_id(n).ok_or_else(|| format!("unknown column {}.{n}", def.name)))
                .collect()
        };
        let typed_key = |def: &TableDef, k: &Key| -> Result<Key, String> {
            if k.len() != def.primary_key.len() {
                return Err(format!("{}: key {k} has the wrong arity", def.name));
            }
            k.values()
                .iter()
                .zip(&def.primary_key)
                .map(|(v, &c)| v.clone().coerce(def.columns[c].kind))
                .collect::<Result<Vec<_>, _>>()
                .map(Key::new)
        };
        let mut writes = Vec::new();
        for w in &rec.writes {
            let def = table(&w.table)?;
            if w.rows.len() != w.ins.len() {
                return Err(format!("{}: {} inserted keys but {} rows", def.name, w.ins.len(), w.rows.len()));
            }
            let mut ins = Vec::with_capacity(w.ins.len());
            for (k, row) in w.ins.iter().zip(&w.rows) {
                if row.len() != def.columns.len() {
                    return Err(format!("{}: row for {k} has {} values", def.name, row.len()));
                }
                let values = row
                    .iter()
                    .zip(&def.columns)
                    .map(|(v, cd)| v.clone().coerce(cd.kind))
                    .collect::<Result<Vec<_>, _>>()?;
                let pk = typed_key(def, k)?;
                if def.pk_of(&values) != pk {
                    return Err(format!("{}: row values do not match key {k}", def.name));
                }
                ins.push((pk, values));
            }
            let mut upd = Vec::with_capacity(w.upd.len());
            for u in &w.upd {
                let ids = cols(def, &u.cols)?;
                if u.vals.len() != ids.len() {
                    return Err(format!("{}: update of {} lists {} values", def.name, u.pk, u.vals.len()));
                }
                let changes = ids
                    .into_iter()
                    .zip(&u.vals)
                    .map(|(c, v)| v.clone().coerce(def.columns[c].kind).map(|v| (c, v)))
                    .collect::<Result<Vec<_>, _>>()?;
                upd.push(RowUpdate {
                    pk: typed_key(def, &u.pk)?,
                    changes,
                });
            }
            let del = w.del.iter().map(|k| typed_key(def, k)).collect::<Result<Vec<_>, _>>()?;
            writes.push(TableWrites {
                table: def.id,
                ins,
                upd,
                del,
            });
        }
        let mut reads = Vec::new();
        for r in &rec.reads {
            let def = table(&r.table)?;
            let rows = r
                .rows
                .iter()
                .map(|rr| {
                    Ok(RowRead {
                        pk: typed_key(def, &rr.pk)?,
                        cols: cols(def, &rr.cols)?,
                        ver: rr.ver,
                    })
                })
                .collect::<Result<Vec<_>, String>>()?;
            reads.push(TableRead {
                table: def.id,
                mode: r.mode,
                rows,
                cols: cols(def, &r.cols)?,
                keycols: cols(def, &r.keycols)?,
            });
        }
        Ok(CommitRecord {
            serial: rec.serial,
            txn: rec.txn,
            start: rec.start,
            writes,
            reads,
            ts: rec.ts,
        })
    }
}

/// Appends one JSON line per record and flushes after each.
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(LogWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(&mut self, rec: &LogRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

/// Reads records, skipping blank lines. Line numbers in errors are 1-based.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| LogError::Malformed {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_log_file(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    read_log(io::BufReader::new(File::open(path)?))
}

/// Reapplies `records` in order on top of `base`. The first record must carry
/// serial `base.epoch + 1` and serials must be dense.
pub fn replay(base: SnapshotRoot, records: &[LogRecord]) -> Result<SnapshotRoot, ReplayError> {
    let schema = base.schema().clone();
    let mut root = base;
    for rec in records {
        let expected = root.epoch + 1;
        if rec.serial != expected {
            return Err(ReplayError::Gap {
                serial: rec.serial,
                expected,
            });
        }
        let cr = CommitRecord::from_log(rec, &schema).map_err(|detail| ReplayError::Corrupt {
            serial: rec.serial,
            detail,
        })?;
        let mut tables = root.tables.clone();
        apply_writes(&mut tables, &cr.writes, cr.serial).map_err(|source| ReplayError::Apply {
            serial: rec.serial,
            source,
        })?;
        root = SnapshotRoot {
            epoch: rec.serial,
            tables,
        };
    }
    Ok(root)
}

pub fn now_micros() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_micros() as i64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key;
    use crate::relational::{TableSpec, Tables};
    use crate::value::{Decimal, ValueKind};
    use std::sync::Arc;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new()
                .define_table(
                    TableSpec::new("ACCT")
                        .column("ID", ValueKind::Int)
                        .column("BAL", ValueKind::Decimal)
                        .nullable("AT", ValueKind::Timestamp)
                        .primary_key(&["ID"]),
                )
                .unwrap(),
        )
    }

    fn record(serial: u64) -> CommitRecord {
        CommitRecord {
            serial,
            txn: 7,
            start: serial - 1,
            writes: vec![TableWrites {
                table: 0,
                ins: vec![(key![serial as i64], vec![(serial as i64).into(), Decimal::from_cents(5).into(), Value::Null])],
                upd: vec![],
                del: vec![],
            }],
            reads: vec![TableRead {
                table: 0,
                mode: ReadMode::Specific,
                rows: vec![RowRead { pk: key![1], cols: vec![1], ver: 0 }],
                cols: vec![],
                keycols: vec![0],
            }],
            ts: 1,
        }
    }

    #[test]
    fn encodes_fields_in_order() {
        let s = schema();
        let line = serde_json::to_string(&record(1).to_log(&s)).unwrap();
        assert_eq!(
            line,
            r#"{"serial":1,"txn":7,"start":0,"writes":[{"table":"ACCT","ins":[[1]],"upd":[],"del":[],"rows":[[1,"0.05",null]]}],"reads":[{"table":"ACCT","mode":"specific","rows":[{"pk":[1],"cols":["BAL"],"ver":0}],"cols":[],"keycols":["ID"]}],"ts":1}"#
        );
        let back = CommitRecord::from_log(&serde_json::from_str(&line).unwrap(), &s).unwrap();
        assert_eq!(back, record(1));
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = r#"{"serial":1,"txn":1,"start":0,"writes":[],"reads":[],"ts":0,"extra":1}"#;
        let err = read_log(io::Cursor::new(format!("\n{bad}\n"))).unwrap_err();
        assert!(matches!(err, LogError::Malformed { line: 2, .. }));
    }

    #[test]
    fn replay_empty_gap_and_contents() {
        let s = schema();
        let genesis = SnapshotRoot::genesis(s.clone());
        let same = replay(genesis.clone(), &[]).unwrap();
        assert_eq!(same.epoch, 0);
        assert!(same.tables == genesis.tables);

        let recs: Vec<LogRecord> = (1..=3).map(|i| record(i).to_log(&s)).collect();
        let root = replay(genesis.clone(), &recs).unwrap();
        assert_eq!(root.epoch, 3);
        assert_eq!(root.tables.len(0), 3);
        assert_eq!(root.tables.get(0, &key![2]).unwrap().writer, 2);

        let gap = vec![recs[0].clone(), recs[2].clone()];
        assert!(matches!(replay(genesis, &gap), Err(ReplayError::Gap { serial: 3, expected: 2 })));
    }

    #[test]
    fn replay_matches_direct_application() {
        let s = schema();
        let mut live = Tables::empty(s.clone());
        live.insert(0, vec![1.into(), Decimal::ZERO.into(), Value::Null], 1).unwrap();
        let rec = CommitRecord {
            serial: 2,
            txn: 1,
            start: 1,
            writes: vec![TableWrites {
                table: 0,
                ins: vec![],
                upd: vec![RowUpdate { pk: key![1], changes: vec![(2, Value::Timestamp(99))] }],
                del: vec![],
            }],
            reads: vec![],
            ts: 0,
        };
        let base = SnapshotRoot { epoch: 1, tables: live.clone() };
        apply_writes(&mut live, &rec.writes, 2).unwrap();
        let replayed = replay(base, &[rec.to_log(&s)]).unwrap();
        assert!(replayed.tables == live);
    }
}
