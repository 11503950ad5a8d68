//! Buffered writes and the order in which they are applied to a root.

use std::collections::{BTreeMap, BTreeSet};

use crate::relational::{ColumnId, DeleteMode, RelError, TableId, Tables};
use crate::value::{Key, Value};

/// Frozen writes for one table, as applied at commit and stored in the log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TableWrites {
    pub table: TableId,
    pub ins: Vec<(Key, Vec<Value>)>,
    pub upd: Vec<RowUpdate>,
    pub del: Vec<Key>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowUpdate {
    pub pk: Key,
    pub changes: Vec<(ColumnId, Value)>,
}

impl RowUpdate {
    pub fn cols(&self) -> impl Iterator<Item = ColumnId> + '_ {
        self.changes.iter().map(|(c, _)| *c)
    }
}

impl TableWrites {
    pub fn is_empty(&self) -> bool {
        self.ins.is_empty() && self.upd.is_empty() && self.del.is_empty()
    }

    /// Every primary key this table's writes touch.
    pub fn touched(&self) -> impl Iterator<Item = &Key> {
        self.ins
            .iter()
            .map(|(k, _)| k)
            .chain(self.upd.iter().map(|u| &u.pk))
            .chain(self.del.iter())
    }
}

#[derive(Clone, Debug, Default)]
struct TableBuffer {
    inserts: BTreeMap<Key, Vec<Value>>,
    updates: BTreeMap<Key, BTreeMap<ColumnId, Value>>,
    deletes: BTreeSet<Key>,
}

/// Per-table inserts, updates and deletes. A key lives in at most one of the
/// three collections.
#[derive(Clone, Debug, Default)]
pub struct WriteSet {
    tables: BTreeMap<TableId, TableBuffer>,
}

impl WriteSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tables
            .values()
            .all(|b| b.inserts.is_empty() && b.updates.is_empty() && b.deletes.is_empty())
    }

    pub fn touches(&self, table: TableId, pk: &Key) -> bool {
        self.tables.get(&table).is_some_and(|b| {
            b.inserts.contains_key(pk) || b.updates.contains_key(pk) || b.deletes.contains(pk)
        })
    }

    /// A delete followed by an insert of the same key becomes an update of
    /// every non-key column.
    pub fn insert(&mut self, table: TableId, pk: Key, values: Vec<Value>, pk_cols: &[ColumnId]) {
        let b = self.tables.entry(table).or_default();
        if b.deletes.remove(&pk) {
            let changes = values
                .into_iter()
                .enumerate()
                .filter(|(c, _)| !pk_cols.contains(c))
                .collect();
            b.updates.insert(pk, changes);
        } else {
            b.inserts.insert(pk, values);
        }
    }

    /// Updates of a key inserted by this transaction fold into the insert.
    pub fn update(&mut self, table: TableId, pk: &Key, changes: &[(ColumnId, Value)]) {
        let b = self.tables.entry(table).or_default();
        if let Some(row) = b.inserts.get_mut(pk) {
            for (c, v) in changes {
                row[*c] = v.clone();
            }
            return;
        }
        let entry = b.updates.entry(pk.clone()).or_default();
        for (c, v) in changes {
            entry.insert(*c, v.clone());
        }
    }

    /// Deleting a key inserted by this transaction leaves no trace.
    pub fn delete(&mut self, table: TableId, pk: &Key) {
        let b = self.tables.entry(table).or_default();
        if b.inserts.remove(pk).is_some() {
            return;
        }
        b.updates.remove(pk);
        b.deletes.insert(pk.clone());
    }

    pub fn freeze(&self) -> Vec<TableWrites> {
        self.tables
            .iter()
            .map(|(&table, b)| TableWrites {
                table,
                ins: b.inserts.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                upd: b
                    .updates
                    .iter()
                    .map(|(k, ch)| RowUpdate {
                        pk: k.clone(),
                        changes: ch.iter().map(|(c, v)| (*c, v.clone())).collect(),
                    })
                    .collect(),
                del: b.deletes.iter().cloned().collect(),
            })
            .filter(|w| !w.is_empty())
            .collect()
    }
}

/// Applies frozen writes with full constraint checks and no cascading.
///
/// Deletes run first, children before parents; then each table in parent-first
/// order gets its updates followed by its inserts.
pub fn apply_writes(tables: &mut Tables, writes: &[TableWrites], writer: u64) -> Result<(), RelError> {
    let mut order: Vec<&TableWrites> = writes.iter().collect();
    order.sort_by_key(|w| w.table);
    for w in order.iter().rev() {
        for pk in &w.del {
            tables.delete(w.table, pk, DeleteMode::Restrict)?;
        }
    }
    for w in &order {
        for u in &w.upd {
            tables.update(w.table, &u.pk, &u.changes, writer)?;
        }
        if tables.len(w.table) == 0 && w.ins.len() > 1 {
            let rows = w.ins.iter().map(|(_, v)| v.clone()).collect();
            tables.load_sorted(w.table, rows, writer)?;
        } else {
            for (_, values) in &w.ins {
                tables.insert(w.table, values.clone(), writer)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key;

    #[test]
    fn folding_rules() {
        let mut ws = WriteSet::new();
        ws.insert(0, key![1], vec![1.into(), 10.into()], &[0]);
        ws.update(0, &key![1], &[(1, 11.into())]);
        let f = ws.freeze();
        assert_eq!(f[0].ins, vec![(key![1], vec![1.into(), 11.into()])]);
        assert!(f[0].upd.is_empty());

        ws.delete(0, &key![1]);
        assert!(ws.is_empty());
        assert!(ws.freeze().is_empty());

        ws.update(0, &key![2], &[(1, 5.into())]);
        ws.delete(0, &key![2]);
        ws.insert(0, key![2], vec![2.into(), 6.into()], &[0]);
        let f = ws.freeze();
        assert!(f[0].ins.is_empty() && f[0].del.is_empty());
        assert_eq!(f[0].upd[0].changes, vec![(1, 6.into())]);
        assert!(ws.touches(0, &key![2]));
        assert!(!ws.touches(0, &key![1]));
    }
}
