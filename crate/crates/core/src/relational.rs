//! Tables, unique indexes and constraint enforcement over persistent maps.
//!
//! All operations work on [`Tables`], a cheap-to-clone value holding one
//! [`TableState`] per table. A failed operation leaves the value untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Bound;
use std::sync::Arc;

use thiserror::Error;

use crate::pmap::{MapError, PersistentMap};
use crate::value::{Key, Value, ValueKind};

pub type TableId = usize;
pub type ColumnId = usize;

/// Writer serial carried by rows that exist only inside an uncommitted transaction.
pub const PENDING_WRITER: u64 = u64::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("table {0} already exists")]
    DuplicateTable(String),
    #[error("table {table}: duplicate column {column}")]
    DuplicateColumn { table: String, column: String },
    #[error("table {table}: unknown column {column}")]
    UnknownColumn { table: String, column: String },
    #[error("table {0}: primary key must not be empty")]
    EmptyPrimaryKey(String),
    #[error("table {table}: foreign key references unknown table {parent}")]
    DanglingForeignKey { table: String, parent: String },
    #[error("table {table}: foreign key target {parent}{columns:?} is not a primary or unique key")]
    ForeignKeyTarget {
        table: String,
        parent: String,
        columns: Vec<String>,
    },
    #[error("table {table}: foreign key column count or kinds do not match {parent}")]
    ForeignKeyShape { table: String, parent: String },
    #[error("table {0}: NO ACTION referential actions are not supported")]
    NoActionRejected(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelError {
    #[error("{table}: duplicate key {key}")]
    UniqueViolation { table: String, key: Key },
    #[error("{table}: {detail}")]
    ReferentialViolation { table: String, detail: String },
    #[error("{table}.{column}: {detail}")]
    TypeMismatch {
        table: String,
        column: String,
        detail: String,
    },
    #[error("{table}: no row with key {key}")]
    NotFound { table: String, key: Key },
    #[error("{table}: {detail}")]
    Usage { table: String, detail: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ValueKind,
    pub nullable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FkAction {
    Cascade,
    Restrict,
    /// Accepted by the builder only so that it can be refused at definition time.
    NoAction,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForeignKeyDef {
    pub columns: Vec<ColumnId>,
    pub parent: TableId,
    pub parent_columns: Vec<ColumnId>,
    pub action: FkAction,
}

#[derive(Clone, Debug)]
pub struct TableDef {
    pub id: TableId,
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub primary_key: Vec<ColumnId>,
    pub unique_keys: Vec<Vec<ColumnId>>,
    pub foreign_keys: Vec<ForeignKeyDef>,
}

impl TableDef {
    pub fn column_id(&self, name: &str) -> Option<ColumnId> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_name(&self, id: ColumnId) -> &str {
        &self.columns[id].name
    }

    pub fn is_pk_column(&self, id: ColumnId) -> bool {
        self.primary_key.contains(&id)
    }

    pub fn pk_of(&self, values: &[Value]) -> Key {
        project(values, &self.primary_key)
    }

    /// Index into `unique_keys` for exactly this column list, if declared.
    fn unique_index_of(&self, cols: &[ColumnId]) -> Option<usize> {
        self.unique_keys.iter().position(|u| u.as_slice() == cols)
    }
}

pub fn project(values: &[Value], cols: &[ColumnId]) -> Key {
    Key::new(cols.iter().map(|&c| values[c].clone()).collect())
}

struct ForeignKeySpec {
    columns: Vec<String>,
    parent: String,
    parent_columns: Vec<String>,
    action: FkAction,
}

/// Unresolved table definition, referring to columns and tables by name.
pub struct TableSpec {
    name: String,
    columns: Vec<ColumnDef>,
    primary_key: Vec<String>,
    unique_keys: Vec<Vec<String>>,
    foreign_keys: Vec<ForeignKeySpec>,
}

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

impl TableSpec {
    pub fn new(name: &str) -> Self {
        TableSpec {
            name: name.to_string(),
            columns: Vec::new(),
            primary_key: Vec::new(),
            unique_keys: Vec::new(),
            foreign_keys: Vec::new(),
        }
    }

    pub fn column(mut self, name: &str, kind: ValueKind) -> Self {
        self.columns.push(ColumnDef {
            name: name.to_string(),
            kind,
            nullable: false,
        });
        self
    }

    pub fn nullable(mut self, name: &str, kind: ValueKind) -> Self {
        self.columns.push(ColumnDef {
            name: name.to_string(),
            kind,
            nullable: true,
        });
        self
    }

    pub fn primary_key(mut self, cols: &[&str]) -> Self {
        self.primary_key = names(cols);
        self
    }

    pub fn unique(mut self, cols: &[&str]) -> Self {
        self.unique_keys.push(names(cols));
        self
    }

    pub fn foreign_key(mut self, cols: &[&str], parent: &str, parent_cols: &[&str], action: FkAction) -> Self {
        self.foreign_keys.push(ForeignKeySpec {
            columns: names(cols),
            parent: parent.to_string(),
            parent_columns: names(parent_cols),
            action,
        });
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct Schema {
    pub version: u64,
    tables: Vec<Arc<TableDef>>,
    /// For each table, the (child table, foreign key index) pairs that reference it.
    children: Vec<Vec<(TableId, usize)>>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tables(&self) -> &[Arc<TableDef>] {
        &self.tables
    }

    pub fn table(&self, id: TableId) -> &TableDef {
        &self.tables[id]
    }

    pub fn table_id(&self, name: &str) -> Option<TableId> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn children_of(&self, id: TableId) -> &[(TableId, usize)] {
        &self.children[id]
    }

    /// Returns a schema extended with `spec`. Foreign keys may only point at
    /// tables defined earlier, so definition order is a valid parent-first order.
    pub fn define_table(&self, spec: TableSpec) -> Result<Schema, SchemaError> {
        let tname = spec.name.clone();
        if self.table_id(&tname).is_some() {
            return Err(SchemaError::DuplicateTable(tname));
        }
        let mut seen = BTreeSet::new();
        for c in &spec.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(SchemaError::DuplicateColumn {
                    table: tname,
                    column: c.name.clone(),
                });
            }
        }
        let resolve = |cols: &[String], on: &[ColumnDef], table: &str| -> Result<Vec<ColumnId>, SchemaError> {
            cols.iter()
                .map(|n| {
                    on.iter().position(|c| &c.name == n).ok_or_else(|| SchemaError::UnknownColumn {
                        table: table.to_string(),
                        column: n.clone(),
                    })
                })
                .collect()
        };
        if spec.primary_key.is_empty() {
            return Err(SchemaError::EmptyPrimaryKey(tname));
        }
        let primary_key = resolve(&spec.primary_key, &spec.columns, &tname)?;
        let unique_keys = spec
            .unique_keys
            .iter()
            .map(|u| resolve(u, &spec.columns, &tname))
            .collect::<Result<Vec<_>, _>>()?;
        let id = self.tables.len();
        let mut foreign_keys = Vec::new();
        for fk in &spec.foreign_keys {
            if fk.action == FkAction::NoAction {
                return Err(SchemaError::NoActionRejected(tname));
            }
            let parent = self.table_id(&fk.parent).ok_or_else(|| SchemaError::DanglingForeignKey {
                table: tname.clone(),
                parent: fk.parent.clone(),
            })?;
            let pdef = &self.tables[parent];
            let columns = resolve(&fk.columns, &spec.columns, &tname)?;
            let parent_columns = resolve(&fk.parent_columns, &pdef.columns, &pdef.name)?;
            if parent_columns != pdef.primary_key && pdef.unique_index_of(&parent_columns).is_none() {
                return Err(SchemaError::ForeignKeyTarget {
                    table: tname.clone(),
                    parent: pdef.name.clone(),
                    columns: fk.parent_columns.clone(),
                });
            }
            let same_kinds = columns.len() == parent_columns.len()
                && columns
                    .iter()
                    .zip(&parent_columns)
                    .all(|(&c, &p)| spec.columns[c].kind == pdef.columns[p].kind);
            if !same_kinds {
                return Err(SchemaError::ForeignKeyShape {
                    table: tname.clone(),
                    parent: pdef.name.clone(),
                });
            }
            foreign_keys.push(ForeignKeyDef {
                columns,
                parent,
                parent_columns,
                action: fk.action,
            });
        }
        let def = TableDef {
            id,
            name: tname,
            columns: spec.columns,
            primary_key,
            unique_keys,
            foreign_keys,
        };
        let mut next = self.clone();
        next.version += 1;
        next.children.push(Vec::new());
        for (i, fk) in def.foreign_keys.iter().enumerate() {
            next.children[fk.parent].push((id, i));
        }
        next.tables.push(Arc::new(def));
        Ok(next)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    values: Box<[Value]>,
    /// Serial of the commit that last wrote this row.
    pub writer: u64,
}

impl Row {
    pub fn new(values: Vec<Value>, writer: u64) -> Self {
        Row {
            values: values.into_boxed_slice(),
            writer,
        }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, col: ColumnId) -> &Value {
        &self.values[col]
    }

    pub fn int(&self, col: ColumnId) -> i64 {
        self.values[col].as_int().expect("int column")
    }

    pub fn decimal(&self, col: ColumnId) -> crate::Decimal {
        self.values[col].as_decimal().expect("decimal column")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableState {
    pub rows: PersistentMap<Key, Arc<Row>>,
    /// One map per declared unique key: key tuple to primary key.
    pub unique: Vec<PersistentMap<Key, Key>>,
}

impl TableState {
    fn empty(def: &TableDef) -> Self {
        TableState {
            rows: PersistentMap::new(),
            unique: vec![PersistentMap::new(); def.unique_keys.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Primary-key range for scans.
#[derive(Clone, Debug)]
pub enum KeyRange {
    All,
    /// Keys whose leading components equal this prefix.
    Prefix(Key),
    Between(Bound<Key>, Bound<Key>),
}

impl KeyRange {
    fn contains(&self, key: &Key) -> bool {
        match self {
            KeyRange::All => true,
            KeyRange::Prefix(p) => key.starts_with(p),
            KeyRange::Between(lo, hi) => {
                (match lo {
                    Bound::Unbounded => true,
                    Bound::Included(b) => key >= b,
                    Bound::Excluded(b) => key > b,
                }) && (match hi {
                    Bound::Unbounded => true,
                    Bound::Included(b) => key <= b,
                    Bound::Excluded(b) => key < b,
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeleteMode {
    /// Follow each child foreign key's action.
    FollowActions,
    /// Refuse when any child row still references the row.
    Restrict,
}

#[derive(Clone)]
pub struct Tables {
    schema: Arc<Schema>,
    states: Vec<TableState>,
}

impl PartialEq for Tables {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
    }
}

impl fmt::Debug for Tables {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (def, st) in self.schema.tables.iter().zip(&self.states) {
            m.entry(&def.name, &st.len());
        }
        m.finish()
    }
}

impl Tables {
    pub fn empty(schema: Arc<Schema>) -> Self {
        let states = schema.tables.iter().map(|d| TableState::empty(d)).collect();
        Tables { schema, states }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn state(&self, table: TableId) -> &TableState {
        &self.states[table]
    }

    pub fn len(&self, table: TableId) -> usize {
        self.states[table].len()
    }

    pub fn get(&self, table: TableId, pk: &Key) -> Option<&Arc<Row>> {
        self.states[table].rows.get(pk)
    }

    /// Exact-match lookup through the primary key or a declared unique key.
    pub fn lookup_unique(
        &self,
        table: TableId,
        key_cols: &[ColumnId],
        key: &Key,
    ) -> Result<Option<(Key, Arc<Row>)>, RelError> {
        let def = self.schema.table(table);
        let st = &self.states[table];
        if key_cols == def.primary_key.as_slice() {
            return Ok(st.rows.get(key).map(|r| (key.clone(), r.clone())));
        }
        let idx = def.unique_index_of(key_cols).ok_or_else(|| RelError::Usage {
            table: def.name.clone(),
            detail: format!("columns {key_cols:?} are not a unique key; use a scan"),
        })?;
        Ok(st.unique[idx].get(key).map(|pk| {
            let row = st.rows.get(pk).expect("unique index entry resolves to a row");
            (pk.clone(), row.clone())
        }))
    }

    pub fn range<'a>(
        &'a self,
        table: TableId,
        range: &'a KeyRange,
    ) -> Result<impl Iterator<Item = (&'a Key, &'a Arc<Row>)> + 'a, RelError> {
        let rows = &self.states[table].rows;
        let (lo, hi) = match range {
            KeyRange::All => (Bound::Unbounded, Bound::Unbounded),
            KeyRange::Prefix(p) => (Bound::Included(p), Bound::Unbounded),
            KeyRange::Between(lo, hi) => (lo.as_ref(), hi.as_ref()),
        };
        let iter = rows.range(lo, hi).map_err(|e: MapError| RelError::Usage {
            table: self.schema.table(table).name.clone(),
            detail: e.to_string(),
        })?;
        Ok(iter.take_while(move |(k, _)| range.contains(k)))
    }

    fn check_types<'v>(&self, def: &TableDef, cols: impl Iterator<Item = (ColumnId, &'v Value)>) -> Result<(), RelError> {
        for (c, v) in cols {
            let cd = def.columns.get(c).ok_or_else(|| RelError::Usage {
                table: def.name.clone(),
                detail: format!("no column {c}"),
            })?;
            let bad = match v.kind() {
                None => (!cd.nullable || def.is_pk_column(c)).then(|| "null not allowed".to_string()),
                Some(k) if k != cd.kind => Some(format!("expected {}, got {k}", cd.kind)),
                Some(_) => None,
            };
            if let Some(detail) = bad {
                return Err(RelError::TypeMismatch {
                    table: def.name.clone(),
                    column: cd.name.clone(),
                    detail,
                });
            }
        }
        Ok(())
    }

    fn parent_exists(&self, fk: &ForeignKeyDef, key: &Key) -> bool {
        let pdef = self.schema.table(fk.parent);
        let pst = &self.states[fk.parent];
        if fk.parent_columns == pdef.primary_key {
            pst.rows.contains_key(key)
        } else {
            let idx = pdef.unique_index_of(&fk.parent_columns).expect("validated at definition");
            pst.unique[idx].contains_key(key)
        }
    }

    fn check_parents(&self, def: &TableDef, values: &[Value], only: Option<&BTreeSet<ColumnId>>) -> Result<(), RelError> {
        for fk in &def.foreign_keys {
            if let Some(changed) = only {
                if !fk.columns.iter().any(|c| changed.contains(c)) {
                    continue;
                }
            }
            let key = project(values, &fk.columns);
            if key.values().iter().any(Value::is_null) {
                continue;
            }
            if !self.parent_exists(fk, &key) {
                return Err(RelError::ReferentialViolation {
                    table: def.name.clone(),
                    detail: format!("no {} row with key {key}", self.schema.table(fk.parent).name),
                });
            }
        }
        Ok(())
    }

    /// Primary keys of child rows whose foreign key equals `parent_key`.
    fn children(&self, child: TableId, fk: &ForeignKeyDef, parent_key: &Key) -> Vec<Key> {
        let cdef = self.schema.table(child);
        let rows = &self.states[child].rows;
        if cdef.primary_key.starts_with(&fk.columns) {
            rows.range(Bound::Included(parent_key), Bound::Unbounded)
                .expect("unbounded upper")
                .take_while(|(k, _)| k.starts_with(parent_key))
                .map(|(k, _)| k.clone())
                .collect()
        } else if let Some(idx) = cdef.unique_index_of(&fk.columns) {
            self.states[child].unique[idx].get(parent_key).cloned().into_iter().collect()
        } else {
            rows.iter()
                .filter(|(_, r)| project(r.values(), &fk.columns) == *parent_key)
                .map(|(k, _)| k.clone())
                .collect()
        }
    }

    /// Inserts a full row. Returns its primary key.
    pub fn insert(&mut self, table: TableId, values: Vec<Value>, writer: u64) -> Result<Key, RelError> {
        let def = self.schema.tables()[table].clone();
        if values.len() != def.columns.len() {
            return Err(RelError::Usage {
                table: def.name.clone(),
                detail: format!("expected {} values, got {}", def.columns.len(), values.len()),
            });
        }
        self.check_types(&def, values.iter().enumerate())?;
        let pk = def.pk_of(&values);
        let st = &self.states[table];
        if st.rows.contains_key(&pk) {
            return Err(RelError::UniqueViolation { table: def.name.clone(), key: pk });
        }
        let mut unique = st.unique.clone();
        for (i, ucols) in def.unique_keys.iter().enumerate() {
            let uk = project(&values, ucols);
            if unique[i].contains_key(&uk) {
                return Err(RelError::UniqueViolation { table: def.name.clone(), key: uk });
            }
            unique[i] = unique[i].put(uk, pk.clone());
        }
        self.check_parents(&def, &values, None)?;
        let rows = st.rows.put(pk.clone(), Arc::new(Row::new(values, writer)));
        self.states[table] = TableState { rows, unique };
        Ok(pk)
    }

    /// Patches the listed non-key columns of an existing row.
    pub fn update(
        &mut self,
        table: TableId,
        pk: &Key,
        changes: &[(ColumnId, Value)],
        writer: u64,
    ) -> Result<(), RelError> {
        let def = self.schema.tables()[table].clone();
        let st = &self.states[table];
        let old = st.rows.get(pk).ok_or_else(|| RelError::NotFound {
            table: def.name.clone(),
            key: pk.clone(),
        })?;
        self.check_types(&def, changes.iter().map(|(c, v)| (*c, v)))?;
        if let Some((c, _)) = changes.iter().find(|(c, _)| def.is_pk_column(*c)) {
            return Err(RelError::Usage {
                table: def.name.clone(),
                detail: format!("column {} is part of the primary key", def.column_name(*c)),
            });
        }
        let mut values = old.values().to_vec();
        for (c, v) in changes {
            values[*c] = v.clone();
        }
        let changed: BTreeSet<ColumnId> = changes.iter().map(|(c, _)| *c).collect();
        let mut unique = st.unique.clone();
        for (i, ucols) in def.unique_keys.iter().enumerate() {
            if !ucols.iter().any(|c| changed.contains(c)) {
                continue;
            }
            let before = project(old.values(), ucols);
            let after = project(&values, ucols);
            if before == after {
                continue;
            }
            if unique[i].contains_key(&after) {
                return Err(RelError::UniqueViolation { table: def.name.clone(), key: after });
            }
            unique[i] = unique[i].delete(&before).put(after, pk.clone());
        }
        self.check_parents(&def, &values, Some(&changed))?;
        // Referenced keys may not change while children point at the old value.
        for &(child, fk_idx) in self.schema.children_of(table) {
            let fk = &self.schema.table(child).foreign_keys[fk_idx];
            if !fk.parent_columns.iter().any(|c| changed.contains(c)) {
                continue;
            }
            let before = project(old.values(), &fk.parent_columns);
            if before != project(&values, &fk.parent_columns) && !self.children(child, fk, &before).is_empty() {
                return Err(RelError::ReferentialViolation {
                    table: def.name.clone(),
                    detail: format!("key {before} is still referenced by {}", self.schema.table(child).name),
                });
            }
        }
        let rows = st.rows.put(pk.clone(), Arc::new(Row::new(values, writer)));
        self.states[table] = TableState { rows, unique };
        Ok(())
    }

    /// Deletes a row. Returns every deleted row key, cascaded children first.
    pub fn delete(&mut self, table: TableId, pk: &Key, mode: DeleteMode) -> Result<Vec<(TableId, Key)>, RelError> {
        let mut next = self.clone();
        let mut deleted = Vec::new();
        next.delete_rec(table, pk, mode, &mut deleted)?;
        *self = next;
        Ok(deleted)
    }

    fn delete_rec(
        &mut self,
        table: TableId,
        pk: &Key,
        mode: DeleteMode,
        deleted: &mut Vec<(TableId, Key)>,
    ) -> Result<(), RelError> {
        let schema = self.schema.clone();
        let def = schema.table(table);
        let old = self.states[table].rows.get(pk).cloned().ok_or_else(|| RelError::NotFound {
            table: def.name.clone(),
            key: pk.clone(),
        })?;
        for &(child, fk_idx) in schema.children_of(table) {
            let fk = &schema.table(child).foreign_keys[fk_idx];
            let parent_key = project(old.values(), &fk.parent_columns);
            let kids = self.children(child, fk, &parent_key);
            if kids.is_empty() {
                continue;
            }
            if mode == DeleteMode::Restrict || fk.action != FkAction::Cascade {
                return Err(RelError::ReferentialViolation {
                    table: def.name.clone(),
                    detail: format!("{} rows of {} reference {pk}", kids.len(), schema.table(child).name),
                });
            }
            for kid in kids {
                // A row reachable along two cascade paths is only deleted once.
                if self.states[child].rows.contains_key(&kid) {
                    self.delete_rec(child, &kid, mode, deleted)?;
                }
            }
        }
        let st = &self.states[table];
        let mut unique = st.unique.clone();
        for (i, ucols) in def.unique_keys.iter().enumerate() {
            unique[i] = unique[i].delete(&project(old.values(), ucols));
        }
        let rows = st.rows.delete(pk);
        self.states[table] = TableState { rows, unique };
        deleted.push((table, pk.clone()));
        Ok(())
    }

    /// Bulk insert into an empty table from rows sorted by primary key.
    /// Parent references are checked; unique keys are checked for duplicates.
    pub fn load_sorted(&mut self, table: TableId, rows: Vec<Vec<Value>>, writer: u64) -> Result<(), RelError> {
        let def = self.schema.tables()[table].clone();
        if !self.states[table].is_empty() {
            return Err(RelError::Usage {
                table: def.name.clone(),
                detail: "bulk load requires an empty table".into(),
            });
        }
        let mut entries = Vec::with_capacity(rows.len());
        let mut uniques: Vec<Vec<(Key, Key)>> = vec![Vec::with_capacity(rows.len()); def.unique_keys.len()];
        for values in rows {
            if values.len() != def.columns.len() {
                return Err(RelError::Usage {
                    table: def.name.clone(),
                    detail: format!("expected {} values, got {}", def.columns.len(), values.len()),
                });
            }
            self.check_types(&def, values.iter().enumerate())?;
            self.check_parents(&def, &values, None)?;
            let pk = def.pk_of(&values);
            for (i, ucols) in def.unique_keys.iter().enumerate() {
                uniques[i].push((project(&values, ucols), pk.clone()));
            }
            entries.push((pk, Arc::new(Row::new(values, writer))));
        }
        if let Some(w) = entries.windows(2).find(|w| w[0].0 >= w[1].0) {
            let key = w[1].0.clone();
            return Err(if w[0].0 == key {
                RelError::UniqueViolation { table: def.name.clone(), key }
            } else {
                RelError::Usage {
                    table: def.name.clone(),
                    detail: "bulk load rows must be sorted by primary key".into(),
                }
            });
        }
        let mut unique = Vec::new();
        for mut u in uniques {
            u.sort_by(|a, b| a.0.cmp(&b.0));
            if let Some(w) = u.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(RelError::UniqueViolation { table: def.name.clone(), key: w[0].0.clone() });
            }
            unique.push(PersistentMap::from_sorted(u).expect("sorted and deduplicated"));
        }
        let rows = PersistentMap::from_sorted(entries).expect("checked ascending");
        self.states[table] = TableState { rows, unique };
        Ok(())
    }

    /// Full constraint audit: types, index coherence, referential closure.
    pub fn check_all(&self) -> Result<(), RelError> {
        for def in self.schema.tables.iter() {
            let st = &self.states[def.id];
            for (pk, row) in st.rows.iter() {
                self.check_types(def, row.values().iter().enumerate())?;
                if def.pk_of(row.values()) != *pk {
                    return Err(RelError::Usage {
                        table: def.name.clone(),
                        detail: format!("row stored under {pk} has a different key"),
                    });
                }
                self.check_parents(def, row.values(), None)?;
            }
            for (i, ucols) in def.unique_keys.iter().enumerate() {
                let rebuilt: BTreeMap<Key, Key> = st
                    .rows
                    .iter()
                    .map(|(pk, r)| (project(r.values(), ucols), pk.clone()))
                    .collect();
                let stored: BTreeMap<Key, Key> = st.unique[i].iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                if rebuilt.len() != st.rows.len() || rebuilt != stored {
                    return Err(RelError::Usage {
                        table: def.name.clone(),
                        detail: format!("unique index {i} is out of sync with rows"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key;
    use crate::value::Decimal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema() -> Schema {
        Schema::new()
            .define_table(
                TableSpec::new("WAREHOUSE")
                    .column("W_ID", ValueKind::Int)
                    .column("W_TAX", ValueKind::Decimal)
                    .column("W_YTD", ValueKind::Decimal)
                    .primary_key(&["W_ID"]),
            )
            .and_then(|s| {
                s.define_table(
                    TableSpec::new("DISTRICT")
                        .column("D_W_ID", ValueKind::Int)
                        .column("D_ID", ValueKind::Int)
                        .column("D_CODE", ValueKind::Text)
                        .column("D_NEXT_O_ID", ValueKind::Int)
                        .primary_key(&["D_W_ID", "D_ID"])
                        .unique(&["D_CODE"])
                        .foreign_key(&["D_W_ID"], "WAREHOUSE", &["W_ID"], FkAction::Restrict),
                )
            })
            .and_then(|s| {
                s.define_table(
                    TableSpec::new("ORDER")
                        .column("O_W_ID", ValueKind::Int)
                        .column("O_D_ID", ValueKind::Int)
                        .column("O_ID", ValueKind::Int)
                        .nullable("O_CARRIER_ID", ValueKind::Int)
                        .primary_key(&["O_W_ID", "O_D_ID", "O_ID"])
                        .foreign_key(&["O_W_ID", "O_D_ID"], "DISTRICT", &["D_W_ID", "D_ID"], FkAction::Cascade),
                )
            })
            .and_then(|s| {
                s.define_table(
                    TableSpec::new("ORDER_LINE")
                        .column("OL_W_ID", ValueKind::Int)
                        .column("OL_D_ID", ValueKind::Int)
                        .column("OL_O_ID", ValueKind::Int)
                        .column("OL_NUMBER", ValueKind::Int)
                        .primary_key(&["OL_W_ID", "OL_D_ID", "OL_O_ID", "OL_NUMBER"])
                        .foreign_key(&["OL_W_ID", "OL_D_ID", "OL_O_ID"], "ORDER", &["O_W_ID", "O_D_ID", "O_ID"], FkAction::Restrict),
                )
            })
            .unwrap()
    }

    const W: TableId = 0;
    const D: TableId = 1;
    const O: TableId = 2;
    const OL: TableId = 3;

    fn populated() -> Tables {
        let mut t = Tables::empty(Arc::new(schema()));
        t.insert(W, vec![1.into(), Decimal::from_cents(10).into(), Decimal::from_units(300_000).into()], 1)
            .unwrap();
        for d in 1..=10 {
            t.insert(D, vec![1.into(), d.into(), format!("d{d}").as_str().into(), 3001.into()], 1)
                .unwrap();
        }
        t
    }

    #[test]
    fn define_accepts_restrict_and_rejects_no_action() {
        let s = schema();
        assert_eq!(s.tables().len(), 4);
        assert_eq!(s.children_of(W), &[(D, 0)]);
        let bad = s.define_table(
            TableSpec::new("X")
                .column("A", ValueKind::Int)
                .primary_key(&["A"])
                .foreign_key(&["A"], "WAREHOUSE", &["W_ID"], FkAction::NoAction),
        );
        assert_eq!(bad.err(), Some(SchemaError::NoActionRejected("X".into())));
        let dup = s.define_table(TableSpec::new("ORDER").column("A", ValueKind::Int).primary_key(&["A"]));
        assert_eq!(dup.err(), Some(SchemaError::DuplicateTable("ORDER".into())));
        let dangling = s.define_table(
            TableSpec::new("Y")
                .column("A", ValueKind::Int)
                .primary_key(&["A"])
                .foreign_key(&["A"], "NOPE", &["B"], FkAction::Restrict),
        );
        assert!(matches!(dangling, Err(SchemaError::DanglingForeignKey { .. })));
        let not_key = s.define_table(
            TableSpec::new("Z")
                .column("A", ValueKind::Decimal)
                .primary_key(&["A"])
                .foreign_key(&["A"], "WAREHOUSE", &["W_TAX"], FkAction::Restrict),
        );
        assert!(matches!(not_key, Err(SchemaError::ForeignKeyTarget { .. })));
        assert!(matches!(
            s.define_table(TableSpec::new("E").column("A", ValueKind::Int)),
            Err(SchemaError::EmptyPrimaryKey(_))
        ));
    }

    #[test]
    fn insert_checks() {
        let mut t = populated();
        let before = t.clone();
        let dup = t.insert(D, vec![1.into(), 3.into(), "zz".into(), 1.into()], 2);
        assert!(matches!(dup, Err(RelError::UniqueViolation { .. })));
        let dup_unique = t.insert(D, vec![1.into(), 11.into(), "d3".into(), 1.into()], 2);
        assert!(matches!(dup_unique, Err(RelError::UniqueViolation { .. })));
        let orphan = t.insert(OL, vec![1.into(), 1.into(), 5.into(), 1.into()], 2);
        assert!(matches!(orphan, Err(RelError::ReferentialViolation { .. })));
        let no_parent = t.insert(D, vec![2.into(), 1.into(), "x".into(), 1.into()], 2);
        assert!(matches!(no_parent, Err(RelError::ReferentialViolation { .. })));
        let wrong_type = t.insert(D, vec![1.into(), "11".into(), "x".into(), 1.into()], 2);
        assert!(matches!(wrong_type, Err(RelError::TypeMismatch { .. })));
        let null_pk = t.insert(D, vec![1.into(), Value::Null, "x".into(), 1.into()], 2);
        assert!(matches!(null_pk, Err(RelError::TypeMismatch { .. })));
        assert!(t == before);
        t.insert(O, vec![1.into(), 1.into(), 3001.into(), Value::Null], 2).unwrap();
        t.check_all().unwrap();
    }

    #[test]
    fn update_touches_only_listed_columns() {
        let mut t = populated();
        let before = t.clone();
        t.update(W, &key![1], &[(2, Decimal::from_units(300_010).into())], 5).unwrap();
        let row = t.get(W, &key![1]).unwrap();
        assert_eq!(row.decimal(2), Decimal::from_units(300_010));
        assert_eq!(row.decimal(1), Decimal::from_cents(10));
        assert_eq!(row.writer, 5);
        assert_eq!(before.get(W, &key![1]).unwrap().decimal(2), Decimal::from_units(300_000));

        let taken = t.update(D, &key![1, 1], &[(2, "d2".into())], 5);
        assert!(matches!(taken, Err(RelError::UniqueViolation { .. })));
        let absent = t.update(W, &key![9], &[(1, Decimal::ZERO.into())], 5);
        assert!(matches!(absent, Err(RelError::NotFound { .. })));
        t.update(D, &key![1, 1], &[(2, "renamed".into())], 5).unwrap();
        assert_eq!(t.lookup_unique(D, &[2], &key!["renamed"]).unwrap().unwrap().0, key![1, 1]);
        assert!(t.lookup_unique(D, &[2], &key!["d1"]).unwrap().is_none());
        t.check_all().unwrap();
    }

    #[test]
    fn delete_restrict_and_cascade() {
        let mut t = populated();
        t.insert(O, vec![1.into(), 4.into(), 1.into(), Value::Null], 2).unwrap();
        t.insert(O, vec![1.into(), 4.into(), 2.into(), Value::Null], 2).unwrap();
        t.insert(OL, vec![1.into(), 4.into(), 1.into(), 1.into()], 2).unwrap();

        let restricted = t.delete(O, &key![1, 4, 1], DeleteMode::FollowActions);
        assert!(matches!(restricted, Err(RelError::ReferentialViolation { .. })));
        // The lines of order 1 restrict the cascade from the district as well.
        assert!(t.delete(D, &key![1, 4], DeleteMode::FollowActions).is_err());
        t.delete(OL, &key![1, 4, 1, 1], DeleteMode::FollowActions).unwrap();

        let orders_before = t.range(O, &KeyRange::Prefix(key![1, 4])).unwrap().count();
        assert_eq!(orders_before, 2);
        assert!(t.delete(D, &key![1, 4], DeleteMode::Restrict).is_err());
        let deleted = t.delete(D, &key![1, 4], DeleteMode::FollowActions).unwrap();
        assert_eq!(deleted.len(), 3);
        assert_eq!(deleted.last(), Some(&(D, key![1, 4])));
        assert_eq!(t.range(O, &KeyRange::Prefix(key![1, 4])).unwrap().count(), 0);
        assert!(t.lookup_unique(D, &[2], &key!["d4"]).unwrap().is_none());
        assert!(matches!(
            t.delete(D, &key![1, 4], DeleteMode::FollowActions),
            Err(RelError::NotFound { .. })
        ));
        t.check_all().unwrap();
    }

    #[test]
    fn referenced_key_update_is_restricted() {
        let s = Schema::new()
            .define_table(
                TableSpec::new("P")
                    .column("ID", ValueKind::Int)
                    .column("CODE", ValueKind::Text)
                    .primary_key(&["ID"])
                    .unique(&["CODE"]),
            )
            .unwrap()
            .define_table(
                TableSpec::new("C")
                    .column("ID", ValueKind::Int)
                    .nullable("P_CODE", ValueKind::Text)
                    .primary_key(&["ID"])
                    .foreign_key(&["P_CODE"], "P", &["CODE"], FkAction::Restrict),
            )
            .unwrap();
        let mut t = Tables::empty(Arc::new(s));
        t.insert(0, vec![1.into(), "a".into()], 1).unwrap();
        t.insert(1, vec![1.into(), "a".into()], 1).unwrap();
        t.insert(1, vec![2.into(), Value::Null], 1).unwrap();
        assert!(matches!(
            t.update(0, &key![1], &[(1, "b".into())], 2),
            Err(RelError::ReferentialViolation { .. })
        ));
        t.update(1, &key![1], &[(1, Value::Null)], 2).unwrap();
        t.update(0, &key![1], &[(1, "b".into())], 2).unwrap();
        assert!(matches!(
            t.update(1, &key![2], &[(1, "zzz".into())], 2),
            Err(RelError::ReferentialViolation { .. })
        ));
        t.check_all().unwrap();
    }

    #[test]
    fn unique_lookup_paths_agree() {
        let t = populated();
        let (pk, row) = t.lookup_unique(D, &[0, 1], &key![1, 7]).unwrap().unwrap();
        assert_eq!(pk, key![1, 7]);
        assert_eq!(row.int(3), 3001);
        assert!(t.lookup_unique(D, &[0, 1], &key![1, 70]).unwrap().is_none());
        assert!(matches!(t.lookup_unique(D, &[3], &key![3001]), Err(RelError::Usage { .. })));
        for d in 1..=10 {
            let code = format!("d{d}");
            let via_index = t.lookup_unique(D, &[2], &key![code.as_str()]).unwrap().unwrap();
            let via_scan: Vec<_> = t
                .range(D, &KeyRange::All)
                .unwrap()
                .filter(|(_, r)| r.get(2).as_text() == Some(code.as_str()))
                .map(|(k, r)| (k.clone(), r.clone()))
                .collect();
            assert_eq!(vec![via_index], via_scan);
        }
    }

    #[test]
    fn load_sorted_builds_coherent_state() {
        let mut t = populated();
        let rows: Vec<Vec<Value>> = (1..=100).map(|o| vec![1.into(), 2.into(), o.into(), Value::Null]).collect();
        t.load_sorted(O, rows.clone(), 1).unwrap();
        assert_eq!(t.len(O), 100);
        assert!(t.load_sorted(O, rows, 1).is_err());
        let mut bad = populated();
        let orphans = vec![vec![1.into(), 99.into(), 1.into(), Value::Null]];
        assert!(matches!(bad.load_sorted(O, orphans, 1), Err(RelError::ReferentialViolation { .. })));
        t.check_all().unwrap();
    }

    #[test]
    fn randomized_ops_keep_every_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = populated();
        for step in 0..2_000u64 {
            let d = rng.gen_range(1..=12i64);
            let o = rng.gen_range(1..=20i64);
            let before = t.clone();
            let res = match rng.gen_range(0..6) {
                0 | 1 => t.insert(O, vec![1.into(), d.into(), o.into(), Value::Null], step).map(|_| ()),
                2 => t
                    .insert(OL, vec![1.into(), d.into(), o.into(), rng.gen_range(1..4i64).into()], step)
                    .map(|_| ()),
                3 => t.update(O, &key![1, d, o], &[(3, 7.into())], step),
                4 => t.delete(OL, &key![1, d, o, rng.gen_range(1..4i64)], DeleteMode::FollowActions).map(|_| ()),
                _ => t.delete(O, &key![1, d, o], DeleteMode::FollowActions).map(|_| ()),
            };
            if res.is_err() {
                assert!(t == before, "failed op changed state");
            }
            t.check_all().unwrap();
        }
    }
}
