//! Published database roots and the single commit section.

use std::sync::Arc;

use arc_swap::ArcSwap;
use parking_lot::{Mutex, MutexGuard};
use thiserror::Error;

use crate::relational::{Schema, Tables};

/// An immutable database state. Once published it is never mutated.
#[derive(Clone, Debug)]
pub struct SnapshotRoot {
    pub epoch: u64,
    pub tables: Tables,
}

impl SnapshotRoot {
    /// Epoch 0 with every table empty.
    pub fn genesis(schema: Arc<Schema>) -> Self {
        SnapshotRoot {
            epoch: 0,
            tables: Tables::empty(schema),
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        self.tables.schema()
    }

    pub fn schema_version(&self) -> u64 {
        self.tables.schema().version
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("published epoch {got} does not follow current epoch {current}")]
pub struct EpochError {
    pub current: u64,
    pub got: u64,
}

/// The current root plus the mutex that serializes every commit.
///
/// Readers call [`RootCell::load`] without locking. Committers call
/// [`RootCell::enter`], which hands out exclusive access to `S` and the only
/// way to publish.
pub struct RootCell<S> {
    current: ArcSwap<SnapshotRoot>,
    section: Mutex<S>,
}

impl<S> RootCell<S> {
    pub fn new(root: SnapshotRoot, state: S) -> Self {
        RootCell {
            current: ArcSwap::from_pointee(root),
            section: Mutex::new(state),
        }
    }

    pub fn load(&self) -> Arc<SnapshotRoot> {
        self.current.load_full()
    }

    pub fn epoch(&self) -> u64 {
        self.current.load().epoch
    }

    pub fn enter(&self) -> CommitGuard<'_, S> {
        CommitGuard {
            current: &self.current,
            state: self.section.lock(),
        }
    }
}

pub struct CommitGuard<'a, S> {
    current: &'a ArcSwap<SnapshotRoot>,
    state: MutexGuard<'a, S>,
}

impl<S> CommitGuard<'_, S> {
    /// The root as of entering the section; no one else can publish meanwhile.
    pub fn current(&self) -> Arc<SnapshotRoot> {
        self.current.load_full()
    }

    pub fn state(&mut self) -> &mut S {
        &mut self.state
    }

    pub fn publish(&mut self, root: SnapshotRoot) -> Result<u64, EpochError> {
        let current = self.current.load().epoch;
        if root.epoch != current + 1 {
            return Err(EpochError { current, got: root.epoch });
        }
        let epoch = root.epoch;
        self.current.store(Arc::new(root));
        Ok(epoch)
    }
}
