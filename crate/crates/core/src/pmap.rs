//! An immutable ordered map: an AVL tree with path copying.
//!
//! Every mutating operation returns a new map that shares all untouched
//! subtrees with its input, so old versions stay valid and cheap to keep.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Bound;
use std::sync::Arc;

use thiserror::Error;

type Link<K, V> = Option<Arc<Node<K, V>>>;

struct Node<K, V> {
    key: K,
    value: V,
    height: u8,
    left: Link<K, V>,
    right: Link<K, V>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("range lower bound is greater than its upper bound")]
    InvertedRange,
    #[error("bulk-load input is not strictly ascending")]
    Unsorted,
}

pub struct PersistentMap<K, V> {
    root: Link<K, V>,
    len: usize,
}

impl<K, V> Clone for PersistentMap<K, V> {
    fn clone(&self) -> Self {
        PersistentMap {
            root: self.root.clone(),
            len: self.len,
        }
    }
}

impl<K, V> Default for PersistentMap<K, V> {
    fn default() -> Self {
        PersistentMap { root: None, len: 0 }
    }
}

fn height<K, V>(link: &Link<K, V>) -> u8 {
    link.as_ref().map_or(0, |n| n.height)
}

fn node<K, V>(key: K, value: V, left: Link<K, V>, right: Link<K, V>) -> Arc<Node<K, V>> {
    let height = height(&left).max(height(&right)) + 1;
    Arc::new(Node {
        key,
        value,
        height,
        left,
        right,
    })
}

/// Rebuilds a node whose children differ in height by at most two.
fn balance<K: Clone, V: Clone>(
    key: K,
    value: V,
    left: Link<K, V>,
    right: Link<K, V>,
) -> Arc<Node<K, V>> {
    let (hl, hr) = (height(&left), height(&right));
    if hl > hr + 1 {
        let l = left.expect("left taller than right");
        if height(&l.left) >= height(&l.right) {
            let new_right = node(key, value, l.right.clone(), right);
            node(l.key.clone(), l.value.clone(), l.left.clone(), Some(new_right))
        } else {
            let lr = l.right.as_ref().expect("inner grandchild");
            let new_left = node(l.key.clone(), l.value.clone(), l.left.clone(), lr.left.clone());
            let new_right = node(key, value, lr.right.clone(), right);
            node(lr.key.clone(), lr.value.clone(), Some(new_left), Some(new_right))
        }
    } else if hr > hl + 1 {
        let r = right.expect("right taller than left");
        if height(&r.right) >= height(&r.left) {
            let new_left = node(key, value, left, r.left.clone());
            node(r.key.clone(), r.value.clone(), Some(new_left), r.right.clone())
        } else {
            let rl = r.left.as_ref().expect("inner grandchild");
            let new_left = node(key, value, left, rl.left.clone());
            let new_right = node(r.key.clone(), r.value.clone(), rl.right.clone(), r.right.clone());
            node(rl.key.clone(), rl.value.clone(), Some(new_left), Some(new_right))
        }
    } else {
        node(key, value, left, right)
    }
}

fn insert<K: Ord + Clone, V: Clone>(link: &Link<K, V>, key: K, value: V) -> (Arc<Node<K, V>>, bool) {
    match link {
        None => (node(key, value, None, None), false),
        Some(n) => match key.cmp(&n.key) {
            Ordering::Equal => (
                Arc::new(Node {
                    key,
                    value,
                    height: n.height,
                    left: n.left.clone(),
                    right: n.right.clone(),
                }),
                true,
            ),
            Ordering::Less => {
                let (l, replaced) = insert(&n.left, key, value);
                (balance(n.key.clone(), n.value.clone(), Some(l), n.right.clone()), replaced)
            }
            Ordering::Greater => {
                let (r, replaced) = insert(&n.right, key, value);
                (balance(n.key.clone(), n.value.clone(), n.left.clone(), Some(r)), replaced)
            }
        },
    }
}

fn remove_min<K: Clone, V: Clone>(n: &Arc<Node<K, V>>) -> (K, V, Link<K, V>) {
    match &n.left {
        None => (n.key.clone(), n.value.clone(), n.right.clone()),
        Some(l) => {
            let (k, v, rest) = remove_min(l);
            (k, v, Some(balance(n.key.clone(), n.value.clone(), rest, n.right.clone())))
        }
    }
}

/// Returns `None` when the key is absent so the caller can keep the old root.
fn remove<K: Ord + Clone, V: Clone>(link: &Link<K, V>, key: &K) -> Option<Link<K, V>> {
    let n = link.as_ref()?;
    match key.cmp(&n.key) {
        Ordering::Less => {
            let l = remove(&n.left, key)?;
            Some(Some(balance(n.key.clone(), n.value.clone(), l, n.right.clone())))
        }
        Ordering::Greater => {
            let r = remove(&n.right, key)?;
            Some(Some(balance(n.key.clone(), n.value.clone(), n.left.clone(), r)))
        }
        Ordering::Equal => Some(match (&n.left, &n.right) {
            (None, right) => right.clone(),
            (left, None) => left.clone(),
            (left, Some(right)) => {
                let (k, v, rest) = remove_min(right);
                Some(balance(k, v, left.clone(), rest))
            }
        }),
    }
}

fn build_sorted<K: Clone, V: Clone>(entries: &[(K, V)]) -> Link<K, V> {
    if entries.is_empty() {
        return None;
    }
    let mid = entries.len() / 2;
    let left = build_sorted(&entries[..mid]);
    let right = build_sorted(&entries[mid + 1..]);
    let (k, v) = &entries[mid];
    Some(node(k.clone(), v.clone(), left, right))
}

fn above_lower<K: Ord>(key: &K, lo: Bound<&K>) -> bool {
    match lo {
        Bound::Unbounded => true,
        Bound::Included(b) => key >= b,
        Bound::Excluded(b) => key > b,
    }
}

fn below_upper<K: Ord>(key: &K, hi: Bound<&K>) -> bool {
    match hi {
        Bound::Unbounded => true,
        Bound::Included(b) => key <= b,
        Bound::Excluded(b) => key < b,
    }
}

impl<K: Ord + Clone, V: Clone> PersistentMap<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a perfectly balanced map in linear time.
    pub fn from_sorted(entries: Vec<(K, V)>) -> Result<Self, MapError> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(MapError::Unsorted);
        }
        Ok(PersistentMap {
            root: build_sorted(&entries),
            len: entries.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        let mut cur = self.root.as_ref();
        while let Some(n) = cur {
            match key.cmp(&n.key) {
                Ordering::Less => cur = n.left.as_ref(),
                Ordering::Greater => cur = n.right.as_ref(),
                Ordering::Equal => return Some(&n.value),
            }
        }
        None
    }

    pub fn contains_key(&self, key: &K) -> bool {
        self.get(key).is_some()
    }

    /// Returns a new map with `key` bound to `value`, replacing any previous binding.
    #[must_use]
    pub fn put(&self, key: K, value: V) -> Self {
        let (root, replaced) = insert(&self.root, key, value);
        PersistentMap {
            root: Some(root),
            len: if replaced { self.len } else { self.len + 1 },
        }
    }

    /// Returns a new map without `key`. Deleting an absent key yields a map
    /// sharing the same root.
    #[must_use]
    pub fn delete(&self, key: &K) -> Self {
        match remove(&self.root, key) {
            None => self.clone(),
            Some(root) => PersistentMap {
                root,
                len: self.len - 1,
            },
        }
    }

    /// Entries with `lo <= key <= hi` (per bound kind) in ascending order.
    pub fn range<'a>(&'a self, lo: Bound<&'a K>, hi: Bound<&'a K>) -> Result<Range<'a, K, V>, MapError> {
        if let (Bound::Included(a) | Bound::Excluded(a), Bound::Included(b) | Bound::Excluded(b)) = (lo, hi) {
            if a > b {
                return Err(MapError::InvertedRange);
            }
        }
        let mut stack = Vec::new();
        let mut cur = self.root.as_deref();
        while let Some(n) = cur {
            if above_lower(&n.key, lo) {
                stack.push(n);
                cur = n.left.as_deref();
            } else {
                cur = n.right.as_deref();
            }
        }
        Ok(Range { stack, hi })
    }

    pub fn iter(&self) -> Range<'_, K, V> {
        self.range(Bound::Unbounded, Bound::Unbounded)
            .expect("unbounded range is never inverted")
    }

    pub fn first(&self) -> Option<(&K, &V)> {
        self.iter().next()
    }

    /// True when both maps share the same root node.
    pub fn ptr_eq(&self, other: &Self) -> bool {
        match (&self.root, &other.root) {
            (None, None) => true,
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }

    /// Height of the tree; 0 when empty.
    pub fn height(&self) -> u8 {
        self.root.as_ref().map_or(0, |n| n.height)
    }

    /// Checks key order, AVL balance, cached heights and the cached length.
    pub fn check_invariants(&self) -> Result<(), String> {
        fn walk<K: Ord, V>(link: &Link<K, V>, lo: Option<&K>, hi: Option<&K>) -> Result<(u8, usize), String> {
            let Some(n) = link else { return Ok((0, 0)) };
            if lo.is_some_and(|l| &n.key <= l) || hi.is_some_and(|h| &n.key >= h) {
                return Err("keys out of order".into());
            }
            let (hl, cl) = walk(&n.left, lo, Some(&n.key))?;
            let (hr, cr) = walk(&n.right, Some(&n.key), hi)?;
            if hl.abs_diff(hr) > 1 {
                return Err(format!("unbalanced node: heights {hl} and {hr}"));
            }
            if n.height != hl.max(hr) + 1 {
                return Err(format!("cached height {} should be {}", n.height, hl.max(hr) + 1));
            }
            Ok((n.height, cl + cr + 1))
        }
        let (_, count) = walk(&self.root, None, None)?;
        if count != self.len {
            return Err(format!("cached length {} but {count} entries", self.len));
        }
        Ok(())
    }
}

impl<K: Ord + Clone, V: Clone + PartialEq> PartialEq for PersistentMap<K, V> {
    fn eq(&self, other: &Self) -> bool {
        self.ptr_eq(other) || (self.len == other.len && self.iter().eq(other.iter()))
    }
}

impl<K: Ord + Clone + fmt::Debug, V: Clone + fmt::Debug> fmt::Debug for PersistentMap<K, V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl<K: Ord + Clone, V: Clone> FromIterator<(K, V)> for PersistentMap<K, V> {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        iter.into_iter().fold(PersistentMap::new(), |m, (k, v)| m.put(k, v))
    }
}

pub struct Range<'a, K, V> {
    stack: Vec<&'a Node<K, V>>,
    hi: Bound<&'a K>,
}

impl<'a, K: Ord, V> Iterator for Range<'a, K, V> {
    type Item = (&'a K, &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.stack.pop()?;
        if !below_upper(&n.key, self.hi) {
            self.stack.clear();
            return None;
        }
        let mut cur = n.right.as_deref();
        while let Some(c) = cur {
            self.stack.push(c);
            cur = c.left.as_deref();
        }
        Some((&n.key, &n.value))
    }
}
