use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::NodeId;

#[derive(Clone, Copy, Debug)]
struct Key {
    f: f64,
    c: f64,
    id: NodeId,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.c.total_cmp(&other.c))
            .then(self.id.cmp(&other.id))
    }
}

/// Priority queue of belief-node ids ordered by `(f, c, id)`.
#[derive(Clone, Debug, Default)]
pub struct BeliefQueue {
    set: BTreeSet<Key>,
    keys: Vec<Option<Key>>,
}

impl BeliefQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `id`, or re-keys it when already queued.
    pub fn push(&mut self, id: NodeId, f: f64, c: f64) {
        if id.0 >= self.keys.len() {
            self.keys.resize(id.0 + 1, None);
        }
        if let Some(old) = self.keys[id.0].take() {
            self.set.remove(&old);
        }
        let key = Key { f, c, id };
        self.set.insert(key);
        self.keys[id.0] = Some(key);
    }

    pub fn pop_best(&mut self) -> Option<NodeId> {
        let key = self.set.pop_first()?;
        self.keys[key.id.0] = None;
        Some(key.id)
    }

    pub fn peek(&self) -> Option<(NodeId, f64, f64)> {
        self.set.first().map(|k| (k.id, k.f, k.c))
    }

    pub fn remove(&mut self, id: NodeId) -> bool {
        match self.keys.get_mut(id.0).and_then(Option::take) {
            Some(key) => {
                self.set.remove(&key);
                true
            }
            None => false,
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.keys.get(id.0).is_some_and(Option::is_some)
    }

    /// Removes every entry with `f > cost`; returns how many were removed.
    pub fn prune(&mut self, cost: f64) -> usize {
        let mut removed = 0;
        while let Some(last) = self.set.last() {
            if last.f > cost {
                let key = *last;
                self.set.pop_last();
                self.keys[key.id.0] = None;
                removed += 1;
            } else {
                break;
            }
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Queued ids in pop order.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.set.iter().map(|k| k.id)
    }

    /// Queued `(id, f)` pairs in pop order.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.set.iter().map(|k| (k.id, k.f))
    }
}
