//! Least-frequently-used cache.
//!
//! The victim is the entry with the smallest access count; among those, the
//! one touched longest ago. Counts never decay.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
struct Slot<V> {
    value: V,
    frequency: u64,
    last_access: u64,
}

#[derive(Debug, Clone)]
pub struct LfuCache<K, V> {
    capacity: usize,
    tick: u64,
    entries: BTreeMap<K, Slot<V>>,
    // (frequency, last_access, key): first element is the next victim.
    order: BTreeSet<(u64, u64, K)>,
}

impl<K: Ord + Clone, V> LfuCache<K, V> {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, tick: 0, entries: BTreeMap::new(), order: BTreeSet::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    pub fn frequency(&self, key: &K) -> Option<u64> {
        self.entries.get(key).map(|s| s.frequency)
    }

    fn touch(&mut self, key: &K) -> Option<&mut Slot<V>> {
        self.tick += 1;
        let tick = self.tick;
        let slot = self.entries.get_mut(key)?;
        self.order.remove(&(slot.frequency, slot.last_access, key.clone()));
        slot.frequency += 1;
        slot.last_access = tick;
        self.order.insert((slot.frequency, slot.last_access, key.clone()));
        Some(slot)
    }

    /// Looks up `key`, counting the access.
    pub fn get(&mut self, key: &K) -> Option<&V> {
        self.touch(key).map(|s| &s.value)
    }

    /// Looks up `key` without counting the access.
    pub fn peek(&self, key: &K) -> Option<&V> {
        self.entries.get(key).map(|s| &s.value)
    }

    /// Inserts or updates `key`. Updating counts as an access. Returns the
    /// evicted entry, if the insert pushed one out.
    pub fn insert(&mut self, key: K, value: V) -> Option<(K, V)> {
        if let Some(slot) = self.touch(&key) {
            slot.value = value;
            return None;
        }
        if self.capacity == 0 {
            return Some((key, value));
        }
        let evicted = if self.entries.len() >= self.capacity { self.evict() } else { None };
        self.tick += 1;
        self.order.insert((1, self.tick, key.clone()));
        self.entries.insert(key, Slot { value, frequency: 1, last_access: self.tick });
        evicted
    }

    pub fn remove(&mut self, key: &K) -> Option<V> {
        let slot = self.entries.remove(key)?;
        self.order.remove(&(slot.frequency, slot.last_access, key.clone()));
        Some(slot.value)
    }

    /// Drops every entry whose key matches `pred`.
    pub fn retain(&mut self, mut keep: impl FnMut(&K) -> bool) {
        let doomed: Vec<K> = self.entries.keys().filter(|k| !keep(k)).cloned().collect();
        for k in doomed {
            self.remove(&k);
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.order.clear();
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.entries.keys()
    }

    fn evict(&mut self) -> Option<(K, V)> {
        let (_, _, key) = self.order.pop_first()?;
        let slot = self.entries.remove(&key)?;
        Some((key, slot.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_frequent_goes_first() {
        let mut c = LfuCache::new(2);
        c.insert("a", 1);
        c.insert("b", 2);
        assert_eq!(c.get(&"a"), Some(&1));
        assert_eq!(c.insert("c", 3), Some(("b", 2)));
        assert!(c.contains(&"a") && c.contains(&"c"));
    }

    #[test]
    fn ties_break_towards_least_recent() {
        let mut c = LfuCache::new(3);
        c.insert(1, ());
        c.insert(2, ());
        c.insert(3, ());
        c.get(&1);
        c.get(&2);
        c.get(&3);
        // all at frequency 2, key 1 touched longest ago
        assert_eq!(c.insert(4, ()).map(|e| e.0), Some(1));
    }

    #[test]
    fn update_counts_as_access() {
        let mut c = LfuCache::new(2);
        c.insert("a", 1);
        c.insert("b", 1);
        c.insert("a", 5);
        assert_eq!(c.frequency(&"a"), Some(2));
        assert_eq!(c.insert("c", 0), Some(("b", 1)));
        assert_eq!(c.peek(&"a"), Some(&5));
    }

    #[test]
    fn zero_capacity_stores_nothing() {
        let mut c = LfuCache::new(0);
        assert_eq!(c.insert(1, 1), Some((1, 1)));
        assert!(c.is_empty());
    }

    #[test]
    fn retain_and_remove() {
        let mut c = LfuCache::new(4);
        for i in 0..4 {
            c.insert(i, i);
        }
        c.retain(|k| k % 2 == 0);
        assert_eq!(c.keys().copied().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(c.remove(&0), Some(0));
        assert_eq!(c.len(), 1);
    }
}
