//! A least-recently-used map backed by a slab of intrusive list nodes.

use alloc::vec::Vec;
use core::hash::Hash;

use hashbrown::HashMap;

const NIL: usize = usize::MAX;

struct Node<K, V> {
    key: K,
    value: V,
    prev: usize,
    next: usize,
}

/// LRU map. A capacity of 0 means unbounded.
pub struct LruCache<K, V> {
    map: HashMap<K, usize>,
    nodes: Vec<Option<Node<K, V>>>,
    free: Vec<usize>,
    head: usize,
    tail: usize,
    capacity: usize,
}

impl<K: Hash + Eq + Clone, V> LruCache<K, V> {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: HashMap::new(),
            nodes: Vec::new(),
            free: Vec::new(),
            head: NIL,
            tail: NIL,
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn node(&self, idx: usize) -> &Node<K, V> {
        self.nodes[idx].as_ref().expect("live node")
    }

    fn node_mut(&mut self, idx: usize) -> &mut Node<K, V> {
        self.nodes[idx].as_mut().expect("live node")
    }

    fn unlink(&mut self, idx: usize) {
        let (prev, next) = {
            let n = self.node(idx);
            (n.prev, n.next)
        };
        if prev == NIL {
            self.head = next;
        } else {
            self.node_mut(prev).next = next;
        }
        if next == NIL {
            self.tail = prev;
        } else {
            self.node_mut(next).prev = prev;
        }
    }

    fn push_front(&mut self, idx: usize) {
        let old = self.head;
        {
            let n = self.node_mut(idx);
            n.prev = NIL;
            n.next = old;
        }
        if old != NIL {
            self.node_mut(old).prev = idx;
        }
        self.head = idx;
        if self.tail == NIL {
            self.tail = idx;
        }
    }

    /// Looks up `key` and marks it most recently used.
    pub fn get(&mut self, key: &K) -> Option<&mut V> {
        let idx = *self.map.get(key)?;
        if self.head != idx {
            self.unlink(idx);
            self.push_front(idx);
        }
        Some(&mut self.node_mut(idx).value)
    }

    /// Looks up `key` without touching recency.
    pub fn peek(&self, key: &K) -> Option<&V> {
        self.map.get(key).map(|&idx| &self.node(idx).value)
    }

    pub fn contains(&self, key: &K) -> bool {
        self.map.contains_key(key)
    }

    /// Inserts or replaces `key`, making it most recently used. Returns the
    /// entry evicted to make room, if any; replacing never evicts.
    pub fn insert(&mut self, key: K, value: V) -> Option<(K, V)> {
        if let Some(&idx) = self.map.get(&key) {
            self.node_mut(idx).value = value;
            if self.head != idx {
                self.unlink(idx);
                self.push_front(idx);
            }
            return None;
        }
        let evicted = if self.capacity > 0 && self.map.len() >= self.capacity {
            self.pop_lru()
        } else {
            None
        };
        let node = Node {
            key: key.clone(),
            value,
            prev: NIL,
            next: NIL,
        };
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i] = Some(node);
                i
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        };
        self.push_front(idx);
        self.map.insert(key, idx);
        evicted
    }

    pub fn remove(&mut self, key: &K) -> Option<V> {
        let idx = self.map.remove(key)?;
        self.unlink(idx);
        let node = self.nodes[idx].take().expect("live node");
        self.free.push(idx);
        Some(node.value)
    }

    /// Removes and returns the least recently used entry.
    pub fn pop_lru(&mut self) -> Option<(K, V)> {
        if self.tail == NIL {
            return None;
        }
        let idx = self.tail;
        self.unlink(idx);
        let node = self.nodes[idx].take().expect("live node");
        self.free.push(idx);
        self.map.remove(&node.key);
        Some((node.key, node.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::VecDeque;
    use proptest::prelude::*;

    #[test]
    fn evicts_least_recent() {
        let mut c = LruCache::new(2);
        assert!(c.insert(1, "a").is_none());
        assert!(c.insert(2, "b").is_none());
        c.get(&1);
        assert_eq!(c.insert(3, "c"), Some((2, "b")));
        assert!(c.contains(&1) && c.contains(&3));
        assert_eq!(c.insert(1, "a2"), None);
        assert_eq!(c.peek(&1), Some(&"a2"));
        assert_eq!(c.remove(&3), Some("c"));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn zero_capacity_is_unbounded() {
        let mut c = LruCache::new(0);
        for i in 0..10_000 {
            assert!(c.insert(i, i).is_none());
        }
        assert_eq!(c.len(), 10_000);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Get(u8),
        Insert(u8),
        Remove(u8),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u8..16).prop_map(Op::Get),
            (0u8..16).prop_map(Op::Insert),
            (0u8..16).prop_map(Op::Remove),
        ]
    }

    proptest! {
        // Compare against a naive recency list.
        #[test]
        fn matches_naive_model(cap in 1usize..6, ops in proptest::collection::vec(op(), 0..200)) {
            let mut lru = LruCache::new(cap);
            let mut model: VecDeque<u8> = VecDeque::new();
            for op in ops {
                match op {
                    Op::Get(k) => {
                        let hit = lru.get(&k).is_some();
                        let pos = model.iter().position(|&x| x == k);
                        prop_assert_eq!(hit, pos.is_some());
                        if let Some(p) = pos { model.remove(p); model.push_front(k); }
                    }
                    Op::Insert(k) => {
                        let evicted = lru.insert(k, ()).map(|(k, _)| k);
                        let expected = if let Some(p) = model.iter().position(|&x| x == k) {
                            model.remove(p);
                            None
                        } else if model.len() >= cap {
                            model.pop_back()
                        } else {
                            None
                        };
                        model.push_front(k);
                        prop_assert_eq!(evicted, expected);
                    }
                    Op::Remove(k) => {
                        let had = lru.remove(&k).is_some();
                        let pos = model.iter().position(|&x| x == k);
                        prop_assert_eq!(had, pos.is_some());
                        if let Some(p) = pos { model.remove(p); }
                    }
                }
                prop_assert_eq!(lru.len(), model.len());
            }
        }
    }
}
