//! Binary prefix trie for longest-prefix match.

use crate::bits::BitString;

use super::FlowEntry;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    child: [u32; 2],
    entry: Option<FlowEntry>,
}

impl Node {
    fn empty() -> Self {
        Node {
            child: [NONE; 2],
            entry: None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PrefixTrie {
    nodes: Vec<Node>,
    len: usize,
}

impl PrefixTrie {
    pub fn new() -> Self {
        PrefixTrie {
            nodes: vec![Node::empty()],
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    fn find(&self, value: &BitString, prefix: usize) -> Option<usize> {
        let mut at = 0usize;
        for i in 0..prefix {
            let next = self.nodes[at].child[value.bit(i) as usize];
            if next == NONE {
                return None;
            }
            at = next as usize;
        }
        Some(at)
    }

    pub fn get_mut(&mut self, value: &BitString, prefix: usize) -> Option<&mut FlowEntry> {
        let at = self.find(value, prefix)?;
        self.nodes[at].entry.as_mut()
    }

    /// Inserts unless an entry with the same prefix exists; returns whether
    /// it was inserted.
    pub fn insert(&mut self, prefix: usize, entry: FlowEntry) -> bool {
        let mut at = 0usize;
        for i in 0..prefix {
            let b = entry.value.bit(i) as usize;
            let next = self.nodes[at].child[b];
            at = if next == NONE {
                self.nodes.push(Node::empty());
                let idx = (self.nodes.len() - 1) as u32;
                self.nodes[at].child[b] = idx;
                idx as usize
            } else {
                next as usize
            };
        }
        if self.nodes[at].entry.is_some() {
            return false;
        }
        self.nodes[at].entry = Some(entry);
        self.len += 1;
        true
    }

    pub fn remove(&mut self, value: &BitString, prefix: usize) -> Option<FlowEntry> {
        let at = self.find(value, prefix)?;
        let removed = self.nodes[at].entry.take();
        if removed.is_some() {
            self.len -= 1;
        }
        removed
    }

    pub fn lookup(&self, key: &BitString) -> Option<&FlowEntry> {
        let mut at = 0usize;
        let mut best = self.nodes[0].entry.as_ref();
        for i in 0..key.width() {
            let next = self.nodes[at].child[key.bit(i) as usize];
            if next == NONE {
                break;
            }
            at = next as usize;
            if let Some(e) = self.nodes[at].entry.as_ref() {
                best = Some(e);
            }
        }
        best
    }

    pub fn entries(&self) -> impl Iterator<Item = &FlowEntry> {
        self.nodes.iter().filter_map(|n| n.entry.as_ref())
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut FlowEntry> {
        self.nodes.iter_mut().filter_map(|n| n.entry.as_mut())
    }
}
