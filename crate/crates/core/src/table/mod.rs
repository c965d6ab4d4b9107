//! Match-action tables: schemas, flow entries and the three match disciplines.
//!
//! EXACT tables index entries by key in a hash map, LPM tables keep a binary
//! prefix trie, and MASKED tables scan a list kept sorted by descending
//! priority with insertion order breaking ties.

mod lpm;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::bits::BitString;
use lpm::PrefixTrie;

/// Widest key a table may declare.
pub const MAX_KEY_BITS: u16 = 512;
/// Longest parameter field an entry may carry.
pub const MAX_PARAM_BYTES: usize = 32;
pub const DEFAULT_MAX_ENTRIES: u32 = 65536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MatchType {
    Exact,
    Lpm,
    Masked,
}

impl MatchType {
    pub fn mnemonic(self) -> &'static str {
        match self {
            MatchType::Exact => "exact",
            MatchType::Lpm => "lpm",
            MatchType::Masked => "masked",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<MatchType> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Some(MatchType::Exact),
            "lpm" => Some(MatchType::Lpm),
            "masked" => Some(MatchType::Masked),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MissPolicy {
    Drop,
    PacketIn,
    GotoBlock(u32),
}

impl fmt::Display for MissPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissPolicy::Drop => f.write_str("drop"),
            MissPolicy::PacketIn => f.write_str("packetin"),
            MissPolicy::GotoBlock(b) => write!(f, "block {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TableSchema {
    pub table_id: u16,
    pub match_type: MatchType,
    pub key_width: u16,
    pub max_entries: u32,
    pub miss: MissPolicy,
}

impl TableSchema {
    pub fn new(table_id: u16, match_type: MatchType, key_width: u16) -> Self {
        TableSchema {
            table_id,
            match_type,
            key_width,
            max_entries: DEFAULT_MAX_ENTRIES,
            miss: MissPolicy::Drop,
        }
    }

    pub fn with_miss(mut self, miss: MissPolicy) -> Self {
        self.miss = miss;
        self
    }

    pub fn with_max_entries(mut self, n: u32) -> Self {
        self.max_entries = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowEntry {
    pub value: BitString,
    pub mask: BitString,
    pub priority: u16,
    pub block_id: u32,
    pub params: Vec<u8>,
}

impl FlowEntry {
    /// Exact-match entry (all-ones mask).
    pub fn exact(value: BitString, block_id: u32, params: Vec<u8>) -> Self {
        let mask = BitString::ones(value.width());
        FlowEntry {
            value,
            mask,
            priority: 0,
            block_id,
            params,
        }
    }

    pub fn prefix(value: BitString, prefix: usize, block_id: u32, params: Vec<u8>) -> Self {
        let mask = BitString::prefix_mask(value.width(), prefix);
        FlowEntry {
            value,
            mask,
            priority: 0,
            block_id,
            params,
        }
    }

    pub fn masked(value: BitString, mask: BitString, priority: u16, block_id: u32, params: Vec<u8>) -> Self {
        FlowEntry {
            value,
            mask,
            priority,
            block_id,
            params,
        }
    }

    pub fn key(&self) -> EntryKey {
        EntryKey {
            value: self.value.clone(),
            mask: self.mask.clone(),
            priority: self.priority,
        }
    }

    pub fn matches(&self, key: &BitString) -> bool {
        key.and(&self.mask) == self.value
    }
}

/// Identity of an entry within its table.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntryKey {
    pub value: BitString,
    pub mask: BitString,
    pub priority: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table {0} is full")]
    TableFull(u16),
    #[error("duplicate entry in table {0}")]
    Duplicate(u16),
    #[error("unknown block {0}")]
    UnknownBlock(u32),
    #[error("unknown table {0}")]
    UnknownTable(u16),
    #[error("table {0} already exists")]
    TableExists(u16),
    #[error("key width {got} does not match table width {expected}")]
    KeyWidth { expected: usize, got: usize },
    #[error("entry value has bits set outside its mask")]
    NonCanonical,
    #[error("mask is not valid for a {0:?} table")]
    BadMask(MatchType),
    #[error("priority is only meaningful for masked tables")]
    PriorityNotAllowed,
    #[error("parameter field of {0} bytes exceeds {MAX_PARAM_BYTES}")]
    ParamsTooLong(usize),
    #[error("no such entry in table {0}")]
    NotFound(u16),
    #[error("invalid schema for table {0}")]
    InvalidSchema(u16),
}

#[derive(Debug, Clone)]
enum Backend {
    Exact(HashMap<BitString, FlowEntry>),
    Lpm(PrefixTrie),
    // (insertion sequence, entry), sorted by priority desc then sequence asc
    Masked(Vec<(u64, FlowEntry)>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TableCounters {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone)]
pub struct Table {
    schema: TableSchema,
    backend: Backend,
    next_seq: u64,
    pub counters: TableCounters,
}

impl Table {
    pub fn new(schema: TableSchema) -> Result<Self, TableError> {
        if schema.key_width == 0 || schema.key_width > MAX_KEY_BITS {
            return Err(TableError::InvalidSchema(schema.table_id));
        }
        let backend = match schema.match_type {
            MatchType::Exact => Backend::Exact(HashMap::new()),
            MatchType::Lpm => Backend::Lpm(PrefixTrie::new()),
            MatchType::Masked => Backend::Masked(Vec::new()),
        };
        Ok(Table {
            schema,
            backend,
            next_seq: 0,
            counters: TableCounters::default(),
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        match &self.backend {
            Backend::Exact(m) => m.len(),
            Backend::Lpm(t) => t.len(),
            Backend::Masked(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_key(&self, key: &EntryKey) -> Result<(), TableError> {
        let width = self.schema.key_width as usize;
        for bs in [&key.value, &key.mask] {
            if bs.width() != width {
                return Err(TableError::KeyWidth {
                    expected: width,
                    got: bs.width(),
                });
            }
        }
        if !key.value.within(&key.mask) {
            return Err(TableError::NonCanonical);
        }
        match self.schema.match_type {
            MatchType::Exact if !key.mask.is_all_ones() => Err(TableError::BadMask(MatchType::Exact)),
            MatchType::Lpm if key.mask.prefix_len().is_none() => Err(TableError::BadMask(MatchType::Lpm)),
            MatchType::Exact | MatchType::Lpm if key.priority != 0 => Err(TableError::PriorityNotAllowed),
            _ => Ok(()),
        }
    }

    /// Inserts an entry. Block references are checked by the caller.
    pub fn insert(&mut self, entry: FlowEntry) -> Result<(), TableError> {
        self.check_key(&entry.key())?;
        if entry.params.len() > MAX_PARAM_BYTES {
            return Err(TableError::ParamsTooLong(entry.params.len()));
        }
        let id = self.schema.table_id;
        if self.len() >= self.schema.max_entries as usize {
            // a duplicate on a full table is still reported as a duplicate
            if self.find(&entry.key()).is_some() {
                return Err(TableError::Duplicate(id));
            }
            return Err(TableError::TableFull(id));
        }
        match &mut self.backend {
            Backend::Exact(m) => {
                if m.contains_key(&entry.value) {
                    return Err(TableError::Duplicate(id));
                }
                m.insert(entry.value.clone(), entry);
            }
            Backend::Lpm(t) => {
                let prefix = entry.mask.prefix_len().expect("checked above");
                if !t.insert(prefix, entry) {
                    return Err(TableError::Duplicate(id));
                }
            }
            Backend::Masked(v) => {
                if v.iter().any(|(_, e)| {
                    e.value == entry.value && e.mask == entry.mask && e.priority == entry.priority
                }) {
                    return Err(TableError::Duplicate(id));
                }
                let seq = self.next_seq;
                self.next_seq += 1;
                let at = v.partition_point(|(s, e)| (std::cmp::Reverse(e.priority), *s) < (std::cmp::Reverse(entry.priority), seq));
                v.insert(at, (seq, entry));
            }
        }
        Ok(())
    }

    fn find(&self, key: &EntryKey) -> Option<&FlowEntry> {
        match &self.backend {
            Backend::Exact(m) => m.get(&key.value).filter(|e| e.key() == *key),
            Backend::Lpm(t) => t
                .entries()
                .find(|e| e.value == key.value && e.mask == key.mask && e.priority == key.priority),
            Backend::Masked(v) => v.iter().map(|(_, e)| e).find(|e| e.key() == *key),
        }
    }

    fn find_mut(&mut self, key: &EntryKey) -> Option<&mut FlowEntry> {
        match &mut self.backend {
            Backend::Exact(m) => m.get_mut(&key.value).filter(|e| e.key() == *key),
            Backend::Lpm(t) => {
                let prefix = key.mask.prefix_len()?;
                t.get_mut(&key.value, prefix).filter(|e| e.key() == *key)
            }
            Backend::Masked(v) => v.iter_mut().map(|(_, e)| e).find(|e| e.key() == *key),
        }
    }

    /// Replaces the action (block and parameters) of an existing entry.
    pub fn modify(&mut self, key: &EntryKey, block_id: u32, params: Vec<u8>) -> Result<(), TableError> {
        self.check_key(key)?;
        if params.len() > MAX_PARAM_BYTES {
            return Err(TableError::ParamsTooLong(params.len()));
        }
        let id = self.schema.table_id;
        let e = self.find_mut(key).ok_or(TableError::NotFound(id))?;
        e.block_id = block_id;
        e.params = params;
        Ok(())
    }

    pub fn delete(&mut self, key: &EntryKey) -> Result<FlowEntry, TableError> {
        self.check_key(key)?;
        let id = self.schema.table_id;
        let removed = match &mut self.backend {
            Backend::Exact(m) => match m.get(&key.value) {
                Some(e) if e.key() == *key => m.remove(&key.value),
                _ => None,
            },
            Backend::Lpm(t) => t.remove(&key.value, key.mask.prefix_len().expect("checked")),
            Backend::Masked(v) => v
                .iter()
                .position(|(_, e)| e.key() == *key)
                .map(|i| v.remove(i).1),
        };
        removed.ok_or(TableError::NotFound(id))
    }

    /// Looks up a key without touching the counters.
    pub fn peek(&self, key: &BitString) -> Result<Option<&FlowEntry>, TableError> {
        let width = self.schema.key_width as usize;
        if key.width() != width {
            return Err(TableError::KeyWidth {
                expected: width,
                got: key.width(),
            });
        }
        Ok(match &self.backend {
            Backend::Exact(m) => m.get(key),
            Backend::Lpm(t) => t.lookup(key),
            Backend::Masked(v) => v.iter().map(|(_, e)| e).find(|e| e.matches(key)),
        })
    }

    /// Looks up a key and counts the hit or miss.
    pub fn lookup(&mut self, key: &BitString) -> Result<Option<&FlowEntry>, TableError> {
        let hit = self.peek(key)?.is_some();
        if hit {
            self.counters.hits += 1;
        } else {
            self.counters.misses += 1;
        }
        self.peek(key)
    }

    /// Entries in a canonical order, independent of backend layout.
    pub fn entries(&self) -> Vec<FlowEntry> {
        let mut out: Vec<FlowEntry> = match &self.backend {
            Backend::Exact(m) => m.values().cloned().collect(),
            Backend::Lpm(t) => t.entries().cloned().collect(),
            Backend::Masked(v) => return v.iter().map(|(_, e)| e.clone()).collect(),
        };
        out.sort();
        out
    }

    pub fn references_block(&self, block_id: u32) -> bool {
        self.schema.miss == MissPolicy::GotoBlock(block_id) || self.iter_entries().any(|e| e.block_id == block_id)
    }

    fn iter_entries(&self) -> Box<dyn Iterator<Item = &FlowEntry> + '_> {
        match &self.backend {
            Backend::Exact(m) => Box::new(m.values()),
            Backend::Lpm(t) => Box::new(t.entries()),
            Backend::Masked(v) => Box::new(v.iter().map(|(_, e)| e)),
        }
    }

    /// Points every entry (and the miss policy) that uses `from` at `to`.
    pub fn repoint_block(&mut self, from: u32, to: u32) {
        if self.schema.miss == MissPolicy::GotoBlock(from) {
            self.schema.miss = MissPolicy::GotoBlock(to);
        }
        let it: Box<dyn Iterator<Item = &mut FlowEntry>> = match &mut self.backend {
            Backend::Exact(m) => Box::new(m.values_mut()),
            Backend::Lpm(t) => Box::new(t.entries_mut()),
            Backend::Masked(v) => Box::new(v.iter_mut().map(|(_, e)| e)),
        };
        for e in it.filter(|e| e.block_id == from) {
            e.block_id = to;
        }
    }
}

/// All tables of a datapath, keyed by table id.
#[derive(Debug, Clone, Default)]
pub struct TableStore {
    tables: BTreeMap<u16, Table>,
}

/// Canonical, comparable view of one table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSnapshot {
    pub schema: TableSchema,
    pub entries: Vec<FlowEntry>,
    pub counters: TableCounters,
}

impl TableStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&mut self, schema: TableSchema) -> Result<(), TableError> {
        let id = schema.table_id;
        if self.tables.contains_key(&id) {
            return Err(TableError::TableExists(id));
        }
        self.tables.insert(id, Table::new(schema)?);
        Ok(())
    }

    pub fn remove(&mut self, table_id: u16) -> Result<Table, TableError> {
        self.tables.remove(&table_id).ok_or(TableError::UnknownTable(table_id))
    }

    pub fn get(&self, table_id: u16) -> Option<&Table> {
        self.tables.get(&table_id)
    }

    pub fn get_mut(&mut self, table_id: u16) -> Option<&mut Table> {
        self.tables.get_mut(&table_id)
    }

    pub fn schema(&self, table_id: u16) -> Option<&TableSchema> {
        self.get(table_id).map(Table::schema)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    fn table_mut(&mut self, table_id: u16) -> Result<&mut Table, TableError> {
        self.tables.get_mut(&table_id).ok_or(TableError::UnknownTable(table_id))
    }

    /// Inserts after checking that the entry's block is installed.
    pub fn insert(
        &mut self,
        table_id: u16,
        entry: FlowEntry,
        block_installed: impl Fn(u32) -> bool,
    ) -> Result<(), TableError> {
        let t = self.table_mut(table_id)?;
        if !block_installed(entry.block_id) {
            return Err(TableError::UnknownBlock(entry.block_id));
        }
        t.insert(entry)
    }

    pub fn modify(
        &mut self,
        table_id: u16,
        key: &EntryKey,
        block_id: u32,
        params: Vec<u8>,
        block_installed: impl Fn(u32) -> bool,
    ) -> Result<(), TableError> {
        let t = self.table_mut(table_id)?;
        if !block_installed(block_id) {
            return Err(TableError::UnknownBlock(block_id));
        }
        t.modify(key, block_id, params)
    }

    pub fn delete(&mut self, table_id: u16, key: &EntryKey) -> Result<FlowEntry, TableError> {
        self.table_mut(table_id)?.delete(key)
    }

    pub fn lookup(&mut self, table_id: u16, key: &BitString) -> Result<Option<&FlowEntry>, TableError> {
        self.table_mut(table_id)?.lookup(key)
    }

    pub fn references_block(&self, block_id: u32) -> bool {
        self.tables.values().any(|t| t.references_block(block_id))
    }

    pub fn repoint_block(&mut self, from: u32, to: u32) {
        for t in self.tables.values_mut() {
            t.repoint_block(from, to);
        }
    }

    pub fn snapshot(&self) -> Vec<TableSnapshot> {
        self.tables
            .values()
            .map(|t| TableSnapshot {
                schema: t.schema.clone(),
                entries: t.entries(),
                counters: t.counters,
            })
            .collect()
    }
}
