use std::collections::BTreeMap;

use crate::crypto::Hash256;
use crate::encoding::{decode_bytes, encode_bytes, Decode, DecodeError, Encode, Reader};

/// Committed key/value state of one replica.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateStore {
    entries: BTreeMap<String, Vec<u8>>,
    /// Height of the last applied block; `None` before genesis.
    version: Option<u64>,
}

/// Read access shared by committed state and in-flight views.
pub trait StateRead {
    fn get(&self, key: &str) -> Option<&[u8]>;
}

impl StateRead for StateStore {
    fn get(&self, key: &str) -> Option<&[u8]> {
        StateStore::get(self, key)
    }
}

impl StateRead for StateView<'_> {
    fn get(&self, key: &str) -> Option<&[u8]> {
        StateView::get(self, key)
    }
}

/// Writes produced by one transaction, in key order.
pub type Delta = BTreeMap<String, Vec<u8>>;

impl StateStore {
    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn version(&self) -> Option<u64> {
        self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries whose key starts with `prefix`, in key order.
    pub fn scan_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a [u8])> + 'a {
        self.entries
            .range(prefix.to_string()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub(crate) fn apply(&mut self, delta: Delta, version: u64) {
        self.entries.extend(delta);
        self.version = Some(version);
    }

    pub fn digest(&self) -> Hash256 {
        Hash256::digest(&self.to_canonical())
    }
}

impl Encode for StateStore {
    fn encode(&self, out: &mut Vec<u8>) {
        (self.entries.len() as u32).encode(out);
        for (k, v) in &self.entries {
            k.encode(out);
            encode_bytes(v, out);
        }
        self.version.encode(out);
    }
}

impl Decode for StateStore {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = u32::decode(r)?;
        let mut entries = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..n {
            let k = String::decode(r)?;
            if last.as_ref().is_some_and(|l| *l >= k) {
                return Err(DecodeError::Invalid("state keys out of order".into()));
            }
            let v = decode_bytes(r)?;
            last = Some(k.clone());
            entries.insert(k, v);
        }
        Ok(StateStore {
            entries,
            version: Option::decode(r)?,
        })
    }
}

/// Read-through view used while a block executes: transaction-local writes
/// shadow earlier writes of the same block, which shadow committed state.
pub struct StateView<'a> {
    base: &'a StateStore,
    block: &'a Delta,
    tx: Delta,
}

impl<'a> StateView<'a> {
    pub(crate) fn new(base: &'a StateStore, block: &'a Delta) -> Self {
        Self {
            base,
            block,
            tx: Delta::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.tx
            .get(key)
            .or_else(|| self.block.get(key))
            .map(Vec::as_slice)
            .or_else(|| self.base.get(key))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn set(&mut self, key: impl Into<String>, value: Vec<u8>) {
        self.tx.insert(key.into(), value);
    }

    pub(crate) fn into_delta(self) -> Delta {
        self.tx
    }
}
