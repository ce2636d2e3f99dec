use std::fmt;

use serde::{Deserialize, Serialize};

use super::tx::Transaction;
use crate::crypto::Hash256;
use crate::encoding::{Decode, DecodeError, Encode, Reader};

const BLOCK_HASH_DOMAIN: &str = "sharechain/block/v1";

/// Result of executing one committed transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "code", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// The contract rejected the call; no writes were made.
    Failed(String),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }

    pub fn error_code(&self) -> Option<&str> {
        match self {
            Outcome::Success => None,
            Outcome::Failed(code) => Some(code),
        }
    }
}

impl Encode for Outcome {
    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            Outcome::Success => out.push(0),
            Outcome::Failed(code) => {
                out.push(1);
                code.encode(out);
            }
        }
    }
}

impl Decode for Outcome {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match u8::decode(r)? {
            0 => Ok(Outcome::Success),
            1 => Ok(Outcome::Failed(String::decode(r)?)),
            tag => Err(DecodeError::InvalidTag { what: "outcome", tag }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEntry {
    pub tx: Transaction,
    pub outcome: Outcome,
}

impl Encode for BlockEntry {
    fn encode(&self, out: &mut Vec<u8>) {
        self.tx.encode(out);
        self.outcome.encode(out);
    }
}

impl Decode for BlockEntry {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BlockEntry {
            tx: Transaction::decode(r)?,
            outcome: Outcome::decode(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash256,
    pub entries: Vec<BlockEntry>,
    pub block_hash: Hash256,
}

impl Block {
    pub(crate) fn seal(height: u64, prev_hash: Hash256, entries: Vec<BlockEntry>) -> Self {
        let block_hash = Self::compute_hash(height, &prev_hash, &entries);
        Block {
            height,
            prev_hash,
            entries,
            block_hash,
        }
    }

    /// Digest over height, parent hash and each entry's transaction id and
    /// outcome. Outcomes are covered so an auditor can trust recorded
    /// failures without replaying.
    pub fn compute_hash(height: u64, prev_hash: &Hash256, entries: &[BlockEntry]) -> Hash256 {
        let mut buf = Vec::with_capacity(64 + entries.len() * 40);
        BLOCK_HASH_DOMAIN.encode(&mut buf);
        height.encode(&mut buf);
        prev_hash.encode(&mut buf);
        (entries.len() as u32).encode(&mut buf);
        for e in entries {
            e.tx.id().encode(&mut buf);
            e.outcome.encode(&mut buf);
        }
        Hash256::digest(&buf)
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.entries.iter().map(|e| &e.tx)
    }

    pub fn encoded_len(&self) -> usize {
        self.to_canonical().len()
    }
}

impl Encode for Block {
    fn encode(&self, out: &mut Vec<u8>) {
        self.height.encode(out);
        self.prev_hash.encode(out);
        self.entries.encode(out);
        self.block_hash.encode(out);
    }
}

impl Decode for Block {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Block {
            height: u64::decode(r)?,
            prev_hash: Hash256::decode(r)?,
            entries: Vec::decode(r)?,
            block_hash: Hash256::decode(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainReport {
    Ok { blocks: u64 },
    Failed { height: u64, reason: String },
}

impl ChainReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainReport::Ok { .. })
    }

    pub fn first_bad_height(&self) -> Option<u64> {
        match self {
            ChainReport::Ok { .. } => None,
            ChainReport::Failed { height, .. } => Some(*height),
        }
    }
}

impl fmt::Display for ChainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainReport::Ok { blocks } => write!(f, "ok ({blocks} blocks)"),
            ChainReport::Failed { height, reason } => write!(f, "failed at height {height}: {reason}"),
        }
    }
}

/// Checks height sequence, parent linkage and recomputed block hashes.
pub fn verify_chain(blocks: &[Block]) -> ChainReport {
    let mut prev = Hash256::ZERO;
    for (i, b) in blocks.iter().enumerate() {
        let i = i as u64;
        if b.height != i {
            return ChainReport::Failed {
                height: i,
                reason: format!("height field is {}", b.height),
            };
        }
        if b.prev_hash != prev {
            return ChainReport::Failed {
                height: i,
                reason: "prev_hash does not link to parent".into(),
            };
        }
        if Block::compute_hash(b.height, &b.prev_hash, &b.entries) != b.block_hash {
            return ChainReport::Failed {
                height: i,
                reason: "block_hash does not match contents".into(),
            };
        }
        prev = b.block_hash;
    }
    ChainReport::Ok {
        blocks: blocks.len() as u64,
    }
}

/// Like [`verify_chain`] but over raw canonical encodings, so corruption
/// that breaks decoding is reported at the block where it happened.
pub fn verify_encoded_chain<B: AsRef<[u8]>>(encoded: &[B]) -> ChainReport {
    let mut blocks = Vec::with_capacity(encoded.len());
    for (i, bytes) in encoded.iter().enumerate() {
        match Block::from_canonical(bytes.as_ref()) {
            Ok(b) => blocks.push(b),
            Err(e) => {
                // Earlier blocks may already be inconsistent.
                if let ChainReport::Failed { height, reason } = verify_chain(&blocks) {
                    return ChainReport::Failed { height, reason };
                }
                return ChainReport::Failed {
                    height: i as u64,
                    reason: format!("undecodable block: {e}"),
                };
            }
        }
    }
    verify_chain(&blocks)
}

/// One hex-encoded canonical block per line.
pub fn export_chain(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&hex::encode(b.to_canonical()));
        out.push('\n');
    }
    out
}

/// Splits an export into raw block encodings without decoding them.
pub fn parse_export(text: &str) -> Result<Vec<Vec<u8>>, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| hex::decode(l.trim()).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn import_chain(text: &str) -> Result<Vec<Block>, String> {
    parse_export(text)?
        .iter()
        .enumerate()
        .map(|(i, b)| Block::from_canonical(b).map_err(|e| format!("block {i}: {e}")))
        .collect()
}
