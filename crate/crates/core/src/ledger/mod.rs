//! Hash-chained ledger replica executing signed contract transactions.
//!
//! Each peer owns one [`Ledger`]. Transactions run serially in block order;
//! a transaction reads the state left by the one before it. A contract
//! failure is recorded in the block with its error code but contributes no
//! writes. The invoker's nonce advances either way.

mod block;
mod state;
mod tx;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use block::{
    export_chain, import_chain, parse_export, verify_chain, verify_encoded_chain, Block, BlockEntry,
    ChainReport, Outcome,
};
pub use state::{Delta, StateRead, StateStore, StateView};
pub use tx::Transaction;

use crate::crypto::{Hash256, PublicKey};
use crate::encoding::{Decode, Encode};

/// Execution context handed to the contract.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext {
    /// Height of the block being built.
    pub height: u64,
    pub tx_id: Hash256,
}

/// Deterministic contract code replicated on every peer.
pub trait Contract: Send + Sync {
    fn has_function(&self, name: &str) -> bool;

    /// Key the transaction must be signed with, if the invoker is known.
    fn signer_key(&self, state: &StateStore, tx: &Transaction) -> Option<PublicKey>;

    /// Runs one invocation. On `Err` the view's writes are discarded and the
    /// returned code is recorded as the outcome.
    fn execute(
        &self,
        ctx: &ExecContext,
        view: &mut StateView<'_>,
        invoker: &str,
        function: &str,
        args: &[u8],
    ) -> Result<(), String>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("transaction {0} has an invalid signature")]
    InvalidSignature(Hash256),
    #[error("transaction {tx} reuses nonce {nonce} (last committed {last})")]
    StaleNonce { tx: Hash256, nonce: u64, last: u64 },
    #[error("unknown contract function {0:?}")]
    UnknownFunction(String),
    #[error("unknown invoker {0:?}")]
    UnknownInvoker(String),
    #[error("block must contain at least one transaction")]
    EmptyBatch,
    #[error("block {height} does not extend the chain: {reason}")]
    BadBlock { height: u64, reason: String },
}

const NONCE_PREFIX: &str = "nonce";

fn nonce_key(invoker: &str) -> String {
    format!("{NONCE_PREFIX}{invoker}")
}

pub struct Ledger {
    blocks: Vec<Block>,
    state: StateStore,
    contract: Arc<dyn Contract>,
}

impl Ledger {
    pub fn new(contract: Arc<dyn Contract>) -> Self {
        Ledger {
            blocks: Vec::new(),
            state: StateStore::default(),
            contract,
        }
    }

    pub fn contract(&self) -> &Arc<dyn Contract> {
        &self.contract
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &StateStore {
        &self.state
    }

    /// Height of the last block, `None` before genesis.
    pub fn height(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.height)
    }

    fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Hash256 {
        self.blocks.last().map_or(Hash256::ZERO, |b| b.block_hash)
    }

    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.state.get(key)
    }

    pub fn last_nonce(&self, invoker: &str) -> u64 {
        self.state
            .get(&nonce_key(invoker))
            .and_then(|b| u64::from_canonical(b).ok())
            .unwrap_or(0)
    }

    /// Signature, function and nonce checks. `pending` tracks nonces of
    /// earlier transactions in the same batch.
    pub fn validate(&self, tx: &Transaction, pending: &mut BTreeMap<String, u64>) -> Result<(), LedgerError> {
        if !self.contract.has_function(&tx.function) {
            return Err(LedgerError::UnknownFunction(tx.function.clone()));
        }
        let key = self
            .contract
            .signer_key(&self.state, tx)
            .ok_or_else(|| LedgerError::UnknownInvoker(tx.invoker.clone()))?;
        if !tx.verify_signature(&key) {
            return Err(LedgerError::InvalidSignature(tx.id()));
        }
        let last = pending
            .get(&tx.invoker)
            .copied()
            .unwrap_or_else(|| self.last_nonce(&tx.invoker));
        if tx.nonce <= last {
            return Err(LedgerError::StaleNonce {
                tx: tx.id(),
                nonce: tx.nonce,
                last,
            });
        }
        pending.insert(tx.invoker.clone(), tx.nonce);
        Ok(())
    }

    /// Executes `tx` against the current state without committing.
    pub fn apply_transaction(&self, tx: &Transaction) -> Result<(Delta, Outcome), LedgerError> {
        if !self.contract.has_function(&tx.function) {
            return Err(LedgerError::UnknownFunction(tx.function.clone()));
        }
        let empty = Delta::new();
        Ok(self.execute_one(self.next_height(), &empty, tx))
    }

    fn execute_one(&self, height: u64, block_writes: &Delta, tx: &Transaction) -> (Delta, Outcome) {
        let ctx = ExecContext {
            height,
            tx_id: tx.id(),
        };
        let mut view = StateView::new(&self.state, block_writes);
        match self
            .contract
            .execute(&ctx, &mut view, &tx.invoker, &tx.function, &tx.args)
        {
            Ok(()) => (view.into_delta(), Outcome::Success),
            Err(code) => (Delta::new(), Outcome::Failed(code)),
        }
    }

    /// Runs a validated batch, returning the entries and combined writes.
    fn execute_batch(&self, height: u64, txs: Vec<Transaction>) -> (Vec<BlockEntry>, Delta) {
        let mut writes = Delta::new();
        let mut entries = Vec::with_capacity(txs.len());
        for tx in txs {
            let (delta, outcome) = self.execute_one(height, &writes, &tx);
            writes.extend(delta);
            writes.insert(nonce_key(&tx.invoker), tx.nonce.to_canonical());
            entries.push(BlockEntry { tx, outcome });
        }
        (entries, writes)
    }

    /// Validates, executes and seals `txs` as the next block.
    pub fn append_block(&mut self, txs: Vec<Transaction>) -> Result<&Block, LedgerError> {
        if txs.is_empty() {
            return Err(LedgerError::EmptyBatch);
        }
        let mut pending = BTreeMap::new();
        for tx in &txs {
            self.validate(tx, &mut pending)?;
        }
        let height = self.next_height();
        let (entries, writes) = self.execute_batch(height, txs);
        let block = Block::seal(height, self.tip_hash(), entries);
        self.state.apply(writes, height);
        self.blocks.push(block);
        Ok(self.blocks.last().expect("just pushed"))
    }

    /// Applies a block produced elsewhere, re-checking everything: linkage,
    /// hash, signatures, nonces and that re-execution reproduces the
    /// recorded outcomes.
    pub fn apply_block(&mut self, block: &Block) -> Result<(), LedgerError> {
        let height = self.next_height();
        let bad = |reason: String| LedgerError::BadBlock {
            height: block.height,
            reason,
        };
        if block.height != height {
            return Err(bad(format!("expected height {height}")));
        }
        if block.prev_hash != self.tip_hash() {
            return Err(bad("prev_hash mismatch".into()));
        }
        if Block::compute_hash(block.height, &block.prev_hash, &block.entries) != block.block_hash {
            return Err(bad("block_hash mismatch".into()));
        }
        if block.entries.is_empty() {
            return Err(LedgerError::EmptyBatch);
        }
        let mut pending = BTreeMap::new();
        for e in &block.entries {
            self.validate(&e.tx, &mut pending)?;
        }
        let txs = block.entries.iter().map(|e| e.tx.clone()).collect();
        let (entries, writes) = self.execute_batch(height, txs);
        if entries != block.entries {
            return Err(bad("re-execution produced different outcomes".into()));
        }
        self.state.apply(writes, height);
        self.blocks.push(block.clone());
        Ok(())
    }

    pub fn verify(&self) -> ChainReport {
        verify_chain(&self.blocks)
    }

    pub fn export(&self) -> String {
        export_chain(&self.blocks)
    }

    /// Rebuilds a replica by applying every block of `blocks` from genesis.
    pub fn replay(contract: Arc<dyn Contract>, blocks: &[Block]) -> Result<Ledger, LedgerError> {
        let mut ledger = Ledger::new(contract);
        for b in blocks {
            ledger.apply_block(b)?;
        }
        Ok(ledger)
    }
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("height", &self.height())
            .field("tip", &self.tip_hash())
            .field("state_entries", &self.state.len())
            .finish()
    }
}
