//! In-process permissioned network: one ordering service, N peers.
//!
//! Clients hand transactions to the orderer, which validates them against
//! its own replica, batches them into blocks and broadcasts each block to
//! every peer over a simulated link. Peers apply blocks strictly in order.
//! A submission's receipt resolves once every peer has applied the block.

mod config;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::Instant;

pub use config::{ConfigError, LatencyModel, NetworkConfig};

use crate::crypto::{Hash256, Keypair};
use crate::marketplace::Call;
use crate::encoding::Encode;
use crate::ledger::{Block, Contract, Ledger, LedgerError, Outcome, Transaction};

/// Peer receiving client submissions and serving queries.
pub const API_PEER: usize = 0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("NetworkStopped")]
    NetworkStopped,
    #[error("UnknownPeer: {0}")]
    UnknownPeer(usize),
    #[error(transparent)]
    Rejected(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub height: u64,
    pub tx_id: Hash256,
    /// Contract result as recorded by the API peer.
    pub outcome: Outcome,
}

struct Submission {
    tx: Transaction,
    reply: oneshot::Sender<Result<Receipt, NetError>>,
}

struct Peer {
    ledger: RwLock<Ledger>,
    applied: watch::Sender<Option<u64>>,
}

struct Shared {
    config: NetworkConfig,
    peers: Vec<Peer>,
    ordered: watch::Sender<Option<u64>>,
    paused: watch::Sender<bool>,
    stopped: AtomicBool,
    submit: Mutex<Option<mpsc::UnboundedSender<Submission>>>,
    link_rng: Mutex<ChaCha20Rng>,
}

/// Handle to a running network. Cheap to clone.
#[derive(Clone)]
pub struct Network {
    shared: Arc<Shared>,
}

/// A submission that has been queued but not yet committed.
pub struct PendingReceipt(oneshot::Receiver<Result<Receipt, NetError>>);

impl PendingReceipt {
    pub async fn wait(self) -> Result<Receipt, NetError> {
        self.0.await.unwrap_or(Err(NetError::NetworkStopped))
    }
}

impl Network {
    /// Starts the orderer and peer tasks on the current tokio runtime.
    /// `genesis`, if non-empty, becomes block 0 on every replica.
    pub fn start(
        config: NetworkConfig,
        contract: Arc<dyn Contract>,
        genesis: Vec<Transaction>,
    ) -> Result<Network, NetError> {
        let mut orderer = Ledger::new(contract.clone());
        if !genesis.is_empty() {
            orderer.append_block(genesis)?;
        }
        let height = orderer.height();
        let peers = (0..config.peer_count)
            .map(|_| {
                let mut ledger = Ledger::new(contract.clone());
                for b in orderer.blocks() {
                    ledger.apply_block(b)?;
                }
                Ok(Peer {
                    ledger: RwLock::new(ledger),
                    applied: watch::channel(height).0,
                })
            })
            .collect::<Result<Vec<_>, NetError>>()?;

        let (submit_tx, submit_rx) = mpsc::unbounded_channel();
        let shared = Arc::new(Shared {
            link_rng: Mutex::new(ChaCha20Rng::seed_from_u64(config.seed)),
            peers,
            ordered: watch::channel(height).0,
            paused: watch::channel(false).0,
            stopped: AtomicBool::new(false),
            submit: Mutex::new(Some(submit_tx)),
            config,
        });

        let mut links = Vec::new();
        for idx in 0..shared.peers.len() {
            let (tx, rx) = mpsc::unbounded_channel();
            links.push(tx);
            let rng = ChaCha20Rng::seed_from_u64(shared.config.seed.wrapping_add(1 + idx as u64));
            tokio::spawn(run_peer(shared.clone(), idx, rx, rng));
        }
        tokio::spawn(run_orderer(shared.clone(), submit_rx, orderer, links));
        Ok(Network { shared })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.shared.config
    }

    pub fn peer_count(&self) -> usize {
        self.shared.peers.len()
    }

    /// Peer hosting the storage node's replica.
    pub fn storage_peer(&self) -> usize {
        1.min(self.peer_count() - 1)
    }

    fn peer(&self, idx: usize) -> Result<&Peer, NetError> {
        self.shared.peers.get(idx).ok_or(NetError::UnknownPeer(idx))
    }

    /// Sleeps for one client link traversal of `bytes`.
    pub async fn link_delay(&self, bytes: usize) {
        let latency = self.shared.config.latency;
        if latency.is_zero() {
            return;
        }
        let d = latency.sample(bytes, &mut *self.shared.link_rng.lock());
        tokio::time::sleep(d).await;
    }

    /// Submits `tx` through the client link and waits for its commit.
    pub async fn submit(&self, tx: Transaction) -> Result<Receipt, NetError> {
        self.link_delay(tx.to_canonical().len()).await;
        self.submit_nowait(tx)?.wait().await
    }

    /// Enqueues `tx` with the orderer immediately. Transactions enqueued
    /// from one task are ordered in enqueue order.
    pub fn submit_nowait(&self, tx: Transaction) -> Result<PendingReceipt, NetError> {
        let (reply, rx) = oneshot::channel();
        let guard = self.shared.submit.lock();
        let sender = guard.as_ref().ok_or(NetError::NetworkStopped)?;
        sender
            .send(Submission { tx, reply })
            .map_err(|_| NetError::NetworkStopped)?;
        Ok(PendingReceipt(rx))
    }

    /// Committed value of `key` on `peer`.
    pub fn query(&self, peer: usize, key: &str) -> Result<Option<Vec<u8>>, NetError> {
        Ok(self.peer(peer)?.ledger.read().get(key).map(<[u8]>::to_vec))
    }

    /// Runs `f` against a consistent snapshot of `peer`'s replica.
    pub fn with_peer<R>(&self, peer: usize, f: impl FnOnce(&Ledger) -> R) -> Result<R, NetError> {
        Ok(f(&self.peer(peer)?.ledger.read()))
    }

    pub fn height(&self, peer: usize) -> Result<Option<u64>, NetError> {
        Ok(*self.peer(peer)?.applied.borrow())
    }

    /// Blocks of `peer` from `from` (inclusive).
    pub fn blocks_from(&self, peer: usize, from: u64) -> Result<Vec<Block>, NetError> {
        self.with_peer(peer, |l| l.blocks().iter().skip(from as usize).cloned().collect())
    }

    pub async fn wait_for_height(&self, peer: usize, height: u64) -> Result<(), NetError> {
        let mut rx = self.peer(peer)?.applied.subscribe();
        rx.wait_for(|h| h.is_some_and(|h| h >= height))
            .await
            .map(|_| ())
            .map_err(|_| NetError::NetworkStopped)
    }

    /// Waits until every peer has applied every block cut so far.
    pub async fn quiesce(&self) -> Result<(), NetError> {
        let Some(target) = *self.shared.ordered.borrow() else {
            return Ok(());
        };
        for idx in 0..self.peer_count() {
            self.wait_for_height(idx, target).await?;
        }
        Ok(())
    }

    /// Holds cut blocks at the orderer until [`Network::resume`].
    pub fn pause(&self) {
        self.shared.paused.send_replace(true);
    }

    pub fn resume(&self) {
        self.shared.paused.send_replace(false);
    }

    /// Stops accepting submissions. Already queued transactions are still
    /// ordered and delivered.
    pub fn stop(&self) {
        self.shared.stopped.store(true, Ordering::SeqCst);
        self.shared.submit.lock().take();
    }

    pub fn is_stopped(&self) -> bool {
        self.shared.stopped.load(Ordering::SeqCst)
    }
}

/// An identity submitting transactions through the network, assigning
/// nonces in submission order.
pub struct Account {
    id: String,
    keys: Keypair,
    nonce: tokio::sync::Mutex<u64>,
}

impl Account {
    /// Continues from the identity's last committed nonce on the API peer.
    pub fn new(net: &Network, id: &str, keys: Keypair) -> Self {
        let last = net.with_peer(API_PEER, |l| l.last_nonce(id)).unwrap_or(0);
        Account {
            id: id.to_string(),
            keys,
            nonce: tokio::sync::Mutex::new(last),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn keys(&self) -> &Keypair {
        &self.keys
    }

    pub async fn submit(&self, net: &Network, call: &Call) -> Result<Receipt, NetError> {
        let args = call.args();
        net.link_delay(args.len()).await;
        let pending = {
            let mut nonce = self.nonce.lock().await;
            *nonce += 1;
            let tx = Transaction::signed(&self.keys, &self.id, call.function(), args, *nonce);
            net.submit_nowait(tx)?
        };
        pending.wait().await
    }
}

async fn run_orderer(
    shared: Arc<Shared>,
    mut rx: mpsc::UnboundedReceiver<Submission>,
    mut ledger: Ledger,
    links: Vec<mpsc::UnboundedSender<(Arc<Block>, Instant)>>,
) {
    let cfg = shared.config.clone();
    while let Some(first) = rx.recv().await {
        let mut batch = vec![first];
        let deadline = Instant::now() + cfg.batch_timeout();
        while batch.len() < cfg.batch_size {
            tokio::select! {
                next = rx.recv() => match next {
                    Some(s) => batch.push(s),
                    None => break,
                },
                _ = tokio::time::sleep_until(deadline) => break,
            }
        }

        let mut pending = BTreeMap::new();
        let mut accepted = Vec::with_capacity(batch.len());
        for s in batch {
            match ledger.validate(&s.tx, &mut pending) {
                Ok(()) => accepted.push(s),
                Err(e) => {
                    let _ = s.reply.send(Err(e.into()));
                }
            }
        }
        if accepted.is_empty() {
            continue;
        }
        let txs = accepted.iter().map(|s| s.tx.clone()).collect();
        let block = match ledger.append_block(txs) {
            Ok(b) => Arc::new(b.clone()),
            Err(e) => {
                tracing::error!(error = %e, "orderer failed to cut a validated batch");
                for s in accepted {
                    let _ = s.reply.send(Err(e.clone().into()));
                }
                continue;
            }
        };
        shared.ordered.send_replace(Some(block.height));

        let mut gate = shared.paused.subscribe();
        let _ = gate.wait_for(|paused| !paused).await;
        let sent_at = Instant::now();
        for link in &links {
            let _ = link.send((block.clone(), sent_at));
        }
        let replies: Vec<_> = accepted.into_iter().map(|s| s.reply).collect();
        tokio::spawn(deliver_receipts(shared.clone(), block, replies));
    }
    tracing::debug!("orderer stopped");
}

async fn deliver_receipts(
    shared: Arc<Shared>,
    block: Arc<Block>,
    replies: Vec<oneshot::Sender<Result<Receipt, NetError>>>,
) {
    for peer in &shared.peers {
        let mut rx = peer.applied.subscribe();
        if rx.wait_for(|h| h.is_some_and(|h| h >= block.height)).await.is_err() {
            for r in replies {
                let _ = r.send(Err(NetError::NetworkStopped));
            }
            return;
        }
    }
    let outcomes: Vec<Outcome> = {
        let api = shared.peers[API_PEER].ledger.read();
        api.blocks()[block.height as usize]
            .entries
            .iter()
            .map(|e| e.outcome.clone())
            .collect()
    };
    for ((reply, entry), outcome) in replies.into_iter().zip(&block.entries).zip(outcomes) {
        let _ = reply.send(Ok(Receipt {
            height: block.height,
            tx_id: entry.tx.id(),
            outcome,
        }));
    }
}

async fn run_peer(
    shared: Arc<Shared>,
    idx: usize,
    mut rx: mpsc::UnboundedReceiver<(Arc<Block>, Instant)>,
    mut rng: ChaCha20Rng,
) {
    let latency = shared.config.latency;
    let peer = &shared.peers[idx];
    while let Some((block, sent_at)) = rx.recv().await {
        let delay = latency.sample(block.encoded_len(), &mut rng);
        if delay > Duration::ZERO {
            tokio::time::sleep_until(sent_at + delay).await;
        }
        let result = peer.ledger.write().apply_block(&block);
        match result {
            Ok(()) => {
                peer.applied.send_replace(Some(block.height));
            }
            Err(e) => {
                tracing::error!(peer = idx, height = block.height, error = %e, "peer rejected block");
                break;
            }
        }
    }
}
