//! Key authority: holds the master secret and hands out prefix keys to
//! identities the ledger authorizes.
//!
//! Authorization comes from a private ledger replica synced from a peer.
//! A data item registered with a sharing prefix `P` authorizes every ACL
//! member for `P` and any identity below it. The prefix owner (root label)
//! may additionally obtain keys for its own namespace to provision devices.

mod wrap;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use wrap::{open_key, seal_key, SealedKey};

use crate::crypto::{signing_payload, Hash256, Keypair, PublicKey, Signature};
use crate::encoding::Encode;
use crate::ledger::{Block, Ledger, Outcome};
use crate::marketplace::{get_user, list_data, Call, FileId, Marketplace};
use crate::net::Network;
use crate::prefix::{extract, MasterKeyPair, MasterPublicKey, PrefixIdentity, PrefixKey};

const REQUEST_DOMAIN: &str = "sharechain/keyreq/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyPurpose {
    /// Key for data bought through the marketplace.
    Access,
    /// Owner's own namespace key, for provisioning encrypting devices.
    Provision,
}

impl Encode for KeyPurpose {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(match self {
            KeyPurpose::Access => 0,
            KeyPurpose::Provision => 1,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRequest {
    pub requestor: String,
    pub requestor_pk: PublicKey,
    pub prefix: PrefixIdentity,
    pub purpose: KeyPurpose,
    /// The authority must have synced at least this far, typically the
    /// height of the requestor's purchase.
    #[serde(default)]
    pub min_height: u64,
    pub nonce: u64,
    pub signature: Signature,
}

impl KeyRequest {
    fn signing_bytes(&self) -> Vec<u8> {
        signing_payload(
            REQUEST_DOMAIN,
            &[
                &self.requestor,
                &self.requestor_pk,
                &self.prefix.to_string(),
                &self.purpose,
                &self.min_height,
                &self.nonce,
            ],
        )
    }

    pub fn signed(
        keys: &Keypair,
        requestor: &str,
        prefix: PrefixIdentity,
        purpose: KeyPurpose,
        min_height: u64,
        nonce: u64,
    ) -> Self {
        let mut req = KeyRequest {
            requestor: requestor.to_string(),
            requestor_pk: keys.public(),
            prefix,
            purpose,
            min_height,
            nonce,
            signature: Signature([0; 64]),
        };
        req.signature = keys.sign(&req.signing_bytes());
        req
    }

    pub fn verify(&self) -> bool {
        self.requestor_pk.verify(&self.signing_bytes(), &self.signature)
    }
}

/// Ledger position of the transaction that authorized a grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantRef {
    pub height: u64,
    pub tx_id: Hash256,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrappedKeyResponse {
    pub prefix: PrefixIdentity,
    pub wrapped_key: SealedKey,
    pub grant_tx_ref: GrantRef,
    /// Replica height the decision was taken at.
    pub height: u64,
    pub mpk: MasterPublicKey,
}

impl WrappedKeyResponse {
    pub fn open(&self, requestor: &str, keys: &Keypair) -> Option<PrefixKey> {
        open_key(requestor, keys, &self.prefix.to_string(), &self.wrapped_key)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthorityError {
    #[error("Denied")]
    Denied,
    #[error("UnknownPrefix")]
    UnknownPrefix,
    #[error("StaleSync: synced to {have:?}, request needs {want}")]
    StaleSync { have: Option<u64>, want: u64 },
    #[error("BadSignature")]
    BadSignature,
    #[error("UnreachablePeer: {0}")]
    UnreachablePeer(String),
}

impl AuthorityError {
    pub fn code(&self) -> &'static str {
        match self {
            AuthorityError::Denied => "Denied",
            AuthorityError::UnknownPrefix => "UnknownPrefix",
            AuthorityError::StaleSync { .. } => "StaleSync",
            AuthorityError::BadSignature => "BadSignature",
            AuthorityError::UnreachablePeer(_) => "UnreachablePeer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Grant,
    Deny,
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub requestor: String,
    pub prefix: String,
    pub purpose: KeyPurpose,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub height: Option<u64>,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grant_tx_ref: Option<GrantRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    pub from: Option<u64>,
    pub to: Option<u64>,
    pub applied: usize,
}

/// The authority's private replica plus an index of authorizing
/// transactions.
struct View {
    ledger: Ledger,
    /// Successful purchases and registrations, per `(identity, file)`.
    acl_grants: BTreeMap<(String, FileId), GrantRef>,
    registrations: BTreeMap<String, GrantRef>,
}

impl View {
    fn new() -> Self {
        View {
            ledger: Ledger::new(Arc::new(Marketplace)),
            acl_grants: BTreeMap::new(),
            registrations: BTreeMap::new(),
        }
    }

    fn apply(&mut self, block: &Block) -> Result<(), AuthorityError> {
        self.ledger
            .apply_block(block)
            .map_err(|e| AuthorityError::UnreachablePeer(format!("peer served an invalid block: {e}")))?;
        for e in block.entries.iter().filter(|e| e.outcome == Outcome::Success) {
            let at = GrantRef {
                height: block.height,
                tx_id: e.tx.id(),
            };
            match Call::decode(&e.tx.function, &e.tx.args) {
                Ok(Call::AcceptOffer(fid)) => {
                    self.acl_grants.insert((e.tx.invoker.clone(), fid), at);
                }
                Ok(Call::AddData(m)) => {
                    self.acl_grants.insert((m.owner, m.file_id), at);
                }
                Ok(Call::Register(r)) => {
                    self.registrations.insert(r.id, at);
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn decide(&self, req: &KeyRequest) -> Result<GrantRef, AuthorityError> {
        let state = self.ledger.state();
        match get_user(state, &req.requestor) {
            Some(u) if u.pk == req.requestor_pk && req.verify() => {}
            _ => return Err(AuthorityError::BadSignature),
        }
        if self.ledger.height().is_none_or(|h| h < req.min_height) {
            return Err(AuthorityError::StaleSync {
                have: self.ledger.height(),
                want: req.min_height,
            });
        }
        match req.purpose {
            KeyPurpose::Provision => {
                if req.prefix.root() != req.requestor {
                    return Err(AuthorityError::Denied);
                }
                self.registrations
                    .get(&req.requestor)
                    .copied()
                    .ok_or(AuthorityError::Denied)
            }
            KeyPurpose::Access => {
                let mut related = false;
                for m in list_data(state) {
                    let Some(p) = m.sharing_prefix.as_deref().and_then(|p| p.parse::<PrefixIdentity>().ok()) else {
                        continue;
                    };
                    related |= p.is_prefix_of(&req.prefix) || req.prefix.is_prefix_of(&p);
                    if p.is_prefix_of(&req.prefix) && m.acl.contains(&req.requestor) {
                        if let Some(r) = self.acl_grants.get(&(req.requestor.clone(), m.file_id)) {
                            return Ok(*r);
                        }
                    }
                }
                Err(if related {
                    AuthorityError::Denied
                } else {
                    AuthorityError::UnknownPrefix
                })
            }
        }
    }
}

pub struct KeyAuthority {
    master: MasterKeyPair,
    net: Network,
    source_peer: usize,
    view: RwLock<View>,
    log: Mutex<(Vec<DecisionRecord>, Option<File>)>,
    sync_timeout: Duration,
}

impl KeyAuthority {
    pub fn new(master: MasterKeyPair, net: Network, source_peer: usize) -> Self {
        KeyAuthority {
            master,
            net,
            source_peer,
            view: RwLock::new(View::new()),
            log: Mutex::new((Vec::new(), None)),
            sync_timeout: Duration::from_secs(5),
        }
    }

    /// Also appends every decision to `path` as one JSON object per line.
    pub fn with_log_file(self, path: impl AsRef<Path>) -> std::io::Result<Self> {
        self.log_to(path)?;
        Ok(self)
    }

    pub fn log_to(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.log.lock().1 = Some(file);
        Ok(())
    }

    pub fn mpk(&self) -> MasterPublicKey {
        self.master.mpk
    }

    pub fn height(&self) -> Option<u64> {
        self.view.read().ledger.height()
    }

    /// Brings the replica to exactly `target`, waiting briefly for the
    /// source peer if it is behind.
    pub async fn sync_to(&self, target: u64) -> Result<SyncReport, AuthorityError> {
        let unreachable = |e: crate::net::NetError| AuthorityError::UnreachablePeer(e.to_string());
        match tokio::time::timeout(self.sync_timeout, self.net.wait_for_height(self.source_peer, target)).await {
            Ok(r) => r.map_err(unreachable)?,
            Err(_) => {
                return Err(AuthorityError::UnreachablePeer(format!(
                    "peer {} did not reach height {target}",
                    self.source_peer
                )))
            }
        }
        let from = self.height();
        let next = from.map_or(0, |h| h + 1);
        if next > target {
            return Ok(SyncReport {
                from,
                to: from,
                applied: 0,
            });
        }
        let blocks = self.net.blocks_from(self.source_peer, next).map_err(unreachable)?;
        let mut view = self.view.write();
        let mut applied = 0;
        for b in blocks.iter().take_while(|b| b.height <= target) {
            // A concurrent sync may have got here first.
            if view.ledger.height().is_some_and(|h| h >= b.height) {
                continue;
            }
            view.apply(b)?;
            applied += 1;
        }
        Ok(SyncReport {
            from,
            to: view.ledger.height(),
            applied,
        })
    }

    /// Syncs to whatever the source peer has committed.
    pub async fn sync_latest(&self) -> Result<SyncReport, AuthorityError> {
        let h = self
            .net
            .height(self.source_peer)
            .map_err(|e| AuthorityError::UnreachablePeer(e.to_string()))?;
        match h {
            Some(h) => self.sync_to(h).await,
            None => Ok(SyncReport {
                from: None,
                to: None,
                applied: 0,
            }),
        }
    }

    pub fn request_key(&self, req: &KeyRequest) -> Result<WrappedKeyResponse, AuthorityError> {
        let view = self.view.read();
        let height = view.ledger.height();
        let decision = view.decide(req);
        let result = decision.clone().and_then(|grant| {
            let key = extract(&self.master.msk, &req.prefix);
            let sealed = seal_key(&req.requestor, &req.requestor_pk, &key, &mut rand::thread_rng())
                .ok_or(AuthorityError::BadSignature)?;
            Ok(WrappedKeyResponse {
                prefix: req.prefix.clone(),
                wrapped_key: sealed,
                grant_tx_ref: grant,
                height: height.expect("a grant implies a synced replica"),
                mpk: self.master.mpk,
            })
        });
        self.record(DecisionRecord {
            requestor: req.requestor.clone(),
            prefix: req.prefix.to_string(),
            purpose: req.purpose,
            decision: if result.is_ok() { Decision::Grant } else { Decision::Deny },
            reason: result.as_ref().err().map(|e| e.code().to_string()),
            height,
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
            grant_tx_ref: result.as_ref().ok().map(|r| r.grant_tx_ref),
        });
        result
    }

    fn record(&self, rec: DecisionRecord) {
        let mut log = self.log.lock();
        if let Some(f) = log.1.as_mut() {
            let mut line = serde_json::to_vec(&rec).expect("record serializes");
            line.push(b'\n');
            if let Err(e) = f.write_all(&line) {
                tracing::warn!(error = %e, "could not append to decision log");
            }
        }
        log.0.push(rec);
    }

    pub fn decisions(&self) -> Vec<DecisionRecord> {
        self.log.lock().0.clone()
    }
}

/// Replays `blocks` and returns every granted record that the chain, at
/// the record's height, does not justify.
pub fn audit_grants(blocks: &[Block], records: &[DecisionRecord]) -> Vec<DecisionRecord> {
    let mut grants: Vec<&DecisionRecord> = records.iter().filter(|r| r.decision == Decision::Grant).collect();
    grants.sort_by_key(|r| r.height);
    let mut ledger = Ledger::new(Arc::new(Marketplace));
    let mut bad = Vec::new();
    let mut next = 0usize;
    for rec in grants {
        let Some(h) = rec.height else {
            bad.push(rec.clone());
            continue;
        };
        while next <= h as usize && next < blocks.len() {
            if ledger.apply_block(&blocks[next]).is_err() {
                return records.to_vec();
            }
            next += 1;
        }
        let Ok(prefix) = rec.prefix.parse::<PrefixIdentity>() else {
            bad.push(rec.clone());
            continue;
        };
        let ok = ledger.height() == Some(h)
            && match rec.purpose {
                KeyPurpose::Provision => {
                    prefix.root() == rec.requestor && get_user(ledger.state(), &rec.requestor).is_some()
                }
                KeyPurpose::Access => list_data(ledger.state()).iter().any(|m| {
                    m.acl.contains(&rec.requestor)
                        && m.sharing_prefix
                            .as_deref()
                            .and_then(|p| p.parse::<PrefixIdentity>().ok())
                            .is_some_and(|p| p.is_prefix_of(&prefix))
                }),
            };
        if !ok {
            bad.push(rec.clone());
        }
    }
    bad
}
