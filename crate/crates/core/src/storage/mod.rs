//! Mock cloud storage that is also a ledger participant.
//!
//! Uploads are attested on-chain. For plaintext files the node is the
//! enforcement point: a fetch is served iff the requestor is on the file's
//! ACL in the node's own replica. Encrypted files are served to anyone.

mod store;

use std::collections::HashSet;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{BlobStore, DirStore, MemStore, StoredFile};

use crate::crypto::{signing_payload, Hash256, Keypair, PublicKey, Signature};
use crate::ledger::{Ledger, Outcome};
use crate::marketplace::{cloud_acl, get_user, Call, FileId, StorageAttestation};
use crate::net::{Account, NetError, Network};

const UPLOAD_DOMAIN: &str = "sharechain/upload/v1";
const FETCH_DOMAIN: &str = "sharechain/fetch/v1";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("UriTaken: {0}")]
    UriTaken(String),
    #[error("BadSignature")]
    BadSignature,
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("AccessDenied")]
    AccessDenied,
    #[error("attestation failed: {0}")]
    AttestationFailed(String),
    #[error("stored payload is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Network(#[from] NetError),
    #[error("storage io: {0}")]
    Io(#[from] std::io::Error),
}

impl StorageError {
    pub fn code(&self) -> &'static str {
        match self {
            StorageError::UriTaken(_) => "UriTaken",
            StorageError::BadSignature => "BadSignature",
            StorageError::NotFound(_) => "NotFound",
            StorageError::AccessDenied => "AccessDenied",
            StorageError::AttestationFailed(_) => "AttestationFailed",
            StorageError::Corrupt(_) => "Corrupt",
            StorageError::Network(_) => "NetworkError",
            StorageError::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadRequest {
    pub owner: String,
    pub uri: String,
    #[serde(with = "crate::wire::b64")]
    pub payload: Vec<u8>,
    pub encrypted: bool,
    pub signature: Signature,
}

impl UploadRequest {
    fn signing_bytes(owner: &str, uri: &str, digest: &Hash256, encrypted: bool) -> Vec<u8> {
        signing_payload(UPLOAD_DOMAIN, &[&owner, &uri, digest, &encrypted])
    }

    pub fn signed(keys: &Keypair, owner: &str, uri: &str, payload: Vec<u8>, encrypted: bool) -> Self {
        let digest = Hash256::digest(&payload);
        UploadRequest {
            signature: keys.sign(&Self::signing_bytes(owner, uri, &digest, encrypted)),
            owner: owner.to_string(),
            uri: uri.to_string(),
            payload,
            encrypted,
        }
    }

    pub fn verify(&self, pk: &PublicKey) -> bool {
        let digest = Hash256::digest(&self.payload);
        pk.verify(
            &Self::signing_bytes(&self.owner, &self.uri, &digest, self.encrypted),
            &self.signature,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchRequest {
    pub requestor: String,
    pub uri: String,
    pub signature: Signature,
}

impl FetchRequest {
    fn signing_bytes(requestor: &str, uri: &str) -> Vec<u8> {
        signing_payload(FETCH_DOMAIN, &[&requestor, &uri])
    }

    pub fn signed(keys: &Keypair, requestor: &str, uri: &str) -> Self {
        FetchRequest {
            signature: keys.sign(&Self::signing_bytes(requestor, uri)),
            requestor: requestor.to_string(),
            uri: uri.to_string(),
        }
    }

    pub fn verify(&self, pk: &PublicKey) -> bool {
        pk.verify(&Self::signing_bytes(&self.requestor, &self.uri), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadReceipt {
    pub attestation: StorageAttestation,
    /// Height of the block carrying the attestation.
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchResponse {
    pub uri: String,
    pub file_id: FileId,
    pub encrypted: bool,
    #[serde(with = "crate::wire::b64")]
    pub payload: Vec<u8>,
}

/// One enforcement decision, with the replica height it was taken at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub requestor: String,
    pub uri: String,
    pub file_id: FileId,
    pub encrypted: bool,
    pub granted: bool,
    pub height: Option<u64>,
}

pub struct StorageNode {
    account: Account,
    net: Network,
    peer: usize,
    store: Arc<dyn BlobStore>,
    in_flight: Mutex<HashSet<String>>,
    decisions: Mutex<Vec<AccessDecision>>,
}

/// Releases a URI reservation when an upload finishes either way.
struct Reservation<'a> {
    set: &'a Mutex<HashSet<String>>,
    uri: String,
}

impl Drop for Reservation<'_> {
    fn drop(&mut self) {
        self.set.lock().remove(&self.uri);
    }
}

impl StorageNode {
    /// `id`/`keys` must match the storage identity registered in genesis.
    pub fn new(net: Network, id: &str, keys: Keypair, store: Arc<dyn BlobStore>) -> Self {
        StorageNode {
            account: Account::new(&net, id, keys),
            peer: net.storage_peer(),
            net,
            store,
            in_flight: Mutex::new(HashSet::new()),
            decisions: Mutex::new(Vec::new()),
        }
    }

    pub fn id(&self) -> &str {
        self.account.id()
    }

    pub fn public_key(&self) -> PublicKey {
        self.account.keys().public()
    }

    fn registered_key(&self, id: &str) -> Option<PublicKey> {
        self.net
            .with_peer(self.peer, |l| get_user(l.state(), id).map(|u| u.pk))
            .ok()
            .flatten()
    }

    fn reserve(&self, uri: &str) -> Result<Reservation<'_>, StorageError> {
        let mut set = self.in_flight.lock();
        if self.store.contains(uri) || !set.insert(uri.to_string()) {
            return Err(StorageError::UriTaken(uri.to_string()));
        }
        Ok(Reservation {
            set: &self.in_flight,
            uri: uri.to_string(),
        })
    }

    /// Stores the payload and commits its attestation before returning.
    pub async fn upload(&self, req: UploadRequest) -> Result<UploadReceipt, StorageError> {
        let pk = self.registered_key(&req.owner).ok_or(StorageError::BadSignature)?;
        if !req.verify(&pk) {
            return Err(StorageError::BadSignature);
        }
        let _reservation = self.reserve(&req.uri)?;
        self.net.link_delay(req.payload.len()).await;

        let file_id = Hash256::digest(&req.payload);
        let attestation =
            StorageAttestation::signed(self.account.keys(), &req.uri, file_id, &req.owner, vec![req.owner.clone()]);
        self.store.put(StoredFile {
            uri: req.uri,
            file_id,
            owner: req.owner,
            payload: req.payload,
            encrypted: req.encrypted,
        })?;
        let receipt = self
            .account
            .submit(&self.net, &Call::Attest(attestation.clone()))
            .await?;
        match receipt.outcome {
            Outcome::Success => Ok(UploadReceipt {
                attestation,
                height: receipt.height,
            }),
            Outcome::Failed(code) => Err(StorageError::AttestationFailed(code)),
        }
    }

    pub async fn fetch(&self, req: FetchRequest) -> Result<FetchResponse, StorageError> {
        let pk = self.registered_key(&req.requestor).ok_or(StorageError::BadSignature)?;
        if !req.verify(&pk) {
            return Err(StorageError::BadSignature);
        }
        let file = self
            .store
            .get(&req.uri)?
            .ok_or_else(|| StorageError::NotFound(req.uri.clone()))?;

        // One snapshot of the replica per decision.
        let (allowed, height) = self.net.with_peer(self.peer, |l| {
            let acl = cloud_acl(l.state(), &file.uri).unwrap_or_default();
            (acl.contains(&req.requestor), l.height())
        })?;
        let granted = file.encrypted || allowed;
        self.decisions.lock().push(AccessDecision {
            requestor: req.requestor.clone(),
            uri: file.uri.clone(),
            file_id: file.file_id,
            encrypted: file.encrypted,
            granted,
            height,
        });
        if !granted {
            return Err(StorageError::AccessDenied);
        }
        if Hash256::digest(&file.payload) != file.file_id {
            return Err(StorageError::Corrupt(file.uri));
        }
        self.net.link_delay(file.payload.len()).await;
        Ok(FetchResponse {
            uri: file.uri,
            file_id: file.file_id,
            encrypted: file.encrypted,
            payload: file.payload,
        })
    }

    pub fn decisions(&self) -> Vec<AccessDecision> {
        self.decisions.lock().clone()
    }
}

/// Re-derives every plaintext decision from the chain at its logged height
/// and returns the ones that disagree.
pub fn audit_decisions(ledger_at: impl Fn(u64) -> Option<Ledger>, log: &[AccessDecision]) -> Vec<AccessDecision> {
    log.iter()
        .filter(|d| {
            if d.encrypted {
                return !d.granted;
            }
            let Some(h) = d.height else { return d.granted };
            let Some(l) = ledger_at(h) else { return true };
            let allowed = cloud_acl(l.state(), &d.uri).is_some_and(|acl| acl.contains(&d.requestor));
            allowed != d.granted
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests;
