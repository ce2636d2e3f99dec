use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::marketplace::{get_attestation, get_data, Marketplace, MetaData, Offer, Role};
use crate::net::NetworkConfig;
use crate::amount::Amount;

struct Env {
    net: Network,
    node: StorageNode,
    keys: BTreeMap<&'static str, Keypair>,
    accounts: BTreeMap<&'static str, Account>,
}

fn env() -> Env {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let storage = Keypair::generate(&mut rng);
    let mut keys = BTreeMap::new();
    let mut genesis = vec![Call::register(&storage, "storage", Role::Storage)];
    for id in ["alice", "bob", "eve"] {
        let kp = Keypair::generate(&mut rng);
        genesis.push(Call::register(&kp, id, Role::Member));
        keys.insert(id, kp);
    }
    let cfg = NetworkConfig {
        peer_count: 3,
        batch_timeout_ms: 2,
        ..NetworkConfig::default()
    };
    let net = Network::start(cfg, Arc::new(Marketplace), genesis).unwrap();
    let node = StorageNode::new(net.clone(), "storage", storage, Arc::new(MemStore::new()));
    let accounts = keys
        .iter()
        .map(|(id, kp)| (*id, Account::new(&net, id, kp.clone())))
        .collect();
    Env {
        net,
        node,
        keys,
        accounts,
    }
}

impl Env {
    async fn upload(&self, who: &str, uri: &str, payload: &[u8], encrypted: bool) -> Result<UploadReceipt, StorageError> {
        let req = UploadRequest::signed(&self.keys[who], who, uri, payload.to_vec(), encrypted);
        self.node.upload(req).await
    }

    async fn fetch(&self, who: &str, uri: &str) -> Result<FetchResponse, StorageError> {
        self.node.fetch(FetchRequest::signed(&self.keys[who], who, uri)).await
    }

    async fn call(&self, who: &str, call: Call) -> Outcome {
        self.accounts[who].submit(&self.net, &call).await.unwrap().outcome
    }

    async fn register_and_sell(&self, uri: &str, file_id: FileId) {
        let m = MetaData {
            id: "m1".into(),
            file_id,
            owner: "alice".into(),
            uris: vec![uri.into()],
            acl: vec!["alice".into()],
            sharing_prefix: None,
        };
        assert_eq!(self.call("alice", Call::AddData(m)).await, Outcome::Success);
        let o = Offer {
            id: "o1".into(),
            file_id,
            value: Amount::from_cents(300),
            state: true,
        };
        assert_eq!(self.call("alice", Call::CreateOffer(o)).await, Outcome::Success);
    }
}

#[tokio::test]
async fn upload_attests_digest_before_returning() {
    let e = env();
    let payload = vec![0xAB; 1024];
    let r = e.upload("alice", "mem://a", &payload, false).await.unwrap();
    assert_eq!(r.attestation.file_id, Hash256::digest(&payload));
    assert_eq!(r.attestation.acl, vec!["alice"]);
    // Committed on the storage node's own replica by the time upload returns.
    let on_chain = e
        .net
        .with_peer(e.net.storage_peer(), |l| get_attestation(l.state(), "mem://a"))
        .unwrap();
    assert_eq!(on_chain, Some(r.attestation.clone()));
    assert!(on_chain.unwrap().verify(&e.node.public_key()));

    let err = e.upload("bob", "mem://a", b"other", false).await.unwrap_err();
    assert!(matches!(err, StorageError::UriTaken(_)));
}

#[tokio::test]
async fn upload_requires_owner_signature() {
    let e = env();
    let mut req = UploadRequest::signed(&e.keys["alice"], "alice", "mem://x", b"p".to_vec(), false);
    req.payload = b"q".to_vec();
    assert!(matches!(e.node.upload(req).await, Err(StorageError::BadSignature)));
    let forged = UploadRequest::signed(&e.keys["eve"], "alice", "mem://x", b"p".to_vec(), false);
    assert!(matches!(e.node.upload(forged).await, Err(StorageError::BadSignature)));
    let stranger = Keypair::generate(&mut rand::thread_rng());
    let req = UploadRequest::signed(&stranger, "nobody", "mem://x", b"p".to_vec(), false);
    assert!(matches!(e.node.upload(req).await, Err(StorageError::BadSignature)));
}

#[tokio::test]
async fn acl_scheme_enforces_the_ledger_acl() {
    let e = env();
    let payload = b"thermostat readings".to_vec();
    let r = e.upload("alice", "mem://t", &payload, false).await.unwrap();
    assert_eq!(e.fetch("alice", "mem://t").await.unwrap().payload, payload);
    assert!(matches!(e.fetch("bob", "mem://t").await, Err(StorageError::AccessDenied)));

    e.register_and_sell("mem://t", r.attestation.file_id).await;
    assert_eq!(e.call("bob", Call::AcceptOffer(r.attestation.file_id)).await, Outcome::Success);
    let got = e.fetch("bob", "mem://t").await.unwrap();
    assert_eq!(got.payload, payload);
    assert_eq!(Hash256::digest(&got.payload), got.file_id);
    assert!(matches!(e.fetch("eve", "mem://t").await, Err(StorageError::AccessDenied)));
    assert!(matches!(e.fetch("eve", "mem://none").await, Err(StorageError::NotFound(_))));

    let acl = e
        .net
        .with_peer(0, |l| get_data(l.state(), &r.attestation.file_id).unwrap().acl)
        .unwrap();
    assert_eq!(acl, vec!["alice", "bob"]);
}

#[tokio::test]
async fn encrypted_files_are_served_to_anyone() {
    let e = env();
    e.upload("alice", "mem://c", b"ciphertext", true).await.unwrap();
    assert_eq!(e.fetch("eve", "mem://c").await.unwrap().payload, b"ciphertext");
}

#[tokio::test]
async fn logged_decisions_replay_from_the_chain() {
    let e = env();
    let r = e.upload("alice", "mem://t", b"x", false).await.unwrap();
    let _ = e.fetch("bob", "mem://t").await;
    e.register_and_sell("mem://t", r.attestation.file_id).await;
    let _ = e.fetch("bob", "mem://t").await;
    e.call("bob", Call::AcceptOffer(r.attestation.file_id)).await;
    let _ = e.fetch("bob", "mem://t").await;
    let _ = e.fetch("eve", "mem://t").await;

    let log = e.node.decisions();
    assert_eq!(log.iter().map(|d| d.granted).collect::<Vec<_>>(), [false, false, true, false]);
    let blocks = e.net.blocks_from(e.net.storage_peer(), 0).unwrap();
    let at = |h: u64| Ledger::replay(Arc::new(Marketplace), &blocks[..=h as usize]).ok();
    assert!(audit_decisions(at, &log).is_empty());

    let mut forged = log.clone();
    forged[0].granted = true;
    assert_eq!(audit_decisions(at, &forged).len(), 1);
}

#[tokio::test]
async fn concurrent_uploads_to_one_uri_admit_one() {
    let e = env();
    let (a, b) = tokio::join!(
        e.upload("alice", "mem://race", b"a", false),
        e.upload("bob", "mem://race", b"b", false)
    );
    assert_eq!(a.is_ok() as u8 + b.is_ok() as u8, 1);
}
