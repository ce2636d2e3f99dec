use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::crypto::Keypair;
use crate::ledger::{Ledger, Outcome};

struct World {
    ledger: Ledger,
    keys: BTreeMap<String, Keypair>,
    nonces: BTreeMap<String, u64>,
    rng: ChaCha20Rng,
}

impl World {
    fn new() -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let storage = Keypair::generate(&mut rng);
        let mut ledger = Ledger::new(Arc::new(Marketplace));
        ledger
            .append_block(vec![Call::register(&storage, "storage", Role::Storage)])
            .unwrap();
        let mut w = World {
            ledger,
            keys: BTreeMap::from([("storage".to_string(), storage)]),
            nonces: BTreeMap::from([("storage".to_string(), 1)]),
            rng,
        };
        for id in ["alice", "bob", "eve", "aaron"] {
            w.register(id);
        }
        w
    }

    fn register(&mut self, id: &str) {
        let kp = Keypair::generate(&mut self.rng);
        let tx = Call::register(&kp, id, Role::Member);
        self.keys.insert(id.to_string(), kp);
        self.nonces.insert(id.to_string(), 1);
        self.commit(tx);
    }

    fn commit(&mut self, tx: crate::ledger::Transaction) -> Outcome {
        let block = self.ledger.append_block(vec![tx]).unwrap();
        block.entries[0].outcome.clone()
    }

    fn call(&mut self, who: &str, call: Call) -> Result<(), String> {
        let n = self.nonces.get_mut(who).unwrap();
        *n += 1;
        let tx = call.sign(&self.keys[who], who, *n);
        match self.commit(tx) {
            Outcome::Success => Ok(()),
            Outcome::Failed(code) => Err(code),
        }
    }

    /// Storage-side upload: attests `(uri, digest, owner, acl)`.
    fn attest(&mut self, uri: &str, payload: &[u8], owner: &str, acl: &[&str]) -> FileId {
        let file_id = Hash256::digest(payload);
        let att = StorageAttestation::signed(
            &self.keys["storage"],
            uri,
            file_id,
            owner,
            acl.iter().map(|s| s.to_string()).collect(),
        );
        self.call("storage", Call::Attest(att)).unwrap();
        file_id
    }

    fn publish(&mut self, owner: &str, uri: &str, payload: &[u8], price_cents: i64) -> FileId {
        let fid = self.attest(uri, payload, owner, &[owner]);
        self.call(owner, Call::AddData(mdata(fid, owner, uri, &[owner]))).unwrap();
        self.call(owner, Call::CreateOffer(offer(fid, price_cents))).unwrap();
        fid
    }

    fn state(&self) -> &StateStore {
        self.ledger.state()
    }
}

fn mdata(file_id: FileId, owner: &str, uri: &str, acl: &[&str]) -> MetaData {
    MetaData {
        id: format!("m-{uri}"),
        file_id,
        owner: owner.to_string(),
        uris: vec![uri.to_string()],
        acl: acl.iter().map(|s| s.to_string()).collect(),
        sharing_prefix: None,
    }
}

fn offer(file_id: FileId, cents: i64) -> Offer {
    Offer {
        id: format!("o-{}", &file_id.to_hex()[..8]),
        file_id,
        value: Amount::from_cents(cents),
        state: false,
    }
}

fn err(code: ContractError) -> Result<(), String> {
    Err(code.code().to_string())
}

#[test]
fn verify_data_cases() {
    let mut w = World::new();
    let fid = w.attest("s3://a/1", b"one", "alice", &["alice"]);
    assert!(verify_data(w.state(), &mdata(fid, "alice", "s3://a/1", &["alice"])));
    assert!(!verify_data(w.state(), &mdata(fid, "alice", "s3://none", &["alice"])));
    assert!(!verify_data(w.state(), &mdata(fid, "alice", "s3://a/1", &["alice", "bob"])));
    assert!(!verify_data(w.state(), &mdata(fid, "bob", "s3://a/1", &["alice"])));
    assert!(!verify_data(w.state(), &mdata(Hash256::digest(b"two"), "alice", "s3://a/1", &["alice"])));
    let mut none = mdata(fid, "alice", "s3://a/1", &["alice"]);
    none.uris.clear();
    assert!(!verify_data(w.state(), &none));
}

#[test]
fn add_data_stores_acl_of_owner_only() {
    let mut w = World::new();
    let fid = w.attest("u1", b"x", "alice", &["alice", "eve"]);
    w.call("alice", Call::AddData(mdata(fid, "alice", "u1", &["alice", "eve"]))).unwrap();
    let stored = get_data(w.state(), &fid).unwrap();
    assert_eq!(stored.acl, vec!["alice"]);
    assert_eq!(cloud_acl(w.state(), "u1").unwrap(), vec!["alice"]);
    assert!(w.state().get(&format!("data{}", fid.to_hex())).is_some());

    assert_eq!(w.call("alice", Call::AddData(mdata(fid, "alice", "u1", &["alice"]))), err(ContractError::DuplicateData));
}

#[test]
fn add_data_rejections() {
    let mut w = World::new();
    let fid = w.attest("u1", b"x", "alice", &["alice"]);
    assert_eq!(w.call("bob", Call::AddData(mdata(fid, "alice", "u1", &["alice"]))), err(ContractError::NotOwner));
    assert_eq!(
        w.call("alice", Call::AddData(mdata(fid, "alice", "nowhere", &["alice"]))),
        err(ContractError::VerificationFailed)
    );
    let mut m = mdata(fid, "alice", "u1", &["alice"]);
    m.sharing_prefix = Some("bob/home".into());
    assert_eq!(w.call("alice", Call::AddData(m.clone())), err(ContractError::ForeignPrefix));
    m.sharing_prefix = Some("Alice//".into());
    assert_eq!(w.call("alice", Call::AddData(m.clone())), err(ContractError::MalformedPrefix));
    m.sharing_prefix = Some("alice/home/".into());
    w.call("alice", Call::AddData(m)).unwrap();
    assert_eq!(get_data(w.state(), &fid).unwrap().sharing_prefix.as_deref(), Some("alice/home"));
}

#[test]
fn offer_lifecycle() {
    let mut w = World::new();
    let fid = w.attest("u1", b"x", "alice", &["alice"]);
    assert_eq!(w.call("alice", Call::CreateOffer(offer(fid, 300))), err(ContractError::UnknownData));
    w.call("alice", Call::AddData(mdata(fid, "alice", "u1", &["alice"]))).unwrap();
    assert_eq!(w.call("bob", Call::CreateOffer(offer(fid, 300))), err(ContractError::NotOwner));
    assert_eq!(w.call("alice", Call::CreateOffer(offer(fid, -1))), err(ContractError::NegativePrice));
    w.call("alice", Call::CreateOffer(offer(fid, 300))).unwrap();
    let o = get_offer(w.state(), &fid).unwrap();
    assert!(o.state);
    assert_eq!(o.value.to_string(), "3.00");

    assert_eq!(w.call("bob", Call::RevokeOffer(fid)), err(ContractError::NotOwner));
    w.call("alice", Call::RevokeOffer(fid)).unwrap();
    w.call("alice", Call::RevokeOffer(fid)).unwrap();
    assert!(!get_offer(w.state(), &fid).unwrap().state);
    assert_eq!(w.call("bob", Call::AcceptOffer(fid)), err(ContractError::InactiveOffer));
    assert_eq!(w.call("alice", Call::RevokeOffer(Hash256::digest(b"?"))), err(ContractError::UnknownOffer));
}

#[test]
fn accept_offer_updates_acl_iou_and_state() {
    let mut w = World::new();
    let fid = w.publish("alice", "u1", b"thermo", 300);
    w.call("bob", Call::AcceptOffer(fid)).unwrap();
    assert_eq!(get_data(w.state(), &fid).unwrap().acl, vec!["alice", "bob"]);
    assert!(!get_offer(w.state(), &fid).unwrap().state);
    // "bob" > "alice": bob is user2 and owes alice.
    let acc = get_iou_account(w.state(), "alice", "bob").unwrap();
    assert_eq!((acc.user1.as_str(), acc.user2.as_str()), ("alice", "bob"));
    assert_eq!(acc.value, Amount::from_cents(300));
    assert_eq!(get_iou(w.state(), "bob", "alice").unwrap(), Amount::from_cents(300));

    assert_eq!(w.call("bob", Call::AcceptOffer(fid)), err(ContractError::InactiveOffer));
    assert_eq!(w.call("alice", Call::AcceptOffer(fid)), err(ContractError::SelfPurchase));

    // Re-offer to others; bob already has access.
    w.call("alice", Call::CreateOffer(offer(fid, 100))).unwrap();
    assert_eq!(w.call("bob", Call::AcceptOffer(fid)), err(ContractError::AlreadyInACL));
    w.call("eve", Call::AcceptOffer(fid)).unwrap();
    assert_eq!(get_data(w.state(), &fid).unwrap().acl, vec!["alice", "bob", "eve"]);
}

#[test]
fn smaller_id_buyer_gets_negative_balance() {
    let mut w = World::new();
    let fid = w.publish("alice", "u1", b"x", 200);
    w.call("aaron", Call::AcceptOffer(fid)).unwrap();
    assert_eq!(get_iou(w.state(), "aaron", "alice").unwrap(), Amount::from_cents(-200));
}

#[test]
fn iou_nets_across_directions() {
    let mut w = World::new();
    assert_eq!(get_iou(w.state(), "alice", "bob").unwrap(), Amount::ZERO);
    assert_eq!(get_iou(w.state(), "alice", "alice"), Err(ContractError::SameIdentity));
    let a = w.publish("alice", "u1", b"a", 300);
    let b = w.publish("bob", "u2", b"b", 100);
    w.call("bob", Call::AcceptOffer(a)).unwrap();
    w.call("alice", Call::AcceptOffer(b)).unwrap();
    assert_eq!(get_iou(w.state(), "alice", "bob").unwrap(), Amount::from_cents(200));
}

#[test]
fn failed_accept_writes_nothing() {
    let mut w = World::new();
    let fid = w.publish("alice", "u1", b"x", 300);
    w.call("alice", Call::RevokeOffer(fid)).unwrap();
    let before = w.state().clone();
    let tx = Call::AcceptOffer(fid).sign(&w.keys["bob"], "bob", 2);
    let (delta, outcome) = w.ledger.apply_transaction(&tx).unwrap();
    assert!(delta.is_empty());
    assert_eq!(outcome, Outcome::Failed("InactiveOffer".into()));
    assert_eq!(w.state(), &before);
}

#[test]
fn add_data_delta_has_data_key() {
    let mut w = World::new();
    let fid = w.attest("u1", b"x", "alice", &["alice"]);
    let tx = Call::AddData(mdata(fid, "alice", "u1", &["alice"])).sign(&w.keys["alice"], "alice", 2);
    let (delta, outcome) = w.ledger.apply_transaction(&tx).unwrap();
    assert_eq!(outcome, Outcome::Success);
    assert!(delta.contains_key(&format!("data{}", fid.to_hex())));
}

#[test]
fn attestation_rules() {
    let mut w = World::new();
    let fid = Hash256::digest(b"x");
    let forged = StorageAttestation::signed(&w.keys["alice"], "u9", fid, "alice", vec!["alice".into()]);
    assert_eq!(w.call("alice", Call::Attest(forged.clone())), err(ContractError::NotStorage));
    assert_eq!(w.call("storage", Call::Attest(forged)), err(ContractError::BadAttestation));
    w.attest("u9", b"x", "alice", &["alice"]);
    let again = StorageAttestation::signed(&w.keys["storage"], "u9", fid, "bob", vec!["bob".into()]);
    assert_eq!(w.call("storage", Call::Attest(again)), err(ContractError::AttestationExists));
    assert!(get_attestation(w.state(), "u9").unwrap().verify(&w.keys["storage"].public()));
}

#[test]
fn registration_rules() {
    let mut w = World::new();
    let kp = Keypair::generate(&mut w.rng);
    let tx = Call::register(&kp, "mallory", Role::Storage);
    assert_eq!(w.commit(tx), Outcome::Failed("GenesisOnly".into()));
    let tx = Call::register(&kp, "Mallory", Role::Member);
    assert_eq!(w.commit(tx), Outcome::Failed("InvalidId".into()));
    let tx = Call::Register(RegisterArgs {
        id: "other".into(),
        pk: kp.public(),
        role: Role::Member,
    })
    .sign(&kp, "mallory", 2);
    assert_eq!(w.commit(tx), Outcome::Failed("IdMismatch".into()));
    // Re-registering an existing id must be signed by the existing key.
    let tx = Call::register(&kp, "alice", Role::Member);
    assert!(w.ledger.append_block(vec![tx]).is_err());
}

#[test]
fn list_offers_filters() {
    let mut w = World::new();
    assert!(list_offers(w.state(), false).is_empty());
    let a = w.publish("alice", "u1", b"1", 100);
    w.publish("alice", "u2", b"2", 200);
    w.publish("bob", "u3", b"3", 300);
    w.call("eve", Call::AcceptOffer(a)).unwrap();
    assert_eq!(list_offers(w.state(), true).len(), 2);
    assert_eq!(list_offers(w.state(), false).len(), 3);
    assert_eq!(list_data(w.state()).len(), 3);
}

#[test]
fn error_codes_roundtrip() {
    for e in ContractError::ALL {
        assert_eq!(e.code().parse::<ContractError>(), Ok(e));
    }
}

#[test]
fn call_roundtrip() {
    let w = World::new();
    let fid = Hash256::digest(b"x");
    let calls = [
        Call::AddData(mdata(fid, "alice", "u", &["alice"])),
        Call::CreateOffer(offer(fid, 5)),
        Call::RevokeOffer(fid),
        Call::AcceptOffer(fid),
        Call::Attest(StorageAttestation::signed(&w.keys["storage"], "u", fid, "a", vec![])),
    ];
    for c in calls {
        assert_eq!(Call::decode(c.function(), &c.args()).unwrap(), c);
    }
}

/// Signed sum of accepted prices per pair, recomputed from the chain with
/// nothing but the transaction arguments and prior offer/ownership events.
fn iou_oracle(blocks: &[crate::ledger::Block]) -> BTreeMap<(String, String), i64> {
    let mut owner: BTreeMap<FileId, String> = BTreeMap::new();
    let mut price: BTreeMap<FileId, i64> = BTreeMap::new();
    let mut sums = BTreeMap::new();
    for b in blocks {
        for e in &b.entries {
            if e.outcome != Outcome::Success {
                continue;
            }
            match Call::decode(&e.tx.function, &e.tx.args).unwrap() {
                Call::AddData(m) => {
                    owner.insert(m.file_id, m.owner);
                }
                Call::CreateOffer(o) => {
                    price.insert(o.file_id, o.value.cents());
                }
                Call::AcceptOffer(fid) => {
                    let seller = owner[&fid].clone();
                    let buyer = e.tx.invoker.clone();
                    let p = price[&fid];
                    let (key, signed) = if buyer > seller { ((seller, buyer), p) } else { ((buyer, seller), -p) };
                    *sums.entry(key).or_insert(0) += signed;
                }
                _ => {}
            }
        }
    }
    sums
}

fn run_workload(seed: u64, n: usize) -> Ledger {
    let mut wl = crate::workload::Workload::new(seed, 6);
    let mut ledger = Ledger::new(Arc::new(Marketplace));
    ledger.append_block(wl.genesis()).unwrap();
    let mut batch = Vec::new();
    for _ in 0..n {
        let tx = wl.next_tx();
        let mut probe = BTreeMap::new();
        for t in &batch {
            ledger.validate(t, &mut probe).unwrap();
        }
        if ledger.validate(&tx, &mut probe).is_ok() {
            batch.push(tx);
        }
        if batch.len() == 8 {
            ledger.append_block(std::mem::take(&mut batch)).unwrap();
        }
    }
    if !batch.is_empty() {
        ledger.append_block(batch).unwrap();
    }
    ledger
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]

    #[test]
    fn iou_conservation_and_payment_gating(seed in proptest::prelude::any::<u64>()) {
        let ledger = run_workload(seed, 300);
        let oracle = iou_oracle(ledger.blocks());
        let names: Vec<String> = crate::workload::Workload::new(seed, 6).members().iter().map(|m| m.0.clone()).collect();
        for a in &names {
            for b in names.iter().filter(|b| a < *b) {
                let expected = oracle.get(&(a.clone(), b.clone())).copied().unwrap_or(0);
                proptest::prop_assert_eq!(get_iou(ledger.state(), a, b).unwrap().cents(), expected);
            }
        }
        let report = audit_chain(ledger.blocks()).unwrap();
        proptest::prop_assert!(report.violations.is_empty());
        let live: BTreeMap<_, _> = list_data(ledger.state()).into_iter().map(|m| (m.file_id, m.acl)).collect();
        proptest::prop_assert_eq!(report.acls, live);
    }
}

#[test]
fn audit_reconstructs_acls_and_purchases() {
    let mut w = World::new();
    let fid = w.publish("alice", "u1", b"x", 300);
    w.call("bob", Call::AcceptOffer(fid)).unwrap();
    let report = audit_chain(w.ledger.blocks()).unwrap();
    assert!(report.violations.is_empty());
    assert_eq!(report.acls[&fid], vec!["alice", "bob"]);
    assert_eq!(report.purchases.len(), 1);
    assert_eq!(report.purchases[0].1, "bob");
}
