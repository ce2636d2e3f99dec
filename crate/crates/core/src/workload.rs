//! Seeded random marketplace traffic for tests and benchmarks.
//!
//! The generator only tracks what it has sent, not what committed, so a
//! realistic share of its transactions fail at the contract (wrong owner,
//! inactive offer, duplicate data) or are rejected before ordering (bad
//! signature, replayed nonce).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::amount::Amount;
use crate::crypto::{Hash256, Keypair, Signature};
use crate::ledger::Transaction;
use crate::marketplace::{Call, FileId, MetaData, Offer, Role, StorageAttestation};

pub const STORAGE_ID: &str = "storage";

const NAMES: [&str; 10] = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy",
];

/// Mix of generated operations, as relative weights.
#[derive(Debug, Clone, Copy)]
pub struct Mix {
    pub attest: u32,
    pub add_data: u32,
    pub create_offer: u32,
    pub revoke_offer: u32,
    pub accept_offer: u32,
    pub bad_signature: u32,
    pub replay: u32,
}

impl Default for Mix {
    fn default() -> Self {
        Mix {
            attest: 3,
            add_data: 3,
            create_offer: 4,
            revoke_offer: 1,
            accept_offer: 6,
            bad_signature: 1,
            replay: 1,
        }
    }
}

pub struct Workload {
    rng: ChaCha20Rng,
    storage: Keypair,
    members: Vec<(String, Keypair)>,
    nonces: BTreeMap<String, u64>,
    /// `(uri, owner, file_id)` for every attestation sent.
    uploads: Vec<(String, String, FileId)>,
    sent: Vec<Transaction>,
    mix: Mix,
}

impl Workload {
    pub fn new(seed: u64, members: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let storage = Keypair::generate(&mut rng);
        let members = (0..members)
            .map(|i| {
                let id = NAMES.get(i).map_or_else(|| format!("user{i}"), |n| n.to_string());
                (id, Keypair::generate(&mut rng))
            })
            .collect();
        Workload {
            rng,
            storage,
            members,
            nonces: BTreeMap::new(),
            uploads: Vec::new(),
            sent: Vec::new(),
            mix: Mix::default(),
        }
    }

    pub fn with_mix(mut self, mix: Mix) -> Self {
        self.mix = mix;
        self
    }

    pub fn storage_keys(&self) -> &Keypair {
        &self.storage
    }

    pub fn members(&self) -> &[(String, Keypair)] {
        &self.members
    }

    pub fn keys_of(&self, id: &str) -> Option<&Keypair> {
        if id == STORAGE_ID {
            return Some(&self.storage);
        }
        self.members.iter().find(|(m, _)| m == id).map(|(_, k)| k)
    }

    /// Registration of the storage node and every member; belongs in the
    /// genesis block.
    pub fn genesis(&mut self) -> Vec<Transaction> {
        let mut txs = vec![Call::register(&self.storage, STORAGE_ID, Role::Storage)];
        self.nonces.insert(STORAGE_ID.to_string(), 1);
        for (id, kp) in &self.members {
            txs.push(Call::register(kp, id, Role::Member));
            self.nonces.insert(id.clone(), 1);
        }
        self.sent.extend(txs.iter().cloned());
        txs
    }

    fn sign(&mut self, who: &str, call: Call) -> Transaction {
        let nonce = self.nonces.entry(who.to_string()).or_insert(0);
        *nonce += 1;
        let n = *nonce;
        let keys = self.keys_of(who).expect("known identity");
        let tx = call.sign(keys, who, n);
        self.sent.push(tx.clone());
        tx
    }

    fn random_member(&mut self) -> String {
        self.members.choose(&mut self.rng).expect("at least one member").0.clone()
    }

    fn random_upload(&mut self) -> Option<(String, String, FileId)> {
        self.uploads.choose(&mut self.rng).cloned()
    }

    pub fn next_tx(&mut self) -> Transaction {
        let m = self.mix;
        let weights = [
            m.attest,
            m.add_data,
            m.create_offer,
            m.revoke_offer,
            m.accept_offer,
            m.bad_signature,
            m.replay,
        ];
        let total: u32 = weights.iter().sum();
        let mut pick = self.rng.gen_range(0..total);
        let mut kind = 0;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                kind = i;
                break;
            }
            pick -= w;
        }
        if self.uploads.is_empty() && (1..=4).contains(&kind) {
            kind = 0;
        }
        match kind {
            0 => self.attest(),
            1 => self.add_data(),
            2 => self.create_offer(),
            3 => {
                let (_, owner, fid) = self.random_upload().expect("non-empty");
                let who = if self.rng.gen_bool(0.9) { owner } else { self.random_member() };
                self.sign(&who, Call::RevokeOffer(fid))
            }
            4 => {
                let (_, _, fid) = self.random_upload().expect("non-empty");
                let who = self.random_member();
                self.sign(&who, Call::AcceptOffer(fid))
            }
            5 => self.bad_signature(),
            _ => self.replay(),
        }
    }

    fn attest(&mut self) -> Transaction {
        let owner = self.random_member();
        let uri = format!("mem://{}/{}", owner, self.uploads.len());
        let mut payload = [0u8; 32];
        self.rng.fill(&mut payload);
        let fid = Hash256::digest(&payload);
        let att = StorageAttestation::signed(&self.storage, &uri, fid, &owner, vec![owner.clone()]);
        self.uploads.push((uri, owner, fid));
        self.sign(STORAGE_ID, Call::Attest(att))
    }

    fn add_data(&mut self) -> Transaction {
        let (uri, owner, fid) = self.random_upload().expect("non-empty");
        let who = if self.rng.gen_bool(0.9) { owner.clone() } else { self.random_member() };
        let mdata = MetaData {
            id: format!("m{}", &fid.to_hex()[..8]),
            file_id: fid,
            owner: owner.clone(),
            uris: vec![uri],
            acl: vec![owner.clone()],
            sharing_prefix: self.rng.gen_bool(0.5).then(|| format!("{owner}/d{}", self.uploads.len() % 4)),
        };
        self.sign(&who, Call::AddData(mdata))
    }

    fn create_offer(&mut self) -> Transaction {
        let (_, owner, fid) = self.random_upload().expect("non-empty");
        let who = if self.rng.gen_bool(0.9) { owner } else { self.random_member() };
        let offer = Offer {
            id: format!("o{}", self.sent.len()),
            file_id: fid,
            value: Amount::from_cents(self.rng.gen_range(1..=2_000)),
            state: true,
        };
        self.sign(&who, Call::CreateOffer(offer))
    }

    /// Correctly sequenced but carrying a corrupted signature; the nonce is
    /// not consumed since ordering rejects it.
    fn bad_signature(&mut self) -> Transaction {
        let who = self.random_member();
        let nonce = self.nonces[&who] + 1;
        let keys = self.keys_of(&who).expect("member");
        let mut tx = Call::RevokeOffer(Hash256::ZERO).sign(keys, &who, nonce);
        let mut sig = tx.signature.0;
        sig[0] ^= 0x01;
        tx.signature = Signature(sig);
        tx
    }

    fn replay(&mut self) -> Transaction {
        self.sent.choose(&mut self.rng).cloned().expect("genesis was sent")
    }
}
