use hmac::{Hmac, Mac};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;

use super::*;

fn id(s: &str) -> PrefixIdentity {
    s.parse().unwrap()
}

fn keys(seed: u64) -> MasterKeyPair {
    setup(128, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

fn enc(kp: &MasterKeyPair, under: &str, msg: &[u8]) -> EnvelopeCiphertext {
    let target = id(under);
    let device = extract(&kp.msk, &target);
    encrypt(&kp.mpk, &device, &target, msg, &mut rand::thread_rng()).unwrap()
}

#[test]
fn setup_parameters() {
    assert_eq!(
        setup(96, &mut rand::thread_rng()).unwrap_err(),
        PrefixError::UnsupportedParameter(96)
    );
    let a = setup(128, &mut rand::thread_rng()).unwrap();
    let b = setup(128, &mut rand::thread_rng()).unwrap();
    assert_ne!(a.msk, b.msk);
    assert_eq!(a.msk.as_bytes().len(), 16);
    assert_eq!(setup(256, &mut rand::thread_rng()).unwrap().msk.as_bytes().len(), 32);
}

#[test]
fn seeded_setup_is_pinned() {
    let kp = keys(42);
    assert_eq!(kp.msk, keys(42).msk);
    // Frozen once from ChaCha20Rng::seed_from_u64(42).
    assert_eq!(hex::encode(kp.msk.as_bytes()), PINNED_MSK_SEED_42);
    assert_eq!(kp.mpk, kp.msk.public());
}

const PINNED_MSK_SEED_42: &str = "7848b5d711bc9883996317a3f9c90269";

#[test]
fn extract_is_deterministic_and_identity_specific() {
    let kp = keys(1);
    let a = extract(&kp.msk, &id("alice/home"));
    assert_eq!(a.key_material, extract(&kp.msk, &id("alice/home")).key_material);
    assert_ne!(a.key_material, extract(&kp.msk, &id("alice/car")).key_material);
    let other = keys(2);
    assert_ne!(a.key_material, extract(&other.msk, &id("alice/home")).key_material);
}

/// Recomputes one derivation step with HMAC-SHA256 directly from the
/// documented layout.
#[test]
fn child_key_is_one_chain_step() {
    let kp = keys(3);
    let parent = extract(&kp.msk, &id("alice/home"));
    let child = extract(&kp.msk, &id("alice/home/thermostat"));

    let mut mac = Hmac::<Sha256>::new_from_slice(&parent.key_material).unwrap();
    let domain = b"sharechain/pfx/label";
    mac.update(&(domain.len() as u32).to_be_bytes());
    mac.update(domain);
    mac.update(&10u32.to_be_bytes());
    mac.update(b"thermostat");
    let expected: [u8; 32] = mac.finalize().into_bytes().into();

    assert_eq!(child.key_material, expected);
    assert_eq!(parent.derive_for(&id("alice/home/thermostat")), Some(expected));
}

#[test]
fn roundtrip_and_prefix_decryption() {
    let kp = keys(4);
    let ct = enc(&kp, "alice/home/thermostat", b"21.5C");
    let exact = extract(&kp.msk, &id("alice/home/thermostat"));
    assert_eq!(decrypt(&exact, &ct).unwrap(), b"21.5C");
    let parent = extract(&kp.msk, &id("alice/home"));
    assert_eq!(decrypt(&parent, &ct).unwrap(), b"21.5C");
    let root = extract(&kp.msk, &id("alice"));
    assert_eq!(decrypt(&root, &ct).unwrap(), b"21.5C");
}

#[test]
fn non_prefix_and_child_keys_are_rejected() {
    let kp = keys(5);
    let ct = enc(&kp, "alice/home/thermostat", b"m");
    assert_eq!(decrypt(&extract(&kp.msk, &id("alice/car")), &ct), Err(Rejected));
    let parent_ct = enc(&kp, "alice/home", b"m");
    let child_key = extract(&kp.msk, &id("alice/home/thermostat"));
    assert_eq!(decrypt(&child_key, &parent_ct), Err(Rejected));
    // Same identity, different authority.
    let foreign = keys(6);
    assert_eq!(decrypt(&extract(&foreign.msk, &id("alice/home")), &ct), Err(Rejected));
}

#[test]
fn nonce_freshness() {
    let kp = keys(7);
    let a = enc(&kp, "alice/home", b"same").to_bytes();
    let b = enc(&kp, "alice/home", b"same").to_bytes();
    assert_ne!(a, b);
}

#[test]
fn encrypt_requires_provisioned_ancestor() {
    let kp = keys(8);
    let device = extract(&kp.msk, &id("alice/car"));
    let err = encrypt(&kp.mpk, &device, &id("alice/home"), b"x", &mut rand::thread_rng()).unwrap_err();
    assert!(matches!(err, PrefixError::NotProvisioned { .. }));
    let other = keys(9);
    let err = encrypt(&other.mpk, &device, &id("alice/car"), b"x", &mut rand::thread_rng()).unwrap_err();
    assert_eq!(err, PrefixError::MasterKeyMismatch);
}

#[test]
fn message_size_limit() {
    let kp = keys(10);
    let target = id("a");
    let device = extract(&kp.msk, &target);
    let big = vec![0u8; MAX_MESSAGE_LEN + 1];
    assert_eq!(
        encrypt(&kp.mpk, &device, &target, &big, &mut rand::thread_rng()).unwrap_err(),
        PrefixError::MessageTooLarge(MAX_MESSAGE_LEN + 1)
    );
}

#[test]
fn round_trip_sizes() {
    let kp = keys(11);
    let key = extract(&kp.msk, &id("alice"));
    for size in [0usize, 1, 1024, 1 << 20] {
        let msg: Vec<u8> = (0..size).map(|i| (i * 31 % 251) as u8).collect();
        let ct = enc(&kp, "alice/home/meter", &msg);
        let bytes = ct.to_bytes();
        assert_eq!(bytes.len(), 4 + 1 + 2 + "alice/home/meter".len() + 24 + 48 + 8 + size + 16);
        assert_eq!(decrypt_bytes(&key, &bytes).unwrap(), msg);
    }
}

#[test]
fn every_single_bit_flip_is_rejected() {
    let kp = keys(12);
    let key = extract(&kp.msk, &id("alice"));
    let bytes = enc(&kp, "alice/home", b"payload!").to_bytes();
    for bit in 0..bytes.len() * 8 {
        let mut b = bytes.clone();
        b[bit / 8] ^= 1 << (bit % 8);
        assert_eq!(decrypt_bytes(&key, &b), Err(Rejected), "bit {bit}");
    }
}

fn all_identities(labels: &[&str], max_depth: u32) -> Vec<PrefixIdentity> {
    let mut out = Vec::new();
    for d in 1..=max_depth {
        for mut n in 0..labels.len().pow(d) {
            let mut ls = Vec::new();
            for _ in 0..d {
                ls.push(labels[n % labels.len()]);
                n /= labels.len();
            }
            out.push(PrefixIdentity::from_labels(ls).unwrap());
        }
    }
    out
}

/// Every (key identity, ciphertext identity) pair over a 3-label alphabet up
/// to depth 6.
#[test]
fn prefix_correctness_exhaustive_depth_six() {
    let kp = keys(13);
    let ids = all_identities(&["a", "b", "c"], 6);
    assert_eq!(ids.len(), 1092);
    let cts: Vec<_> = ids
        .iter()
        .map(|i| {
            let dev = extract(&kp.msk, i);
            encrypt(&kp.mpk, &dev, i, i.to_string().as_bytes(), &mut rand::thread_rng()).unwrap()
        })
        .collect();
    let keys: Vec<_> = ids.iter().map(|i| extract(&kp.msk, i)).collect();
    for (k, ki) in keys.iter().zip(&ids) {
        for (ct, ci) in cts.iter().zip(&ids) {
            let ok = decrypt(k, ct).is_ok();
            assert_eq!(ok, ki.is_prefix_of(ci), "{ki} vs {ci}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decrypt_inverts_encrypt(msg in proptest::collection::vec(any::<u8>(), 0..2048), depth in 1usize..6, seed in any::<u64>()) {
        let kp = keys(seed);
        let labels: Vec<String> = (0..depth).map(|i| format!("l{i}")).collect();
        let target = PrefixIdentity::from_labels(labels).unwrap();
        let dev = extract(&kp.msk, &target);
        let ct = encrypt(&kp.mpk, &dev, &target, &msg, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        let parsed = EnvelopeCiphertext::from_bytes(&ct.to_bytes()).unwrap();
        prop_assert_eq!(&parsed, &ct);
        let root = extract(&kp.msk, &id("l0"));
        prop_assert_eq!(decrypt(&root, &parsed).unwrap(), msg);
    }
}
