//! Delivery of prefix keys to an Ed25519 identity.
//!
//! The recipient's Ed25519 key is mapped to its X25519 (Montgomery) form;
//! an ephemeral X25519 key agrees a shared secret, HMAC-SHA256 derives the
//! wrapping key, and XChaCha20-Poly1305 seals the serialized key.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use curve25519_dalek::edwards::CompressedEdwardsY;
use curve25519_dalek::montgomery::MontgomeryPoint;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::crypto::{Keypair, PublicKey};
use crate::encoding::Encode;
use crate::prefix::{PrefixKey, PrefixKeyFile};

const WRAP_DOMAIN: &str = "sharechain/keywrap/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedKey {
    #[serde(with = "crate::wire::b64_array")]
    pub ephemeral: [u8; 32],
    #[serde(with = "crate::wire::b64_array")]
    pub nonce: [u8; 24],
    #[serde(with = "crate::wire::b64")]
    pub ciphertext: Vec<u8>,
}

fn wrap_key(shared: &MontgomeryPoint, ephemeral: &[u8; 32], recipient: &PublicKey) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(shared.as_bytes()).expect("any key length");
    mac.update(&WRAP_DOMAIN.to_canonical());
    mac.update(ephemeral);
    mac.update(&recipient.0);
    mac.finalize().into_bytes().into()
}

fn aad(recipient_id: &str, key: &str) -> Vec<u8> {
    let mut out = recipient_id.to_canonical();
    key.encode(&mut out);
    out
}

/// Returns `None` if `recipient` is not a valid curve point.
pub fn seal_key<R: RngCore + CryptoRng>(
    recipient_id: &str,
    recipient: &PublicKey,
    key: &PrefixKey,
    rng: &mut R,
) -> Option<SealedKey> {
    let point = CompressedEdwardsY(recipient.0).decompress()?.to_montgomery();
    let mut secret = [0u8; 32];
    rng.fill_bytes(&mut secret);
    let ephemeral = MontgomeryPoint::mul_base_clamped(secret).to_bytes();
    let shared = point.mul_clamped(secret);
    let k = wrap_key(&shared, &ephemeral, recipient);

    let mut nonce = [0u8; 24];
    rng.fill_bytes(&mut nonce);
    let plaintext = serde_json::to_vec(&PrefixKeyFile::from(key)).expect("key file serializes");
    let ciphertext = XChaCha20Poly1305::new((&k).into())
        .encrypt(
            XNonce::from_slice(&nonce),
            Payload {
                msg: &plaintext,
                aad: &aad(recipient_id, &key.identity.to_string()),
            },
        )
        .expect("in-memory AEAD cannot fail");
    Some(SealedKey {
        ephemeral,
        nonce,
        ciphertext,
    })
}

/// Opens a key sealed to `keys`. `expected_identity` is the prefix the key
/// was requested for; it is bound into the AEAD.
pub fn open_key(recipient_id: &str, keys: &Keypair, expected_identity: &str, sealed: &SealedKey) -> Option<PrefixKey> {
    let scalar = keys.signing_key().to_scalar_bytes();
    let shared = MontgomeryPoint(sealed.ephemeral).mul_clamped(scalar);
    let k = wrap_key(&shared, &sealed.ephemeral, &keys.public());
    let plaintext = XChaCha20Poly1305::new((&k).into())
        .decrypt(
            XNonce::from_slice(&sealed.nonce),
            Payload {
                msg: &sealed.ciphertext,
                aad: &aad(recipient_id, expected_identity),
            },
        )
        .ok()?;
    let file: PrefixKeyFile = serde_json::from_slice(&plaintext).ok()?;
    if file.identity.to_string() != expected_identity {
        return None;
    }
    Some(file.into())
}
