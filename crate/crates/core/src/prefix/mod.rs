//! Prefix encryption with envelope encryption for bulk payloads.
//!
//! [`KdfTree`] instantiates the scheme with a keyed derivation tree:
//!
//! ```text
//! mpk            = SHA-256(enc("sharechain/pfx/mpk") || bits:u16 || msk)
//! k(root)        = HMAC-SHA256(msk, enc("sharechain/pfx/root") || mpk)
//! k(I/label)     = HMAC-SHA256(k(I), enc("sharechain/pfx/label") || enc(label))
//! ```
//!
//! A key for `I` re-derives `k(I')` for any `I'` below it by continuing the
//! chain, and `k(I')` wraps the per-message data key. The consequence is
//! that encryption under `I'` requires key material for `I'` or an ancestor,
//! which devices are provisioned with; there is no "encrypt with mpk only"
//! property as in pairing-based HIBE.

mod envelope;
mod identity;

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use envelope::{EnvelopeCiphertext, MAGIC, NONCE_LEN, TAG_LEN, VERSION, WRAPPED_DEK_LEN};
pub use identity::{is_valid_label, PrefixIdentity, MAX_DEPTH, MAX_LABEL_LEN};

use crate::encoding::Encode;

pub const KEY_LEN: usize = 32;
pub const MAX_MESSAGE_LEN: usize = 64 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrefixError {
    #[error("malformed identity: {0}")]
    MalformedIdentity(String),
    #[error("unsupported security parameter {0} (expected 128 or 256)")]
    UnsupportedParameter(u32),
    #[error("message of {0} bytes exceeds the 64 MiB limit")]
    MessageTooLarge(usize),
    #[error("key for {key} cannot encrypt under {target}")]
    NotProvisioned { key: String, target: String },
    #[error("key belongs to a different master key pair")]
    MasterKeyMismatch,
    #[error("malformed ciphertext: {0}")]
    Format(String),
}

/// Decryption failure. Deliberately carries no detail: a wrong key and a
/// tampered ciphertext look the same.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("Rejected")]
pub struct Rejected;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum SecurityParam {
    Bits128,
    Bits256,
}

impl SecurityParam {
    pub fn bits(self) -> u32 {
        match self {
            SecurityParam::Bits128 => 128,
            SecurityParam::Bits256 => 256,
        }
    }

    fn secret_len(self) -> usize {
        self.bits() as usize / 8
    }
}

impl TryFrom<u32> for SecurityParam {
    type Error = PrefixError;

    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        match bits {
            128 => Ok(SecurityParam::Bits128),
            256 => Ok(SecurityParam::Bits256),
            other => Err(PrefixError::UnsupportedParameter(other)),
        }
    }
}

impl From<SecurityParam> for u32 {
    fn from(p: SecurityParam) -> u32 {
        p.bits()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterPublicKey {
    pub param: SecurityParam,
    #[serde(with = "crate::wire::b64_array")]
    pub commitment: [u8; 32],
}

impl std::fmt::Debug for MasterPublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MasterPublicKey({}, {}..)", self.param.bits(), hex::encode(&self.commitment[..8]))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct MasterSecretKey {
    param: SecurityParam,
    bytes: Vec<u8>,
}

impl std::fmt::Debug for MasterSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MasterSecretKey({} bits, <redacted>)", self.param.bits())
    }
}

impl MasterSecretKey {
    pub fn from_bytes(param: SecurityParam, bytes: Vec<u8>) -> Result<Self, PrefixError> {
        if bytes.len() != param.secret_len() {
            return Err(PrefixError::UnsupportedParameter(bytes.len() as u32 * 8));
        }
        Ok(MasterSecretKey { param, bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn param(&self) -> SecurityParam {
        self.param
    }

    pub fn public(&self) -> MasterPublicKey {
        let mut h = Sha256::new();
        h.update("sharechain/pfx/mpk".to_canonical());
        h.update((self.param.bits() as u16).to_be_bytes());
        h.update(&self.bytes);
        MasterPublicKey {
            param: self.param,
            commitment: h.finalize().into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MasterKeyPair {
    pub mpk: MasterPublicKey,
    pub msk: MasterSecretKey,
}

/// Secret key for a prefix identity.
#[derive(Clone, PartialEq, Eq)]
pub struct PrefixKey {
    pub identity: PrefixIdentity,
    pub key_material: [u8; KEY_LEN],
    pub mpk: MasterPublicKey,
}

impl std::fmt::Debug for PrefixKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrefixKey")
            .field("identity", &self.identity.to_string())
            .field("mpk", &self.mpk)
            .finish_non_exhaustive()
    }
}

impl PrefixKey {
    /// Continues the derivation chain down to `target`.
    pub fn derive_for(&self, target: &PrefixIdentity) -> Option<[u8; KEY_LEN]> {
        let suffix = self.identity.suffix_of(target)?;
        Some(suffix.iter().fold(self.key_material, |k, l| derive_child(&k, l)))
    }
}

/// JSON form used by the wire format and key files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrefixKeyFile {
    pub identity: PrefixIdentity,
    #[serde(with = "crate::wire::b64_array")]
    pub key_material: [u8; KEY_LEN],
    pub mpk: MasterPublicKey,
}

impl From<&PrefixKey> for PrefixKeyFile {
    fn from(k: &PrefixKey) -> Self {
        PrefixKeyFile {
            identity: k.identity.clone(),
            key_material: k.key_material,
            mpk: k.mpk,
        }
    }
}

impl From<PrefixKeyFile> for PrefixKey {
    fn from(k: PrefixKeyFile) -> Self {
        PrefixKey {
            identity: k.identity,
            key_material: k.key_material,
            mpk: k.mpk,
        }
    }
}

type HmacSha256 = Hmac<Sha256>;

fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; KEY_LEN] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// One step of the derivation tree.
pub fn derive_child(parent: &[u8; KEY_LEN], label: &str) -> [u8; KEY_LEN] {
    hmac(parent, &[&"sharechain/pfx/label".to_canonical(), &label.to_canonical()])
}

fn root_key(msk: &MasterSecretKey) -> [u8; KEY_LEN] {
    let mpk = msk.public();
    hmac(&msk.bytes, &[&"sharechain/pfx/root".to_canonical(), &mpk.commitment])
}

/// The pluggable scheme interface. Callers depend on this trait so a
/// pairing-based construction can slot in with its own key types.
pub trait PrefixScheme {
    type MasterPublic;
    type MasterSecret;
    type DecryptionKey;
    /// What an encrypting device holds besides the master public key.
    type EncryptionKey;

    fn setup<R: RngCore + CryptoRng>(
        &self,
        bits: u32,
        rng: &mut R,
    ) -> Result<(Self::MasterPublic, Self::MasterSecret), PrefixError>;

    fn extract(&self, msk: &Self::MasterSecret, identity: &PrefixIdentity) -> Self::DecryptionKey;

    fn encrypt<R: RngCore + CryptoRng>(
        &self,
        mpk: &Self::MasterPublic,
        device_key: &Self::EncryptionKey,
        identity: &PrefixIdentity,
        message: &[u8],
        rng: &mut R,
    ) -> Result<EnvelopeCiphertext, PrefixError>;

    fn decrypt(&self, key: &Self::DecryptionKey, ct: &EnvelopeCiphertext) -> Result<Vec<u8>, Rejected>;
}

/// Key-derivation-tree instantiation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KdfTree;

impl PrefixScheme for KdfTree {
    type MasterPublic = MasterPublicKey;
    type MasterSecret = MasterSecretKey;
    type DecryptionKey = PrefixKey;
    type EncryptionKey = PrefixKey;

    fn setup<R: RngCore + CryptoRng>(
        &self,
        bits: u32,
        rng: &mut R,
    ) -> Result<(MasterPublicKey, MasterSecretKey), PrefixError> {
        let param = SecurityParam::try_from(bits)?;
        let mut bytes = vec![0u8; param.secret_len()];
        rng.fill_bytes(&mut bytes);
        let msk = MasterSecretKey { param, bytes };
        Ok((msk.public(), msk))
    }

    fn extract(&self, msk: &MasterSecretKey, identity: &PrefixIdentity) -> PrefixKey {
        let key_material = identity
            .labels()
            .iter()
            .fold(root_key(msk), |k, l| derive_child(&k, l));
        PrefixKey {
            identity: identity.clone(),
            key_material,
            mpk: msk.public(),
        }
    }

    fn encrypt<R: RngCore + CryptoRng>(
        &self,
        mpk: &MasterPublicKey,
        device_key: &PrefixKey,
        identity: &PrefixIdentity,
        message: &[u8],
        rng: &mut R,
    ) -> Result<EnvelopeCiphertext, PrefixError> {
        if message.len() > MAX_MESSAGE_LEN {
            return Err(PrefixError::MessageTooLarge(message.len()));
        }
        if device_key.mpk != *mpk {
            return Err(PrefixError::MasterKeyMismatch);
        }
        let kek = device_key
            .derive_for(identity)
            .ok_or_else(|| PrefixError::NotProvisioned {
                key: device_key.identity.to_string(),
                target: identity.to_string(),
            })?;
        Ok(envelope::seal(mpk, &kek, identity, message, rng))
    }

    fn decrypt(&self, key: &PrefixKey, ct: &EnvelopeCiphertext) -> Result<Vec<u8>, Rejected> {
        let kek = key.derive_for(&ct.identity).ok_or(Rejected)?;
        envelope::open(&key.mpk, &kek, ct)
    }
}

pub fn setup<R: RngCore + CryptoRng>(bits: u32, rng: &mut R) -> Result<MasterKeyPair, PrefixError> {
    let (mpk, msk) = KdfTree.setup(bits, rng)?;
    Ok(MasterKeyPair { mpk, msk })
}

pub fn extract(msk: &MasterSecretKey, identity: &PrefixIdentity) -> PrefixKey {
    KdfTree.extract(msk, identity)
}

pub fn encrypt<R: RngCore + CryptoRng>(
    mpk: &MasterPublicKey,
    device_key: &PrefixKey,
    identity: &PrefixIdentity,
    message: &[u8],
    rng: &mut R,
) -> Result<EnvelopeCiphertext, PrefixError> {
    KdfTree.encrypt(mpk, device_key, identity, message, rng)
}

pub fn decrypt(key: &PrefixKey, ct: &EnvelopeCiphertext) -> Result<Vec<u8>, Rejected> {
    KdfTree.decrypt(key, ct)
}

/// Parses and decrypts a serialized envelope; parse failures are rejections.
pub fn decrypt_bytes(key: &PrefixKey, bytes: &[u8]) -> Result<Vec<u8>, Rejected> {
    let ct = EnvelopeCiphertext::from_bytes(bytes).map_err(|_| Rejected)?;
    decrypt(key, &ct)
}

#[cfg(test)]
mod tests;
