//! Envelope layout (all integers big-endian):
//!
//! ```text
//! "PFXE" | 0x01 | id_len:u16 | id (UTF-8) | nonce[24] | wrapped_dek[48]
//!        | payload_len:u64 | payload[payload_len] | tag[16]
//! ```
//!
//! The data key is wrapped with XChaCha20-Poly1305 under the identity's key
//! (AAD = everything before the nonce plus the mpk commitment); the payload
//! is sealed under the data key with the same nonce (AAD = everything before
//! the payload plus the mpk commitment).

use chacha20poly1305::aead::{Aead, AeadInPlace, KeyInit, Payload};
use chacha20poly1305::{Tag, XChaCha20Poly1305, XNonce};
use rand::{CryptoRng, RngCore};

use super::{MasterPublicKey, PrefixError, PrefixIdentity, Rejected, KEY_LEN, MAX_MESSAGE_LEN};

pub const MAGIC: &[u8; 4] = b"PFXE";
pub const VERSION: u8 = 0x01;
pub const NONCE_LEN: usize = 24;
pub const DEK_LEN: usize = 32;
pub const TAG_LEN: usize = 16;
pub const WRAPPED_DEK_LEN: usize = DEK_LEN + TAG_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvelopeCiphertext {
    pub identity: PrefixIdentity,
    pub nonce: [u8; NONCE_LEN],
    pub wrapped_dek: [u8; WRAPPED_DEK_LEN],
    pub payload: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

fn identity_header(identity: &PrefixIdentity) -> Vec<u8> {
    let id = identity.to_string();
    let mut out = Vec::with_capacity(7 + id.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(id.len() as u16).to_be_bytes());
    out.extend_from_slice(id.as_bytes());
    out
}

impl EnvelopeCiphertext {
    /// Bytes preceding the payload.
    fn header(&self) -> Vec<u8> {
        let mut out = identity_header(&self.identity);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.wrapped_dek);
        out.extend_from_slice(&(self.payload.len() as u64).to_be_bytes());
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header();
        out.reserve(self.payload.len() + TAG_LEN);
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PrefixError> {
        let fmt = |m: &str| PrefixError::Format(m.to_string());
        let mut rest = bytes;
        let mut take = |n: usize| -> Result<&[u8], PrefixError> {
            if rest.len() < n {
                return Err(fmt("truncated"));
            }
            let (h, t) = rest.split_at(n);
            rest = t;
            Ok(h)
        };
        if take(4)? != MAGIC {
            return Err(fmt("bad magic"));
        }
        if take(1)?[0] != VERSION {
            return Err(fmt("unsupported version"));
        }
        let id_len = u16::from_be_bytes(take(2)?.try_into().unwrap()) as usize;
        let id = std::str::from_utf8(take(id_len)?).map_err(|_| fmt("identity is not UTF-8"))?;
        let identity: PrefixIdentity = id.parse()?;
        if identity.to_string() != id {
            return Err(fmt("identity is not in canonical form"));
        }
        let nonce: [u8; NONCE_LEN] = take(NONCE_LEN)?.try_into().unwrap();
        let wrapped_dek: [u8; WRAPPED_DEK_LEN] = take(WRAPPED_DEK_LEN)?.try_into().unwrap();
        let payload_len = u64::from_be_bytes(take(8)?.try_into().unwrap());
        if payload_len > MAX_MESSAGE_LEN as u64 {
            return Err(fmt("payload length over limit"));
        }
        let payload = take(payload_len as usize)?.to_vec();
        let tag: [u8; TAG_LEN] = take(TAG_LEN)?.try_into().unwrap();
        if !rest.is_empty() {
            return Err(fmt("trailing bytes"));
        }
        Ok(EnvelopeCiphertext {
            identity,
            nonce,
            wrapped_dek,
            payload,
            tag,
        })
    }
}

fn with_mpk(mut aad: Vec<u8>, mpk: &MasterPublicKey) -> Vec<u8> {
    aad.extend_from_slice(&mpk.commitment);
    aad
}

pub(super) fn seal<R: RngCore + CryptoRng>(
    mpk: &MasterPublicKey,
    kek: &[u8; KEY_LEN],
    identity: &PrefixIdentity,
    message: &[u8],
    rng: &mut R,
) -> EnvelopeCiphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut dek = [0u8; DEK_LEN];
    rng.fill_bytes(&mut dek);

    let wrap_aad = with_mpk(identity_header(identity), mpk);
    let wrapped = XChaCha20Poly1305::new(kek.into())
        .encrypt(
            XNonce::from_slice(&nonce),
            Payload {
                msg: &dek,
                aad: &wrap_aad,
            },
        )
        .expect("in-memory AEAD cannot fail");
    let mut ct = EnvelopeCiphertext {
        identity: identity.clone(),
        nonce,
        wrapped_dek: wrapped.try_into().expect("32-byte key + 16-byte tag"),
        payload: message.to_vec(),
        tag: [0u8; TAG_LEN],
    };
    let aad = with_mpk(ct.header(), mpk);
    let tag = XChaCha20Poly1305::new((&dek).into())
        .encrypt_in_place_detached(XNonce::from_slice(&nonce), &aad, &mut ct.payload)
        .expect("in-memory AEAD cannot fail");
    ct.tag = tag.into();
    ct
}

pub(super) fn open(mpk: &MasterPublicKey, kek: &[u8; KEY_LEN], ct: &EnvelopeCiphertext) -> Result<Vec<u8>, Rejected> {
    let wrap_aad = with_mpk(identity_header(&ct.identity), mpk);
    let dek = XChaCha20Poly1305::new(kek.into())
        .decrypt(
            XNonce::from_slice(&ct.nonce),
            Payload {
                msg: &ct.wrapped_dek,
                aad: &wrap_aad,
            },
        )
        .map_err(|_| Rejected)?;
    let dek: [u8; DEK_LEN] = dek.try_into().map_err(|_| Rejected)?;
    let aad = with_mpk(ct.header(), mpk);
    let mut buf = ct.payload.clone();
    XChaCha20Poly1305::new((&dek).into())
        .decrypt_in_place_detached(XNonce::from_slice(&ct.nonce), &aad, &mut buf, Tag::from_slice(&ct.tag))
        .map_err(|_| Rejected)?;
    Ok(buf)
}
