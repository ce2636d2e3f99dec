//! Golden ciphertext fixtures: envelopes written once and checked on every
//! build, so any change to the wire format or key derivation shows up.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sharechain_core::prefix::{decrypt_bytes, extract, MasterSecretKey, PrefixIdentity, SecurityParam};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub bits: u32,
    pub msk_hex: String,
    /// Identity of the decryption key.
    pub key: String,
    /// Identity the envelope was sealed under.
    pub sealed_under: String,
    /// `plaintext` or `rejected`.
    pub expect: String,
}

pub fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn load() -> Result<Vec<Fixture>, String> {
    let text = fs::read_to_string(dir().join("manifest.json")).map_err(|e| format!("manifest: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("manifest: {e}"))
}

/// Checks every fixture; returns how many were checked.
pub fn check_all() -> Result<usize, String> {
    let fixtures = load()?;
    if fixtures.is_empty() {
        return Err("no fixtures".into());
    }
    for f in &fixtures {
        check(f).map_err(|e| format!("{}: {e}", f.name))?;
    }
    Ok(fixtures.len())
}

fn check(f: &Fixture) -> Result<(), String> {
    let param = SecurityParam::try_from(f.bits).map_err(|e| e.to_string())?;
    let msk_bytes = hex::decode(&f.msk_hex).map_err(|e| e.to_string())?;
    let msk = MasterSecretKey::from_bytes(param, msk_bytes).map_err(|e| e.to_string())?;
    let key_id: PrefixIdentity = f.key.parse().map_err(|e| format!("{e}"))?;
    let key = extract(&msk, &key_id);
    let ct = fs::read(dir().join(format!("{}.pfx", f.name))).map_err(|e| e.to_string())?;
    let got = decrypt_bytes(&key, &ct);
    match f.expect.as_str() {
        "plaintext" => {
            let want = fs::read(dir().join(format!("{}.plain", f.name))).map_err(|e| e.to_string())?;
            match got {
                Ok(p) if p == want => Ok(()),
                Ok(_) => Err("decrypted bytes differ".into()),
                Err(_) => Err("rejected".into()),
            }
        }
        "rejected" => match got {
            Err(_) => Ok(()),
            Ok(_) => Err("decrypted but should be rejected".into()),
        },
        other => Err(format!("unknown expectation {other:?}")),
    }
}
