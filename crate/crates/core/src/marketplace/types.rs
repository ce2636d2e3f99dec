use serde::{Deserialize, Serialize};

use crate::amount::Amount;
use crate::crypto::{signing_payload, Hash256, Keypair, PublicKey, Signature};
use crate::encoding::{Decode, DecodeError, Encode, Reader};

/// Content digest of a stored payload.
pub type FileId = Hash256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Member,
    /// The storage node; may publish attestations. Only grantable in genesis.
    Storage,
}

impl Encode for Role {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(match self {
            Role::Member => 0,
            Role::Storage => 1,
        });
    }
}

impl Decode for Role {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match u8::decode(r)? {
            0 => Ok(Role::Member),
            1 => Ok(Role::Storage),
            tag => Err(DecodeError::InvalidTag { what: "role", tag }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserIdentity {
    pub id: String,
    pub pk: PublicKey,
    pub role: Role,
}

impl Encode for UserIdentity {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.pk.encode(out);
        self.role.encode(out);
    }
}

impl Decode for UserIdentity {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(UserIdentity {
            id: String::decode(r)?,
            pk: PublicKey::decode(r)?,
            role: Role::decode(r)?,
        })
    }
}

/// Ledger descriptor of an off-chain data item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaData {
    pub id: String,
    pub file_id: FileId,
    pub owner: String,
    pub uris: Vec<String>,
    pub acl: Vec<String>,
    /// Identity the payloads were encrypted under, for the prefix scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharing_prefix: Option<String>,
}

impl Encode for MetaData {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.file_id.encode(out);
        self.owner.encode(out);
        self.uris.encode(out);
        self.acl.encode(out);
        self.sharing_prefix.encode(out);
    }
}

impl Decode for MetaData {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(MetaData {
            id: String::decode(r)?,
            file_id: FileId::decode(r)?,
            owner: String::decode(r)?,
            uris: Vec::decode(r)?,
            acl: Vec::decode(r)?,
            sharing_prefix: Option::decode(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offer {
    pub id: String,
    /// `file_id` of the referenced [`MetaData`].
    pub file_id: FileId,
    pub value: Amount,
    /// `true` while the offer can be accepted.
    pub state: bool,
}

impl Encode for Offer {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.file_id.encode(out);
        self.value.encode(out);
        self.state.encode(out);
    }
}

impl Decode for Offer {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Offer {
            id: String::decode(r)?,
            file_id: FileId::decode(r)?,
            value: Amount::decode(r)?,
            state: bool::decode(r)?,
        })
    }
}

/// Pairwise balance. `user1 < user2`; positive `value` means `user2` owes
/// `user1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IouAccount {
    pub id: String,
    pub user1: String,
    pub user2: String,
    pub value: Amount,
}

impl Encode for IouAccount {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.user1.encode(out);
        self.user2.encode(out);
        self.value.encode(out);
    }
}

impl Decode for IouAccount {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(IouAccount {
            id: String::decode(r)?,
            user1: String::decode(r)?,
            user2: String::decode(r)?,
            value: Amount::decode(r)?,
        })
    }
}

/// Storage-node statement about a stored payload, committed on-chain so
/// metadata verification reads only replicated state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageAttestation {
    pub uri: String,
    pub file_id: FileId,
    pub owner: String,
    pub acl: Vec<String>,
    pub storage_sig: Signature,
}

const ATTEST_DOMAIN: &str = "sharechain/attest/v1";

impl StorageAttestation {
    fn signing_bytes(uri: &str, file_id: &FileId, owner: &str, acl: &Vec<String>) -> Vec<u8> {
        signing_payload(ATTEST_DOMAIN, &[&uri, file_id, &owner, acl])
    }

    pub fn signed(keys: &Keypair, uri: &str, file_id: FileId, owner: &str, acl: Vec<String>) -> Self {
        let sig = keys.sign(&Self::signing_bytes(uri, &file_id, owner, &acl));
        StorageAttestation {
            uri: uri.to_string(),
            file_id,
            owner: owner.to_string(),
            acl,
            storage_sig: sig,
        }
    }

    pub fn verify(&self, storage_pk: &PublicKey) -> bool {
        let bytes = Self::signing_bytes(&self.uri, &self.file_id, &self.owner, &self.acl);
        storage_pk.verify(&bytes, &self.storage_sig)
    }
}

impl Encode for StorageAttestation {
    fn encode(&self, out: &mut Vec<u8>) {
        self.uri.encode(out);
        self.file_id.encode(out);
        self.owner.encode(out);
        self.acl.encode(out);
        self.storage_sig.encode(out);
    }
}

impl Decode for StorageAttestation {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(StorageAttestation {
            uri: String::decode(r)?,
            file_id: FileId::decode(r)?,
            owner: String::decode(r)?,
            acl: Vec::decode(r)?,
            storage_sig: Signature::decode(r)?,
        })
    }
}
