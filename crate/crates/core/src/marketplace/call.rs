use serde::{Deserialize, Serialize};

use crate::crypto::{Keypair, PublicKey};
use crate::encoding::{Decode, DecodeError, Encode, Reader};
use crate::ledger::Transaction;

use super::{
    FileId, MetaData, Offer, Role, StorageAttestation, FN_ACCEPT_OFFER, FN_ADD_DATA, FN_ATTEST, FN_CREATE_OFFER,
    FN_REGISTER, FN_REVOKE_OFFER,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterArgs {
    pub id: String,
    pub pk: PublicKey,
    pub role: Role,
}

impl Encode for RegisterArgs {
    fn encode(&self, out: &mut Vec<u8>) {
        self.id.encode(out);
        self.pk.encode(out);
        self.role.encode(out);
    }
}

impl Decode for RegisterArgs {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(RegisterArgs {
            id: String::decode(r)?,
            pk: PublicKey::decode(r)?,
            role: Role::decode(r)?,
        })
    }
}

/// A typed contract invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    Register(RegisterArgs),
    Attest(StorageAttestation),
    AddData(MetaData),
    CreateOffer(Offer),
    RevokeOffer(FileId),
    AcceptOffer(FileId),
}

impl Call {
    pub fn function(&self) -> &'static str {
        match self {
            Call::Register(_) => FN_REGISTER,
            Call::Attest(_) => FN_ATTEST,
            Call::AddData(_) => FN_ADD_DATA,
            Call::CreateOffer(_) => FN_CREATE_OFFER,
            Call::RevokeOffer(_) => FN_REVOKE_OFFER,
            Call::AcceptOffer(_) => FN_ACCEPT_OFFER,
        }
    }

    pub fn args(&self) -> Vec<u8> {
        match self {
            Call::Register(a) => a.to_canonical(),
            Call::Attest(a) => a.to_canonical(),
            Call::AddData(a) => a.to_canonical(),
            Call::CreateOffer(a) => a.to_canonical(),
            Call::RevokeOffer(f) | Call::AcceptOffer(f) => f.to_canonical(),
        }
    }

    pub fn decode(function: &str, args: &[u8]) -> Result<Call, DecodeError> {
        Ok(match function {
            FN_REGISTER => Call::Register(Decode::from_canonical(args)?),
            FN_ATTEST => Call::Attest(Decode::from_canonical(args)?),
            FN_ADD_DATA => Call::AddData(Decode::from_canonical(args)?),
            FN_CREATE_OFFER => Call::CreateOffer(Decode::from_canonical(args)?),
            FN_REVOKE_OFFER => Call::RevokeOffer(Decode::from_canonical(args)?),
            FN_ACCEPT_OFFER => Call::AcceptOffer(Decode::from_canonical(args)?),
            other => return Err(DecodeError::Invalid(format!("unknown function {other:?}"))),
        })
    }

    pub fn sign(&self, keys: &Keypair, invoker: &str, nonce: u64) -> Transaction {
        Transaction::signed(keys, invoker, self.function(), self.args(), nonce)
    }

    pub fn register(keys: &Keypair, id: &str, role: Role) -> Transaction {
        let call = Call::Register(RegisterArgs {
            id: id.to_string(),
            pk: keys.public(),
            role,
        });
        call.sign(keys, id, 1)
    }
}
