use serde::{Deserialize, Serialize};

use crate::crypto::{signing_payload, Hash256, Keypair, PublicKey, Signature};
use crate::encoding::{decode_bytes, encode_bytes, Decode, DecodeError, Encode, Reader};

const TX_SIGNING_DOMAIN: &str = "sharechain/tx/v1";

/// A signed contract invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub invoker: String,
    pub function: String,
    /// Canonically encoded argument value; the contract decodes it.
    #[serde(with = "crate::wire::b64")]
    pub args: Vec<u8>,
    pub nonce: u64,
    pub signature: Signature,
}

impl Transaction {
    pub fn signed(keys: &Keypair, invoker: &str, function: &str, args: Vec<u8>, nonce: u64) -> Self {
        let payload = Self::signing_bytes(invoker, function, &args, nonce);
        Transaction {
            invoker: invoker.to_string(),
            function: function.to_string(),
            args,
            nonce,
            signature: keys.sign(&payload),
        }
    }

    /// Bytes covered by the signature: the invocation plus the invoker it is
    /// attributed to.
    pub fn signing_bytes(invoker: &str, function: &str, args: &[u8], nonce: u64) -> Vec<u8> {
        let args = crate::encoding::Blob(args.to_vec());
        signing_payload(TX_SIGNING_DOMAIN, &[&invoker, &function, &args, &nonce])
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        let payload = Self::signing_bytes(&self.invoker, &self.function, &self.args, self.nonce);
        key.verify(&payload, &self.signature)
    }

    /// Digest of the canonical encoding.
    pub fn id(&self) -> Hash256 {
        Hash256::digest(&self.to_canonical())
    }
}

impl Encode for Transaction {
    fn encode(&self, out: &mut Vec<u8>) {
        self.invoker.encode(out);
        self.function.encode(out);
        encode_bytes(&self.args, out);
        self.nonce.encode(out);
        self.signature.encode(out);
    }
}

impl Decode for Transaction {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Transaction {
            invoker: String::decode(r)?,
            function: String::decode(r)?,
            args: decode_bytes(r)?,
            nonce: u64::decode(r)?,
            signature: Signature::decode(r)?,
        })
    }
}
