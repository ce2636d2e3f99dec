//! The data-marketplace contract: identity registration, storage
//! attestations, metadata registration, the offer lifecycle, ACLs and
//! pairwise IOU accounts.
//!
//! State layout (values are canonical encodings):
//!
//! | key                          | value                 |
//! |------------------------------|-----------------------|
//! | `user` ‖ id                  | [`UserIdentity`]      |
//! | `attest` ‖ uri               | [`StorageAttestation`]|
//! | `cloudacl` ‖ uri             | `Vec<String>`         |
//! | `data` ‖ hex(fileID)         | [`MetaData`]          |
//! | `offer` ‖ hex(fileID)        | [`Offer`]             |
//! | `IOU` ‖ hex(H(lo ‖ hi))      | [`IouAccount`]        |

mod audit;
mod call;
mod query;
mod types;

use std::fmt;
use std::str::FromStr;

use crate::amount::Amount;
use crate::crypto::{Hash256, PublicKey};
use crate::encoding::{Decode, Encode};
use crate::ledger::{Contract, ExecContext, StateRead, StateStore, StateView, Transaction};
use crate::prefix::{is_valid_label, PrefixIdentity};

pub use audit::{audit_chain, AclViolation, AuditReport};
pub use call::{Call, RegisterArgs};
pub use query::{
    cloud_acl, get_attestation, get_data, get_iou, get_iou_account, get_offer, get_user, list_data, list_offers,
    verify_data,
};
pub use types::{FileId, IouAccount, MetaData, Offer, Role, StorageAttestation, UserIdentity};

pub const FN_REGISTER: &str = "register";
pub const FN_ATTEST: &str = "attest";
pub const FN_ADD_DATA: &str = "addData";
pub const FN_CREATE_OFFER: &str = "createOffer";
pub const FN_REVOKE_OFFER: &str = "revokeOffer";
pub const FN_ACCEPT_OFFER: &str = "acceptOffer";

pub const FUNCTIONS: [&str; 6] = [
    FN_REGISTER,
    FN_ATTEST,
    FN_ADD_DATA,
    FN_CREATE_OFFER,
    FN_REVOKE_OFFER,
    FN_ACCEPT_OFFER,
];

/// Contract-level failure. The variant name is the error code recorded in
/// the block and returned to clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContractError {
    BadArgs,
    InvalidId,
    IdMismatch,
    IdTaken,
    GenesisOnly,
    NotStorage,
    BadAttestation,
    AttestationExists,
    VerificationFailed,
    DuplicateData,
    NotOwner,
    MalformedPrefix,
    ForeignPrefix,
    UnknownData,
    NegativePrice,
    UnknownOffer,
    InactiveOffer,
    AlreadyInACL,
    SelfPurchase,
    SameIdentity,
    Overflow,
}

impl ContractError {
    pub const ALL: [ContractError; 21] = [
        ContractError::BadArgs,
        ContractError::InvalidId,
        ContractError::IdMismatch,
        ContractError::IdTaken,
        ContractError::GenesisOnly,
        ContractError::NotStorage,
        ContractError::BadAttestation,
        ContractError::AttestationExists,
        ContractError::VerificationFailed,
        ContractError::DuplicateData,
        ContractError::NotOwner,
        ContractError::MalformedPrefix,
        ContractError::ForeignPrefix,
        ContractError::UnknownData,
        ContractError::NegativePrice,
        ContractError::UnknownOffer,
        ContractError::InactiveOffer,
        ContractError::AlreadyInACL,
        ContractError::SelfPurchase,
        ContractError::SameIdentity,
        ContractError::Overflow,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ContractError::BadArgs => "BadArgs",
            ContractError::InvalidId => "InvalidId",
            ContractError::IdMismatch => "IdMismatch",
            ContractError::IdTaken => "IdTaken",
            ContractError::GenesisOnly => "GenesisOnly",
            ContractError::NotStorage => "NotStorage",
            ContractError::BadAttestation => "BadAttestation",
            ContractError::AttestationExists => "AttestationExists",
            ContractError::VerificationFailed => "VerificationFailed",
            ContractError::DuplicateData => "DuplicateData",
            ContractError::NotOwner => "NotOwner",
            ContractError::MalformedPrefix => "MalformedPrefix",
            ContractError::ForeignPrefix => "ForeignPrefix",
            ContractError::UnknownData => "UnknownData",
            ContractError::NegativePrice => "NegativePrice",
            ContractError::UnknownOffer => "UnknownOffer",
            ContractError::InactiveOffer => "InactiveOffer",
            ContractError::AlreadyInACL => "AlreadyInACL",
            ContractError::SelfPurchase => "SelfPurchase",
            ContractError::SameIdentity => "SameIdentity",
            ContractError::Overflow => "Overflow",
        }
    }
}

impl fmt::Display for ContractError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::error::Error for ContractError {}

impl FromStr for ContractError {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        ContractError::ALL.into_iter().find(|e| e.code() == s).ok_or(())
    }
}

pub fn user_key(id: &str) -> String {
    format!("user{id}")
}

pub fn attest_key(uri: &str) -> String {
    format!("attest{uri}")
}

pub fn cloud_acl_key(uri: &str) -> String {
    format!("cloudacl{uri}")
}

pub fn data_key(file_id: &FileId) -> String {
    format!("data{}", file_id.to_hex())
}

pub fn offer_key(file_id: &FileId) -> String {
    format!("offer{}", file_id.to_hex())
}

/// Orders a pair of ids as `(lo, hi)`.
pub fn canonical_pair<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn iou_key(a: &str, b: &str) -> String {
    let (lo, hi) = canonical_pair(a, b);
    let mut buf = lo.to_canonical();
    hi.encode(&mut buf);
    format!("IOU{}", Hash256::digest(&buf).to_hex())
}

pub(crate) fn read<T: Decode>(state: &(impl StateRead + ?Sized), key: &str) -> Option<T> {
    state.get(key).map(|b| T::from_canonical(b).expect("contract state is well-formed"))
}

fn decode_args<T: Decode>(args: &[u8]) -> Result<T, ContractError> {
    T::from_canonical(args).map_err(|_| ContractError::BadArgs)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Marketplace;

impl Contract for Marketplace {
    fn has_function(&self, name: &str) -> bool {
        FUNCTIONS.contains(&name)
    }

    fn signer_key(&self, state: &StateStore, tx: &Transaction) -> Option<PublicKey> {
        if let Some(user) = get_user(state, &tx.invoker) {
            return Some(user.pk);
        }
        // Self-registration is signed with the key being registered.
        if tx.function == FN_REGISTER {
            return RegisterArgs::from_canonical(&tx.args).ok().map(|a| a.pk);
        }
        None
    }

    fn execute(
        &self,
        ctx: &ExecContext,
        view: &mut StateView<'_>,
        invoker: &str,
        function: &str,
        args: &[u8],
    ) -> Result<(), String> {
        let result = match function {
            FN_REGISTER => register(ctx, view, invoker, decode_args(args)?),
            FN_ATTEST => attest(view, invoker, decode_args(args)?),
            FN_ADD_DATA => add_data(view, invoker, decode_args(args)?),
            FN_CREATE_OFFER => create_offer(view, invoker, decode_args(args)?),
            FN_REVOKE_OFFER => revoke_offer(view, invoker, decode_args(args)?),
            FN_ACCEPT_OFFER => accept_offer(view, invoker, decode_args(args)?),
            _ => Err(ContractError::BadArgs),
        };
        result.map_err(|e| e.code().to_string())
    }
}

impl From<ContractError> for String {
    fn from(e: ContractError) -> String {
        e.code().to_string()
    }
}

fn register(ctx: &ExecContext, view: &mut StateView<'_>, invoker: &str, args: RegisterArgs) -> Result<(), ContractError> {
    if args.id != invoker {
        return Err(ContractError::IdMismatch);
    }
    // Ids double as the root label of the owner's prefix namespace.
    if !is_valid_label(&args.id) {
        return Err(ContractError::InvalidId);
    }
    if view.contains(&user_key(&args.id)) {
        return Err(ContractError::IdTaken);
    }
    if args.role == Role::Storage && ctx.height != 0 {
        return Err(ContractError::GenesisOnly);
    }
    let user = UserIdentity {
        id: args.id,
        pk: args.pk,
        role: args.role,
    };
    view.set(user_key(&user.id), user.to_canonical());
    Ok(())
}

fn attest(view: &mut StateView<'_>, invoker: &str, att: StorageAttestation) -> Result<(), ContractError> {
    let node = get_user(view, invoker).filter(|u| u.role == Role::Storage);
    let Some(node) = node else {
        return Err(ContractError::NotStorage);
    };
    if !att.verify(&node.pk) {
        return Err(ContractError::BadAttestation);
    }
    if view.contains(&attest_key(&att.uri)) {
        return Err(ContractError::AttestationExists);
    }
    view.set(attest_key(&att.uri), att.to_canonical());
    Ok(())
}

/// Keeps the storage-side ACL of every URI of `mdata` equal to its ledger
/// ACL so later verification compares like with like.
fn mirror_acl(view: &mut StateView<'_>, mdata: &MetaData) {
    for uri in &mdata.uris {
        view.set(cloud_acl_key(uri), mdata.acl.to_canonical());
    }
}

fn add_data(view: &mut StateView<'_>, invoker: &str, mut mdata: MetaData) -> Result<(), ContractError> {
    if mdata.owner != invoker {
        return Err(ContractError::NotOwner);
    }
    if !verify_data(view, &mdata) {
        return Err(ContractError::VerificationFailed);
    }
    let key = data_key(&mdata.file_id);
    if view.contains(&key) {
        return Err(ContractError::DuplicateData);
    }
    if let Some(p) = &mdata.sharing_prefix {
        let prefix = PrefixIdentity::from_str(p).map_err(|_| ContractError::MalformedPrefix)?;
        if prefix.root() != mdata.owner {
            return Err(ContractError::ForeignPrefix);
        }
        mdata.sharing_prefix = Some(prefix.to_string());
    }
    mdata.acl = vec![mdata.owner.clone()];
    mirror_acl(view, &mdata);
    view.set(key, mdata.to_canonical());
    Ok(())
}

fn create_offer(view: &mut StateView<'_>, invoker: &str, mut offer: Offer) -> Result<(), ContractError> {
    let mdata = get_data(view, &offer.file_id).ok_or(ContractError::UnknownData)?;
    if mdata.owner != invoker {
        return Err(ContractError::NotOwner);
    }
    if !verify_data(view, &mdata) {
        return Err(ContractError::VerificationFailed);
    }
    if offer.value.is_negative() {
        return Err(ContractError::NegativePrice);
    }
    offer.state = true;
    view.set(offer_key(&offer.file_id), offer.to_canonical());
    Ok(())
}

fn revoke_offer(view: &mut StateView<'_>, invoker: &str, file_id: FileId) -> Result<(), ContractError> {
    let mut offer = get_offer(view, &file_id).ok_or(ContractError::UnknownOffer)?;
    let mdata = get_data(view, &file_id).ok_or(ContractError::UnknownData)?;
    if mdata.owner != invoker {
        return Err(ContractError::NotOwner);
    }
    offer.state = false;
    view.set(offer_key(&file_id), offer.to_canonical());
    Ok(())
}

fn accept_offer(view: &mut StateView<'_>, invoker: &str, file_id: FileId) -> Result<(), ContractError> {
    let mut offer = get_offer(view, &file_id).ok_or(ContractError::UnknownOffer)?;
    let mut mdata = get_data(view, &file_id).ok_or(ContractError::UnknownData)?;
    if mdata.owner == invoker {
        return Err(ContractError::SelfPurchase);
    }
    if !offer.state {
        return Err(ContractError::InactiveOffer);
    }
    if !verify_data(view, &mdata) {
        return Err(ContractError::VerificationFailed);
    }
    if mdata.acl.iter().any(|a| a == invoker) {
        return Err(ContractError::AlreadyInACL);
    }

    let (lo, hi) = canonical_pair(invoker, &mdata.owner);
    let iou_key = iou_key(lo, hi);
    let mut iou = read::<IouAccount>(view, &iou_key).unwrap_or_else(|| IouAccount {
        id: iou_key.clone(),
        user1: lo.to_string(),
        user2: hi.to_string(),
        value: Amount::ZERO,
    });
    // Positive balance: the greater id owes the smaller one.
    iou.value = if invoker > mdata.owner.as_str() {
        iou.value.checked_add(offer.value)
    } else {
        iou.value.checked_sub(offer.value)
    }
    .ok_or(ContractError::Overflow)?;

    offer.state = false;
    mdata.acl.push(invoker.to_string());
    mirror_acl(view, &mdata);
    view.set(offer_key(&file_id), offer.to_canonical());
    view.set(iou_key, iou.to_canonical());
    view.set(data_key(&file_id), mdata.to_canonical());
    Ok(())
}

#[cfg(test)]
mod tests;
