//! Read-only views over committed (or in-flight) contract state.

use crate::amount::Amount;
use crate::encoding::Decode;
use crate::ledger::{StateRead, StateStore};

use super::{
    attest_key, cloud_acl_key, data_key, iou_key, offer_key, read, user_key, ContractError, FileId,
    IouAccount, MetaData, Offer, StorageAttestation, UserIdentity,
};

pub fn get_user(state: &(impl StateRead + ?Sized), id: &str) -> Option<UserIdentity> {
    read(state, &user_key(id))
}

pub fn get_data(state: &(impl StateRead + ?Sized), file_id: &FileId) -> Option<MetaData> {
    read(state, &data_key(file_id))
}

pub fn get_offer(state: &(impl StateRead + ?Sized), file_id: &FileId) -> Option<Offer> {
    read(state, &offer_key(file_id))
}

pub fn get_attestation(state: &(impl StateRead + ?Sized), uri: &str) -> Option<StorageAttestation> {
    read(state, &attest_key(uri))
}

/// The storage-side ACL for `uri`: the mirrored ledger ACL once the item is
/// registered, the attested ACL before that.
pub fn cloud_acl(state: &(impl StateRead + ?Sized), uri: &str) -> Option<Vec<String>> {
    read(state, &cloud_acl_key(uri)).or_else(|| get_attestation(state, uri).map(|a| a.acl))
}

/// True iff every URI of `mdata` is attested with the same file id and
/// owner and its storage-side ACL equals `mdata.acl`. No URIs means nothing
/// is attested, so false.
pub fn verify_data(state: &(impl StateRead + ?Sized), mdata: &MetaData) -> bool {
    !mdata.uris.is_empty()
        && mdata.uris.iter().all(|uri| {
            let Some(att) = get_attestation(state, uri) else {
                return false;
            };
            att.file_id == mdata.file_id
                && att.owner == mdata.owner
                && cloud_acl(state, uri).as_ref() == Some(&mdata.acl)
        })
}

pub fn get_iou_account(state: &(impl StateRead + ?Sized), a: &str, b: &str) -> Option<IouAccount> {
    read(state, &iou_key(a, b))
}

/// Balance of the pair from the perspective of the canonical ordering:
/// positive means the greater id owes the smaller one.
pub fn get_iou(state: &(impl StateRead + ?Sized), a: &str, b: &str) -> Result<Amount, ContractError> {
    if a == b {
        return Err(ContractError::SameIdentity);
    }
    Ok(get_iou_account(state, a, b).map_or(Amount::ZERO, |acc| acc.value))
}

pub fn list_offers(state: &StateStore, active_only: bool) -> Vec<Offer> {
    state
        .scan_prefix("offer")
        .filter_map(|(_, v)| Offer::from_canonical(v).ok())
        .filter(|o| o.state || !active_only)
        .collect()
}

pub fn list_data(state: &StateStore) -> Vec<MetaData> {
    state
        .scan_prefix("data")
        .filter_map(|(_, v)| MetaData::from_canonical(v).ok())
        .collect()
}
