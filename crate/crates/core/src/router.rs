//! Classifies inbound JSON messages and dispatches them to the storage
//! node, the ledger or the key authority.
//!
//! Downstream results are serialized unchanged into the response body;
//! downstream errors are passed through with their code and origin.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::authority::KeyRequest;
use crate::framework::Framework;
use crate::ledger::{Outcome, Transaction};
use crate::marketplace::{
    cloud_acl, get_attestation, get_data, get_iou, get_offer, get_user, list_data, list_offers, verify_data,
    FileId, MetaData, FN_REGISTER,
};
use crate::net::{NetError, API_PEER};
use crate::storage::{FetchRequest, UploadRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Upload,
    Fetch,
    ContractInvoke,
    ContractQuery,
    KeyRequest,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::Upload,
        MessageKind::Fetch,
        MessageKind::ContractInvoke,
        MessageKind::ContractQuery,
        MessageKind::KeyRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Upload => "upload",
            MessageKind::Fetch => "fetch",
            MessageKind::ContractInvoke => "contract-invoke",
            MessageKind::ContractQuery => "contract-query",
            MessageKind::KeyRequest => "key-request",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        MessageKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMessage {
    /// Kept as a string so unknown kinds reach the router and get a proper
    /// `UnknownKind` answer instead of a parse failure.
    pub kind: String,
    pub sender: String,
    #[serde(default)]
    pub body: Value,
    pub correlation_id: String,
}

impl DomainMessage {
    pub fn new(kind: MessageKind, sender: &str, body: impl Serialize, correlation_id: &str) -> Self {
        DomainMessage {
            kind: kind.as_str().to_string(),
            sender: sender.to_string(),
            body: serde_json::to_value(body).expect("message bodies serialize"),
            correlation_id: correlation_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Router,
    Storage,
    Ledger,
    Contract,
    Authority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub origin: Origin,
    pub code: String,
    pub message: String,
    /// Downstream payload accompanying the error, such as the receipt of a
    /// committed but failed transaction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ErrorBody {
    fn new(origin: Origin, code: &str, message: impl fmt::Display) -> Self {
        ErrorBody {
            origin,
            code: code.to_string(),
            message: message.to_string(),
            detail: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainResponse {
    pub correlation_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl DomainResponse {
    fn from_result(correlation_id: String, r: Result<Value, ErrorBody>) -> Self {
        match r {
            Ok(body) => DomainResponse {
                correlation_id,
                ok: true,
                body: Some(body),
                error: None,
            },
            Err(e) => DomainResponse {
                correlation_id,
                ok: false,
                body: None,
                error: Some(e),
            },
        }
    }
}

/// Read-only contract queries, answered from the API peer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum Query {
    User { id: String },
    Data { file_id: FileId },
    Offer { file_id: FileId },
    ListOffers {
        #[serde(default)]
        active_only: bool,
    },
    ListData,
    Attestation { uri: String },
    CloudAcl { uri: String },
    VerifyData { mdata: MetaData },
    Iou { a: String, b: String },
    /// Last committed nonce of `id`.
    Nonce { id: String },
    Height,
    /// The key authority's master public key.
    MasterPublicKey,
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("downstream results serialize")
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Value) -> Result<T, ErrorBody> {
    T::deserialize(body).map_err(|e| ErrorBody::new(Origin::Router, "MalformedBody", e))
}

fn net_error(e: NetError) -> ErrorBody {
    let code = match &e {
        NetError::NetworkStopped => "NetworkStopped",
        NetError::UnknownPeer(_) => "UnknownPeer",
        NetError::Rejected(_) => "Rejected",
    };
    ErrorBody::new(Origin::Ledger, code, e)
}

fn sender_mismatch(sender: &str, claimed: &str) -> ErrorBody {
    ErrorBody::new(
        Origin::Router,
        "SenderMismatch",
        format!("sender {sender:?} does not match body identity {claimed:?}"),
    )
}

pub struct Router<'a> {
    fw: &'a Framework,
}

impl<'a> Router<'a> {
    pub fn new(fw: &'a Framework) -> Self {
        Router { fw }
    }

    pub async fn route(&self, msg: DomainMessage) -> DomainResponse {
        let result = self.dispatch(&msg).await;
        DomainResponse::from_result(msg.correlation_id, result)
    }

    fn registered(&self, id: &str) -> bool {
        self.fw
            .net
            .with_peer(API_PEER, |l| get_user(l.state(), id).is_some())
            .unwrap_or(false)
    }

    async fn dispatch(&self, msg: &DomainMessage) -> Result<Value, ErrorBody> {
        let kind: MessageKind = msg
            .kind
            .parse()
            .map_err(|_| ErrorBody::new(Origin::Router, "UnknownKind", format!("unknown kind {:?}", msg.kind)))?;

        // Reads are public, and registration is the one invocation an
        // unknown sender may make.
        let exempt = kind == MessageKind::ContractQuery
            || (kind == MessageKind::ContractInvoke
                && msg.body.get("function").and_then(Value::as_str) == Some(FN_REGISTER));
        if !exempt && !self.registered(&msg.sender) {
            return Err(ErrorBody::new(
                Origin::Router,
                "UnregisteredSender",
                format!("{:?} is not registered", msg.sender),
            ));
        }

        match kind {
            MessageKind::Upload => {
                let req: UploadRequest = parse_body(&msg.body)?;
                if req.owner != msg.sender {
                    return Err(sender_mismatch(&msg.sender, &req.owner));
                }
                self.fw
                    .storage
                    .upload(req)
                    .await
                    .map(to_value)
                    .map_err(|e| ErrorBody::new(Origin::Storage, e.code(), &e))
            }
            MessageKind::Fetch => {
                let req: FetchRequest = parse_body(&msg.body)?;
                if req.requestor != msg.sender {
                    return Err(sender_mismatch(&msg.sender, &req.requestor));
                }
                self.fw
                    .storage
                    .fetch(req)
                    .await
                    .map(to_value)
                    .map_err(|e| ErrorBody::new(Origin::Storage, e.code(), &e))
            }
            MessageKind::ContractInvoke => {
                let tx: Transaction = parse_body(&msg.body)?;
                if tx.invoker != msg.sender {
                    return Err(sender_mismatch(&msg.sender, &tx.invoker));
                }
                let receipt = self.fw.net.submit(tx).await.map_err(net_error)?;
                match &receipt.outcome {
                    Outcome::Success => Ok(to_value(&receipt)),
                    Outcome::Failed(code) => {
                        let mut e = ErrorBody::new(Origin::Contract, code, code);
                        e.detail = Some(to_value(&receipt));
                        Err(e)
                    }
                }
            }
            MessageKind::ContractQuery => {
                let q: Query = parse_body(&msg.body)?;
                self.query(q)
            }
            MessageKind::KeyRequest => {
                let req: KeyRequest = parse_body(&msg.body)?;
                if req.requestor != msg.sender {
                    return Err(sender_mismatch(&msg.sender, &req.requestor));
                }
                let auth = &self.fw.authority;
                let latest = self.fw.net.height(API_PEER).map_err(net_error)?.unwrap_or(0);
                auth.sync_to(latest.max(req.min_height))
                    .await
                    .map_err(|e| ErrorBody::new(Origin::Authority, e.code(), &e))?;
                auth.request_key(&req)
                    .map(to_value)
                    .map_err(|e| ErrorBody::new(Origin::Authority, e.code(), &e))
            }
        }
    }

    fn query(&self, q: Query) -> Result<Value, ErrorBody> {
        if q == Query::MasterPublicKey {
            return Ok(to_value(self.fw.authority.mpk()));
        }
        self.fw
            .net
            .with_peer(API_PEER, |l| {
                let s = l.state();
                Ok(match q {
                    Query::User { id } => to_value(get_user(s, &id)),
                    Query::Data { file_id } => to_value(get_data(s, &file_id)),
                    Query::Offer { file_id } => to_value(get_offer(s, &file_id)),
                    Query::ListOffers { active_only } => to_value(list_offers(s, active_only)),
                    Query::ListData => to_value(list_data(s)),
                    Query::Attestation { uri } => to_value(get_attestation(s, &uri)),
                    Query::CloudAcl { uri } => to_value(cloud_acl(s, &uri)),
                    Query::VerifyData { mdata } => to_value(verify_data(s, &mdata)),
                    Query::Iou { a, b } => {
                        let v = get_iou(s, &a, &b).map_err(|e| ErrorBody::new(Origin::Contract, e.code(), e))?;
                        to_value(v)
                    }
                    Query::Nonce { id } => to_value(l.last_nonce(&id)),
                    Query::Height => to_value(l.height()),
                    Query::MasterPublicKey => unreachable!("answered above"),
                })
            })
            .map_err(net_error)?
    }
}
