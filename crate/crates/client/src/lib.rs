//! HTTP client for the sharechain service, plus the on-disk home directory
//! the CLI keeps identities and prefix keys in.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use sharechain_core::crypto::Keypair;
use sharechain_core::prefix::{PrefixIdentity, PrefixKey, PrefixKeyFile};
use sharechain_core::router::{DomainMessage, DomainResponse, ErrorBody, MessageKind, Query};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with a structured error.
    #[error("{}: {} ({:?})", .0.code, .0.message, .0.origin)]
    Domain(ErrorBody),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl ClientError {
    pub fn code(&self) -> &str {
        match self {
            ClientError::Transport(_) => "Transport",
            ClientError::Domain(e) => &e.code,
            ClientError::Protocol(_) => "Protocol",
        }
    }
}

pub struct Client {
    base: String,
    http: reqwest::Client,
    seq: AtomicU64,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        Client {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
            seq: AtomicU64::new(0),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// Posts a raw message. Structured errors come back inside the response,
    /// whatever the HTTP status.
    pub async fn send(&self, msg: &DomainMessage) -> Result<DomainResponse, ClientError> {
        let r = self.http.post(format!("{}/v1/messages", self.base)).json(msg).send().await?;
        let status = r.status();
        let text = r.text().await?;
        serde_json::from_str(&text).map_err(|_| ClientError::Protocol(format!("HTTP {status}: {text}")))
    }

    /// Sends `body` as a `kind` message and unwraps the response body.
    pub async fn call(&self, kind: MessageKind, sender: &str, body: impl Serialize) -> Result<Value, ClientError> {
        let cid = format!("cli-{}", self.seq.fetch_add(1, Ordering::Relaxed));
        let resp = self.send(&DomainMessage::new(kind, sender, body, &cid)).await?;
        if resp.correlation_id != cid {
            return Err(ClientError::Protocol(format!(
                "correlation id {:?} does not match {cid:?}",
                resp.correlation_id
            )));
        }
        match (resp.ok, resp.body, resp.error) {
            (true, body, _) => Ok(body.unwrap_or(Value::Null)),
            (false, _, Some(e)) => Err(ClientError::Domain(e)),
            (false, _, None) => Err(ClientError::Protocol("error response without error body".into())),
        }
    }

    pub async fn call_as<T: DeserializeOwned>(
        &self,
        kind: MessageKind,
        sender: &str,
        body: impl Serialize,
    ) -> Result<T, ClientError> {
        let v = self.call(kind, sender, body).await?;
        serde_json::from_value(v).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    pub async fn query<T: DeserializeOwned>(&self, sender: &str, q: Query) -> Result<T, ClientError> {
        self.call_as(MessageKind::ContractQuery, sender, q).await
    }

    /// Next nonce for `id`'s transactions.
    pub async fn next_nonce(&self, id: &str) -> Result<u64, ClientError> {
        let last: u64 = self.query(id, Query::Nonce { id: id.to_string() }).await?;
        Ok(last + 1)
    }

    /// Chain export, one hex-encoded block per line.
    pub async fn chain(&self) -> Result<String, ClientError> {
        let r = self.http.get(format!("{}/v1/chain", self.base)).send().await?;
        let status = r.status();
        let text = r.text().await?;
        if !status.is_success() {
            return Err(ClientError::Protocol(format!("HTTP {status}: {text}")));
        }
        Ok(text)
    }

    pub async fn health(&self) -> Result<Value, ClientError> {
        Ok(self.http.get(format!("{}/health", self.base)).send().await?.json().await?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IdentityFile {
    id: String,
    public_key: String,
    secret_key: String,
}

/// `identities/<id>.json` and `keys/<id>/<prefix>.json` under a root.
#[derive(Debug, Clone)]
pub struct Home {
    root: PathBuf,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn write_private(path: &Path, text: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
    }
    Ok(())
}

impl Home {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Home { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn identity_path(&self, id: &str) -> io::Result<PathBuf> {
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(invalid(format!("{id:?} cannot be used as a file name")));
        }
        Ok(self.root.join("identities").join(format!("{id}.json")))
    }

    pub fn has_identity(&self, id: &str) -> bool {
        self.identity_path(id).map(|p| p.exists()).unwrap_or(false)
    }

    pub fn save_identity(&self, id: &str, keys: &Keypair) -> io::Result<PathBuf> {
        let path = self.identity_path(id)?;
        let file = IdentityFile {
            id: id.to_string(),
            public_key: keys.public().to_hex(),
            secret_key: hex::encode(keys.secret_bytes()),
        };
        write_private(&path, &serde_json::to_string_pretty(&file).map_err(|e| invalid(e.to_string()))?)?;
        Ok(path)
    }

    pub fn load_identity(&self, id: &str) -> io::Result<Keypair> {
        let path = self.identity_path(id)?;
        let text = fs::read_to_string(&path)
            .map_err(|e| io::Error::new(e.kind(), format!("no identity {id:?} in {}: {e}", self.root.display())))?;
        let file: IdentityFile = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        let secret: [u8; 32] = hex::decode(&file.secret_key)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| invalid(format!("{}: bad secret key", path.display())))?;
        let keys = Keypair::from_secret(secret);
        if keys.public().to_hex() != file.public_key {
            return Err(invalid(format!("{}: public key does not match secret", path.display())));
        }
        Ok(keys)
    }

    fn key_dir(&self, id: &str) -> io::Result<PathBuf> {
        self.identity_path(id)?;
        Ok(self.root.join("keys").join(id))
    }

    pub fn save_key(&self, owner: &str, key: &PrefixKey) -> io::Result<PathBuf> {
        // Labels cannot contain '.', so this is unambiguous.
        let name = key.identity.labels().join(".");
        let path = self.key_dir(owner)?.join(format!("{name}.json"));
        let text = serde_json::to_string_pretty(&PrefixKeyFile::from(key)).map_err(|e| invalid(e.to_string()))?;
        write_private(&path, &text)?;
        Ok(path)
    }

    pub fn load_key_file(path: &Path) -> io::Result<PrefixKey> {
        let file: PrefixKeyFile =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| invalid(e.to_string()))?;
        Ok(file.into())
    }

    pub fn keys(&self, owner: &str) -> io::Result<Vec<PrefixKey>> {
        let dir = self.key_dir(owner)?;
        let mut out = Vec::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e),
        };
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths.into_iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
            out.push(Self::load_key_file(&p)?);
        }
        Ok(out)
    }

    /// The stored key closest to `target` that can derive it.
    pub fn key_for(&self, owner: &str, target: &PrefixIdentity) -> io::Result<Option<PrefixKey>> {
        Ok(self
            .keys(owner)?
            .into_iter()
            .filter(|k| k.identity.is_prefix_of(target))
            .max_by_key(|k| k.identity.depth()))
    }
}
