use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use rand::RngCore;
use serde_json::{json, Value};

use sharechain_client::{Client, ClientError, Home};
use sharechain_core::amount::Amount;
use sharechain_core::authority::{KeyPurpose, KeyRequest, WrappedKeyResponse};
use sharechain_core::bench::{self, BenchConfig, Scheme};
use sharechain_core::crypto::Keypair;
use sharechain_core::ledger::{parse_export, verify_encoded_chain, ChainReport};
use sharechain_core::marketplace::{Call, FileId, MetaData, Offer, Role, StorageAttestation};
use sharechain_core::net::{NetworkConfig, Receipt};
use sharechain_core::prefix::{decrypt, encrypt, EnvelopeCiphertext, PrefixIdentity};
use sharechain_core::router::{MessageKind, Query};
use sharechain_core::storage::{FetchRequest, FetchResponse, UploadReceipt, UploadRequest};

#[derive(Parser)]
#[command(name = "sharechain", version, about = "Client for the sharechain data marketplace")]
struct Cli {
    /// Print results as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, env = "SHARECHAIN_URL", default_value = "http://127.0.0.1:8080")]
    server: String,
    /// Holds identities/ and keys/.
    #[arg(long, global = true, env = "SHARECHAIN_HOME", default_value = ".sharechain")]
    home: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct As {
    /// Identity to act as; its keys are read from the home directory.
    #[arg(long = "as", value_name = "ID")]
    id: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create an identity (or reuse a stored one) and register it.
    Register { id: String },
    /// Store a file with the storage node.
    Upload {
        #[command(flatten)]
        who: As,
        uri: String,
        file: PathBuf,
        /// Encrypt under this prefix identity with a stored key first.
        #[arg(long, value_name = "PREFIX")]
        encrypt_prefix: Option<PrefixIdentity>,
    },
    /// Describe uploaded files on the ledger.
    AddData {
        #[command(flatten)]
        who: As,
        /// Stored URIs of the item; the first one determines the file id.
        #[arg(long = "uri", required = true)]
        uris: Vec<String>,
        #[arg(long)]
        meta_id: Option<String>,
        /// Identities granted access besides the owner.
        #[arg(long = "grant")]
        acl: Vec<String>,
        #[arg(long, value_name = "PREFIX")]
        sharing_prefix: Option<String>,
    },
    CreateOffer {
        #[command(flatten)]
        who: As,
        #[arg(long)]
        file_id: FileId,
        /// Price, e.g. 3.50.
        #[arg(long)]
        price: Amount,
        #[arg(long)]
        offer_id: Option<String>,
    },
    RevokeOffer {
        #[command(flatten)]
        who: As,
        #[arg(long)]
        file_id: FileId,
    },
    ListOffers {
        #[arg(long)]
        active: bool,
    },
    AcceptOffer {
        #[command(flatten)]
        who: As,
        #[arg(long)]
        file_id: FileId,
    },
    /// Balance between two identities; positive means B owes A.
    GetIou { a: String, b: String },
    Fetch {
        #[command(flatten)]
        who: As,
        uri: String,
        /// Write the payload here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Ask the key authority for a prefix key and store it.
    RequestKey {
        #[command(flatten)]
        who: As,
        prefix: PrefixIdentity,
        /// Request the owner's own subtree key instead of an access key.
        #[arg(long)]
        provision: bool,
        /// Height the authority must have synced to, e.g. an accept's block.
        #[arg(long, default_value_t = 0)]
        min_height: u64,
    },
    /// Decrypt a fetched envelope with a stored or given key.
    Decrypt {
        #[command(flatten)]
        who: As,
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        key_file: Option<PathBuf>,
    },
    /// Check hash linkage of the server's chain or an exported file.
    VerifyChain {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Run the encryption benchmark in-process and write a CSV table.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0])]
        sizes: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5, 6])]
        depths: Vec<usize>,
        #[arg(long, default_value_t = bench::MIN_REPETITIONS)]
        reps: usize,
        /// acl, prefix or both.
        #[arg(long, default_value = "both")]
        scheme: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
        /// Network config (TOML); a desk-sized network by default.
        #[arg(long)]
        network: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Domain(ClientError),
    Other(String),
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Domain(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

struct Out {
    json: Value,
    human: String,
}

fn out(json: Value, human: impl Into<String>) -> Out {
    Out {
        json,
        human: human.into(),
    }
}

struct Ctx {
    client: Client,
    home: Home,
}

impl Ctx {
    fn keys(&self, id: &str) -> Result<Keypair, Failure> {
        self.home.load_identity(id).map_err(|e| Failure::Usage(e.to_string()))
    }

    async fn invoke(&self, id: &str, call: Call) -> Result<Receipt, Failure> {
        let keys = self.keys(id)?;
        let nonce = self.client.next_nonce(id).await?;
        Ok(self
            .client
            .call_as(MessageKind::ContractInvoke, id, call.sign(&keys, id, nonce))
            .await?)
    }
}

fn receipt_out(what: &str, r: &Receipt, extra: Value) -> Out {
    let mut j = json!({"height": r.height, "tx_id": r.tx_id});
    if let (Value::Object(m), Value::Object(x)) = (&mut j, extra) {
        m.extend(x);
    }
    out(j, format!("{what} committed at height {} (tx {})", r.height, r.tx_id))
}

async fn run(cli: Cli) -> Result<Out, Failure> {
    let ctx = Ctx {
        client: Client::new(&cli.server),
        home: Home::new(&cli.home),
    };
    match cli.cmd {
        Cmd::Register { id } => {
            let keys = if ctx.home.has_identity(&id) {
                ctx.keys(&id)?
            } else {
                let k = Keypair::generate(&mut OsRng);
                ctx.home.save_identity(&id, &k)?;
                k
            };
            let tx = Call::register(&keys, &id, Role::Member);
            let r: Receipt = ctx.client.call_as(MessageKind::ContractInvoke, &id, tx).await?;
            Ok(receipt_out(
                &format!("registered {id}"),
                &r,
                json!({"id": id, "public_key": keys.public().to_hex()}),
            ))
        }
        Cmd::Upload {
            who,
            uri,
            file,
            encrypt_prefix,
        } => {
            let keys = ctx.keys(&who.id)?;
            let mut payload = fs::read(&file).map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
            let encrypted = encrypt_prefix.is_some();
            if let Some(target) = &encrypt_prefix {
                let key = ctx.home.key_for(&who.id, target)?.ok_or_else(|| {
                    Failure::Usage(format!(
                        "no stored key for {target} or an ancestor; run request-key --provision first"
                    ))
                })?;
                let ct = encrypt(&key.mpk, &key, target, &payload, &mut OsRng).map_err(|e| Failure::Other(e.to_string()))?;
                payload = ct.to_bytes();
            }
            let req = UploadRequest::signed(&keys, &who.id, &uri, payload, encrypted);
            let r: UploadReceipt = ctx.client.call_as(MessageKind::Upload, &who.id, &req).await?;
            Ok(out(
                json!({"uri": uri, "file_id": r.attestation.file_id, "height": r.height, "encrypted": encrypted}),
                format!("stored {uri} as {} at height {}", r.attestation.file_id, r.height),
            ))
        }
        Cmd::AddData {
            who,
            uris,
            meta_id,
            acl,
            sharing_prefix,
        } => {
            let att: Option<StorageAttestation> =
                ctx.client.query(&who.id, Query::Attestation { uri: uris[0].clone() }).await?;
            let att = att.ok_or_else(|| Failure::Usage(format!("{} has no storage attestation", uris[0])))?;
            let mut full_acl = vec![who.id.clone()];
            full_acl.extend(acl.into_iter().filter(|a| *a != who.id));
            let m = MetaData {
                id: meta_id.unwrap_or_else(|| format!("m-{}", &att.file_id.to_hex()[..12])),
                file_id: att.file_id,
                owner: who.id.clone(),
                uris,
                acl: full_acl,
                sharing_prefix,
            };
            let r = ctx.invoke(&who.id, Call::AddData(m)).await?;
            Ok(receipt_out("data", &r, json!({"file_id": att.file_id})))
        }
        Cmd::CreateOffer {
            who,
            file_id,
            price,
            offer_id,
        } => {
            let offer = Offer {
                id: offer_id.unwrap_or_else(|| format!("o-{}", &file_id.to_hex()[..12])),
                file_id,
                value: price,
                state: true,
            };
            let r = ctx.invoke(&who.id, Call::CreateOffer(offer)).await?;
            Ok(receipt_out("offer", &r, json!({"file_id": file_id, "price": price})))
        }
        Cmd::RevokeOffer { who, file_id } => {
            let r = ctx.invoke(&who.id, Call::RevokeOffer(file_id)).await?;
            Ok(receipt_out("revocation", &r, json!({"file_id": file_id})))
        }
        Cmd::AcceptOffer { who, file_id } => {
            let r = ctx.invoke(&who.id, Call::AcceptOffer(file_id)).await?;
            Ok(receipt_out("acceptance", &r, json!({"file_id": file_id})))
        }
        Cmd::ListOffers { active } => {
            let offers: Vec<Offer> = ctx.client.query("", Query::ListOffers { active_only: active }).await?;
            let human = offers
                .iter()
                .map(|o| {
                    let state = if o.state { "active" } else { "revoked" };
                    format!("{}  {}  {}  {state}", o.file_id, o.id, o.value)
                })
                .collect::<Vec<_>>()
                .join("\n");
            Ok(out(serde_json::to_value(&offers).expect("offers serialize"), human))
        }
        Cmd::GetIou { a, b } => {
            let v: Amount = ctx.client.query(&a, Query::Iou { a: a.clone(), b: b.clone() }).await?;
            Ok(out(json!({"a": a, "b": b, "value": v}), v.to_string()))
        }
        Cmd::Fetch { who, uri, out: dest } => {
            let keys = ctx.keys(&who.id)?;
            let r: FetchResponse = ctx
                .client
                .call_as(MessageKind::Fetch, &who.id, FetchRequest::signed(&keys, &who.id, &uri))
                .await?;
            let meta = json!({"uri": r.uri, "file_id": r.file_id, "encrypted": r.encrypted, "bytes": r.payload.len()});
            match dest {
                Some(path) => {
                    fs::write(&path, &r.payload)?;
                    Ok(out(meta, format!("wrote {} bytes to {}", r.payload.len(), path.display())))
                }
                None if cli.json => Ok(out(
                    json!({"payload": sharechain_core::wire::b64_encode(&r.payload), "meta": meta}),
                    "",
                )),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&r.payload)?;
                    Ok(out(Value::Null, ""))
                }
            }
        }
        Cmd::RequestKey {
            who,
            prefix,
            provision,
            min_height,
        } => {
            let keys = ctx.keys(&who.id)?;
            let purpose = if provision { KeyPurpose::Provision } else { KeyPurpose::Access };
            let req = KeyRequest::signed(&keys, &who.id, prefix.clone(), purpose, min_height, OsRng.next_u64());
            let resp: WrappedKeyResponse = ctx.client.call_as(MessageKind::KeyRequest, &who.id, &req).await?;
            let key = resp
                .open(&who.id, &keys)
                .ok_or_else(|| Failure::Other("wrapped key did not open with this identity".into()))?;
            let path = ctx.home.save_key(&who.id, &key)?;
            Ok(out(
                json!({
                    "prefix": prefix,
                    "grant_tx_ref": resp.grant_tx_ref,
                    "height": resp.height,
                    "key_file": path,
                }),
                format!("key for {prefix} saved to {}", path.display()),
            ))
        }
        Cmd::Decrypt {
            who,
            input,
            out: dest,
            key_file,
        } => {
            let bytes = fs::read(&input).map_err(|e| Failure::Usage(format!("{}: {e}", input.display())))?;
            let ct = EnvelopeCiphertext::from_bytes(&bytes)
                .map_err(|e| Failure::Usage(format!("{}: not an envelope: {e}", input.display())))?;
            let key = match key_file {
                Some(p) => Home::load_key_file(&p)?,
                None => ctx
                    .home
                    .key_for(&who.id, &ct.identity)?
                    .ok_or_else(|| Failure::Other(format!("no stored key can decrypt {}", ct.identity)))?,
            };
            let plain = decrypt(&key, &ct).map_err(|_| Failure::Other(format!("rejected under key for {}", key.identity)))?;
            let meta = json!({"identity": ct.identity, "bytes": plain.len()});
            match dest {
                Some(path) => {
                    fs::write(&path, &plain)?;
                    Ok(out(meta, format!("wrote {} bytes to {}", plain.len(), path.display())))
                }
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&plain)?;
                    Ok(out(Value::Null, ""))
                }
            }
        }
        Cmd::VerifyChain { file } => {
            let text = match &file {
                Some(p) => fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
                None => ctx.client.chain().await?,
            };
            let encoded = parse_export(&text).map_err(Failure::Other)?;
            let report = verify_encoded_chain(&encoded);
            if let ChainReport::Failed { .. } = report {
                return Err(Failure::Other(format!("chain {report}")));
            }
            Ok(out(serde_json::to_value(&report).expect("report serializes"), format!("chain {report}")))
        }
        Cmd::Bench {
            sizes,
            depths,
            reps,
            scheme,
            seed,
            out: csv_path,
            network,
        } => {
            let schemes = match scheme.as_str() {
                "both" => vec![Scheme::Acl, Scheme::Prefix],
                s => vec![s.parse::<Scheme>().map_err(Failure::Usage)?],
            };
            let cfg = BenchConfig {
                sizes_mb: sizes,
                depths,
                repetitions: reps,
                schemes,
                seed,
            };
            cfg.validate().map_err(Failure::Usage)?;
            let net = match &network {
                Some(p) => NetworkConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
                None => bench::desk_network(),
            };
            let table = bench::run_bench(&cfg, &net).await;
            write_csv(&csv_path, &bench::to_csv(&table.rows))?;
            let checks = bench::summarize(&table.rows);
            let mut human: Vec<String> = checks.iter().map(|c| c.to_string()).collect();
            human.extend(table.failed.iter().map(|f| {
                format!("failed cell {} {} MB depth {}: {}", f.scheme, f.size_mb, f.depth, f.error)
            }));
            human.push(format!("{} rows written to {}", table.rows.len(), csv_path.display()));
            let j = json!({
                "csv": csv_path,
                "rows": table.rows.len(),
                "checks": checks.iter().map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail})).collect::<Vec<_>>(),
                "failed": table.failed.iter().map(|f| json!({"scheme": f.scheme, "size_mb": f.size_mb, "depth": f.depth, "error": f.error})).collect::<Vec<_>>(),
            });
            if !table.failed.is_empty() {
                eprintln!("{}", human.join("\n"));
                return Err(Failure::Other(format!("{} benchmark cells failed", table.failed.len())));
            }
            Ok(out(j, human.join("\n")))
        }
    }
}

fn write_csv(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_mode = cli.json;
    match run(cli).await {
        Ok(o) => {
            if json_mode {
                if !o.json.is_null() {
                    println!("{}", o.json);
                }
            } else if !o.human.is_empty() {
                println!("{}", o.human);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (code, msg, exit) = match f {
                Failure::Usage(m) => ("Usage".to_string(), m, 2),
                Failure::Domain(e) => (e.code().to_string(), e.to_string(), 1),
                Failure::Other(m) => ("Error".to_string(), m, 1),
            };
            if json_mode {
                eprintln!("{}", json!({"error": {"code": code, "message": msg}}));
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(exit)
        }
    }
}
