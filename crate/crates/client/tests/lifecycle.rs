//! Drives the `sharechain` binary against an in-process server.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use sharechain_core::net::NetworkConfig;
use sharechain_server::{spawn, ServerOptions};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(self.stdout.trim()).unwrap_or_else(|e| panic!("{e}: {:?}", self.stdout))
    }
}

struct Cli {
    url: String,
    home: PathBuf,
}

impl Cli {
    async fn start() -> (Cli, tempfile::TempDir) {
        let opts = ServerOptions {
            network: NetworkConfig {
                peer_count: 3,
                batch_timeout_ms: 2,
                ..NetworkConfig::default()
            },
            data_dir: None,
            seed: Some(7),
        };
        let (addr, fw) = spawn("127.0.0.1:0".parse().unwrap(), &opts).await.unwrap();
        // Keep the framework alive for the rest of the test.
        std::mem::forget(fw);
        let dir = tempfile::tempdir().unwrap();
        let cli = Cli {
            url: format!("http://{addr}"),
            home: dir.path().join("home"),
        };
        (cli, dir)
    }

    async fn run(&self, args: &[&str]) -> Run {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sharechain"));
        cmd.args(["--server", &self.url, "--home"])
            .arg(&self.home)
            .args(args)
            .env_remove("SHARECHAIN_URL")
            .env_remove("SHARECHAIN_HOME");
        let o = tokio::task::spawn_blocking(move || cmd.output().unwrap()).await.unwrap();
        Run {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }

    async fn ok(&self, args: &[&str]) -> Value {
        let r = self.run(args).await;
        assert_eq!(r.code, 0, "{args:?}\nstdout: {}\nstderr: {}", r.stdout, r.stderr);
        r.json()
    }
}

/// Fields that differ between runs: fresh identity keys feed signatures and
/// transaction ids, and key files live in a temp dir.
const VOLATILE: &[&str] = &["tx_id", "public_key", "key_file"];

fn trace_line(step: &str, v: &Value) -> String {
    let mut parts = vec![step.to_string()];
    if let Value::Object(m) = v {
        let mut keys: Vec<&String> = m.keys().collect();
        keys.sort();
        for k in keys {
            let shown = if VOLATILE.contains(&k.as_str()) {
                "*".to_string()
            } else {
                m[k].to_string()
            };
            parts.push(format!("{k}={shown}"));
        }
    } else {
        parts.push(v.to_string());
    }
    parts.join(" ")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "trace differs from {}", path.display());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn plaintext_lifecycle_matches_golden_trace() {
    let (cli, dir) = Cli::start().await;
    let payload = dir.path().join("reading.csv");
    let body = b"t,kwh\n0,1.5\n1,1.7\n".repeat(200);
    std::fs::write(&payload, &body).unwrap();
    let payload = payload.to_str().unwrap();

    let mut trace = Vec::new();
    let v = cli.ok(&["--json", "register", "alice"]).await;
    trace.push(trace_line("register", &v));
    let v = cli.ok(&["--json", "register", "bob"]).await;
    trace.push(trace_line("register", &v));
    let v = cli.ok(&["--json", "upload", "--as", "alice", "mem://alice/reading", payload]).await;
    trace.push(trace_line("upload", &v));
    let fid = v["file_id"].as_str().unwrap().to_string();
    let v = cli
        .ok(&["--json", "add-data", "--as", "alice", "--uri", "mem://alice/reading", "--meta-id", "reading"])
        .await;
    trace.push(trace_line("add-data", &v));
    let v = cli
        .ok(&["--json", "create-offer", "--as", "alice", "--file-id", &fid, "--price", "2.50"])
        .await;
    trace.push(trace_line("create-offer", &v));
    let v = cli.ok(&["--json", "list-offers", "--active"]).await;
    trace.push(trace_line("list-offers", &v));
    let v = cli.ok(&["--json", "accept-offer", "--as", "bob", "--file-id", &fid]).await;
    trace.push(trace_line("accept-offer", &v));
    let v = cli.ok(&["--json", "get-iou", "alice", "bob"]).await;
    trace.push(trace_line("get-iou", &v));

    let fetched = dir.path().join("fetched.csv");
    let v = cli
        .ok(&["--json", "fetch", "--as", "bob", "mem://alice/reading", "-o", fetched.to_str().unwrap()])
        .await;
    trace.push(trace_line("fetch", &v));
    assert_eq!(std::fs::read(&fetched).unwrap(), body);

    let v = cli.ok(&["--json", "verify-chain"]).await;
    trace.push(trace_line("verify-chain", &v));

    check_golden("lifecycle.trace", &(trace.join("\n") + "\n"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn encrypted_sharing_through_the_key_authority() {
    let (cli, dir) = Cli::start().await;
    let plain = dir.path().join("plain.bin");
    std::fs::write(&plain, b"meter 17: 4.2 kWh").unwrap();
    let plain = plain.to_str().unwrap();

    cli.ok(&["--json", "register", "alice"]).await;
    cli.ok(&["--json", "register", "bob"]).await;

    // No provisioned key yet: a usage problem on the caller's side.
    let r = cli.run(&["upload", "--as", "alice", "mem://e", plain, "--encrypt-prefix", "alice/meters"]).await;
    assert_eq!(r.code, 2, "{}", r.stderr);

    cli.ok(&["--json", "request-key", "--as", "alice", "alice", "--provision"]).await;
    let v = cli
        .ok(&["--json", "upload", "--as", "alice", "mem://e", plain, "--encrypt-prefix", "alice/meters/m17"])
        .await;
    assert_eq!(v["encrypted"], true);
    let fid = v["file_id"].as_str().unwrap().to_string();
    cli.ok(&[
        "--json", "add-data", "--as", "alice", "--uri", "mem://e", "--sharing-prefix", "alice/meters",
    ])
    .await;
    cli.ok(&["--json", "create-offer", "--as", "alice", "--file-id", &fid, "--price", "1"]).await;

    let r = cli.run(&["--json", "request-key", "--as", "bob", "alice/meters"]).await;
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("Denied"), "{}", r.stderr);

    let v = cli.ok(&["--json", "accept-offer", "--as", "bob", "--file-id", &fid]).await;
    let h = v["height"].to_string();
    cli.ok(&["--json", "request-key", "--as", "bob", "alice/meters", "--min-height", &h]).await;

    let ct = dir.path().join("ct.bin");
    cli.ok(&["--json", "fetch", "--as", "bob", "mem://e", "-o", ct.to_str().unwrap()]).await;
    let out = dir.path().join("out.bin");
    cli.ok(&["--json", "decrypt", "--as", "bob", ct.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .await;
    assert_eq!(std::fs::read(&out).unwrap(), b"meter 17: 4.2 kWh");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn exit_codes() {
    let (cli, dir) = Cli::start().await;
    let r = cli.run(&["--json", "list-offers"]).await;
    assert_eq!((r.code, r.stdout.trim()), (0, "[]"), "{}", r.stderr);

    let f = dir.path().join("x");
    std::fs::write(&f, b"x").unwrap();
    cli.ok(&["--json", "register", "alice"]).await;
    cli.ok(&["--json", "register", "bob"]).await;
    let fid = cli.ok(&["--json", "upload", "--as", "alice", "mem://x", f.to_str().unwrap()]).await["file_id"]
        .as_str()
        .unwrap()
        .to_string();
    cli.ok(&["--json", "add-data", "--as", "alice", "--uri", "mem://x"]).await;
    cli.ok(&["--json", "create-offer", "--as", "alice", "--file-id", &fid, "--price", "1"]).await;
    cli.ok(&["--json", "revoke-offer", "--as", "alice", "--file-id", &fid]).await;
    let r = cli.run(&["--json", "accept-offer", "--as", "bob", "--file-id", &fid]).await;
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("InactiveOffer"), "{}", r.stderr);

    let r = cli.run(&["fetch", "--as", "bob", "mem://x"]).await;
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("AccessDenied"), "{}", r.stderr);

    // Usage errors: missing argument, bad file id, unknown identity.
    assert_eq!(cli.run(&["accept-offer", "--file-id", &fid]).await.code, 2);
    assert_eq!(cli.run(&["accept-offer", "--as", "bob", "--file-id", "zz"]).await.code, 2);
    assert_eq!(cli.run(&["accept-offer", "--as", "carol", "--file-id", &fid]).await.code, 2);
}
