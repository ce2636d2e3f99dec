//! Commit and fetch timings against payload size, for plaintext (ACL) and
//! prefix-encrypted sharing.
//!
//! A *commit* round is upload, addData, createOffer and the buyer's
//! acceptOffer; for the prefix scheme the owner encrypts first. A *fetch*
//! round is the buyer's fetch, followed by decryption for the prefix
//! scheme. Every cell runs on a fresh network.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::amount::Amount;
use crate::authority::{KeyPurpose, KeyRequest};
use crate::crypto::{Hash256, Keypair};
use crate::framework::Framework;
use crate::ledger::Outcome;
use crate::marketplace::{Call, MetaData, Offer, Role};
use crate::net::{Account, LatencyModel, NetworkConfig};
use crate::prefix::{decrypt_bytes, encrypt, setup, PrefixIdentity, PrefixKey};
use crate::storage::{FetchRequest, MemStore, UploadRequest};

pub const CSV_HEADER: &str = "scheme,size_mb,depth,op,mean_ms,stddev_ms,reps";
pub const MIN_REPETITIONS: usize = 5;
pub const R2_THRESHOLD: f64 = 0.9;
pub const DEPTH_SPREAD: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Acl,
    Prefix,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Acl => "acl",
            Scheme::Prefix => "prefix",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "acl" => Ok(Scheme::Acl),
            "prefix" => Ok(Scheme::Prefix),
            _ => Err(format!("unknown scheme {s:?} (expected acl or prefix)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Commit,
    Fetch,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Commit => "commit",
            Op::Fetch => "fetch",
        })
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "commit" => Ok(Op::Commit),
            "fetch" => Ok(Op::Fetch),
            _ => Err(format!("unknown op {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub sizes_mb: Vec<f64>,
    /// Key depths for the prefix scheme. The ACL scheme has no key and is
    /// reported with depth 0.
    pub depths: Vec<usize>,
    pub repetitions: usize,
    pub schemes: Vec<Scheme>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes_mb: vec![1.0, 5.0, 10.0, 20.0],
            depths: (1..=6).collect(),
            repetitions: MIN_REPETITIONS,
            schemes: vec![Scheme::Acl, Scheme::Prefix],
            seed: 0,
        }
    }
}

impl BenchConfig {
    /// Sizes small enough for a laptop or CI run.
    pub fn desk() -> Self {
        BenchConfig {
            sizes_mb: vec![0.1, 0.5, 1.0, 2.0],
            ..BenchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sizes_mb.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err("sizes must be positive".into());
        }
        if self.repetitions < MIN_REPETITIONS {
            return Err(format!("repetitions must be at least {MIN_REPETITIONS}"));
        }
        if self.schemes.contains(&Scheme::Prefix) && self.depths.iter().any(|d| !(1..=16).contains(d)) {
            return Err("depths must be within 1..=16".into());
        }
        Ok(())
    }
}

/// Network used by the bench when none is given: a LAN-like 20 ms link
/// with roughly 20 MB/s throughput and a short block timeout.
pub fn desk_network() -> NetworkConfig {
    NetworkConfig {
        peer_count: 5,
        latency: LatencyModel {
            base_ms: 20.0,
            per_byte_ms: 0.00005,
        },
        seed: 0,
        batch_size: 16,
        batch_timeout_ms: 5,
    }
}

pub fn size_bytes(size_mb: f64) -> usize {
    (size_mb * 1_000_000.0).round() as usize
}

/// Payload for one repetition. Depends only on the seed, the size and the
/// repetition index.
pub fn payload(seed: u64, size_mb: f64, rep: usize) -> Vec<u8> {
    let d = Hash256::digest_parts(&[
        b"sharechain/bench/payload".as_slice(),
        &seed.to_be_bytes(),
        &size_mb.to_bits().to_be_bytes(),
        &(rep as u64).to_be_bytes(),
    ]);
    let mut rng = ChaCha20Rng::from_seed(d.0);
    let mut out = vec![0u8; size_bytes(size_mb)];
    rng.fill_bytes(&mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub size_mb: f64,
    pub depth: usize,
    pub op: Op,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub scheme: Scheme,
    pub size_mb: f64,
    pub depth: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub failed: Vec<FailedCell>,
}

/// Sample mean and standard deviation (n - 1).
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs every configured cell in turn. Must run inside a tokio runtime.
pub async fn run_bench(cfg: &BenchConfig, network: &NetworkConfig) -> BenchTable {
    let mut table = BenchTable::default();
    let mut cells = Vec::new();
    for &scheme in &cfg.schemes {
        for &size in &cfg.sizes_mb {
            match scheme {
                Scheme::Acl => cells.push((scheme, size, 0)),
                Scheme::Prefix => cells.extend(cfg.depths.iter().map(|&d| (scheme, size, d))),
            }
        }
    }
    for (scheme, size, depth) in cells {
        tracing::info!(%scheme, size, depth, "bench cell");
        match run_cell(cfg, network, scheme, size, depth).await {
            Ok((commit, fetch)) => {
                for (op, xs) in [(Op::Commit, commit), (Op::Fetch, fetch)] {
                    let (mean_ms, stddev_ms) = mean_stddev(&xs);
                    table.rows.push(BenchRow {
                        scheme,
                        size_mb: size,
                        depth,
                        op,
                        mean_ms,
                        stddev_ms,
                        reps: xs.len(),
                    });
                }
            }
            Err(error) => table.failed.push(FailedCell {
                scheme,
                size_mb: size,
                depth,
                error,
            }),
        }
    }
    table
}

fn bench_identity(depth: usize) -> PrefixIdentity {
    let labels = std::iter::once("alice".to_string()).chain((1..depth).map(|i| format!("l{i}")));
    PrefixIdentity::from_labels(labels).expect("bench identities are valid")
}

async fn committed(acct: &Account, fw: &Framework, call: Call) -> Result<u64, String> {
    let r = acct.submit(&fw.net, &call).await.map_err(|e| e.to_string())?;
    match r.outcome {
        Outcome::Success => Ok(r.height),
        Outcome::Failed(code) => Err(format!("{} failed: {code}", call.function())),
    }
}

async fn run_cell(
    cfg: &BenchConfig,
    network: &NetworkConfig,
    scheme: Scheme,
    size_mb: f64,
    depth: usize,
) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let storage_keys = Keypair::generate(&mut rng);
    let alice_keys = Keypair::generate(&mut rng);
    let bob_keys = Keypair::generate(&mut rng);
    let master = setup(128, &mut rng).map_err(|e| e.to_string())?;
    let genesis = vec![
        Call::register(&alice_keys, "alice", Role::Member),
        Call::register(&bob_keys, "bob", Role::Member),
    ];
    let fw = Framework::start(
        network.clone(),
        "storage",
        storage_keys,
        Arc::new(MemStore::new()),
        master,
        genesis,
    )
    .map_err(|e| e.to_string())?;
    let alice = Account::new(&fw.net, "alice", alice_keys.clone());
    let bob = Account::new(&fw.net, "bob", bob_keys.clone());

    let identity = bench_identity(depth);
    // The owner's device is provisioned once, outside the measurements.
    let device_key: Option<PrefixKey> = if scheme == Scheme::Prefix {
        fw.authority.sync_latest().await.map_err(|e| e.to_string())?;
        let req = KeyRequest::signed(&alice_keys, "alice", "alice".parse().unwrap(), KeyPurpose::Provision, 0, 0);
        let resp = fw.authority.request_key(&req).map_err(|e| e.to_string())?;
        Some(resp.open("alice", &alice_keys).ok_or("provisioned key does not open")?)
    } else {
        None
    };

    let mut commit = Vec::with_capacity(cfg.repetitions);
    let mut fetch = Vec::with_capacity(cfg.repetitions);
    for rep in 0..cfg.repetitions {
        let plain = payload(cfg.seed, size_mb, rep);
        let uri = format!("mem://bench/{rep}");

        let t = Instant::now();
        let (bytes, encrypted) = match &device_key {
            Some(k) => {
                let ct = encrypt(&k.mpk, k, &identity, &plain, &mut rng).map_err(|e| e.to_string())?;
                (ct.to_bytes(), true)
            }
            None => (plain.clone(), false),
        };
        let receipt = fw
            .storage
            .upload(UploadRequest::signed(&alice_keys, "alice", &uri, bytes, encrypted))
            .await
            .map_err(|e| e.to_string())?;
        let file_id = receipt.attestation.file_id;
        let mdata = MetaData {
            id: format!("m{rep}"),
            file_id,
            owner: "alice".into(),
            uris: vec![uri.clone()],
            acl: vec!["alice".into()],
            sharing_prefix: device_key.as_ref().map(|_| identity.to_string()),
        };
        committed(&alice, &fw, Call::AddData(mdata)).await?;
        let offer = Offer {
            id: format!("o{rep}"),
            file_id,
            value: Amount::from_cents(100),
            state: true,
        };
        committed(&alice, &fw, Call::CreateOffer(offer)).await?;
        let bought_at = committed(&bob, &fw, Call::AcceptOffer(file_id)).await?;
        commit.push(ms_since(t));

        let buyer_key = match device_key {
            Some(_) => {
                fw.authority.sync_to(bought_at).await.map_err(|e| e.to_string())?;
                let req = KeyRequest::signed(&bob_keys, "bob", identity.clone(), KeyPurpose::Access, bought_at, rep as u64);
                let resp = fw.authority.request_key(&req).map_err(|e| e.to_string())?;
                Some(resp.open("bob", &bob_keys).ok_or("granted key does not open")?)
            }
            None => None,
        };

        let t = Instant::now();
        let got = fw
            .storage
            .fetch(FetchRequest::signed(&bob_keys, "bob", &uri))
            .await
            .map_err(|e| e.to_string())?;
        let recovered = match &buyer_key {
            Some(k) => decrypt_bytes(k, &got.payload).map_err(|_| "decryption rejected".to_string())?,
            None => got.payload,
        };
        fetch.push(ms_since(t));
        if recovered != plain {
            return Err(format!("fetched bytes differ from payload at rep {rep}"));
        }
    }
    fw.net.stop();
    Ok((commit, fetch))
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.3},{:.3},{}\n",
            r.scheme, r.size_mb, r.depth, r.op, r.mean_ms, r.stddev_ms, r.reps
        ));
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err("missing or unexpected CSV header".into());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.trim().split(',').collect();
            if f.len() != 7 {
                return Err(format!("row {}: expected 7 fields", i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            let int = |s: &str| s.parse::<usize>().map_err(|e| format!("row {}: {e}", i + 1));
            Ok(BenchRow {
                scheme: f[0].parse()?,
                size_mb: num(f[1])?,
                depth: int(f[2])?,
                op: f[3].parse()?,
                mean_ms: num(f[4])?,
                stddev_ms: num(f[5])?,
                reps: int(f[6])?,
            })
        })
        .collect()
}

/// Coefficient of determination of the least-squares line through `pts`.
pub fn r_squared(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - (my + slope * (p.0 - mx))).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if ss_tot == 0.0 {
        return 1.0;
    }
    1.0 - ss_res / ss_tot
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the table has no data for the check.
    pub pass: Option<bool>,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn mean_of(rows: &[BenchRow], scheme: Scheme, size: f64, depth: usize, op: Op) -> Option<f64> {
    rows.iter()
        .find(|r| r.scheme == scheme && r.size_mb == size && r.depth == depth && r.op == op)
        .map(|r| r.mean_ms)
}

/// The three relational checks, computed from the table alone.
pub fn summarize(rows: &[BenchRow]) -> Vec<Check> {
    let mut keys: Vec<(Scheme, usize)> = rows.iter().map(|r| (r.scheme, r.depth)).collect();
    keys.sort();
    keys.dedup();
    let mut sizes: Vec<f64> = rows.iter().map(|r| r.size_mb).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();

    let mut compared = 0;
    let mut violations = Vec::new();
    for &(scheme, depth) in &keys {
        for &size in &sizes {
            if let (Some(c), Some(f)) = (
                mean_of(rows, scheme, size, depth, Op::Commit),
                mean_of(rows, scheme, size, depth, Op::Fetch),
            ) {
                compared += 1;
                if c <= f {
                    violations.push(format!("{scheme}/d{depth}/{size}MB: commit {c:.1} <= fetch {f:.1}"));
                }
            }
        }
    }
    let commit_gt_fetch = Check {
        name: "commit mean > fetch mean".into(),
        pass: (compared > 0).then_some(violations.is_empty()),
        detail: if violations.is_empty() {
            format!("{compared} cells")
        } else {
            violations.join("; ")
        },
    };

    let mut worst: Option<(f64, String)> = None;
    for &(scheme, depth) in &keys {
        for op in [Op::Commit, Op::Fetch] {
            let pts: Vec<(f64, f64)> = sizes
                .iter()
                .filter_map(|&s| mean_of(rows, scheme, s, depth, op).map(|m| (s, m)))
                .collect();
            if pts.len() < 3 {
                continue;
            }
            let r2 = r_squared(&pts);
            if worst.as_ref().is_none_or(|w| r2 < w.0) {
                worst = Some((r2, format!("{scheme}/d{depth}/{op}")));
            }
        }
    }
    let linear = Check {
        name: format!("linear fit R^2 >= {R2_THRESHOLD}"),
        pass: worst.as_ref().map(|w| w.0 >= R2_THRESHOLD),
        detail: worst.map_or("fewer than 3 sizes".into(), |(r2, at)| format!("min R^2 {r2:.4} at {at}")),
    };

    let mut spread: Option<(f64, String)> = None;
    for &size in &sizes {
        for op in [Op::Commit, Op::Fetch] {
            let means: Vec<f64> = rows
                .iter()
                .filter(|r| r.scheme == Scheme::Prefix && r.size_mb == size && r.op == op)
                .map(|r| r.mean_ms)
                .collect();
            if means.len() < 2 {
                continue;
            }
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = (hi - lo) / lo;
            if spread.as_ref().is_none_or(|w| s > w.0) {
                spread = Some((s, format!("{size}MB/{op}")));
            }
        }
    }
    let depth = Check {
        name: format!("prefix depth means within {:.0}%", DEPTH_SPREAD * 100.0),
        pass: spread.as_ref().map(|w| w.0 < DEPTH_SPREAD),
        detail: spread.map_or("fewer than 2 depths".into(), |(s, at)| {
            format!("max spread {:.2}% at {at}", s * 100.0)
        }),
    };

    vec![commit_gt_fetch, linear, depth]
}
