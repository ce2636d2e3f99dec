use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use sharechain_core::net::NetworkConfig;
use sharechain_server::{spawn, ServerOptions};

#[derive(Parser)]
#[command(name = "sharechain-server", version, about = "Marketplace network, storage node and key authority over HTTP")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Network config (TOML). Defaults apply when unset.
    #[arg(long, env = "SHARECHAIN_NETWORK_CONFIG")]
    config: Option<PathBuf>,
    /// Blob store and key decision log. Must not contain blobs from an earlier run.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Derive storage and master keys from this seed instead of the OS rng.
    #[arg(long)]
    seed: Option<u64>,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let network = match &args.config {
        Some(path) => match NetworkConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                std::process::exit(2);
            }
        },
        None => NetworkConfig::default(),
    };
    let opts = ServerOptions {
        network,
        data_dir: args.data_dir,
        seed: args.seed,
    };
    let (addr, _fw) = match spawn(args.listen, &opts).await {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    println!("listening on http://{addr}");
    if let Err(e) = tokio::signal::ctrl_c().await {
        eprintln!("error: {e}");
    }
}
