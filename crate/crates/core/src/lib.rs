pub mod amount;
pub mod authority;
pub mod bench;
pub mod crypto;
pub mod encoding;
pub mod framework;
pub mod ledger;
pub mod marketplace;
pub mod net;
pub mod prefix;
pub mod router;
pub mod storage;
pub mod wire;
pub mod workload;
