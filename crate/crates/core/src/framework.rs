//! Wires a network, one storage node and the key authority together.

use std::sync::Arc;

use crate::authority::KeyAuthority;
use crate::crypto::Keypair;
use crate::ledger::Transaction;
use crate::marketplace::{Call, Marketplace, Role};
use crate::net::{NetError, Network, NetworkConfig};
use crate::prefix::MasterKeyPair;
use crate::storage::{BlobStore, StorageNode};

pub struct Framework {
    pub net: Network,
    pub storage: StorageNode,
    pub authority: KeyAuthority,
}

impl Framework {
    /// Starts the network with a genesis block registering the storage
    /// identity followed by `extra_genesis`. Must run inside a tokio runtime.
    pub fn start(
        config: NetworkConfig,
        storage_id: &str,
        storage_keys: Keypair,
        store: Arc<dyn BlobStore>,
        master: MasterKeyPair,
        extra_genesis: Vec<Transaction>,
    ) -> Result<Self, NetError> {
        let mut genesis = vec![Call::register(&storage_keys, storage_id, Role::Storage)];
        genesis.extend(extra_genesis);
        let net = Network::start(config, Arc::new(Marketplace), genesis)?;
        // The authority reads from the last peer so that it never shares a
        // replica with the API peer when there is more than one.
        let authority = KeyAuthority::new(master, net.clone(), net.peer_count() - 1);
        Ok(Framework {
            storage: StorageNode::new(net.clone(), storage_id, storage_keys, store),
            authority,
            net,
        })
    }
}
