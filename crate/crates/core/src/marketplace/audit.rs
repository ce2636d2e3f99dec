//! Chain audit: rebuilds ACLs from blocks alone and checks that every
//! non-owner ACL member paid for access earlier in the chain.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::ledger::{Block, Ledger, LedgerError, Outcome};

use super::{list_data, Call, FileId, Marketplace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AclViolation {
    pub height: u64,
    pub file_id: FileId,
    pub member: String,
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    /// ACL of every registered item after the last block.
    pub acls: BTreeMap<FileId, Vec<String>>,
    /// Successful purchases as `(height, buyer, file)`.
    pub purchases: Vec<(u64, String, FileId)>,
    pub violations: Vec<AclViolation>,
}

pub fn audit_chain(blocks: &[Block]) -> Result<AuditReport, LedgerError> {
    let mut ledger = Ledger::new(Arc::new(Marketplace));
    let mut report = AuditReport::default();
    let mut paid: BTreeSet<(String, FileId)> = BTreeSet::new();
    for block in blocks {
        ledger.apply_block(block)?;
        for e in &block.entries {
            if e.outcome != Outcome::Success {
                continue;
            }
            if let Ok(Call::AcceptOffer(fid)) = Call::decode(&e.tx.function, &e.tx.args) {
                paid.insert((e.tx.invoker.clone(), fid));
                report.purchases.push((block.height, e.tx.invoker.clone(), fid));
            }
        }
        for m in list_data(ledger.state()) {
            for member in m.acl.iter().filter(|a| **a != m.owner) {
                if !paid.contains(&(member.clone(), m.file_id)) {
                    report.violations.push(AclViolation {
                        height: block.height,
                        file_id: m.file_id,
                        member: member.clone(),
                    });
                }
            }
        }
    }
    report.acls = list_data(ledger.state())
        .into_iter()
        .map(|m| (m.file_id, m.acl))
        .collect();
    Ok(report)
}
