//! Post-run checks of commit-protocol safety over a full trace.

use std::collections::{BTreeMap, BTreeSet};

use crate::commit::{CohortPhase, LogRecord, MessageKind, Outcome};
use crate::sim::{Role, TraceEntry, TxnRecord, TxnStatus};
use crate::workload::TxnId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AuditSummary {
    pub transactions: usize,
    pub vetoed: usize,
    pub prepared_cohorts: usize,
    pub guarded_sends: usize,
}

/// Checks atomicity, veto, prepared blocking and log-before-message.
/// Returns the first violation found.
pub fn audit(records: &[TxnRecord], trace: &[TraceEntry]) -> Result<AuditSummary, String> {
    let mut summary = AuditSummary { transactions: records.len(), ..Default::default() };

    for r in records {
        let seen: BTreeSet<Outcome> = r.cohort_outcomes.iter().flatten().copied().collect();
        if seen.len() > 1 {
            return Err(format!("txn {}: mixed cohort outcomes {:?}", r.id, r.cohort_outcomes));
        }
        let expected = match r.status {
            TxnStatus::Committed => Some(Outcome::Committed),
            TxnStatus::Missed => Some(Outcome::Aborted),
            TxnStatus::InFlight => None,
        };
        if let (Some(want), Some(got)) = (expected, seen.iter().next()) {
            if want != *got {
                return Err(format!("txn {}: status {:?} but cohorts {:?}", r.id, r.status, got));
            }
        }
    }

    let mut by_txn: BTreeMap<TxnId, Vec<&TraceEntry>> = BTreeMap::new();
    for e in trace {
        by_txn.entry(e.txn()).or_default().push(e);
    }

    let prepared = format!("{:?}", CohortPhase::Prepared);
    for (txn, entries) in &by_txn {
        let status = records.get(*txn as usize).map(|r| r.status);

        let vetoed = entries.iter().any(|e| matches!(e, TraceEntry::Send { msg: MessageKind::VoteNo, .. }));
        if vetoed {
            summary.vetoed += 1;
            if status == Some(TxnStatus::Committed) {
                return Err(format!("txn {txn}: committed despite a NO vote"));
            }
            if entries.iter().any(|e| matches!(e, TraceEntry::Send { msg: MessageKind::Commit, .. })) {
                return Err(format!("txn {txn}: COMMIT sent despite a NO vote"));
            }
        }

        // A prepared cohort leaves only on the master's decision or a kill.
        let mut in_prepared: BTreeSet<usize> = BTreeSet::new();
        for e in entries {
            if let TraceEntry::Transition { role: Role::Cohort(c), from, to, event, .. } = e {
                if in_prepared.contains(c) && to != &prepared {
                    if !matches!(event.as_str(), "RECV_COMMIT" | "RECV_ABORT" | "ABORT") {
                        return Err(format!("txn {txn}: cohort {c} left Prepared on {event}"));
                    }
                    in_prepared.remove(c);
                }
                if to == &prepared && from != &prepared {
                    summary.prepared_cohorts += 1;
                    in_prepared.insert(*c);
                }
            }
        }

        let mut forced: Vec<(Role, LogRecord)> = Vec::new();
        for e in entries {
            match e {
                TraceEntry::LogForced { role, record, .. } => forced.push((*role, *record)),
                TraceEntry::Send { msg, cohort, .. } => {
                    let needed = match msg {
                        MessageKind::VoteYes => Some((Role::Cohort(*cohort), LogRecord::Prepared)),
                        MessageKind::Commit => Some((Role::Master, LogRecord::Commit)),
                        MessageKind::Abort => Some((Role::Master, LogRecord::Abort)),
                        _ => None,
                    };
                    if let Some(need) = needed {
                        if !forced.contains(&need) {
                            return Err(format!("txn {txn}: {} sent before its {:?} record", msg.name(), need.1));
                        }
                        summary.guarded_sends += 1;
                    }
                }
                TraceEntry::Transition { .. } => {}
            }
        }
    }
    Ok(summary)
}
