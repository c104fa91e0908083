//! Two-phase commit as master and cohort state machines.
//!
//! The machines only decide; the event loop carries out their actions
//! (message sends, forced log writes) on the site resources and feeds the
//! results back as inputs. A transaction whose single cohort runs at its
//! origin site commits locally: one forced commit record, no messages.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExecMode {
    /// All cohorts start together.
    #[default]
    Parallel,
    /// Cohorts run one at a time in site order.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Prepare,
    VoteYes,
    VoteNo,
    Commit,
    Abort,
    Ack,
    WorkDone,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Prepare => "PREPARE",
            MessageKind::VoteYes => "VOTE_YES",
            MessageKind::VoteNo => "VOTE_NO",
            MessageKind::Commit => "COMMIT",
            MessageKind::Abort => "ABORT",
            MessageKind::Ack => "ACK",
            MessageKind::WorkDone => "WORK_DONE",
        }
    }

    /// True for messages travelling cohort -> master.
    pub fn to_master(self) -> bool {
        matches!(self, MessageKind::VoteYes | MessageKind::VoteNo | MessageKind::Ack | MessageKind::WorkDone)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LogRecord {
    Prepared,
    Commit,
    Abort,
}

impl LogRecord {
    pub fn name(self) -> &'static str {
        match self {
            LogRecord::Prepared => "prepared",
            LogRecord::Commit => "commit",
            LogRecord::Abort => "abort",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Committed,
    Aborted,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct ProtocolViolation(pub String);

fn violation<T>(msg: impl Into<String>) -> Result<T, ProtocolViolation> {
    Err(ProtocolViolation(msg.into()))
}

/// Forced log writes and protocol messages of a clean commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitCost {
    pub forced_writes: u32,
    pub messages: u32,
}

/// `2k + 1` forced writes and `4k` messages for `k` cohorts; a local-only
/// transaction needs a single forced commit record.
pub fn commit_cost(num_cohorts: usize, local: bool) -> CommitCost {
    if local {
        CommitCost { forced_writes: 1, messages: 0 }
    } else {
        let k = num_cohorts as u32;
        CommitCost { forced_writes: 2 * k + 1, messages: 4 * k }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MasterPhase {
    Setup,
    CohortsExecuting,
    WaitingVotes,
    Committing,
    Aborting,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MasterInput {
    Start,
    WorkDone(usize),
    Vote { cohort: usize, yes: bool },
    Ack(usize),
    LogForced(LogRecord),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MasterAction {
    StartCohort(usize),
    Send { kind: MessageKind, cohort: usize },
    ForceLog(LogRecord),
    /// The commit record is on stable storage.
    CommitPoint,
    AbortDecided,
    /// Unforced end record; costs no disk wait.
    WriteEndLog,
    Finished(Outcome),
}

#[derive(Clone, Debug)]
pub struct MasterState {
    pub phase: MasterPhase,
    pub votes: Vec<Option<bool>>,
    pub acks: Vec<bool>,
    pub work_done: Vec<bool>,
    pub exec_cursor: usize,
    pub mode: ExecMode,
    pub local: bool,
    pending_log: Option<LogRecord>,
    decision_forced: bool,
    abort_sent: Vec<bool>,
    outcome: Option<Outcome>,
}

impl MasterState {
    pub fn new(num_cohorts: usize, mode: ExecMode, local: bool) -> Self {
        assert!(num_cohorts > 0, "transaction without cohorts");
        assert!(!local || num_cohorts == 1, "local commit needs exactly one cohort");
        MasterState {
            phase: MasterPhase::Setup,
            votes: vec![None; num_cohorts],
            acks: vec![false; num_cohorts],
            work_done: vec![false; num_cohorts],
            exec_cursor: 0,
            mode,
            local,
            pending_log: None,
            decision_forced: false,
            abort_sent: vec![false; num_cohorts],
            outcome: None,
        }
    }

    pub fn num_cohorts(&self) -> usize {
        self.votes.len()
    }

    /// True once the commit record has been forced.
    pub fn commit_forced(&self) -> bool {
        self.decision_forced && self.outcome == Some(Outcome::Committed)
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn pending_log(&self) -> Option<LogRecord> {
        self.pending_log
    }

    fn cohort_index(&self, i: usize) -> Result<(), ProtocolViolation> {
        if i >= self.num_cohorts() {
            return violation(format!("cohort index {i} out of range"));
        }
        Ok(())
    }

    pub fn on_event(&mut self, input: MasterInput) -> Result<Vec<MasterAction>, ProtocolViolation> {
        use MasterAction as A;
        use MasterPhase as P;
        let n = self.num_cohorts();
        let mut actions = Vec::new();
        match (self.phase, input) {
            (P::Setup, MasterInput::Start) => {
                self.phase = P::CohortsExecuting;
                match self.mode {
                    ExecMode::Parallel => actions.extend((0..n).map(A::StartCohort)),
                    ExecMode::Sequential => actions.push(A::StartCohort(0)),
                }
            }
            (P::CohortsExecuting, MasterInput::WorkDone(i)) => {
                self.cohort_index(i)?;
                if self.work_done[i] {
                    return violation(format!("duplicate WORK_DONE from cohort {i}"));
                }
                if self.mode == ExecMode::Sequential && i != self.exec_cursor {
                    return violation(format!("WORK_DONE from cohort {i} while cohort {} is active", self.exec_cursor));
                }
                self.work_done[i] = true;
                if self.work_done.iter().all(|&d| d) {
                    if self.local {
                        self.phase = P::Committing;
                        self.votes[0] = Some(true);
                        self.pending_log = Some(LogRecord::Commit);
                        actions.push(A::ForceLog(LogRecord::Commit));
                    } else {
                        self.phase = P::WaitingVotes;
                        actions.extend((0..n).map(|cohort| A::Send { kind: MessageKind::Prepare, cohort }));
                    }
                } else if self.mode == ExecMode::Sequential {
                    self.exec_cursor += 1;
                    actions.push(A::StartCohort(self.exec_cursor));
                }
            }
            (P::WaitingVotes, MasterInput::Vote { cohort, yes }) => {
                self.cohort_index(cohort)?;
                if self.votes[cohort].is_some() {
                    return violation(format!("duplicate vote from cohort {cohort}"));
                }
                self.votes[cohort] = Some(yes);
                if !yes {
                    self.phase = P::Aborting;
                    self.outcome = Some(Outcome::Aborted);
                    self.pending_log = Some(LogRecord::Abort);
                    actions.push(A::AbortDecided);
                    actions.push(A::ForceLog(LogRecord::Abort));
                } else if self.votes.iter().all(|v| *v == Some(true)) {
                    self.phase = P::Committing;
                    self.pending_log = Some(LogRecord::Commit);
                    actions.push(A::ForceLog(LogRecord::Commit));
                }
            }
            (P::Committing, MasterInput::LogForced(LogRecord::Commit)) if self.pending_log == Some(LogRecord::Commit) => {
                self.pending_log = None;
                self.decision_forced = true;
                self.outcome = Some(Outcome::Committed);
                actions.push(A::CommitPoint);
                if self.local {
                    self.phase = P::Done;
                    actions.push(A::WriteEndLog);
                    actions.push(A::Finished(Outcome::Committed));
                } else {
                    actions.extend((0..n).map(|cohort| A::Send { kind: MessageKind::Commit, cohort }));
                }
            }
            (P::Committing, MasterInput::Ack(i)) if self.decision_forced => {
                self.cohort_index(i)?;
                if self.acks[i] {
                    return violation(format!("duplicate ACK from cohort {i}"));
                }
                self.acks[i] = true;
                if self.acks.iter().all(|&a| a) {
                    self.phase = P::Done;
                    actions.push(A::WriteEndLog);
                    actions.push(A::Finished(Outcome::Committed));
                }
            }
            (P::Aborting, MasterInput::Vote { cohort, yes }) => {
                self.cohort_index(cohort)?;
                if self.votes[cohort].is_some() {
                    return violation(format!("duplicate vote from cohort {cohort}"));
                }
                self.votes[cohort] = Some(yes);
                if yes && self.decision_forced {
                    self.abort_sent[cohort] = true;
                    actions.push(A::Send { kind: MessageKind::Abort, cohort });
                }
                self.finish_abort_if_complete(&mut actions);
            }
            (P::Aborting, MasterInput::LogForced(LogRecord::Abort)) if self.pending_log == Some(LogRecord::Abort) => {
                self.pending_log = None;
                self.decision_forced = true;
                for cohort in 0..n {
                    if self.votes[cohort] == Some(true) {
                        self.abort_sent[cohort] = true;
                        actions.push(A::Send { kind: MessageKind::Abort, cohort });
                    }
                }
                self.finish_abort_if_complete(&mut actions);
            }
            (P::Aborting, MasterInput::Ack(i)) => {
                self.cohort_index(i)?;
                if !self.abort_sent[i] || self.acks[i] {
                    return violation(format!("unexpected ACK from cohort {i} while aborting"));
                }
                self.acks[i] = true;
                self.finish_abort_if_complete(&mut actions);
            }
            (phase, input) => {
                return violation(format!("master in {phase:?} cannot handle {input:?}"));
            }
        }
        Ok(actions)
    }

    fn finish_abort_if_complete(&mut self, actions: &mut Vec<MasterAction>) {
        let all_voted = self.votes.iter().all(|v| v.is_some());
        let all_acked = (0..self.num_cohorts()).all(|i| self.votes[i] != Some(true) || self.acks[i]);
        if self.decision_forced && all_voted && all_acked {
            self.phase = MasterPhase::Done;
            actions.push(MasterAction::WriteEndLog);
            actions.push(MasterAction::Finished(Outcome::Aborted));
        }
    }

    /// Firm-deadline kill: the transaction is discarded at once. Returns the
    /// cohorts that were prepared and must be told to abort.
    pub fn kill(&mut self) -> Result<Vec<usize>, ProtocolViolation> {
        if self.commit_forced() {
            return violation("kill after the commit record was forced");
        }
        if self.phase == MasterPhase::Done {
            return violation("kill of a finished transaction");
        }
        self.phase = MasterPhase::Aborting;
        self.outcome = Some(Outcome::Aborted);
        self.pending_log = None;
        let prepared = (0..self.num_cohorts())
            .filter(|&i| self.votes[i] == Some(true) && !self.acks[i])
            .collect();
        self.phase = MasterPhase::Done;
        Ok(prepared)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CohortPhase {
    Executing,
    WorkDone,
    Prepared,
    Committing,
    Aborting,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CohortInput {
    PagesComplete,
    Prepare { willing: bool },
    Commit,
    Abort,
    LogForced(LogRecord),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CohortAction {
    Send(MessageKind),
    ForceLog(LogRecord),
    Finished(Outcome),
}

#[derive(Clone, Debug)]
pub struct CohortCommitState {
    pub phase: CohortPhase,
    pub forced_writes: u32,
    local: bool,
    pending_log: Option<LogRecord>,
    prepared: bool,
    outcome: Option<Outcome>,
}

impl CohortCommitState {
    pub fn new(local: bool) -> Self {
        CohortCommitState {
            phase: CohortPhase::Executing,
            forced_writes: 0,
            local,
            pending_log: None,
            prepared: false,
            outcome: None,
        }
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    /// True once the prepared record has been forced.
    pub fn was_prepared(&self) -> bool {
        self.prepared
    }

    pub fn on_event(&mut self, input: CohortInput) -> Result<Vec<CohortAction>, ProtocolViolation> {
        use CohortAction as A;
        use CohortPhase as P;
        let mut actions = Vec::new();
        match (self.phase, input) {
            (P::Executing, CohortInput::PagesComplete) => {
                self.phase = P::WorkDone;
                if !self.local {
                    actions.push(A::Send(MessageKind::WorkDone));
                }
            }
            (P::WorkDone, CohortInput::Prepare { willing }) if self.pending_log.is_none() && !self.local => {
                if willing {
                    self.pending_log = Some(LogRecord::Prepared);
                    actions.push(A::ForceLog(LogRecord::Prepared));
                } else {
                    // Unilateral abort is allowed before preparing.
                    self.phase = P::Aborting;
                    self.pending_log = Some(LogRecord::Abort);
                    actions.push(A::ForceLog(LogRecord::Abort));
                }
            }
            (P::WorkDone, CohortInput::LogForced(LogRecord::Prepared)) if self.pending_log == Some(LogRecord::Prepared) => {
                self.pending_log = None;
                self.forced_writes += 1;
                self.prepared = true;
                self.phase = P::Prepared;
                actions.push(A::Send(MessageKind::VoteYes));
            }
            (P::Prepared, CohortInput::Commit) => {
                self.phase = P::Committing;
                self.pending_log = Some(LogRecord::Commit);
                actions.push(A::ForceLog(LogRecord::Commit));
            }
            (P::Prepared, CohortInput::Abort) => {
                self.phase = P::Aborting;
                self.pending_log = Some(LogRecord::Abort);
                actions.push(A::ForceLog(LogRecord::Abort));
            }
            (P::Committing, CohortInput::LogForced(LogRecord::Commit)) if self.pending_log == Some(LogRecord::Commit) => {
                self.pending_log = None;
                self.forced_writes += 1;
                self.phase = P::Done;
                self.outcome = Some(Outcome::Committed);
                actions.push(A::Send(MessageKind::Ack));
                actions.push(A::Finished(Outcome::Committed));
            }
            (P::Aborting, CohortInput::LogForced(LogRecord::Abort)) if self.pending_log == Some(LogRecord::Abort) => {
                self.pending_log = None;
                self.forced_writes += 1;
                self.phase = P::Done;
                self.outcome = Some(Outcome::Aborted);
                let reply = if self.prepared { MessageKind::Ack } else { MessageKind::VoteNo };
                actions.push(A::Send(reply));
                actions.push(A::Finished(Outcome::Aborted));
            }
            (phase, input) => {
                return violation(format!("cohort in {phase:?} cannot handle {input:?}"));
            }
        }
        Ok(actions)
    }

    /// A local-only cohort finishes with its master's commit record.
    pub fn local_commit(&mut self) -> Result<(), ProtocolViolation> {
        if !self.local || self.phase != CohortPhase::WorkDone {
            return violation(format!("local commit in {:?}", self.phase));
        }
        self.phase = CohortPhase::Done;
        self.outcome = Some(Outcome::Committed);
        Ok(())
    }

    /// Discards the cohort of a killed transaction.
    pub fn discard(&mut self) {
        if self.phase != CohortPhase::Done {
            self.phase = CohortPhase::Done;
            self.pending_log = None;
            self.outcome = Some(Outcome::Aborted);
        }
    }
}
