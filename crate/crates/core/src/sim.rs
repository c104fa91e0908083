//! The event loop tying workload, resources, commit protocol, slack policy
//! and statistics together for one run.

use std::collections::BTreeMap;
use std::fmt;

use crate::commit::{
    CohortAction, CohortCommitState, CohortInput, CohortPhase, LogRecord, MasterAction, MasterInput, MasterPhase,
    MasterState, MessageKind, Outcome, ProtocolViolation,
};
use crate::config::{fnv1a, SimConfig};
use crate::engine::{EventQueue, RngStream, RngStreams, SimDuration, SimTime, StreamPurpose};
use crate::error::SimError;
use crate::metrics::RunStats;
use crate::policy::{
    agent_scan, compute_slack, enforce_deadline, redistribute_slack, remaining_work, DeadlineVerdict, PolicyRegime,
    SlackCandidate, SlackLedger,
};
use crate::resources::{ServerKind, ServiceKind, ServiceRequest, SiteResources};
use crate::topology::{place_files, FileMap, SiteId};
use crate::workload::{
    build_transaction, estimate_resource_time, assign_deadline, terminal_resubmit, ArrivalGenerator, BuildStreams,
    CohortSpec, SourceMode, Transaction, TxnId, TxnState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub txn: TxnId,
    pub cohort: usize,
    pub from: SiteId,
    pub to: SiteId,
}

#[derive(Clone, Debug)]
pub enum EventKind {
    Arrival { site: SiteId, prebuilt: Option<Box<Transaction>> },
    TerminalSubmit { site: SiteId, terminal: u32 },
    ServiceDone { site: SiteId, server: ServerKind },
    MessageDelivery { msg: ProtocolMessage },
    /// Fires one tick after `deadline`; stale when the deadline has moved.
    DeadlineExpiry { txn: TxnId, deadline: SimTime },
    PolicyScan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PageStage {
    Cpu,
    Disk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Work {
    Page { cohort: usize, stage: PageStage },
    CohortLog { cohort: usize, record: LogRecord },
    MasterLog { record: LogRecord },
    MsgSend(ProtocolMessage),
    MsgRecv(ProtocolMessage),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Master,
    Cohort(usize),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Master => write!(f, "M"),
            Role::Cohort(i) => write!(f, "C{i}"),
        }
    }
}

/// One protocol trace record.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceEntry {
    Transition {
        time: SimTime,
        txn: TxnId,
        site: SiteId,
        role: Role,
        from: String,
        to: String,
        event: String,
    },
    LogForced {
        time: SimTime,
        txn: TxnId,
        site: SiteId,
        role: Role,
        record: LogRecord,
    },
    Send {
        time: SimTime,
        txn: TxnId,
        msg: MessageKind,
        cohort: usize,
        from: SiteId,
        to: SiteId,
    },
}

impl TraceEntry {
    pub fn time(&self) -> SimTime {
        match self {
            TraceEntry::Transition { time, .. } | TraceEntry::LogForced { time, .. } | TraceEntry::Send { time, .. } => {
                *time
            }
        }
    }

    pub fn txn(&self) -> TxnId {
        match self {
            TraceEntry::Transition { txn, .. } | TraceEntry::LogForced { txn, .. } | TraceEntry::Send { txn, .. } => *txn,
        }
    }
}

impl fmt::Display for TraceEntry {
    // `time txn site phase_from phase_to event`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEntry::Transition { time, txn, site, role, from, to, event } => {
                write!(f, "{time} {txn} {site} {role}.{from} {role}.{to} {event}")
            }
            TraceEntry::LogForced { time, txn, site, role, record } => {
                write!(f, "{time} {txn} {site} {role} {role} FORCED_{}", record.name())
            }
            TraceEntry::Send { time, txn, msg, cohort, from, to } => {
                let role = if msg.to_master() { Role::Cohort(*cohort) } else { Role::Master };
                write!(f, "{time} {txn} {from} {role} {role} SEND_{}->{to}", msg.name())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxnStatus {
    Committed,
    Missed,
    InFlight,
}

/// Per-transaction summary kept for analysis and tests.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxnRecord {
    pub id: TxnId,
    pub origin: SiteId,
    pub arrival: SimTime,
    pub resource_time: SimDuration,
    pub base_deadline: SimTime,
    pub deadline: SimTime,
    pub grants: u32,
    pub status: TxnStatus,
    pub commit_time: Option<SimTime>,
    pub measured: bool,
    pub cohort_sites: Vec<SiteId>,
    pub cohort_outcomes: Vec<Option<Outcome>>,
    /// Hash of the sites, pages and write flags.
    pub workload_digest: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiteUtilization {
    pub cpu_busy: SimDuration,
    pub disk_busy: SimDuration,
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub stats: RunStats,
    pub ledger: SlackLedger,
    pub records: Vec<TxnRecord>,
    pub trace: Option<Vec<TraceEntry>>,
    pub utilization: Vec<SiteUtilization>,
    pub end_time: SimTime,
}

struct CohortRuntime {
    spec: CohortSpec,
    pages_done: usize,
    commit: CohortCommitState,
}

struct TxnRuntime {
    txn: Transaction,
    master: MasterState,
    cohorts: Vec<CohortRuntime>,
    measured: bool,
    commit_forced_at: Option<SimTime>,
    missed: bool,
    terminal: Option<(SiteId, u32)>,
    service_used: SimDuration,
}

struct SiteSource {
    arrivals: Option<ArrivalGenerator>,
    arrival_rng: RngStream,
    placement: RngStream,
    pages: RngStream,
    writes: RngStream,
    think: RngStream,
    votes: RngStream,
}

pub struct Simulation {
    cfg: SimConfig,
    queue: EventQueue<EventKind>,
    map: FileMap,
    sites: Vec<SiteResources<Work>>,
    sources: Vec<SiteSource>,
    active: BTreeMap<TxnId, TxnRuntime>,
    records: Vec<TxnRecord>,
    stats: RunStats,
    ledger: SlackLedger,
    trace: Option<Vec<TraceEntry>>,
    next_id: TxnId,
    generated_total: u64,
    horizon: SimTime,
    warmup_end: SimTime,
}

fn protocol(at: SimTime, txn: TxnId) -> impl FnOnce(ProtocolViolation) -> SimError {
    move |v| SimError::Protocol { at, txn, detail: v.0 }
}

impl Simulation {
    /// A simulation with its configured transaction source.
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let mut sim = Self::without_source(cfg)?;
        sim.start_source()?;
        Ok(sim)
    }

    /// A simulation with no transaction source; feed it with [`Self::inject`].
    pub fn without_source(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.seed);
        let map = place_files(
            cfg.dbsize,
            cfg.num_sites,
            cfg.files_per_site,
            cfg.replication,
            &mut streams.stream(StreamPurpose::FileLayout, 0),
        )?;
        let sites = (0..cfg.num_sites).map(|s| SiteResources::new(SiteId(s), cfg.discipline)).collect();
        let sources = (0..cfg.num_sites)
            .map(|s| SiteSource {
                arrivals: None,
                arrival_rng: streams.stream(StreamPurpose::Arrivals, s),
                placement: streams.stream(StreamPurpose::Placement, s),
                pages: streams.stream(StreamPurpose::PageSelection, s),
                writes: streams.stream(StreamPurpose::WriteCoin, s),
                think: streams.stream(StreamPurpose::ThinkTime, s),
                votes: streams.stream(StreamPurpose::Vote, s),
            })
            .collect();
        let horizon = cfg.horizon();
        let warmup_end = cfg.warmup_end();
        let mut stats = RunStats::new(cfg.fingerprint(), cfg.num_sites);
        stats.runs = 1;
        stats.sim_duration_us = (horizon - warmup_end).as_micros();
        let mut sim = Simulation {
            cfg,
            queue: EventQueue::new(),
            map,
            sites,
            sources,
            active: BTreeMap::new(),
            records: Vec::new(),
            stats,
            ledger: SlackLedger::default(),
            trace: None,
            next_id: 0,
            generated_total: 0,
            horizon,
            warmup_end,
        };
        if sim.cfg.policy.regime != PolicyRegime::Static {
            let first = SimTime::ZERO + sim.cfg.policy.scan_period;
            if first <= horizon {
                sim.queue.schedule(first, EventKind::PolicyScan)?;
            }
        }
        Ok(sim)
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn file_map(&self) -> &FileMap {
        &self.map
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn start_source(&mut self) -> Result<(), SimError> {
        match self.cfg.workload.mode {
            SourceMode::Open => {
                for s in 0..self.cfg.num_sites {
                    let src = &mut self.sources[s as usize];
                    let mut gen = ArrivalGenerator::new(&self.cfg.workload, self.horizon);
                    if let Some(at) = gen.next_arrival(&mut src.arrival_rng)? {
                        self.queue.schedule(at, EventKind::Arrival { site: SiteId(s), prebuilt: None })?;
                    }
                    src.arrivals = Some(gen);
                }
            }
            SourceMode::Closed => {
                for s in 0..self.cfg.num_sites {
                    for terminal in 0..self.cfg.workload.num_terminals {
                        let src = &mut self.sources[s as usize];
                        let at = terminal_resubmit(&self.cfg.workload, SimTime::ZERO, &mut src.think)?;
                        if at < self.horizon {
                            self.queue.schedule(at, EventKind::TerminalSubmit { site: SiteId(s), terminal })?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Schedules a hand-built transaction arriving at `at` with the given
    /// cohorts. Resource time and deadline are derived as for generated ones.
    pub fn inject(&mut self, origin: SiteId, at: SimTime, mut cohorts: Vec<CohortSpec>) -> Result<TxnId, SimError> {
        if cohorts.is_empty() || cohorts.iter().any(|c| c.pages.is_empty()) {
            return Err(SimError::InvalidArgument("injected transaction needs non-empty cohorts".into()));
        }
        cohorts.sort_by_key(|c| c.site);
        let id = self.next_id;
        self.next_id += 1;
        let mut txn = Transaction {
            id,
            origin,
            arrival_time: at,
            resource_time: SimDuration::ZERO,
            deadline: at,
            base_deadline: at,
            cohorts,
            state: TxnState::Generated,
            grants: 0,
        };
        txn.resource_time = estimate_resource_time(&txn, &self.cfg.timing, self.cfg.include_commit_cost);
        txn.deadline = assign_deadline(at, self.cfg.workload.slack_factor, txn.resource_time)?;
        txn.base_deadline = txn.deadline;
        self.queue.schedule(at, EventKind::Arrival { site: origin, prebuilt: Some(Box::new(txn)) })?;
        Ok(id)
    }

    pub fn run(mut self) -> Result<SimOutput, SimError> {
        while let Some(t) = self.queue.peek_time() {
            if t > self.horizon {
                break;
            }
            let ev = self.queue.next_event().expect("peeked");
            self.handle(ev.kind)?;
        }
        self.finish()
    }

    fn finish(mut self) -> Result<SimOutput, SimError> {
        self.stats.grants_issued = self.records.iter().filter(|r| r.measured).map(|r| r.grants as u64).sum();
        self.stats.check_conservation()?;
        let in_flight = self.records.iter().filter(|r| r.measured && r.status == TxnStatus::InFlight).count() as u64;
        if in_flight != self.stats.in_flight {
            return Err(SimError::Invariant("in-flight count disagrees with transaction records".into()));
        }
        for (id, rt) in &self.active {
            let rec = &mut self.records[*id as usize];
            rec.cohort_outcomes = rt.cohorts.iter().map(|c| c.commit.outcome()).collect();
        }
        let utilization = self
            .sites
            .iter()
            .map(|s| SiteUtilization { cpu_busy: s.cpu.busy_time(), disk_busy: s.disk.busy_time() })
            .collect();
        Ok(SimOutput {
            stats: self.stats,
            ledger: self.ledger,
            records: self.records,
            trace: self.trace,
            utilization,
            end_time: self.queue.now(),
        })
    }

    fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::Arrival { site, prebuilt } => self.on_arrival(site, prebuilt),
            EventKind::TerminalSubmit { site, terminal } => {
                let txn = self.generate(site)?;
                self.admit(txn, Some((site, terminal)))
            }
            EventKind::ServiceDone { site, server } => self.on_service_done(site, server),
            EventKind::MessageDelivery { msg } => self.on_delivery(msg),
            EventKind::DeadlineExpiry { txn, deadline } => self.on_deadline(txn, deadline),
            EventKind::PolicyScan => self.on_policy_scan(),
        }
    }

    fn generate(&mut self, site: SiteId) -> Result<Transaction, SimError> {
        let id = self.next_id;
        self.next_id += 1;
        let src = &mut self.sources[site.index()];
        build_transaction(
            id,
            &self.cfg.workload,
            &self.cfg.timing,
            self.cfg.include_commit_cost,
            site,
            self.queue.now(),
            &self.map,
            BuildStreams { placement: &mut src.placement, pages: &mut src.pages, writes: &mut src.writes },
        )
    }

    fn on_arrival(&mut self, site: SiteId, prebuilt: Option<Box<Transaction>>) -> Result<(), SimError> {
        let txn = match prebuilt {
            Some(txn) => *txn,
            None => {
                let txn = self.generate(site)?;
                let src = &mut self.sources[site.index()];
                if let Some(gen) = src.arrivals.as_mut() {
                    if let Some(at) = gen.next_arrival(&mut src.arrival_rng)? {
                        self.queue.schedule(at, EventKind::Arrival { site, prebuilt: None })?;
                    }
                }
                txn
            }
        };
        self.admit(txn, None)
    }

    fn admit(&mut self, mut txn: Transaction, terminal: Option<(SiteId, u32)>) -> Result<(), SimError> {
        let now = self.now();
        let id = txn.id;
        let measured = txn.arrival_time >= self.warmup_end;
        self.generated_total += 1;
        if measured {
            self.stats.record_generated(txn.origin);
        }
        debug_assert_eq!(self.records.len() as u64, id);
        self.records.push(TxnRecord {
            id,
            origin: txn.origin,
            arrival: txn.arrival_time,
            resource_time: txn.resource_time,
            base_deadline: txn.base_deadline,
            deadline: txn.deadline,
            grants: 0,
            status: TxnStatus::InFlight,
            commit_time: None,
            measured,
            cohort_sites: txn.cohorts.iter().map(|c| c.site).collect(),
            cohort_outcomes: vec![None; txn.cohorts.len()],
            workload_digest: workload_digest(&txn),
        });

        let local = txn.is_local();
        let master = MasterState::new(txn.cohorts.len(), self.cfg.exec_mode, local);
        let cohorts = txn
            .cohorts
            .iter()
            .map(|spec| CohortRuntime { spec: spec.clone(), pages_done: 0, commit: CohortCommitState::new(local) })
            .collect();
        txn.transition(TxnState::Executing)?;
        self.queue.schedule(
            txn.deadline + SimDuration::from_micros(1),
            EventKind::DeadlineExpiry { txn: id, deadline: txn.deadline },
        )?;
        self.active.insert(
            id,
            TxnRuntime {
                txn,
                master,
                cohorts,
                measured,
                commit_forced_at: None,
                missed: false,
                terminal,
                service_used: SimDuration::ZERO,
            },
        );
        let _ = now;
        self.master_input(id, MasterInput::Start)
    }

    fn record_trace(&mut self, entry: TraceEntry) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(entry);
        }
    }

    fn submit(&mut self, site: SiteId, txn: TxnId, kind: ServiceKind, work: Work) -> Result<(), SimError> {
        let rt = self.active.get_mut(&txn).expect("submit for inactive txn");
        let service_time = kind.default_time(&self.cfg.timing);
        let req = ServiceRequest { txn, kind, service_time, priority_key: rt.txn.deadline, tag: work };
        let now = self.queue.now();
        if let Some(done) = self.sites[site.index()].submit(req, now) {
            rt.service_used += service_time;
            if rt.missed && rt.measured {
                self.stats.wasted_service_us += service_time.as_micros();
            }
            self.queue.schedule(done, EventKind::ServiceDone { site, server: kind.server() })?;
        }
        Ok(())
    }

    fn on_service_done(&mut self, site: SiteId, server: ServerKind) -> Result<(), SimError> {
        let now = self.now();
        let (finished, next) = self.sites[site.index()].server_mut(server).complete(now);
        if let Some(done) = next {
            let started = self.sites[site.index()].server_mut(server).in_service().expect("just started");
            let (txn, st) = (started.txn, started.service_time);
            if let Some(rt) = self.active.get_mut(&txn) {
                rt.service_used += st;
                if rt.missed && rt.measured {
                    self.stats.wasted_service_us += st.as_micros();
                }
            }
            self.queue.schedule(done, EventKind::ServiceDone { site, server })?;
        }
        let txn = finished.txn;
        if !self.active.contains_key(&txn) {
            // Killed while in service.
            return Ok(());
        }
        match finished.tag {
            Work::Page { cohort, stage: PageStage::Cpu } => {
                self.submit(site, txn, ServiceKind::PageDisk, Work::Page { cohort, stage: PageStage::Disk })
            }
            Work::Page { cohort, stage: PageStage::Disk } => {
                let rt = self.active.get_mut(&txn).expect("checked");
                let c = &mut rt.cohorts[cohort];
                c.pages_done += 1;
                if c.pages_done < c.spec.pages.len() {
                    self.submit(site, txn, ServiceKind::PageCpu, Work::Page { cohort, stage: PageStage::Cpu })
                } else {
                    self.cohort_input(txn, cohort, CohortInput::PagesComplete)
                }
            }
            Work::CohortLog { cohort, record } => {
                self.stats.forced_writes += u64::from(self.active[&txn].measured);
                self.record_trace(TraceEntry::LogForced { time: now, txn, site, role: Role::Cohort(cohort), record });
                self.cohort_input(txn, cohort, CohortInput::LogForced(record))
            }
            Work::MasterLog { record } => {
                if record == LogRecord::Commit && now > self.active[&txn].txn.deadline {
                    // Landed in the same tick as a pending expiry.
                    return self.kill(txn);
                }
                self.stats.forced_writes += u64::from(self.active[&txn].measured);
                self.record_trace(TraceEntry::LogForced { time: now, txn, site, role: Role::Master, record });
                self.master_input(txn, MasterInput::LogForced(record))
            }
            Work::MsgSend(msg) => {
                self.queue.schedule(now, EventKind::MessageDelivery { msg })?;
                Ok(())
            }
            Work::MsgRecv(msg) => self.deliver(msg),
        }
    }

    fn send(&mut self, msg: ProtocolMessage) -> Result<(), SimError> {
        let now = self.now();
        if self.active[&msg.txn].measured {
            self.stats.messages += 1;
        }
        self.record_trace(TraceEntry::Send {
            time: now,
            txn: msg.txn,
            msg: msg.kind,
            cohort: msg.cohort,
            from: msg.from,
            to: msg.to,
        });
        if self.cfg.timing.msg_cpu.is_zero() {
            self.queue.schedule(now, EventKind::MessageDelivery { msg })?;
            Ok(())
        } else {
            self.submit(msg.from, msg.txn, ServiceKind::MessageCpu, Work::MsgSend(msg))
        }
    }

    fn on_delivery(&mut self, msg: ProtocolMessage) -> Result<(), SimError> {
        if !self.active.contains_key(&msg.txn) {
            return Ok(());
        }
        if self.cfg.timing.msg_cpu.is_zero() {
            self.deliver(msg)
        } else {
            self.submit(msg.to, msg.txn, ServiceKind::MessageCpu, Work::MsgRecv(msg))
        }
    }

    fn deliver(&mut self, msg: ProtocolMessage) -> Result<(), SimError> {
        let c = msg.cohort;
        match msg.kind {
            MessageKind::WorkDone => self.master_input(msg.txn, MasterInput::WorkDone(c)),
            MessageKind::VoteYes => self.master_input(msg.txn, MasterInput::Vote { cohort: c, yes: true }),
            MessageKind::VoteNo => self.master_input(msg.txn, MasterInput::Vote { cohort: c, yes: false }),
            MessageKind::Ack => self.master_input(msg.txn, MasterInput::Ack(c)),
            MessageKind::Prepare => {
                let p = self.cfg.voluntary_abort_prob;
                let willing = p == 0.0 || !self.sources[msg.to.index()].votes.draw_bernoulli(p);
                self.cohort_input(msg.txn, c, CohortInput::Prepare { willing })
            }
            MessageKind::Commit => self.cohort_input(msg.txn, c, CohortInput::Commit),
            MessageKind::Abort => self.cohort_input(msg.txn, c, CohortInput::Abort),
        }
    }

    fn master_input(&mut self, id: TxnId, input: MasterInput) -> Result<(), SimError> {
        let now = self.now();
        let rt = self.active.get_mut(&id).expect("master input for inactive txn");
        let before = rt.master.phase;
        let actions = rt.master.on_event(input).map_err(protocol(now, id))?;
        let after = rt.master.phase;
        let origin = rt.txn.origin;
        self.record_trace(TraceEntry::Transition {
            time: now,
            txn: id,
            site: origin,
            role: Role::Master,
            from: format!("{before:?}"),
            to: format!("{after:?}"),
            event: master_event_name(&input),
        });
        if after == MasterPhase::WaitingVotes && before != MasterPhase::WaitingVotes
            || after == MasterPhase::Committing && before == MasterPhase::CohortsExecuting
        {
            self.active.get_mut(&id).expect("active").txn.transition(TxnState::Committing)?;
        }
        for action in actions {
            match action {
                MasterAction::StartCohort(i) => {
                    let site = self.active[&id].cohorts[i].spec.site;
                    self.submit(site, id, ServiceKind::PageCpu, Work::Page { cohort: i, stage: PageStage::Cpu })?;
                }
                MasterAction::Send { kind, cohort } => {
                    let to = self.active[&id].cohorts[cohort].spec.site;
                    self.send(ProtocolMessage { kind, txn: id, cohort, from: origin, to })?;
                }
                MasterAction::ForceLog(record) => {
                    self.submit(origin, id, ServiceKind::ForcedLogWrite, Work::MasterLog { record })?;
                }
                MasterAction::CommitPoint => self.on_commit_point(id)?,
                MasterAction::AbortDecided => self.mark_missed(id)?,
                MasterAction::WriteEndLog => {}
                MasterAction::Finished(_) => self.retire(id)?,
            }
        }
        Ok(())
    }

    fn cohort_input(&mut self, id: TxnId, cohort: usize, input: CohortInput) -> Result<(), SimError> {
        let now = self.now();
        let rt = self.active.get_mut(&id).expect("cohort input for inactive txn");
        let c = &mut rt.cohorts[cohort];
        let before = c.commit.phase;
        let actions = c.commit.on_event(input).map_err(protocol(now, id))?;
        let after = c.commit.phase;
        let site = c.spec.site;
        let origin = rt.txn.origin;
        let local = rt.master.local;
        self.record_trace(TraceEntry::Transition {
            time: now,
            txn: id,
            site,
            role: Role::Cohort(cohort),
            from: format!("{before:?}"),
            to: format!("{after:?}"),
            event: cohort_event_name(&input),
        });
        for action in actions {
            match action {
                CohortAction::Send(kind) => {
                    self.send(ProtocolMessage { kind, txn: id, cohort, from: site, to: origin })?;
                }
                CohortAction::ForceLog(record) => {
                    self.submit(site, id, ServiceKind::ForcedLogWrite, Work::CohortLog { cohort, record })?;
                }
                CohortAction::Finished(_) => {}
            }
        }
        if local && input == CohortInput::PagesComplete {
            self.master_input(id, MasterInput::WorkDone(cohort))?;
        }
        Ok(())
    }

    fn on_commit_point(&mut self, id: TxnId) -> Result<(), SimError> {
        let now = self.now();
        let rt = self.active.get_mut(&id).expect("active");
        if now > rt.txn.deadline {
            return Err(SimError::Invariant(format!("txn {id} committed after its deadline")));
        }
        rt.commit_forced_at = Some(now);
        rt.txn.transition(TxnState::Committed)?;
        let response = now - rt.txn.arrival_time;
        let (origin, measured, local) = (rt.txn.origin, rt.measured, rt.master.local);
        if local {
            rt.cohorts[0].commit.local_commit().map_err(protocol(now, id))?;
            let site = rt.cohorts[0].spec.site;
            self.record_trace(TraceEntry::Transition {
                time: now,
                txn: id,
                site,
                role: Role::Cohort(0),
                from: format!("{:?}", CohortPhase::WorkDone),
                to: format!("{:?}", CohortPhase::Done),
                event: "LOCAL_COMMIT".into(),
            });
        }
        if measured {
            self.stats.record_commit(origin, response);
        }
        let rec = &mut self.records[id as usize];
        rec.status = TxnStatus::Committed;
        rec.commit_time = Some(now);
        Ok(())
    }

    fn mark_missed(&mut self, id: TxnId) -> Result<(), SimError> {
        let rt = self.active.get_mut(&id).expect("active");
        if rt.missed {
            return Ok(());
        }
        rt.missed = true;
        rt.txn.transition(TxnState::Missed)?;
        if rt.measured {
            self.stats.record_miss(rt.txn.origin);
            self.stats.wasted_service_us += rt.service_used.as_micros();
        }
        self.records[id as usize].status = TxnStatus::Missed;
        Ok(())
    }

    /// Removes a finished transaction and lets its terminal think.
    fn retire(&mut self, id: TxnId) -> Result<(), SimError> {
        let rt = self.active.remove(&id).expect("active");
        let rec = &mut self.records[id as usize];
        rec.cohort_outcomes = rt.cohorts.iter().map(|c| c.commit.outcome()).collect();
        rec.deadline = rt.txn.deadline;
        rec.grants = rt.txn.grants;
        if let Some((site, terminal)) = rt.terminal {
            let src = &mut self.sources[site.index()];
            let at = terminal_resubmit(&self.cfg.workload, self.queue.now(), &mut src.think)?;
            if at < self.horizon {
                self.queue.schedule(at, EventKind::TerminalSubmit { site, terminal })?;
            }
        }
        Ok(())
    }

    fn on_deadline(&mut self, id: TxnId, deadline: SimTime) -> Result<(), SimError> {
        let Some(rt) = self.active.get(&id) else {
            return Ok(());
        };
        if rt.txn.deadline != deadline {
            return Ok(());
        }
        match enforce_deadline(rt.commit_forced_at, deadline) {
            DeadlineVerdict::Keep => Ok(()),
            DeadlineVerdict::Kill => self.kill(id),
        }
    }

    fn kill(&mut self, id: TxnId) -> Result<(), SimError> {
        let now = self.now();
        for site in self.sites.iter_mut() {
            site.purge(id);
        }
        self.mark_missed(id)?;
        let rt = self.active.get_mut(&id).expect("active");
        let before = rt.master.phase;
        let prepared = rt.master.kill().map_err(protocol(now, id))?;
        let origin = rt.txn.origin;
        let mut entries = vec![TraceEntry::Transition {
            time: now,
            txn: id,
            site: origin,
            role: Role::Master,
            from: format!("{before:?}"),
            to: format!("{:?}", rt.master.phase),
            event: "DEADLINE_KILL".into(),
        }];
        for (i, c) in rt.cohorts.iter_mut().enumerate() {
            let before = c.commit.phase;
            if before == CohortPhase::Done {
                continue;
            }
            c.commit.discard();
            // The master may not have seen the vote yet; it aborts every
            // cohort it sent PREPARE to.
            let event = if prepared.contains(&i) || before == CohortPhase::Prepared { "ABORT" } else { "DISCARD" };
            entries.push(TraceEntry::Transition {
                time: now,
                txn: id,
                site: c.spec.site,
                role: Role::Cohort(i),
                from: format!("{before:?}"),
                to: format!("{:?}", c.commit.phase),
                event: event.into(),
            });
        }
        for e in entries {
            self.record_trace(e);
        }
        debug_assert!(self.sites.iter().all(|s| !s.owns_queued(id)));
        self.retire(id)
    }

    fn on_policy_scan(&mut self) -> Result<(), SimError> {
        let now = self.now();
        let timing = self.cfg.timing;
        let candidates: Vec<SlackCandidate> = self
            .active
            .values()
            .filter(|rt| rt.commit_forced_at.is_none() && !rt.missed)
            .map(|rt| {
                let pages_left: u64 =
                    rt.cohorts.iter().map(|c| (c.spec.pages.len() - c.pages_done) as u64).sum();
                let writes_left = if rt.master.local {
                    1
                } else {
                    let prepared = rt.cohorts.iter().filter(|c| c.commit.was_prepared()).count() as u64;
                    rt.cohorts.len() as u64 - prepared + 1
                };
                let remaining = remaining_work(pages_left, writes_left, &timing);
                SlackCandidate {
                    id: rt.txn.id,
                    arrival: rt.txn.arrival_time,
                    resource_time: rt.txn.resource_time,
                    deadline: rt.txn.deadline,
                    slack: compute_slack(rt.txn.deadline, now, remaining),
                    grants: rt.txn.grants,
                }
            })
            .collect();

        let grants = match self.cfg.policy.regime {
            PolicyRegime::Static => Vec::new(),
            PolicyRegime::DynamicRedistribution => {
                redistribute_slack(&candidates, &self.cfg.policy, &mut self.ledger, now)
            }
            PolicyRegime::IntelligentAgent => agent_scan(
                &candidates,
                &self.cfg.policy,
                self.cfg.workload.slack_factor,
                &mut self.ledger,
                self.generated_total,
            ),
        };
        for g in grants {
            let rt = self.active.get_mut(&g.txn).expect("candidate is active");
            if rt.txn.extend_deadline(g.new_deadline) {
                for site in self.sites.iter_mut() {
                    site.rekey(g.txn, g.new_deadline);
                }
                let rec = &mut self.records[g.txn as usize];
                rec.deadline = g.new_deadline;
                rec.grants = rt.txn.grants;
                self.queue.schedule(
                    g.new_deadline + SimDuration::from_micros(1),
                    EventKind::DeadlineExpiry { txn: g.txn, deadline: g.new_deadline },
                )?;
            }
        }

        let next = now + self.cfg.policy.scan_period;
        if next <= self.horizon {
            self.queue.schedule(next, EventKind::PolicyScan)?;
        }
        Ok(())
    }
}

fn master_event_name(input: &MasterInput) -> String {
    match input {
        MasterInput::Start => "START".into(),
        MasterInput::WorkDone(_) => "RECV_WORK_DONE".into(),
        MasterInput::Vote { yes: true, .. } => "RECV_VOTE_YES".into(),
        MasterInput::Vote { yes: false, .. } => "RECV_VOTE_NO".into(),
        MasterInput::Ack(_) => "RECV_ACK".into(),
        MasterInput::LogForced(r) => format!("LOGGED_{}", r.name()),
    }
}

fn cohort_event_name(input: &CohortInput) -> String {
    match input {
        CohortInput::PagesComplete => "PAGES_COMPLETE".into(),
        CohortInput::Prepare { willing: true } => "RECV_PREPARE".into(),
        CohortInput::Prepare { willing: false } => "RECV_PREPARE_UNWILLING".into(),
        CohortInput::Commit => "RECV_COMMIT".into(),
        CohortInput::Abort => "RECV_ABORT".into(),
        CohortInput::LogForced(r) => format!("LOGGED_{}", r.name()),
    }
}

fn workload_digest(txn: &Transaction) -> u64 {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&txn.origin.0.to_le_bytes());
    bytes.extend_from_slice(&txn.arrival_time.as_micros().to_le_bytes());
    for c in &txn.cohorts {
        bytes.extend_from_slice(&c.site.0.to_le_bytes());
        for p in &c.pages {
            bytes.extend_from_slice(&p.page.to_le_bytes());
            bytes.push(p.is_write as u8);
        }
    }
    fnv1a(&bytes)
}

/// Runs one simulation of `cfg` to its horizon.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    Simulation::new(cfg.clone())?.run()
}
