//! Per-site CPU and disk servers.
//!
//! Each server holds at most one request in service and a queue ordered by
//! the discipline: FCFS by submission order, EDF by transaction deadline with
//! submission order breaking ties. Service is non-preemptive.

use std::collections::BTreeMap;

use crate::engine::{SimDuration, SimTime};
use crate::topology::SiteId;
use crate::workload::{Timing, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Discipline {
    Fcfs,
    #[default]
    Edf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ServiceKind {
    PageCpu,
    PageDisk,
    ForcedLogWrite,
    MessageCpu,
}

impl ServiceKind {
    pub fn default_time(self, timing: &Timing) -> SimDuration {
        match self {
            ServiceKind::PageCpu => timing.page_cpu,
            ServiceKind::PageDisk | ServiceKind::ForcedLogWrite => timing.page_disk,
            ServiceKind::MessageCpu => timing.msg_cpu,
        }
    }

    pub fn server(self) -> ServerKind {
        match self {
            ServiceKind::PageCpu | ServiceKind::MessageCpu => ServerKind::Cpu,
            ServiceKind::PageDisk | ServiceKind::ForcedLogWrite => ServerKind::Disk,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ServerKind {
    Cpu,
    Disk,
}

/// A unit of work for one server. `tag` tells the owner what to do on completion.
#[derive(Clone, Debug, PartialEq)]
pub struct ServiceRequest<T> {
    pub txn: TxnId,
    pub kind: ServiceKind,
    pub service_time: SimDuration,
    /// Transaction deadline, used by EDF.
    pub priority_key: SimTime,
    pub tag: T,
}

#[derive(Clone, Debug)]
struct InService<T> {
    request: ServiceRequest<T>,
    started: SimTime,
}

#[derive(Clone, Debug)]
pub struct Server<T> {
    discipline: Discipline,
    queue: BTreeMap<(u64, u64), ServiceRequest<T>>,
    in_service: Option<InService<T>>,
    next_seq: u64,
    busy: SimDuration,
    completed: u64,
}

impl<T> Server<T> {
    pub fn new(discipline: Discipline) -> Self {
        Server {
            discipline,
            queue: BTreeMap::new(),
            in_service: None,
            next_seq: 0,
            busy: SimDuration::ZERO,
            completed: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.in_service.is_none()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn in_service(&self) -> Option<&ServiceRequest<T>> {
        self.in_service.as_ref().map(|s| &s.request)
    }

    /// Accumulated service time of started requests.
    pub fn busy_time(&self) -> SimDuration {
        self.busy
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    fn key(&self, req: &ServiceRequest<T>, seq: u64) -> (u64, u64) {
        match self.discipline {
            Discipline::Fcfs => (0, seq),
            Discipline::Edf => (req.priority_key.as_micros(), seq),
        }
    }

    fn start(&mut self, request: ServiceRequest<T>, now: SimTime) -> SimTime {
        let done = now + request.service_time;
        self.busy += request.service_time;
        self.in_service = Some(InService { request, started: now });
        done
    }

    /// Starts `req` if idle and returns its completion time; otherwise queues it.
    pub fn submit(&mut self, req: ServiceRequest<T>, now: SimTime) -> Option<SimTime> {
        if self.in_service.is_none() {
            debug_assert!(self.queue.is_empty());
            return Some(self.start(req, now));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let key = self.key(&req, seq);
        self.queue.insert(key, req);
        None
    }

    /// Finishes the in-service request and starts the queue head, if any.
    /// Returns the finished request and the next completion time.
    pub fn complete(&mut self, now: SimTime) -> (ServiceRequest<T>, Option<SimTime>) {
        let finished = self.in_service.take().expect("completion on an idle server");
        debug_assert_eq!(finished.started + finished.request.service_time, now);
        self.completed += 1;
        let next = self.queue.pop_first().map(|(_, req)| self.start(req, now));
        (finished.request, next)
    }

    /// Removes every queued request of `txn`. The in-service request is left
    /// to finish.
    pub fn purge(&mut self, txn: TxnId) -> Vec<ServiceRequest<T>> {
        let keys: Vec<_> = self.queue.iter().filter(|(_, r)| r.txn == txn).map(|(k, _)| *k).collect();
        keys.into_iter().filter_map(|k| self.queue.remove(&k)).collect()
    }

    /// Updates the EDF key of `txn`'s queued requests after a deadline change.
    pub fn rekey(&mut self, txn: TxnId, deadline: SimTime) {
        let keys: Vec<_> = self.queue.iter().filter(|(_, r)| r.txn == txn).map(|(k, _)| *k).collect();
        for k in keys {
            let mut req = self.queue.remove(&k).expect("key just listed");
            req.priority_key = deadline;
            let key = self.key(&req, k.1);
            self.queue.insert(key, req);
        }
    }

    pub fn queued(&self) -> impl Iterator<Item = &ServiceRequest<T>> {
        self.queue.values()
    }
}

#[derive(Clone, Debug)]
pub struct SiteResources<T> {
    pub site: SiteId,
    pub cpu: Server<T>,
    pub disk: Server<T>,
}

impl<T> SiteResources<T> {
    pub fn new(site: SiteId, discipline: Discipline) -> Self {
        SiteResources {
            site,
            cpu: Server::new(discipline),
            disk: Server::new(discipline),
        }
    }

    pub fn server_mut(&mut self, kind: ServerKind) -> &mut Server<T> {
        match kind {
            ServerKind::Cpu => &mut self.cpu,
            ServerKind::Disk => &mut self.disk,
        }
    }

    /// Routes the request to its server; see [`Server::submit`].
    pub fn submit(&mut self, req: ServiceRequest<T>, now: SimTime) -> Option<SimTime> {
        let server = req.kind.server();
        self.server_mut(server).submit(req, now)
    }

    /// Purges `txn` from both servers, returning how many requests were removed.
    pub fn purge(&mut self, txn: TxnId) -> usize {
        self.cpu.purge(txn).len() + self.disk.purge(txn).len()
    }

    pub fn rekey(&mut self, txn: TxnId, deadline: SimTime) {
        self.cpu.rekey(txn, deadline);
        self.disk.rekey(txn, deadline);
    }

    pub fn owns_queued(&self, txn: TxnId) -> bool {
        self.cpu.queued().chain(self.disk.queued()).any(|r| r.txn == txn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn req(txn: TxnId, kind: ServiceKind, ms: u64, deadline_ms: u64) -> ServiceRequest<&'static str> {
        ServiceRequest {
            txn,
            kind,
            service_time: SimDuration::from_millis(ms),
            priority_key: SimTime::from_millis(deadline_ms),
            tag: "",
        }
    }

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    #[test]
    fn idle_cpu_completes_page_after_10ms() {
        let mut site = SiteResources::new(SiteId(0), Discipline::Edf);
        let timing = Timing::default();
        let r = ServiceRequest {
            txn: 1,
            kind: ServiceKind::PageCpu,
            service_time: ServiceKind::PageCpu.default_time(&timing),
            priority_key: ms(1000),
            tag: "",
        };
        assert_eq!(site.submit(r, SimTime::ZERO), Some(ms(10)));
    }

    #[test]
    fn fcfs_serves_in_arrival_order() {
        let mut s = Server::new(Discipline::Fcfs);
        s.submit(req(0, ServiceKind::PageCpu, 10, 100), ms(0));
        s.submit(req(1, ServiceKind::PageCpu, 10, 900), ms(0));
        s.submit(req(2, ServiceKind::PageCpu, 10, 50), ms(0));
        let (done, _) = s.complete(ms(10));
        assert_eq!(done.txn, 0);
        let (done, _) = s.complete(ms(20));
        assert_eq!(done.txn, 1);
    }

    #[test]
    fn edf_overtakes_queued_later_deadline() {
        // X in service; A (DT=5s) queues; B (DT=2s) arrives and goes ahead of A.
        let mut s = Server::new(Discipline::Edf);
        assert_eq!(s.submit(req(9, ServiceKind::PageDisk, 20, 10_000), ms(0)), Some(ms(20)));
        assert_eq!(s.submit(req(1, ServiceKind::PageDisk, 20, 5_000), ms(1)), None);
        assert_eq!(s.submit(req(2, ServiceKind::PageDisk, 20, 2_000), ms(2)), None);
        let (x, next) = s.complete(ms(20));
        assert_eq!(x.txn, 9);
        assert_eq!(next, Some(ms(40)));
        assert_eq!(s.in_service().unwrap().txn, 2);
        let (b, next) = s.complete(ms(40));
        assert_eq!(b.txn, 2);
        assert_eq!(next, Some(ms(60)));
        assert_eq!(s.in_service().unwrap().txn, 1);
    }

    #[test]
    fn empty_queue_goes_idle() {
        let mut s = Server::new(Discipline::Edf);
        s.submit(req(0, ServiceKind::PageCpu, 10, 100), ms(0));
        let (_, next) = s.complete(ms(10));
        assert_eq!(next, None);
        assert!(s.is_idle());
    }

    #[test]
    fn fcfs_busy_period_of_three_disk_requests() {
        let mut s = Server::new(Discipline::Fcfs);
        let mut done = vec![s.submit(req(0, ServiceKind::PageDisk, 20, 0), ms(0)).unwrap()];
        s.submit(req(1, ServiceKind::PageDisk, 20, 0), ms(0));
        s.submit(req(2, ServiceKind::PageDisk, 20, 0), ms(0));
        while let Some(&t) = done.last() {
            match s.complete(t).1 {
                Some(next) => done.push(next),
                None => break,
            }
        }
        assert_eq!(done, vec![ms(20), ms(40), ms(60)]);
        assert_eq!(s.busy_time(), SimDuration::from_millis(60));
    }

    #[test]
    fn purge_removes_queued_only() {
        let mut s = Server::new(Discipline::Edf);
        s.submit(req(7, ServiceKind::PageCpu, 10, 100), ms(0));
        for _ in 0..3 {
            s.submit(req(5, ServiceKind::PageCpu, 10, 100), ms(0));
        }
        s.submit(req(6, ServiceKind::PageCpu, 10, 100), ms(0));
        assert_eq!(s.purge(5).len(), 3);
        assert_eq!(s.queue_len(), 1);
        assert_eq!(s.purge(7).len(), 0, "in-service request is not preempted");
        assert_eq!(s.in_service().unwrap().txn, 7);
        assert_eq!(s.purge(42).len(), 0);
    }

    #[test]
    fn purged_txn_never_dispatched() {
        let mut site = SiteResources::new(SiteId(0), Discipline::Edf);
        site.submit(req(1, ServiceKind::PageCpu, 10, 100), ms(0));
        site.submit(req(2, ServiceKind::PageCpu, 10, 50), ms(0));
        site.submit(req(3, ServiceKind::PageCpu, 10, 200), ms(0));
        assert_eq!(site.purge(2), 1);
        assert!(!site.owns_queued(2));
        let (_, _) = site.cpu.complete(ms(10));
        assert_eq!(site.cpu.in_service().unwrap().txn, 3);
    }

    #[test]
    fn rekey_moves_request_back() {
        let mut s = Server::new(Discipline::Edf);
        s.submit(req(0, ServiceKind::PageCpu, 10, 0), ms(0));
        s.submit(req(1, ServiceKind::PageCpu, 10, 100), ms(0));
        s.submit(req(2, ServiceKind::PageCpu, 10, 200), ms(0));
        s.rekey(1, ms(300));
        s.complete(ms(10));
        assert_eq!(s.in_service().unwrap().txn, 2);
    }

    proptest! {
        // Work conservation and exclusivity over random submission schedules.
        #[test]
        fn server_is_work_conserving(
            jobs in proptest::collection::vec((0u64..200, 1u64..30, 0u64..1000), 1..60),
            edf in any::<bool>(),
        ) {
            let discipline = if edf { Discipline::Edf } else { Discipline::Fcfs };
            let mut s: Server<usize> = Server::new(discipline);
            let mut arrivals: Vec<_> = jobs.iter().enumerate().map(|(i, j)| (j.0, i)).collect();
            arrivals.sort();
            let mut completion: Option<SimTime> = None;
            let mut ai = 0;
            let mut served = 0;
            loop {
                let next_arrival = arrivals.get(ai).map(|a| SimTime::from_millis(a.0));
                match (next_arrival, completion) {
                    (Some(a), c) if c.map_or(true, |c| a < c) => {
                        let (_, i) = arrivals[ai];
                        ai += 1;
                        let j = jobs[i];
                        let r = ServiceRequest {
                            txn: i as u64,
                            kind: ServiceKind::PageCpu,
                            service_time: SimDuration::from_millis(j.1),
                            priority_key: SimTime::from_millis(j.2),
                            tag: i,
                        };
                        if let Some(done) = s.submit(r, a) {
                            prop_assert!(completion.is_none());
                            completion = Some(done);
                        }
                    }
                    (_, Some(c)) => {
                        let (_, next) = s.complete(c);
                        served += 1;
                        completion = next;
                        prop_assert!(next.is_some() || s.queue_len() == 0);
                    }
                    (None, None) => break,
                    _ => unreachable!(),
                }
                prop_assert!(!(s.is_idle() && s.queue_len() > 0));
            }
            prop_assert_eq!(served, jobs.len());
        }
    }
}
