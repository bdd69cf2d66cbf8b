//! Discrete-event core: replicas, a logical-time network with reliable
//! broadcast and crash semantics, and byte metering.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::Delivery;
use super::replica::SimReplica;
use crate::contract::NuDataType;
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::Metered;

type Effect<R> = <<R as SimReplica>::Dt as NuDataType>::Effect;
type Output<R> = <<R as SimReplica>::Dt as NuDataType>::Output;

#[derive(Debug, Clone)]
struct InFlight<M> {
    from: ReplicaId,
    to: ReplicaId,
    msg: Rc<M>,
    broadcast: Option<u64>,
}

/// One emitted message, kept when recording is enabled.
#[derive(Debug, Clone)]
pub struct Sent<M> {
    pub time: u64,
    pub from: ReplicaId,
    /// `None` for a broadcast.
    pub to: Option<ReplicaId>,
    pub msg: M,
}

/// Running byte and message counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    /// Broadcasts once each, point-to-point sends once per destination.
    pub payload_bytes: u64,
    pub durability_bytes: u64,
    pub messages: u64,
    pub broadcasts: u64,
}

pub struct Simulation<R: SimReplica> {
    dt: R::Dt,
    replicas: Vec<R>,
    alive: Vec<bool>,
    now: u64,
    queue: BTreeMap<(u64, u64), InFlight<R::Msg>>,
    next_seq: u64,
    /// Broadcast id -> number of destinations it reached so far.
    bcast_delivered: BTreeMap<u64, usize>,
    next_bcast: u64,
    delivery: Delivery,
    duplicate: bool,
    rng: ChaCha8Rng,
    generated: Vec<(OpId, Effect<R>)>,
    traffic: Traffic,
    record: Option<Vec<Sent<R::Msg>>>,
}

impl<R: SimReplica> Simulation<R> {
    pub fn new(dt: R::Dt, replicas: Vec<R>, delivery: Delivery, seed: u64) -> Self {
        let n = replicas.len();
        for (i, r) in replicas.iter().enumerate() {
            assert_eq!(r.replica_id().index(), i, "replicas must be ordered by id");
        }
        Simulation {
            dt,
            replicas,
            alive: vec![true; n],
            now: 0,
            queue: BTreeMap::new(),
            next_seq: 0,
            bcast_delivered: BTreeMap::new(),
            next_bcast: 0,
            delivery,
            duplicate: false,
            // A stream distinct from the workload's.
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6e75_6563_6e65_7477),
            generated: Vec::new(),
            traffic: Traffic::default(),
            record: None,
        }
    }

    /// Delivers every message twice (the second copy later), to exercise
    /// duplicate filtering.
    pub fn with_duplicates(mut self, on: bool) -> Self {
        self.duplicate = on;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }

    pub fn data_type(&self) -> &R::Dt {
        &self.dt
    }

    pub fn replicas(&self) -> &[R] {
        &self.replicas
    }

    pub fn replica(&self, r: ReplicaId) -> &R {
        &self.replicas[r.index()]
    }

    pub fn is_alive(&self, r: ReplicaId) -> bool {
        self.alive[r.index()]
    }

    pub fn live(&self) -> impl Iterator<Item = &R> + '_ {
        self.replicas.iter().filter(|r| self.alive[r.replica_id().index()])
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn traffic(&self) -> Traffic {
        self.traffic
    }

    pub fn generated(&self) -> &[(OpId, Effect<R>)] {
        &self.generated
    }

    pub fn sent(&self) -> &[Sent<R::Msg>] {
        self.record.as_deref().unwrap_or(&[])
    }

    fn enqueue(&mut self, delay: u64, item: InFlight<R::Msg>) {
        let key = (self.now + delay, self.next_seq);
        self.next_seq += 1;
        if self.duplicate {
            let again = (self.now + delay + self.rng.gen_range(1..=3u64), self.next_seq);
            self.next_seq += 1;
            self.queue.insert(again, InFlight { broadcast: None, ..item.clone() });
        }
        self.queue.insert(key, item);
    }

    fn send_direct(&mut self, from: ReplicaId, sends: Vec<(ReplicaId, R::Msg)>) {
        for (to, msg) in sends {
            if !self.alive[to.index()] {
                continue;
            }
            let bytes = msg.metered_size() as u64;
            self.traffic.payload_bytes += bytes;
            self.traffic.durability_bytes += bytes;
            self.traffic.messages += 1;
            if let Some(rec) = &mut self.record {
                rec.push(Sent { time: self.now, from, to: Some(to), msg: msg.clone() });
            }
            self.enqueue(1, InFlight { from, to, msg: Rc::new(msg), broadcast: None });
        }
    }

    fn send_broadcast(&mut self, from: ReplicaId, msg: R::Msg) {
        self.traffic.payload_bytes += msg.metered_size() as u64;
        self.traffic.messages += 1;
        self.traffic.broadcasts += 1;
        if let Some(rec) = &mut self.record {
            rec.push(Sent { time: self.now, from, to: None, msg: msg.clone() });
        }
        let id = self.next_bcast;
        self.next_bcast += 1;
        self.bcast_delivered.insert(id, 0);
        let msg = Rc::new(msg);
        for to in 0..self.replicas.len() {
            let to = ReplicaId(to as u32);
            if to == from || !self.alive[to.index()] {
                continue;
            }
            let delay = match self.delivery {
                Delivery::Fixed => 1,
                Delivery::Random { max_delay } => self.rng.gen_range(1..=max_delay),
            };
            self.enqueue(delay, InFlight { from, to, msg: Rc::clone(&msg), broadcast: Some(id) });
        }
    }

    /// Executes a prepare-update at `r` and sends its durability copies.
    pub fn exec(&mut self, r: ReplicaId, op: &<R::Dt as NuDataType>::Prepare) -> Result<OpId, UsageError> {
        assert!(self.alive[r.index()], "{r} has crashed");
        let g = self.replicas[r.index()].exec(op)?;
        self.generated.push((g.id, g.effect));
        self.send_direct(r, g.direct);
        Ok(g.id)
    }

    /// Runs a sync at `r`; true if a broadcast was emitted.
    pub fn sync(&mut self, r: ReplicaId) -> bool {
        if !self.alive[r.index()] {
            return false;
        }
        match self.replicas[r.index()].sync() {
            Some(msg) => {
                self.send_broadcast(r, msg);
                true
            }
            None => false,
        }
    }

    fn deliver(&mut self, item: InFlight<R::Msg>) {
        if !self.alive[item.to.index()] {
            return;
        }
        if let Some(b) = item.broadcast {
            *self.bcast_delivered.entry(b).or_insert(0) += 1;
        }
        let forwards = self.replicas[item.to.index()].receive(&item.msg);
        self.send_direct(item.to, forwards);
    }

    /// Advances logical time by one tick and delivers everything due.
    pub fn advance(&mut self) {
        self.now += 1;
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > self.now {
                break;
            }
            let item = entry.remove();
            self.deliver(item);
        }
    }

    /// Fail-stop crash. The crashed replica's broadcasts that already reached
    /// someone are delivered to every remaining replica at once; the rest of
    /// its in-flight messages vanish. Survivors are then notified.
    pub fn crash(&mut self, r: ReplicaId) {
        if !self.alive[r.index()] {
            return;
        }
        self.alive[r.index()] = false;
        let keys: Vec<(u64, u64)> = self.queue.iter().filter(|(_, m)| m.from == r).map(|(k, _)| *k).collect();
        let mut flush = Vec::new();
        for k in keys {
            let item = self.queue.remove(&k).expect("key just listed");
            let reached = item.broadcast.is_some_and(|b| self.bcast_delivered.get(&b).is_some_and(|&n| n > 0));
            if reached {
                flush.push(item);
            }
        }
        for item in flush {
            self.deliver(item);
        }
        for i in 0..self.replicas.len() {
            if self.alive[i] {
                let sends = self.replicas[i].replica_failed(r);
                self.send_direct(ReplicaId(i as u32), sends);
            }
        }
    }

    /// Messages still to be delivered to live replicas.
    pub fn in_flight(&self) -> usize {
        self.queue.values().filter(|m| self.alive[m.to.index()]).count()
    }

    pub fn is_quiescent(&self) -> bool {
        self.in_flight() == 0 && self.live().all(|r| !r.has_pending())
    }

    /// Delivers everything in flight, advancing time as needed.
    pub fn drain(&mut self) {
        while !self.queue.is_empty() {
            self.advance();
        }
    }

    /// Sync rounds (every live replica syncs, then the network drains) until
    /// quiescent. Returns the number of rounds run, or `None` if `max_rounds`
    /// were not enough.
    pub fn run_to_quiescence(&mut self, max_rounds: u64) -> Option<u64> {
        self.drain();
        let mut rounds = 0;
        while !self.is_quiescent() {
            if rounds == max_rounds {
                return None;
            }
            rounds += 1;
            for i in 0..self.replicas.len() {
                self.sync(ReplicaId(i as u32));
            }
            self.drain();
        }
        Some(rounds)
    }

    pub fn outputs(&self) -> Vec<Output<R>> {
        self.live().map(|r| r.query()).collect()
    }

    /// All live replicas return the same query result.
    pub fn observably_equivalent(&self) -> bool {
        let outs = self.outputs();
        outs.windows(2).all(|w| w[0] == w[1])
    }

    /// Operations that survive: generated at a live replica or known to one.
    pub fn surviving_ops(&self) -> Vec<(OpId, Effect<R>)> {
        self.generated
            .iter()
            .filter(|(id, _)| self.alive[id.source.index()] || self.live().any(|r| r.knows(*id)))
            .cloned()
            .collect()
    }

    pub fn oracle(&self) -> Output<R> {
        let effects: Vec<Effect<R>> = self.surviving_ops().into_iter().map(|(_, e)| e).collect();
        self.dt.oracle(&effects)
    }

    pub fn matches_oracle(&self) -> bool {
        let expected = self.oracle();
        self.live().all(|r| r.query() == expected)
    }

    /// Mean metered size over live replicas.
    pub fn avg_replica_bytes(&self) -> f64 {
        let (sum, n) = self.live().fold((0u64, 0u64), |(s, n), r| (s + r.size_bytes() as u64, n + 1));
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }
}
