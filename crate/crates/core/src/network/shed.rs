//! State of one service shed: an entrance queue, a pool of servers, a hold in
//! front of the servers and a row of single-space exit buffers.
//!
//! A lorry leaves the entrance queue only when a server is idle and an exit
//! buffer slot is free (not already claimed by a lorry that finished service
//! and is waiting for one). A lorry whose service ends while every exit slot
//! is taken keeps its server blocked until a slot drains.

use std::collections::VecDeque;

use crate::des::{Lorry, Minutes};

use super::Shed;

/// A serviced lorry waiting to move on, with its resolved destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitSlot {
    pub lorry: Lorry,
    pub target: usize,
}

#[derive(Debug, Clone)]
enum Server {
    Idle,
    Busy(Lorry),
    /// Service finished but no exit slot was free.
    Blocked(ExitSlot),
    /// Transient: lorry taken out for screening and routing.
    Completing,
}

#[derive(Debug, Clone)]
pub struct ShedState {
    queue: VecDeque<Lorry>,
    capacity: Option<usize>,
    servers: Vec<Server>,
    occupied: usize,
    blocked: VecDeque<usize>,
    exit: VecDeque<ExitSlot>,
    exit_capacity: usize,
    last_change: Minutes,
    area: f64,
    pub served: u64,
    pub max_queue: usize,
}

impl ShedState {
    pub fn new(shed: &Shed) -> Self {
        Self::with_params(shed.servers, shed.capacity, shed.exit_buffers)
    }

    pub fn with_params(servers: usize, capacity: Option<usize>, exit_buffers: usize) -> Self {
        Self {
            queue: VecDeque::new(),
            capacity,
            servers: vec![Server::Idle; servers],
            occupied: 0,
            blocked: VecDeque::new(),
            exit: VecDeque::with_capacity(exit_buffers),
            exit_capacity: exit_buffers,
            last_change: 0.0,
            area: 0.0,
            served: 0,
            max_queue: 0,
        }
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// Lorries holding a server, including those blocked after service.
    pub fn in_service(&self) -> usize {
        self.occupied
    }

    /// Entrance queue plus lorries holding a server.
    pub fn load(&self) -> usize {
        self.queue.len() + self.occupied
    }

    pub fn exit_len(&self) -> usize {
        self.exit.len()
    }

    pub fn has_room(&self) -> bool {
        self.capacity.is_none_or(|c| self.queue.len() < c)
    }

    fn touch(&mut self, now: Minutes) {
        self.area += self.load() as f64 * (now - self.last_change);
        self.last_change = now;
    }

    /// Time-averaged number in system (queue plus servers) over `[0, now]`.
    pub fn mean_in_system(&self, now: Minutes) -> f64 {
        if now <= 0.0 {
            return 0.0;
        }
        (self.area + self.load() as f64 * (now - self.last_change)) / now
    }

    /// Puts `lorry` at the back of the entrance queue. Hands it back if the
    /// queue is full.
    pub fn admit(&mut self, lorry: Lorry, now: Minutes) -> Result<(), Lorry> {
        if !self.has_room() {
            return Err(lorry);
        }
        self.touch(now);
        self.queue.push_back(lorry);
        self.max_queue = self.max_queue.max(self.queue.len());
        Ok(())
    }

    fn hold_open(&self) -> bool {
        self.exit.len() + self.blocked.len() < self.exit_capacity
    }

    /// Moves the head of the queue into service if a server is idle and the
    /// hold is open. Returns the server index the lorry now occupies.
    pub fn try_start(&mut self, now: Minutes) -> Option<usize> {
        if self.queue.is_empty() || !self.hold_open() {
            return None;
        }
        let server = self.servers.iter().position(|s| matches!(s, Server::Idle))?;
        self.touch(now);
        let lorry = self.queue.pop_front().expect("queue non-empty");
        self.servers[server] = Server::Busy(lorry);
        self.occupied += 1;
        Some(server)
    }

    /// Takes the lorry whose service on `server` just ended. Must be followed
    /// by [`finish`](Self::finish) for the same server.
    pub fn take_completed(&mut self, server: usize) -> Lorry {
        match std::mem::replace(&mut self.servers[server], Server::Completing) {
            Server::Busy(l) => l,
            other => panic!("server {server} completed while {other:?}"),
        }
    }

    /// Places the serviced lorry in an exit slot, or keeps it on its server if
    /// none is free.
    pub fn finish(&mut self, server: usize, slot: ExitSlot, now: Minutes) {
        assert!(matches!(self.servers[server], Server::Completing));
        self.touch(now);
        self.served += 1;
        if self.exit.len() < self.exit_capacity {
            self.exit.push_back(slot);
            self.servers[server] = Server::Idle;
            self.occupied -= 1;
        } else {
            self.servers[server] = Server::Blocked(slot);
            self.blocked.push_back(server);
        }
    }

    pub fn exit_slots(&self) -> impl Iterator<Item = &ExitSlot> {
        self.exit.iter()
    }

    /// Removes exit slot `i` (the downstream element accepted it) and refills
    /// the exit row from servers blocked after service.
    pub fn release_exit(&mut self, i: usize, now: Minutes) -> ExitSlot {
        self.touch(now);
        let slot = self.exit.remove(i).expect("exit slot exists");
        while self.exit.len() < self.exit_capacity {
            let Some(server) = self.blocked.pop_front() else {
                break;
            };
            match std::mem::replace(&mut self.servers[server], Server::Idle) {
                Server::Blocked(s) => self.exit.push_back(s),
                other => panic!("server {server} listed as blocked while {other:?}"),
            }
            self.occupied -= 1;
        }
        slot
    }

    /// Every lorry currently inside the shed.
    pub fn lorries(&self) -> impl Iterator<Item = &Lorry> {
        let servers = self.servers.iter().filter_map(|s| match s {
            Server::Busy(l) => Some(l),
            Server::Blocked(slot) => Some(&slot.lorry),
            _ => None,
        });
        self.queue
            .iter()
            .chain(servers)
            .chain(self.exit.iter().map(|s| &s.lorry))
    }
}
