//! Synchronous in-process message passing between sensor workers.
//!
//! Messages may only travel along edges of the communication graph. Each
//! call to [`SimNetwork::barrier`] ends a communication round and makes that
//! round's messages visible to their receivers, ordered by sender.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::NetworkError;
use crate::graph::Adjacency;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetworkLog {
    pub rounds: u64,
    pub messages: u64,
    pub bytes: u64,
    /// Messages per ordered `(sender, receiver)` pair.
    pub pair_counts: BTreeMap<(usize, usize), u64>,
}

impl NetworkLog {
    /// Pairs that exchanged messages without sharing an edge.
    pub fn non_edge_pairs(&self, adj: &Adjacency) -> Vec<(usize, usize)> {
        self.pair_counts
            .keys()
            .copied()
            .filter(|&(a, b)| !adj.contains(a, b))
            .collect()
    }
}

pub struct SimNetwork<T> {
    adjacency: Adjacency,
    pending: Vec<Vec<(usize, Arc<T>)>>,
    delivered: Vec<BTreeMap<usize, Arc<T>>>,
    log: NetworkLog,
}

impl<T> SimNetwork<T> {
    pub fn new(adjacency: Adjacency) -> Self {
        let n = adjacency.n();
        Self {
            adjacency,
            pending: (0..n).map(|_| Vec::new()).collect(),
            delivered: (0..n).map(|_| BTreeMap::new()).collect(),
            log: NetworkLog::default(),
        }
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn send(&mut self, from: usize, to: usize, payload: Arc<T>, bytes: usize) -> Result<(), NetworkError> {
        if from == to || !self.adjacency.contains(from, to) {
            return Err(NetworkError::NonEdge { from, to });
        }
        self.pending[to].push((from, payload));
        self.log.messages += 1;
        self.log.bytes += bytes as u64;
        *self.log.pair_counts.entry((from, to)).or_insert(0) += 1;
        Ok(())
    }

    /// Sends the same payload to every neighbor of `from`.
    pub fn broadcast(&mut self, from: usize, payload: Arc<T>, bytes: usize) -> Result<(), NetworkError> {
        let targets = self.adjacency.neighbors(from).to_vec();
        for to in targets {
            self.send(from, to, Arc::clone(&payload), bytes)?;
        }
        Ok(())
    }

    /// Ends the current round: every pending message is delivered and the
    /// previous round's inboxes are discarded.
    pub fn barrier(&mut self) {
        for (inbox, pending) in self.delivered.iter_mut().zip(self.pending.iter_mut()) {
            inbox.clear();
            for (from, payload) in pending.drain(..) {
                inbox.insert(from, payload);
            }
        }
        self.log.rounds += 1;
    }

    /// The payload `node` received from `from` in the last completed round.
    pub fn received(&self, node: usize, from: usize) -> Result<&Arc<T>, NetworkError> {
        self.delivered[node].get(&from).ok_or(NetworkError::Missing {
            node,
            from,
            round: self.log.rounds,
        })
    }

    pub fn log(&self) -> &NetworkLog {
        &self.log
    }
}
