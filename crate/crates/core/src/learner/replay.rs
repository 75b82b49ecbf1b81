use rand::Rng;

use crate::game::{Action, AgentState};

/// One agent's experience at step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub agent: usize,
    pub t: u64,
    pub s: AgentState,
    pub a: Action,
    pub r: f64,
    pub s_next: AgentState,
}

#[derive(Clone, Debug)]
struct Entry {
    tr: Transition,
    /// Sequence number of the same agent's next transition, if any.
    next: Option<u64>,
}

/// Fixed-capacity FIFO ring of transitions.
///
/// Each entry links forward to the same agent's following transition. Links
/// only ever point from older to newer entries, so a link out of a live
/// entry always lands on a live entry.
///
/// Positions passed to [`get`](Self::get) and friends are logical: 0 is the
/// oldest live transition, `len() - 1` the newest.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Entry>,
    pushed: u64,
    last_by_agent: Vec<Option<u64>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            pushed: 0,
            last_by_agent: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total transitions ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    fn oldest_seq(&self) -> u64 {
        self.pushed - self.entries.len() as u64
    }

    fn slot(&self, seq: u64) -> usize {
        (seq % self.capacity as u64) as usize
    }

    fn is_live(&self, seq: u64) -> bool {
        seq >= self.oldest_seq() && seq < self.pushed
    }

    fn entry(&self, seq: u64) -> &Entry {
        &self.entries[self.slot(seq)]
    }

    /// Appends `tr`, evicting the oldest transition when full.
    pub fn push(&mut self, tr: Transition) {
        let seq = self.pushed;
        let agent = tr.agent;
        if agent >= self.last_by_agent.len() {
            self.last_by_agent.resize(agent + 1, None);
        }
        let full = self.entries.len() == self.capacity;
        // After this push the oldest live sequence number is:
        let oldest_after = if full {
            seq + 1 - self.capacity as u64
        } else {
            self.oldest_seq()
        };
        if let Some(prev) = self.last_by_agent[agent] {
            if prev >= oldest_after {
                let slot = self.slot(prev);
                self.entries[slot].next = Some(seq);
            }
        }
        let entry = Entry { tr, next: None };
        if full {
            let slot = self.slot(seq);
            self.entries[slot] = entry;
        } else {
            self.entries.push(entry);
        }
        self.last_by_agent[agent] = Some(seq);
        self.pushed += 1;
    }

    pub fn get(&self, pos: usize) -> Option<&Transition> {
        (pos < self.len()).then(|| &self.entry(self.oldest_seq() + pos as u64).tr)
    }

    /// `n` transitions of one agent at consecutive time steps, starting at
    /// `pos`, all still live. `None` when no such run exists.
    pub fn chain(&self, pos: usize, n: usize) -> Option<Vec<&Transition>> {
        if pos >= self.len() || n == 0 {
            return None;
        }
        let mut seq = self.oldest_seq() + pos as u64;
        let mut out = Vec::with_capacity(n);
        loop {
            let e = self.entry(seq);
            if let Some(last) = out.last() {
                let last: &&Transition = last;
                if e.tr.agent != last.agent || e.tr.t != last.t + 1 {
                    return None;
                }
            }
            out.push(&e.tr);
            if out.len() == n {
                return Some(out);
            }
            match e.next {
                Some(next) if self.is_live(next) => seq = next,
                _ => return None,
            }
        }
    }

    /// All live transitions of `agent`, oldest first, following the chain links.
    pub fn agent_chain(&self, agent: usize) -> Vec<&Transition> {
        let start = (0..self.len() as u64)
            .map(|p| self.oldest_seq() + p)
            .find(|&s| self.entry(s).tr.agent == agent);
        let mut out = Vec::new();
        let mut cur = start;
        while let Some(seq) = cur {
            let e = self.entry(seq);
            out.push(&e.tr);
            cur = e.next.filter(|&n| self.is_live(n));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        (0..self.len()).map(move |p| self.get(p).unwrap())
    }
}

/// Positions drawn uniformly with replacement, or `None` for an empty buffer.
pub fn sample_batch<R: Rng + ?Sized>(
    buf: &ReplayBuffer,
    batch_size: usize,
    rng: &mut R,
) -> Option<Vec<usize>> {
    if buf.is_empty() {
        return None;
    }
    let len = buf.len();
    Some((0..batch_size).map(|_| rng.gen_range(0..len)).collect())
}
