//! Degree-4 interaction graphs.
//!
//! Every generator returns a simple undirected graph in which each agent has
//! exactly four distinct neighbours. Grid neighbours are stored in
//! (up, down, left, right) order; all other kinds store them ascending.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEGREE: usize = 4;

const MAX_PAIRING_ATTEMPTS: usize = 100_000;
const MAX_SWAP_ATTEMPTS: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    Grid { side: usize },
    RandomRegular,
    Modular { modules: usize, cross: usize },
    SmallWorld { rewire_p: f64 },
}

impl TopologyKind {
    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::Grid { .. } => "grid",
            TopologyKind::RandomRegular => "random_regular",
            TopologyKind::Modular { .. } => "modular",
            TopologyKind::SmallWorld { .. } => "small_world",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    neighbors: Vec<[usize; DEGREE]>,
    kind: TopologyKind,
}

type Edge = (usize, usize);

fn ordered(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    /// Periodic `side x side` lattice with von Neumann neighbourhoods.
    ///
    /// Agent `row * side + col` sits at `(row, col)`.
    pub fn grid(side: usize) -> Result<Self> {
        if side < 3 {
            return Err(Error::config(format!(
                "grid side must be at least 3 to avoid duplicate periodic edges, got {side}"
            )));
        }
        let n = side * side;
        let neighbors = (0..n)
            .map(|i| {
                let (row, col) = (i / side, i % side);
                [
                    ((row + side - 1) % side) * side + col,
                    ((row + 1) % side) * side + col,
                    row * side + (col + side - 1) % side,
                    row * side + (col + 1) % side,
                ]
            })
            .collect();
        Ok(Self {
            neighbors,
            kind: TopologyKind::Grid { side },
        })
    }

    /// Random simple 4-regular graph from the pairing model, rejecting any
    /// pairing with a self-loop or repeated edge.
    pub fn random_regular(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_regular_edges(n, &mut rng)?;
        Self::from_edges(n, &edges, TopologyKind::RandomRegular)
    }

    /// Ring lattice (two nearest on each side) whose edges are each, with
    /// probability `rewire_p`, rewired by a double-edge swap with a random
    /// partner edge. Swaps keep every degree at exactly four.
    pub fn small_world(n: usize, rewire_p: f64, seed: u64) -> Result<Self> {
        if n < 5 {
            return Err(Error::Generation(format!(
                "small-world graph needs n >= 5, got {n}"
            )));
        }
        if !(0.0..=1.0).contains(&rewire_p) {
            return Err(Error::Generation(format!(
                "rewiring probability must lie in [0, 1], got {rewire_p}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<Edge> = (0..n)
            .flat_map(|i| [ordered(i, (i + 1) % n), ordered(i, (i + 2) % n)])
            .collect();
        let mut present: HashSet<Edge> = edges.iter().copied().collect();
        for e in 0..edges.len() {
            if rng.gen::<f64>() < rewire_p {
                // A swap can be impossible for a particular pair; try a few partners.
                for _ in 0..MAX_SWAP_ATTEMPTS {
                    let other = rng.gen_range(0..edges.len());
                    if other != e && try_swap(&mut edges, &mut present, e, other, rng.gen()) {
                        break;
                    }
                }
            }
        }
        Self::from_edges(n, &edges, TopologyKind::SmallWorld { rewire_p })
    }

    /// `modules` equal-sized random 4-regular blocks joined by `cross`
    /// double-edge swaps between edges of different blocks.
    pub fn modular(n: usize, modules: usize, cross: usize, seed: u64) -> Result<Self> {
        if modules == 0 || !n.is_multiple_of(modules) {
            return Err(Error::Generation(format!(
                "{n} agents cannot be split into {modules} equal modules"
            )));
        }
        let size = n / modules;
        if size < 5 {
            return Err(Error::Generation(format!(
                "modules of {size} agents cannot be 4-regular (need at least 5)"
            )));
        }
        if cross > 0 && modules < 2 {
            return Err(Error::Generation(
                "cross-module swaps need at least 2 modules".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::with_capacity(n * DEGREE / 2);
        for m in 0..modules {
            let offset = m * size;
            edges.extend(
                random_regular_edges(size, &mut rng)?
                    .into_iter()
                    .map(|(a, b)| (a + offset, b + offset)),
            );
        }
        let module_of = |v: usize| v / size;
        let mut present: HashSet<Edge> = edges.iter().copied().collect();
        let mut done = 0;
        let mut attempts = 0;
        while done < cross {
            attempts += 1;
            if attempts > MAX_SWAP_ATTEMPTS * cross.max(1) {
                return Err(Error::Generation(format!(
                    "only {done} of {cross} cross-module swaps succeeded"
                )));
            }
            let e1 = rng.gen_range(0..edges.len());
            let e2 = rng.gen_range(0..edges.len());
            let (a, b) = edges[e1];
            let (c, d) = edges[e2];
            let intra = |x: usize, y: usize| module_of(x) == module_of(y);
            if !intra(a, b) || !intra(c, d) || module_of(a) == module_of(c) {
                continue;
            }
            if try_swap(&mut edges, &mut present, e1, e2, rng.gen()) {
                done += 1;
            }
        }
        Self::from_edges(n, &edges, TopologyKind::Modular { modules, cross })
    }

    /// Builds a topology from an undirected edge list; neighbours are stored
    /// ascending. Fails unless the result is simple and 4-regular.
    pub fn from_edges(n: usize, edges: &[Edge], kind: TopologyKind) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(DEGREE); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Format(format!(
                    "edge ({a}, {b}) out of range for {n} agents"
                )));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let neighbors = adj
            .into_iter()
            .enumerate()
            .map(|(i, mut nb)| {
                nb.sort_unstable();
                <[usize; DEGREE]>::try_from(nb.as_slice()).map_err(|_| {
                    Error::Format(format!(
                        "agent {i} has degree {}, expected {DEGREE}",
                        nb.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let topo = Self { neighbors, kind };
        topo.validate()?;
        Ok(topo)
    }

    /// Parses the text format written by [`Topology::to_edge_list`].
    pub fn from_edge_list(text: &str, n: usize, kind: TopologyKind) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => edges.push((a, b)),
                _ => {
                    return Err(Error::Format(format!(
                        "edge list line {}: expected two agent indices, got '{line}'",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edges(n, &edges, kind)
    }

    pub fn n_agents(&self) -> usize {
        self.neighbors.len()
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn neighbors(&self, agent: usize) -> Result<&[usize; DEGREE]> {
        self.neighbors.get(agent).ok_or(Error::UnknownAgent {
            index: agent,
            n_agents: self.n_agents(),
        })
    }

    pub fn all_neighbors(&self) -> &[[usize; DEGREE]] {
        &self.neighbors
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted ascending.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| i < j).map(move |&j| (i, j)))
            .collect();
        out.sort_unstable();
        out
    }

    /// One `i j` pair per line, `i < j`, ascending.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    /// Checks degree, self-loop, distinctness and symmetry over every agent.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_agents();
        if n == 0 {
            return Err(Error::Format("topology has no agents".into()));
        }
        for (i, nb) in self.neighbors.iter().enumerate() {
            for (k, &j) in nb.iter().enumerate() {
                if j >= n {
                    return Err(Error::Format(format!(
                        "agent {i} lists out-of-range neighbour {j}"
                    )));
                }
                if j == i {
                    return Err(Error::Format(format!("agent {i} has a self-loop")));
                }
                if nb[..k].contains(&j) {
                    return Err(Error::Format(format!(
                        "agent {i} lists neighbour {j} twice"
                    )));
                }
                if !self.neighbors[j].contains(&i) {
                    return Err(Error::Format(format!("edge {i}->{j} has no reverse")));
                }
            }
        }
        if let TopologyKind::Grid { side } = self.kind {
            if side * side != n {
                return Err(Error::Format(format!(
                    "grid side {side} does not match {n} agents"
                )));
            }
        }
        Ok(())
    }

    /// Number of connected components (breadth-first search).
    pub fn components(&self) -> usize {
        let n = self.n_agents();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            queue.push(start);
            while let Some(v) = queue.pop() {
                for &w in &self.neighbors[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push(w);
                    }
                }
            }
        }
        count
    }
}

fn random_regular_edges(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Edge>> {
    if n < DEGREE + 1 {
        return Err(Error::Generation(format!(
            "a 4-regular graph needs at least 5 nodes, got {n}"
        )));
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| [v; DEGREE]).collect();
    let mut seen = HashSet::with_capacity(n * DEGREE / 2);
    'attempt: for _ in 0..MAX_PAIRING_ATTEMPTS {
        stubs.shuffle(rng);
        seen.clear();
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b || !seen.insert(ordered(a, b)) {
                continue 'attempt;
            }
        }
        let mut edges: Vec<Edge> = seen.iter().copied().collect();
        edges.sort_unstable();
        return Ok(edges);
    }
    Err(Error::Generation(format!(
        "no simple 4-regular pairing on {n} nodes after {MAX_PAIRING_ATTEMPTS} attempts"
    )))
}

/// Replaces edges `(a,b)`, `(c,d)` with `(a,d)`, `(c,b)` (or `(a,c)`,
/// `(b,d)` when `cross` is set), unless that would create a loop or a
/// repeated edge. Returns whether the swap happened.
fn try_swap(
    edges: &mut [Edge],
    present: &mut HashSet<Edge>,
    e1: usize,
    e2: usize,
    cross: bool,
) -> bool {
    let (a, b) = edges[e1];
    let (c, d) = edges[e2];
    let (n1, n2) = if cross {
        ((a, c), (b, d))
    } else {
        ((a, d), (c, b))
    };
    if n1.0 == n1.1 || n2.0 == n2.1 {
        return false;
    }
    let (n1, n2) = (ordered(n1.0, n1.1), ordered(n2.0, n2.1));
    if n1 == n2 || present.contains(&n1) || present.contains(&n2) {
        return false;
    }
    present.remove(&edges[e1]);
    present.remove(&edges[e2]);
    present.insert(n1);
    present.insert(n2);
    edges[e1] = n1;
    edges[e2] = n2;
    true
}
