//! Finite multigraph snapshots.
//!
//! A [`GraphSnapshot`] stores the edge multiplicities `pi(x, y)` of one time
//! step, keyed by unordered pair, with self-loops counted once in the degree.
//! Degrees and the volume are cached at construction; snapshots are immutable
//! and meant to be shared behind an `Arc`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque vertex identifier. Lattice families pack coordinates into it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for VertexId {
    fn from(v: u64) -> Self {
        VertexId(v)
    }
}

#[derive(Clone, Debug, Default)]
pub struct GraphSnapshot {
    ids: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    /// Neighbour lists by index; the self-loop appears as `(i, loops)`.
    adj: Vec<Vec<(usize, u64)>>,
    loops: Vec<u64>,
    degree: Vec<u64>,
    volume: u64,
    coords: Option<Coordinates>,
}

#[derive(Clone, Debug)]
struct Coordinates {
    dim: usize,
    flat: Vec<i32>,
}

/// Collects unordered edge multiplicities before freezing them into a snapshot.
#[derive(Clone, Debug, Default)]
pub struct SnapshotBuilder {
    pairs: BTreeMap<(VertexId, VertexId), u64>,
    coords: HashMap<VertexId, Vec<i32>>,
}

impl SnapshotBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `mult` parallel edges between `x` and `y` (a self-loop when `x == y`).
    pub fn add_edge(&mut self, x: impl Into<VertexId>, y: impl Into<VertexId>, mult: u64) -> &mut Self {
        let (x, y) = (x.into(), y.into());
        if mult > 0 {
            let key = if x <= y { (x, y) } else { (y, x) };
            *self.pairs.entry(key).or_insert(0) += mult;
        }
        self
    }

    pub fn add_loops(&mut self, x: impl Into<VertexId>, mult: u64) -> &mut Self {
        let x = x.into();
        self.add_edge(x, x, mult)
    }

    pub fn set_coords(&mut self, x: impl Into<VertexId>, coords: Vec<i32>) -> &mut Self {
        self.coords.insert(x.into(), coords);
        self
    }

    /// Freezes the builder. Vertices without any incident edge are dropped.
    pub fn build(&self) -> GraphSnapshot {
        let mut degree_by_id: BTreeMap<VertexId, u64> = BTreeMap::new();
        for (&(x, y), &m) in &self.pairs {
            *degree_by_id.entry(x).or_insert(0) += m;
            if x != y {
                *degree_by_id.entry(y).or_insert(0) += m;
            }
        }
        let ids: Vec<VertexId> = degree_by_id.keys().copied().collect();
        let index: HashMap<VertexId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = ids.len();
        let mut adj = vec![Vec::new(); n];
        let mut loops = vec![0; n];
        for (&(x, y), &m) in &self.pairs {
            let (i, j) = (index[&x], index[&y]);
            if i == j {
                loops[i] = m;
                adj[i].push((i, m));
            } else {
                adj[i].push((j, m));
                adj[j].push((i, m));
            }
        }
        for row in &mut adj {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        let degree: Vec<u64> = ids.iter().map(|v| degree_by_id[v]).collect();
        let volume = degree.iter().sum();

        let coords = if !self.coords.is_empty() && ids.iter().all(|v| self.coords.contains_key(v)) {
            let dim = self.coords[&ids[0]].len();
            let mut flat = Vec::with_capacity(n * dim);
            for v in &ids {
                flat.extend_from_slice(&self.coords[v]);
            }
            Some(Coordinates { dim, flat })
        } else {
            None
        };

        GraphSnapshot {
            ids,
            index,
            adj,
            loops,
            degree,
            volume,
            coords,
        }
    }
}

impl GraphSnapshot {
    /// Builds a snapshot from an ordered multiplicity map, rejecting asymmetric input.
    pub fn from_multiplicities(map: &HashMap<(VertexId, VertexId), u64>) -> Result<Self> {
        let mut builder = SnapshotBuilder::new();
        for (&(x, y), &m) in map {
            let back = map.get(&(y, x)).copied().unwrap_or(0);
            if back != m {
                return Err(Error::Asymmetric {
                    x,
                    y,
                    forward: m,
                    backward: back,
                });
            }
            if x <= y {
                builder.add_edge(x, y, m);
            }
        }
        Ok(builder.build())
    }

    /// Builds a snapshot from an unordered edge list `(x, y, mult)`.
    pub fn from_edges<I>(edges: I) -> Self
    where
        I: IntoIterator<Item = (u64, u64, u64)>,
    {
        let mut builder = SnapshotBuilder::new();
        for (x, y, m) in edges {
            builder.add_edge(x, y, m);
        }
        builder.build()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[VertexId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> VertexId {
        self.ids[i]
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.index.get(&v).copied()
    }

    pub fn try_index(&self, v: VertexId) -> Result<usize> {
        self.index_of(v).ok_or(Error::UnknownVertex(v))
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.index.contains_key(&v)
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, u64)] {
        &self.adj[i]
    }

    pub fn degree_at(&self, i: usize) -> u64 {
        self.degree[i]
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degree
    }

    pub fn degree(&self, v: VertexId) -> Result<u64> {
        Ok(self.degree[self.try_index(v)?])
    }

    pub fn loops_at(&self, i: usize) -> u64 {
        self.loops[i]
    }

    pub fn volume(&self) -> u64 {
        self.volume
    }

    pub fn max_degree(&self) -> u64 {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    /// `pi(x, y)`, zero when either endpoint is absent.
    pub fn multiplicity(&self, x: VertexId, y: VertexId) -> u64 {
        match (self.index_of(x), self.index_of(y)) {
            (Some(i), Some(j)) => self.multiplicity_at(i, j),
            _ => 0,
        }
    }

    pub fn multiplicity_at(&self, i: usize, j: usize) -> u64 {
        self.adj[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|pos| self.adj[i][pos].1)
            .unwrap_or(0)
    }

    /// Smallest holding probability `pi(x, x) / pi(x)` over the snapshot.
    pub fn laziness_floor(&self) -> f64 {
        self.loops
            .iter()
            .zip(&self.degree)
            .map(|(&l, &d)| l as f64 / d as f64)
            .fold(f64::INFINITY, f64::min)
    }

    /// `pi(A)` for a set of indices.
    pub fn weight(&self, set: &[usize]) -> u64 {
        set.iter().map(|&i| self.degree[i]).sum()
    }

    /// `pi(A, A^c)` for a set of indices.
    pub fn cut(&self, set: &[usize]) -> u64 {
        let mut member = vec![false; self.len()];
        for &i in set {
            member[i] = true;
        }
        set.iter()
            .flat_map(|&i| self.adj[i].iter())
            .filter(|&&(j, _)| !member[j])
            .map(|&(_, m)| m)
            .sum()
    }

    /// Iterates unordered pairs `(x, y, pi(x, y))` with `x <= y`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId, u64)> + '_ {
        self.adj.iter().enumerate().flat_map(move |(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j >= i)
                .map(move |&(j, m)| (self.ids[i], self.ids[j], m))
        })
    }

    pub fn coords_at(&self, i: usize) -> Option<&[i32]> {
        self.coords
            .as_ref()
            .map(|c| &c.flat[i * c.dim..(i + 1) * c.dim])
    }

    /// Breadth-first hop distances from index `from`; `usize::MAX` when unreachable.
    pub fn bfs_distances(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.adj[i] {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Graph distance from `from` to every vertex: L1 distance when lattice
    /// coordinates are attached, hop distance inside the snapshot otherwise.
    pub fn distances_from(&self, from: usize) -> Vec<usize> {
        match &self.coords {
            Some(c) => {
                let origin = &c.flat[from * c.dim..(from + 1) * c.dim];
                (0..self.len())
                    .map(|i| {
                        c.flat[i * c.dim..(i + 1) * c.dim]
                            .iter()
                            .zip(origin)
                            .map(|(a, b)| (a - b).unsigned_abs() as usize)
                            .sum()
                    })
                    .collect()
            }
            None => self.bfs_distances(from),
        }
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.bfs_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Inner boundary of `region` relative to this (reference) snapshot: the
    /// members that have a neighbour outside the region.
    pub fn relative_boundary(&self, region: &[VertexId]) -> Result<Vec<VertexId>> {
        let mut member = vec![false; self.len()];
        for &v in region {
            member[self.try_index(v)?] = true;
        }
        let mut out: Vec<VertexId> = region
            .iter()
            .filter(|&&v| {
                let i = self.index[&v];
                self.adj[i].iter().any(|&(j, _)| !member[j])
            })
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn dump(&self, t: usize) -> SnapshotDump {
        SnapshotDump {
            t,
            edges: self.edges().map(|(x, y, m)| [x.0, y.0, m]).collect(),
            volume: self.volume,
        }
    }
}

/// JSON debug dump `{ "t": int, "edges": [[x, y, mult], ...], "volume": int }`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotDump {
    pub t: usize,
    pub edges: Vec<[u64; 3]>,
    pub volume: u64,
}

impl SnapshotDump {
    pub fn to_snapshot(&self) -> GraphSnapshot {
        GraphSnapshot::from_edges(self.edges.iter().map(|e| (e[0], e[1], e[2])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_vertex() -> GraphSnapshot {
        GraphSnapshot::from_edges([(0, 1, 1), (0, 0, 1), (1, 1, 1)])
    }

    #[test]
    fn degrees_count_loops_once() {
        let g = two_vertex();
        assert_eq!(g.degree(VertexId(0)).unwrap(), 2);
        assert_eq!(g.volume(), 4);
        assert_eq!(g.laziness_floor(), 0.5);
        assert_eq!(g.multiplicity(VertexId(1), VertexId(0)), 1);
    }

    #[test]
    fn isolated_vertices_are_dropped() {
        let g = GraphSnapshot::from_edges([(0, 1, 1), (5, 5, 0)]);
        assert_eq!(g.len(), 2);
        assert!(!g.contains(VertexId(5)));
    }

    #[test]
    fn asymmetric_map_is_rejected() {
        let mut map = HashMap::new();
        map.insert((VertexId(0), VertexId(1)), 2);
        map.insert((VertexId(1), VertexId(0)), 1);
        assert!(matches!(
            GraphSnapshot::from_multiplicities(&map),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn boundary_of_everything_is_empty() {
        let g = two_vertex();
        let b = g.relative_boundary(&[VertexId(0), VertexId(1)]).unwrap();
        assert!(b.is_empty());
        let b = g.relative_boundary(&[VertexId(0)]).unwrap();
        assert_eq!(b, vec![VertexId(0)]);
        assert!(g.relative_boundary(&[VertexId(9)]).is_err());
    }

    #[test]
    fn cut_and_weight() {
        // path 0-1-2-3
        let g = GraphSnapshot::from_edges([(0, 1, 1), (1, 2, 1), (2, 3, 1)]);
        assert_eq!(g.weight(&[0, 1]), 3);
        assert_eq!(g.cut(&[0, 1]), 1);
        assert_eq!(g.cut(&[0, 2]), 3);
    }

    #[test]
    fn dump_round_trips() {
        let g = two_vertex();
        let dump = g.dump(3);
        let json = serde_json::to_string(&dump).unwrap();
        assert_eq!(json, r#"{"t":3,"edges":[[0,0,1],[0,1,1],[1,1,1]],"volume":4}"#);
        let back: SnapshotDump = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_snapshot().dump(3), dump);
    }
}
