//! Region adjacency graph and greedy merging.
//!
//! Vertices carry additive [`RegionStats`]; the cost of merging two
//! neighbours is the increase of the total rank-r least-squares deviation
//! `U`. A stage repeatedly commits the cheapest mergeable edge until the
//! next merge would push `√(U/N)` above the stage threshold.
//!
//! Edge costs go stale whenever an endpoint grows. Instead of a
//! decrease-key heap every vertex carries a version counter; heap entries
//! remember the versions they were computed against and are dropped on pop
//! when either endpoint has moved on.

use crate::colour::{ColourVec, Rank, RegionStats};
use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMap};
use crate::par::{self, Execution};
use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashSet};

/// Increase of the rank-`rank` deviation when `a` and `b` are merged.
///
/// Works on statistics only; never touches pixels.
pub fn merge_cost(a: &RegionStats, b: &RegionStats, rank: Rank) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySegment);
    }
    let joined = a.merge(b).rank_ssd(rank)?;
    let cost = joined - a.rank_ssd(rank)? - b.rank_ssd(rank)?;
    // the union's fit is never better than the separate fits; a negative
    // value is cancellation between large moment sums
    Ok(cost.max(0.0))
}

/// Disjoint-set forest over vertex ids. The union keeps the id passed as
/// `keep` as the representative.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    pub fn new(len: usize) -> Self {
        Self {
            parent: (0..len as u32).collect(),
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Root lookup without path compression.
    pub fn root(&self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            x = self.parent[x as usize];
        }
        x
    }

    pub fn union_into(&mut self, keep: u32, other: u32) {
        let (k, o) = (self.find(keep), self.find(other));
        if k != o {
            self.parent[o as usize] = k;
        }
    }
}

/// Which edges a merge stage may not touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLock {
    /// Every edge is mergeable.
    None,
    /// Edges with at least one isolated endpoint are locked.
    AnyIsolated,
    /// Edges whose endpoints are both isolated are locked.
    BothIsolated,
    /// Edges explicitly marked as locked are locked.
    MarkedEdges,
    /// Everything is locked.
    All,
}

/// Isolation flags on vertices and lock flags on edges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationMarks {
    pub isolated: BTreeSet<u32>,
    pub locked_edges: BTreeSet<(u32, u32)>,
}

#[derive(Clone, Debug)]
struct Vertex {
    stats: RegionStats,
    alive: bool,
    version: u32,
    isolated: bool,
    /// sorted, deduplicated
    neighbours: Vec<u32>,
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    cost: f64,
    lo: u32,
    hi: u32,
    ver_lo: u32,
    ver_hi: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
            .then(self.ver_lo.cmp(&other.ver_lo))
            .then(self.ver_hi.cmp(&other.ver_hi))
    }
}

/// Outcome of one merge stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub merges: usize,
    pub u_total: f64,
}

fn edge_key(u: u32, v: u32) -> (u32, u32) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Region adjacency graph over the segments of one image.
#[derive(Clone, Debug)]
pub struct Rag {
    width: usize,
    height: usize,
    vertices: Vec<Vertex>,
    pixel_labels: Vec<u32>,
    sets: DisjointSet,
    locked: HashSet<(u32, u32)>,
    heap: BinaryHeap<Reverse<HeapEntry>>,
    rank: Rank,
    u_total: f64,
    alive_count: usize,
}

impl Rag {
    /// One vertex per label of `labels` and an edge for every pair of
    /// 4-adjacent pixels with distinct labels. `stats[l]` describes label
    /// `l`. `U` starts at zero.
    pub fn build(labels: &LabelMap, stats: Vec<RegionStats>) -> Result<Self> {
        let (w, h) = labels.dims();
        if w == 0 || h == 0 {
            return Err(Error::EmptyImage);
        }
        let k = stats.len();
        if let Some(bad) = labels.as_slice().iter().find(|&&l| l as usize >= k) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} has no statistics ({k} provided)"
            )));
        }
        let mut neighbours: Vec<Vec<u32>> = vec![Vec::new(); k];
        let px = labels.as_slice();
        for y in 0..h {
            for x in 0..w {
                let l = px[y * w + x];
                if x + 1 < w {
                    let r = px[y * w + x + 1];
                    if r != l {
                        neighbours[l as usize].push(r);
                        neighbours[r as usize].push(l);
                    }
                }
                if y + 1 < h {
                    let d = px[(y + 1) * w + x];
                    if d != l {
                        neighbours[l as usize].push(d);
                        neighbours[d as usize].push(l);
                    }
                }
            }
        }
        let vertices: Vec<Vertex> = stats
            .into_iter()
            .zip(neighbours)
            .map(|(stats, mut nb)| {
                nb.sort_unstable();
                nb.dedup();
                Vertex {
                    alive: stats.n > 0,
                    stats,
                    version: 0,
                    isolated: false,
                    neighbours: nb,
                }
            })
            .collect();
        let alive_count = vertices.iter().filter(|v| v.alive).count();
        Ok(Self {
            width: w,
            height: h,
            vertices,
            pixel_labels: px.to_vec(),
            sets: DisjointSet::new(k),
            locked: HashSet::new(),
            heap: BinaryHeap::new(),
            rank: Rank::Point,
            u_total: 0.0,
            alive_count,
        })
    }

    /// Every pixel becomes its own vertex. `original` holds the same
    /// pixels before the colour-space transform.
    pub fn from_pixels(pixels: &Grid<ColourVec>, original: &Grid<ColourVec>) -> Result<Self> {
        if pixels.dims() != original.dims() {
            return Err(Error::DimensionMismatch {
                expected: pixels.dims(),
                found: original.dims(),
            });
        }
        let (w, h) = pixels.dims();
        let labels = LabelMap::from_fn(w, h, |x, y| (y * w + x) as u32);
        let stats = pixels
            .as_slice()
            .iter()
            .zip(original.as_slice())
            .map(|(p, o)| RegionStats::from_pixel(*p, *o))
            .collect();
        Self::build(&labels, stats)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn u_total(&self) -> f64 {
        self.u_total
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    /// `√(U/N)`.
    pub fn rms(&self) -> f64 {
        (self.u_total / self.n_pixels() as f64).sqrt()
    }

    pub fn segment_count(&self) -> usize {
        self.alive_count
    }

    pub fn is_alive(&self, v: u32) -> bool {
        self.vertices.get(v as usize).is_some_and(|x| x.alive)
    }

    pub fn alive_vertices(&self) -> impl Iterator<Item = u32> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.alive)
            .map(|(i, _)| i as u32)
    }

    pub fn stats(&self, v: u32) -> &RegionStats {
        &self.vertices[v as usize].stats
    }

    pub fn neighbours(&self, v: u32) -> &[u32] {
        &self.vertices[v as usize].neighbours
    }

    pub fn are_adjacent(&self, u: u32, v: u32) -> bool {
        self.vertices[u as usize].neighbours.binary_search(&v).is_ok()
    }

    /// Alive edges as `(lo, hi)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.alive_vertices()
            .flat_map(|u| {
                self.neighbours(u)
                    .iter()
                    .filter(move |&&v| v > u)
                    .map(move |&v| (u, v))
            })
            .collect()
    }

    pub fn is_isolated(&self, v: u32) -> bool {
        self.vertices[v as usize].isolated
    }

    pub fn is_edge_marked(&self, u: u32, v: u32) -> bool {
        self.locked.contains(&edge_key(u, v))
    }

    /// Current isolation state.
    pub fn marks(&self) -> IsolationMarks {
        IsolationMarks {
            isolated: self.alive_vertices().filter(|&v| self.is_isolated(v)).collect(),
            locked_edges: self.locked.iter().copied().collect(),
        }
    }

    /// Replaces all isolation flags with `marks`. Flags on dead vertices or
    /// missing edges are ignored.
    pub fn set_marks(&mut self, marks: &IsolationMarks) {
        for v in self.vertices.iter_mut() {
            v.isolated = false;
        }
        for &v in &marks.isolated {
            if self.is_alive(v) {
                self.vertices[v as usize].isolated = true;
            }
        }
        self.locked = marks
            .locked_edges
            .iter()
            .map(|&(u, v)| edge_key(u, v))
            .filter(|&(u, v)| self.is_alive(u) && self.is_alive(v) && self.are_adjacent(u, v))
            .collect();
    }

    pub fn clear_marks(&mut self) {
        self.set_marks(&IsolationMarks::default());
    }

    pub fn is_locked(&self, lock: EdgeLock, u: u32, v: u32) -> bool {
        match lock {
            EdgeLock::None => false,
            EdgeLock::AnyIsolated => self.is_isolated(u) || self.is_isolated(v),
            EdgeLock::BothIsolated => self.is_isolated(u) && self.is_isolated(v),
            EdgeLock::MarkedEdges => self.is_edge_marked(u, v),
            EdgeLock::All => true,
        }
    }

    /// Σ rank_ssd over alive segments, computed from scratch.
    pub fn fresh_ssd(&self, rank: Rank) -> Result<f64> {
        self.alive_vertices()
            .map(|v| self.stats(v).rank_ssd(rank))
            .sum()
    }

    /// Resets `U` to the from-scratch deviation at `rank` and makes `rank`
    /// the current one.
    pub fn reinitialise_ssd(&mut self, rank: Rank) -> Result<f64> {
        self.u_total = self.fresh_ssd(rank)?;
        self.rank = rank;
        Ok(self.u_total)
    }

    fn entry(&self, u: u32, v: u32, cost: f64) -> HeapEntry {
        let (lo, hi) = edge_key(u, v);
        HeapEntry {
            cost,
            lo,
            hi,
            ver_lo: self.vertices[lo as usize].version,
            ver_hi: self.vertices[hi as usize].version,
        }
    }

    fn is_current(&self, e: &HeapEntry) -> bool {
        let (a, b) = (&self.vertices[e.lo as usize], &self.vertices[e.hi as usize]);
        a.alive && b.alive && a.version == e.ver_lo && b.version == e.ver_hi
    }

    fn rebuild_heap(&mut self, lock: EdgeLock, exec: Execution) -> Result<()> {
        let edges: Vec<(u32, u32)> = self
            .edges()
            .into_iter()
            .filter(|&(u, v)| !self.is_locked(lock, u, v))
            .collect();
        let rank = self.rank;
        let costs = par::map_slice(exec, &edges, |&(u, v)| merge_cost(self.stats(u), self.stats(v), rank));
        let mut entries = Vec::with_capacity(edges.len());
        for (&(u, v), cost) in edges.iter().zip(costs) {
            entries.push(Reverse(self.entry(u, v, cost?)));
        }
        self.heap = BinaryHeap::from(entries);
        Ok(())
    }

    /// Greedy merging at `rank` with threshold `sigma` on `√(U/N)`.
    ///
    /// The merge that would take `√(U/N)` above `sigma` is not committed.
    /// Starts from the current `U`; call [`Rag::reinitialise_ssd`] first
    /// when switching ranks.
    pub fn run_stage(&mut self, rank: Rank, sigma: f64, lock: EdgeLock) -> Result<StageOutcome> {
        self.run_stage_with(rank, sigma, lock, Execution::default())
    }

    pub fn run_stage_with(
        &mut self,
        rank: Rank,
        sigma: f64,
        lock: EdgeLock,
        exec: Execution,
    ) -> Result<StageOutcome> {
        self.rank = rank;
        self.rebuild_heap(lock, exec)?;
        let n = self.n_pixels() as f64;
        let mut merges = 0;
        while let Some(Reverse(e)) = self.heap.pop() {
            if !self.is_current(&e) || self.is_locked(lock, e.lo, e.hi) {
                continue;
            }
            if ((self.u_total + e.cost) / n).sqrt() > sigma {
                break;
            }
            self.merge_pair(e.lo, e.hi, e.cost);
            merges += 1;
            self.push_neighbourhood(e.lo, lock)?;
        }
        self.heap.clear();
        Ok(StageOutcome {
            merges,
            u_total: self.u_total,
        })
    }

    fn push_neighbourhood(&mut self, v: u32, lock: EdgeLock) -> Result<()> {
        let rank = self.rank;
        for i in 0..self.vertices[v as usize].neighbours.len() {
            let x = self.vertices[v as usize].neighbours[i];
            if self.is_locked(lock, v, x) {
                continue;
            }
            let cost = merge_cost(self.stats(v), self.stats(x), rank)?;
            let e = self.entry(v, x, cost);
            self.heap.push(Reverse(e));
        }
        Ok(())
    }

    /// Merges two adjacent segments unconditionally, adding the merge cost
    /// at the current rank to `U`. Returns the surviving id (the smaller).
    pub fn force_merge(&mut self, u: u32, v: u32) -> Result<u32> {
        if u == v || !self.is_alive(u) || !self.is_alive(v) || !self.are_adjacent(u, v) {
            return Err(Error::InvalidConfig(format!(
                "cannot merge {u} and {v}: not two adjacent alive segments"
            )));
        }
        let cost = merge_cost(self.stats(u), self.stats(v), self.rank)?;
        let (lo, hi) = edge_key(u, v);
        self.merge_pair(lo, hi, cost);
        Ok(lo)
    }

    fn merge_pair(&mut self, keep: u32, gone: u32, cost: f64) {
        debug_assert!(keep < gone);
        let gone_v = std::mem::replace(
            &mut self.vertices[gone as usize],
            Vertex {
                stats: RegionStats::ZERO,
                alive: false,
                version: 0,
                isolated: false,
                neighbours: Vec::new(),
            },
        );
        self.vertices[gone as usize].version = gone_v.version.wrapping_add(1);

        // locks follow the surviving edge; a lock on either parent edge wins
        self.locked.remove(&edge_key(keep, gone));
        for &x in &gone_v.neighbours {
            if x != keep && self.locked.remove(&edge_key(gone, x)) {
                self.locked.insert(edge_key(keep, x));
            }
        }

        for &x in &gone_v.neighbours {
            if x == keep {
                continue;
            }
            let nb = &mut self.vertices[x as usize].neighbours;
            if let Ok(i) = nb.binary_search(&gone) {
                nb.remove(i);
            }
            if let Err(i) = nb.binary_search(&keep) {
                nb.insert(i, keep);
            }
        }

        let k = &mut self.vertices[keep as usize];
        k.stats += gone_v.stats;
        k.isolated |= gone_v.isolated;
        k.version = k.version.wrapping_add(1);
        let mut merged = Vec::with_capacity(k.neighbours.len() + gone_v.neighbours.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&k.neighbours, &gone_v.neighbours);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            if next != keep && next != gone {
                merged.push(next);
            }
        }
        k.neighbours = merged;

        self.sets.union_into(keep, gone);
        self.u_total += cost;
        self.alive_count -= 1;
    }

    /// Current segment id of every pixel (not compacted).
    pub fn raw_labels(&self) -> LabelMap {
        let roots: Vec<u32> = (0..self.vertices.len() as u32).map(|v| self.sets.root(v)).collect();
        let data = self.pixel_labels.iter().map(|&l| roots[l as usize]).collect();
        LabelMap::from_vec(self.width, self.height, data).expect("pixel labels cover the image")
    }

    /// Label map with ids compacted to `0..K` in raster first-occurrence
    /// order.
    pub fn label_map(&self) -> LabelMap {
        self.raw_labels().compacted()
    }

    /// Current segment of pixel `(x, y)`.
    pub fn segment_of(&self, x: usize, y: usize) -> u32 {
        self.sets.root(self.pixel_labels[y * self.width + x])
    }
}
