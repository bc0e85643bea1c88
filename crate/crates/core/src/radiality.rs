//! Model-free radiality and connectivity verification, plus a brute-force
//! spanning-tree enumerator used as a test oracle.
//!
//! These checks are deliberately independent of the optimization model: they
//! operate on plain bus/line topology and are used to audit solver output.

/// A candidate network topology: a bus count and the set of closed lines
/// given as unordered bus-id pairs (1-based ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub n_buses: usize,
    pub closed: Vec<(usize, usize)>,
}

impl Topology {
    pub fn new(n_buses: usize, closed: Vec<(usize, usize)>) -> Self {
        Self { n_buses, closed }
    }
}

/// Verdict of [`check_radial`], with a deterministic witness for failures.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialVerdict {
    Radial,
    /// A closed line that completes a cycle (lexicographically smallest such
    /// line in the input order after normalizing pairs).
    HasCycle { witness: (usize, usize) },
    /// The set of bus ids not reachable from the smallest-id bus.
    Disconnected { unreached: Vec<usize> },
}

impl RadialVerdict {
    pub fn is_radial(&self) -> bool {
        matches!(self, RadialVerdict::Radial)
    }
}

/// Union-find with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        // path compression
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false if i and j were already in the same component.
    pub fn union(&mut self, i: usize, j: usize) -> bool {
        let (ri, rj) = (self.find(i), self.find(j));
        if ri == rj {
            return false;
        }
        match self.rank[ri].cmp(&self.rank[rj]) {
            std::cmp::Ordering::Less => self.parent[ri] = rj,
            std::cmp::Ordering::Greater => self.parent[rj] = ri,
            std::cmp::Ordering::Equal => {
                self.parent[rj] = ri;
                self.rank[ri] += 1;
            }
        }
        true
    }

    pub fn same(&mut self, i: usize, j: usize) -> bool {
        self.find(i) == self.find(j)
    }
}

/// Radiality check: a topology is radial iff it has exactly `n_buses - 1`
/// closed lines forming a single acyclic component.
///
/// Witnesses are deterministic: the cycle witness is the first closed line
/// (after normalizing each pair to (min, max) and scanning pairs sorted
/// lexicographically) that joins two already-connected buses; the
/// disconnected witness lists unreached buses in ascending order.
pub fn check_radial(topo: &Topology) -> RadialVerdict {
    let n = topo.n_buses;
    let mut uf = UnionFind::new(n + 1); // 1-based ids
    let mut pairs: Vec<(usize, usize)> = topo
        .closed
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    pairs.sort_unstable();
    for &(a, b) in &pairs {
        assert!(
            a >= 1 && b <= n && a != b,
            "line ({a},{b}) references invalid buses for n={n}"
        );
        if !uf.union(a, b) {
            return RadialVerdict::HasCycle { witness: (a, b) };
        }
    }
    let root = uf.find(1);
    let unreached: Vec<usize> = (1..=n).filter(|&i| uf.find(i) != root).collect();
    if !unreached.is_empty() {
        return RadialVerdict::Disconnected { unreached };
    }
    // connected and acyclic implies exactly n-1 edges
    debug_assert_eq!(pairs.len(), n - 1);
    RadialVerdict::Radial
}

/// Check a directed switch-status assignment against a topology.
///
/// `x` maps directed bus pairs (i, j) to a 0/1 status. Returns true iff the
/// assignment is symmetric, the set of closed pairs equals the topology's
/// closed set, and the directed statuses sum to `2 * (n_buses - 1)`.
pub fn consistent_with_x(topo: &Topology, x: &[((usize, usize), f64)]) -> bool {
    use std::collections::BTreeMap;
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &((i, j), v) in x {
        map.insert((i, j), v);
    }
    // symmetry on both directed copies
    for (&(i, j), &v) in &map {
        match map.get(&(j, i)) {
            Some(&w) if (w - v).abs() <= 1e-9 => {}
            _ => return false,
        }
    }
    // closed set must equal the topology's closed set
    let mut closed_from_x: Vec<(usize, usize)> = map
        .iter()
        .filter(|(_, &v)| v > 0.5)
        .map(|(&(i, j), _)| (i.min(j), i.max(j)))
        .collect();
    closed_from_x.sort_unstable();
    closed_from_x.dedup();
    let mut closed_topo: Vec<(usize, usize)> = topo
        .closed
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    closed_topo.sort_unstable();
    closed_topo.dedup();
    if closed_from_x != closed_topo {
        return false;
    }
    // cardinality: directed statuses sum to 2 (n - 1)
    let total: f64 = map.values().sum();
    (total - 2.0 * (topo.n_buses as f64 - 1.0)).abs() <= 1e-6
}

/// Exhaustively enumerate all spanning trees of a small graph.
///
/// `edges` are unordered bus-id pairs (1-based). Guarded to at most 10 buses;
/// returns the list of edge-index subsets of size `n_buses - 1` that are
/// connected and acyclic.
pub fn enumerate_radial_configs(
    n_buses: usize,
    edges: &[(usize, usize)],
) -> Result<Vec<Vec<usize>>, String> {
    if n_buses > 10 {
        return Err(format!(
            "enumeration guarded to 10 buses, got {n_buses}"
        ));
    }
    let k = n_buses - 1;
    let m = edges.len();
    let mut trees = Vec::new();
    if m < k {
        return Ok(trees);
    }
    // iterate over all k-subsets of edge indices in lexicographic order
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut uf = UnionFind::new(n_buses + 1);
        let mut acyclic = true;
        for &e in &idx {
            let (a, b) = edges[e];
            if !uf.union(a, b) {
                acyclic = false;
                break;
            }
        }
        if acyclic {
            let root = uf.find(1);
            if (1..=n_buses).all(|i| uf.find(i) == root) {
                trees.push(idx.clone());
            }
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(trees);
            }
            i -= 1;
            if idx[i] != i + m - k {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
