//! Operational universality from the set of drivable transitions.
//!
//! Each allowed transition n↔m contributes a generator i(|n⟩⟨m| + |m⟩⟨n|).
//! Commutators of generators sharing a level produce the n'↔m' generator, so
//! the closure of the edge set is the transitive closure of the graph. The
//! production path is therefore union-find; [`lie_algebra_rank`] builds the
//! real Lie algebra explicitly and serves as a check on small systems.
//!
//! A threshold on the rate alone ignores whether a transition can be driven
//! selectively. [`addressable_edges`] removes edges whose frequency lies
//! within a selectivity window of another allowed edge, since a pulse at
//! that frequency would drive both.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::control::{rabi_map, RabiMap};
use crate::error::{Error, Result};
use crate::spin::{CMatrix, FieldSpec, SpinSystem};

pub const DEFAULT_THRESHOLD_MHZ_PER_MT: f64 = 0.2;
pub const DEFAULT_SELECTIVITY_GHZ: f64 = 0.05;
/// Largest dimension [`lie_algebra_rank`] accepts without `allow_large`.
pub const LIE_RANK_MAX_DIM: usize = 16;

/// Unordered level pairs, stored 0-based with `n < m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub d: usize,
    edges: BTreeSet<(usize, usize)>,
    pub threshold: f64,
}

impl EdgeSet {
    pub fn new(d: usize, threshold: f64) -> Self {
        Self { d, edges: BTreeSet::new(), threshold }
    }

    /// Build from 0-based pairs. Self-edges and out-of-range indices are rejected.
    pub fn from_pairs(d: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::new(d, 0.0);
        for (n, m) in pairs {
            set.insert(n, m)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, n: usize, m: usize) -> Result<bool> {
        if n == m {
            return Err(Error::InvalidParameter { name: "edge", reason: format!("self-edge at level {}", n + 1) });
        }
        if n >= self.d || m >= self.d {
            return Err(Error::InvalidParameter { name: "edge", reason: format!("({}, {}) outside 1..={}", n + 1, m + 1, self.d) });
        }
        Ok(self.edges.insert((n.min(m), n.max(m))))
    }

    pub fn contains(&self, n: usize, m: usize) -> bool {
        self.edges.contains(&(n.min(m), n.max(m)))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityResult {
    pub reachable: DMatrix<bool>,
    /// Levels grouped by component, each sorted, ordered by smallest member.
    pub components: Vec<Vec<usize>>,
    pub universal: bool,
}

impl ReachabilityResult {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn verdict(&self) -> String {
        format!("universal={} components={}", self.universal, self.n_components())
    }

    /// Boolean matrix as 0/1 rows, header `level,1,2,…,d`.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let d = self.reachable.nrows();
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("level");
        for m in 0..d {
            out.push_str(&format!(",{}", m + 1));
        }
        out.push('\n');
        for n in 0..d {
            out.push_str(&(n + 1).to_string());
            for m in 0..d {
                out.push_str(if self.reachable[(n, m)] { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// Edges whose rate exceeds `threshold` (MHz/mT).
pub fn allowed_edges(map: &RabiMap, threshold: f64) -> Result<EdgeSet> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidParameter { name: "threshold", reason: format!("must be non-negative, got {threshold}") });
    }
    let d = map.d();
    let mut set = EdgeSet::new(d, threshold);
    for n in 0..d {
        for m in n + 1..d {
            if map.rate[(n, m)] > threshold {
                set.edges.insert((n, m));
            }
        }
    }
    Ok(set)
}

/// Drop every edge whose transition frequency is within `selectivity_ghz` of
/// another edge in `edges`. A window of zero keeps everything.
pub fn addressable_edges(map: &RabiMap, edges: &EdgeSet, selectivity_ghz: f64) -> Result<EdgeSet> {
    if selectivity_ghz.is_nan() || selectivity_ghz < 0.0 {
        return Err(Error::InvalidParameter { name: "selectivity", reason: format!("must be non-negative, got {selectivity_ghz}") });
    }
    let mut by_freq: Vec<(f64, (usize, usize))> = edges.iter().map(|(n, m)| (map.freq[(n, m)], (n, m))).collect();
    by_freq.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = EdgeSet::new(edges.d, edges.threshold);
    for (i, &(f, e)) in by_freq.iter().enumerate() {
        let crowded_below = i > 0 && f - by_freq[i - 1].0 < selectivity_ghz;
        let crowded_above = i + 1 < by_freq.len() && by_freq[i + 1].0 - f < selectivity_ghz;
        if selectivity_ghz == 0.0 || !(crowded_below || crowded_above) {
            out.edges.insert(e);
        }
    }
    Ok(out)
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Closure of the edge set under commutation, computed as graph connectivity.
pub fn graph_closure(edges: &EdgeSet) -> ReachabilityResult {
    let d = edges.d;
    let mut ds = DisjointSet::new(d);
    for (n, m) in edges.iter() {
        ds.union(n, m);
    }
    let roots: Vec<usize> = (0..d).map(|k| ds.find(k)).collect();
    let reachable = DMatrix::from_fn(d, d, |a, b| roots[a] == roots[b]);
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; d];
    for (k, &r) in roots.iter().enumerate() {
        if slot[r] == usize::MAX {
            slot[r] = components.len();
            components.push(Vec::new());
        }
        components[slot[r]].push(k);
    }
    let universal = d > 0 && components.len() == 1;
    ReachabilityResult { reachable, components, universal }
}

/// The two drive quadratures of a transition: i(|n⟩⟨m| + |m⟩⟨n|) and |n⟩⟨m| − |m⟩⟨n|.
fn generators(d: usize, n: usize, m: usize) -> [CMatrix; 2] {
    let mut x = CMatrix::zeros(d, d);
    x[(n, m)] = Complex64::i();
    x[(m, n)] = Complex64::i();
    let mut y = CMatrix::zeros(d, d);
    y[(n, m)] = Complex64::new(1.0, 0.0);
    y[(m, n)] = Complex64::new(-1.0, 0.0);
    [x, y]
}

fn flatten(a: &CMatrix) -> Vec<f64> {
    a.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unflatten(v: &[f64], d: usize) -> CMatrix {
    CMatrix::from_iterator(d, d, v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])))
}

/// Orthonormal basis of a real vector space, grown by Gram–Schmidt.
struct RealBasis {
    vectors: Vec<Vec<f64>>,
}

impl RealBasis {
    const REL_TOL: f64 = 1e-9;

    fn try_add(&mut self, mut v: Vec<f64>) -> bool {
        let original = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if original < 1e-12 {
            return false;
        }
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for b in &self.vectors {
                let c: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(y, x)| *y -= c * x);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= Self::REL_TOL * original {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        self.vectors.push(v);
        true
    }
}

/// Dimension of the real Lie algebra generated by the edge set.
///
/// Refuses `d > 16` unless `allow_large` is set, since the work grows like d⁶.
pub fn lie_algebra_rank(edges: &EdgeSet, allow_large: bool) -> Result<usize> {
    let d = edges.d;
    if d > LIE_RANK_MAX_DIM && !allow_large {
        return Err(Error::DimensionGuard { dim: d, limit: LIE_RANK_MAX_DIM });
    }
    let full = d * d - 1;
    let mut basis = RealBasis { vectors: Vec::new() };
    for (n, m) in edges.iter() {
        for g in generators(d, n, m) {
            basis.try_add(flatten(&g));
        }
    }
    let mut i = 0;
    while i < basis.vectors.len() && basis.vectors.len() < full {
        let a = unflatten(&basis.vectors[i], d);
        for j in 0..i {
            let b = unflatten(&basis.vectors[j], d);
            basis.try_add(flatten(&(&a * &b - &b * &a)));
            if basis.vectors.len() == full {
                break;
            }
        }
        i += 1;
    }
    Ok(basis.vectors.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniversalityOptions {
    pub threshold: f64,
    pub selectivity_ghz: f64,
    pub drive_direction: [f64; 3],
}

impl Default for UniversalityOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD_MHZ_PER_MT,
            selectivity_ghz: DEFAULT_SELECTIVITY_GHZ,
            drive_direction: crate::control::default_drive_direction(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UniversalityReport {
    pub map: RabiMap,
    pub allowed: EdgeSet,
    pub addressable: EdgeSet,
    pub result: ReachabilityResult,
}

/// Rabi map, thresholding, addressability filter and closure for one field.
pub fn universality_test(system: &SpinSystem, field: &FieldSpec, opts: &UniversalityOptions) -> Result<UniversalityReport> {
    let es = system.eigensystem(field)?;
    let map = rabi_map(&es, system, opts.drive_direction, system.g())?;
    let allowed = allowed_edges(&map, opts.threshold)?;
    let addressable = addressable_edges(&map, &allowed, opts.selectivity_ghz)?;
    let result = graph_closure(&addressable);
    Ok(UniversalityReport { map, allowed, addressable, result })
}
