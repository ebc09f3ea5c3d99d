//! Cycle-consistent multiway association of trees across many submaps by
//! spectral clustering of the aggregate association graph.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::cg::PartialPermutation;
use crate::error::{Error, Result};
use crate::geometry::RngSeed;

/// One pairwise association between submaps `s` and `t` (indices into `sizes`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseInput {
    pub s: usize,
    pub t: usize,
    pub perm: PartialPermutation,
}

/// Flat enumeration of `(submap, local index)` objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectIndex {
    offsets: Vec<usize>,
}

impl ObjectIndex {
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &n in sizes {
            acc += n;
            offsets.push(acc);
        }
        Self { offsets }
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_submaps(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn size(&self, s: usize) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }

    pub fn flat(&self, s: usize, i: usize) -> usize {
        self.offsets[s] + i
    }

    pub fn unflat(&self, k: usize) -> (usize, usize) {
        let s = self.offsets.partition_point(|&o| o <= k) - 1;
        (s, k - self.offsets[s])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationGraph {
    pub index: ObjectIndex,
    /// Symmetric 0/1 adjacency with zero same-submap blocks.
    pub adjacency: DMatrix<f64>,
    pub degree: Vec<f64>,
}

pub fn build_aggregate(sizes: &[usize], pairwise: &[PairwiseInput]) -> Result<AssociationGraph> {
    let index = ObjectIndex::new(sizes);
    let n = index.total();
    let mut a = DMatrix::zeros(n, n);
    for p in pairwise {
        if p.s >= sizes.len() || p.t >= sizes.len() {
            return Err(Error::InconsistentSizes(format!("submap pair ({},{}) out of range", p.s, p.t)));
        }
        if p.s == p.t {
            return Err(Error::InconsistentSizes(format!("self association on submap {}", p.s)));
        }
        if p.perm.size_s != sizes[p.s] || p.perm.size_t != sizes[p.t] {
            return Err(Error::InconsistentSizes(format!(
                "permutation {}x{} for submaps of size {}x{}",
                p.perm.size_s, p.perm.size_t, sizes[p.s], sizes[p.t]
            )));
        }
        for (i, j) in p.perm.pairs() {
            let (u, v) = (index.flat(p.s, i), index.flat(p.t, j));
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
    }
    let degree = (0..n).map(|i| a.row(i).sum()).collect();
    Ok(AssociationGraph { index, adjacency: a, degree })
}

/// `D^{-1/2} (D − A) D^{-1/2}`; isolated vertices get a zero row and column.
pub fn normalized_laplacian(g: &AssociationGraph) -> DMatrix<f64> {
    let n = g.degree.len();
    let inv_sqrt: Vec<f64> = g.degree.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let l = if i == j { g.degree[i] } else { 0.0 } - g.adjacency[(i, j)];
        l * inv_sqrt[i] * inv_sqrt[j]
    })
}

/// `D − A`.
pub fn laplacian(g: &AssociationGraph) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(g.degree.clone())) - &g.adjacency
}

pub fn estimate_universe_size(l_nrm: &DMatrix<f64>, threshold: f64) -> usize {
    if l_nrm.nrows() == 0 {
        return 0;
    }
    SymmetricEigen::new(l_nrm.clone()).eigenvalues.iter().filter(|&&e| e < threshold).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Greedy,
    Hungarian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearConfig {
    pub eigen_threshold: f64,
    pub assignment: Assignment,
    /// Polish the spectral clusters by local search on match agreement.
    pub refine: bool,
}

impl Default for ClearConfig {
    fn default() -> Self {
        Self { eigen_threshold: 0.5, assignment: Assignment::Greedy, refine: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalAssociation {
    pub universe_size: usize,
    /// `maps[s][i]` is the universe id of tree `i` in submap `s`.
    pub maps: Vec<Vec<usize>>,
}

impl GlobalAssociation {
    pub fn singletons(sizes: &[usize]) -> Self {
        let mut next = 0;
        let maps = sizes
            .iter()
            .map(|&n| {
                let v: Vec<usize> = (next..next + n).collect();
                next += n;
                v
            })
            .collect();
        Self { universe_size: next, maps }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.maps.iter().map(Vec::len).collect()
    }

    /// Pairwise map between submaps `s` and `t` through the universe.
    pub fn compose_pairwise(&self, s: usize, t: usize) -> PartialPermutation {
        let mut inv = vec![None; self.universe_size];
        for (j, &u) in self.maps[t].iter().enumerate() {
            inv[u] = Some(j);
        }
        let pairs: Vec<(usize, usize)> =
            self.maps[s].iter().enumerate().filter_map(|(i, &u)| inv[u].map(|j| (i, j))).collect();
        PartialPermutation::from_pairs(self.maps[s].len(), self.maps[t].len(), &pairs)
            .expect("universe maps are injective per submap")
    }

    /// All non-empty pairwise maps with `s < t`.
    pub fn induced_pairwise(&self) -> Vec<PairwiseInput> {
        let n = self.maps.len();
        let mut out = Vec::new();
        for s in 0..n {
            for t in s + 1..n {
                let perm = self.compose_pairwise(s, t);
                if !perm.is_empty() {
                    out.push(PairwiseInput { s, t, perm });
                }
            }
        }
        out
    }

    /// `agent,submap,tree_id,universe_id` rows; `labels[s]` gives the
    /// agent and sequence of submap `s`.
    pub fn to_csv(&self, labels: &[(u8, u16)]) -> String {
        let mut out = String::from("agent,submap,tree_id,universe_id\n");
        for (s, m) in self.maps.iter().enumerate() {
            let (a, q) = labels[s];
            for (i, u) in m.iter().enumerate() {
                let _ = writeln!(out, "{a},{q},{i},{u}");
            }
        }
        out
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Connected components of the adjacency, each sorted, ordered by smallest member.
fn components(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if a[(i, j)] != 0.0 {
                uf.union(i, j);
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = uf.find(i);
        comps[r].push(i);
    }
    comps.retain(|c| !c.is_empty());
    comps
}

/// Clusters of one connected component, as lists of flat indices.
fn cluster_component(g: &AssociationGraph, comp: &[usize], cfg: &ClearConfig) -> Vec<Vec<usize>> {
    let k = comp.len();
    if k == 1 {
        return vec![comp.to_vec()];
    }
    let submap_of: Vec<usize> = comp.iter().map(|&f| g.index.unflat(f).0).collect();
    let mut multiplicity = std::collections::BTreeMap::new();
    for &s in &submap_of {
        *multiplicity.entry(s).or_insert(0usize) += 1;
    }
    let max_mult = multiplicity.values().copied().max().unwrap_or(1);

    let sub = GraphView { g, comp };
    let l = sub.normalized_laplacian();
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let below = eig.eigenvalues.iter().filter(|&&e| e < cfg.eigen_threshold).count();
    let m = below.max(max_mult).min(k);

    // rows of the m smallest eigenvectors, unit-normalised
    let mut emb = DMatrix::<f64>::zeros(k, m);
    for (c, &e) in order[..m].iter().enumerate() {
        emb.set_column(c, &eig.eigenvectors.column(e));
    }
    for r in 0..k {
        let n = emb.row(r).norm();
        if n > 0.0 {
            emb.row_mut(r).scale_mut(1.0 / n);
        }
    }
    let sim = |a: usize, b: usize| emb.row(a).dot(&emb.row(b));

    // farthest-point pivots
    let mut pivots = vec![0usize];
    let mut closest: Vec<f64> = (0..k).map(|r| sim(r, 0)).collect();
    while pivots.len() < m {
        let mut best = None;
        for r in 0..k {
            if pivots.contains(&r) {
                continue;
            }
            if best.is_none_or(|b: usize| closest[r] < closest[b]) {
                best = Some(r);
            }
        }
        let p = best.expect("m <= k");
        pivots.push(p);
        for r in 0..k {
            closest[r] = closest[r].max(sim(r, p));
        }
    }

    let score: Vec<Vec<f64>> = (0..k).map(|r| pivots.iter().map(|&p| sim(r, p)).collect()).collect();
    let mut label: Vec<Option<usize>> = vec![None; k];
    match cfg.assignment {
        Assignment::Greedy => {
            let mut cand: Vec<(usize, usize)> = (0..k).flat_map(|r| (0..m).map(move |c| (r, c))).collect();
            cand.sort_by(|&(r1, c1), &(r2, c2)| score[r2][c2].total_cmp(&score[r1][c1]).then((r1, c1).cmp(&(r2, c2))));
            let mut used = std::collections::HashSet::new();
            for (r, c) in cand {
                if label[r].is_none() && !used.contains(&(submap_of[r], c)) {
                    label[r] = Some(c);
                    used.insert((submap_of[r], c));
                }
            }
        }
        Assignment::Hungarian => {
            for &s in multiplicity.keys() {
                let rows: Vec<usize> = (0..k).filter(|&r| submap_of[r] == s).collect();
                let weights: Vec<Vec<i64>> =
                    rows.iter().map(|&r| score[r].iter().map(|&v| (v * 1e9).round() as i64).collect()).collect();
                let mat = Matrix::from_rows(weights).expect("rectangular");
                let (_, cols) = kuhn_munkres(&mat);
                for (ri, &r) in rows.iter().enumerate() {
                    label[r] = Some(cols[ri]);
                }
            }
        }
    }

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut extra = Vec::new();
    for r in 0..k {
        match label[r] {
            Some(c) => clusters[c].push(comp[r]),
            None => extra.push(vec![comp[r]]),
        }
    }
    clusters.retain(|c| !c.is_empty());
    clusters.extend(extra);
    clusters
}

/// Pair score: +1 for an input match, −1 for an unmatched pair whose submaps
/// were compared, 0 when the submaps were never compared.
struct Evidence<'a> {
    g: &'a AssociationGraph,
    compared: Vec<Vec<bool>>,
}

impl Evidence<'_> {
    fn w(&self, u: usize, v: usize) -> i64 {
        if self.g.adjacency[(u, v)] != 0.0 {
            1
        } else if self.compared[self.g.index.unflat(u).0][self.g.index.unflat(v).0] {
            -1
        } else {
            0
        }
    }

    fn gain(&self, v: usize, cluster: &[usize]) -> i64 {
        cluster.iter().filter(|&&u| u != v).map(|&u| self.w(u, v)).sum()
    }
}

/// Single-object moves and cluster merges that raise total agreement while
/// keeping at most one object per submap in each cluster. Visits objects and
/// clusters in index order, so the result is deterministic.
fn refine(ev: &Evidence, mut clusters: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let sub = |f: usize| ev.g.index.unflat(f).0;
    let mut members: Vec<usize> = clusters.iter().flatten().copied().collect();
    members.sort_unstable();
    loop {
        let mut changed = false;
        for &v in &members {
            let from = clusters.iter().position(|c| c.contains(&v)).unwrap();
            let here = ev.gain(v, &clusters[from]);
            // target None = new singleton
            let mut best: (i64, Option<usize>) = (0, None);
            for (k, c) in clusters.iter().enumerate() {
                if k == from || c.iter().any(|&u| sub(u) == sub(v)) {
                    continue;
                }
                let gk = ev.gain(v, c);
                if gk > best.0 {
                    best = (gk, Some(k));
                }
            }
            if best.0 > here && !(best.1.is_none() && clusters[from].len() == 1) {
                clusters[from].retain(|&u| u != v);
                match best.1 {
                    Some(k) => clusters[k].push(v),
                    None => clusters.push(vec![v]),
                }
                clusters.retain(|c| !c.is_empty());
                changed = true;
            }
        }
        'merge: for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                if clusters[b].iter().any(|&u| clusters[a].iter().any(|&v| sub(u) == sub(v))) {
                    continue;
                }
                let cross: i64 = clusters[b].iter().map(|&u| ev.gain(u, &clusters[a])).sum();
                if cross > 0 {
                    let moved = clusters.remove(b);
                    clusters[a].extend(moved);
                    changed = true;
                    break 'merge;
                }
            }
        }
        if !changed {
            return clusters;
        }
    }
}

struct GraphView<'a> {
    g: &'a AssociationGraph,
    comp: &'a [usize],
}

impl GraphView<'_> {
    fn normalized_laplacian(&self) -> DMatrix<f64> {
        let k = self.comp.len();
        let d: Vec<f64> = self.comp.iter().map(|&f| self.g.degree[f]).collect();
        DMatrix::from_fn(k, k, |i, j| {
            let a = self.g.adjacency[(self.comp[i], self.comp[j])];
            let l = if i == j { d[i] } else { 0.0 } - a;
            l / (d[i] * d[j]).sqrt()
        })
    }
}

/// Solves for a global association that is cycle consistent by construction:
/// every submap contributes at most one object to each universe id.
pub fn clear_solve(sizes: &[usize], pairwise: &[PairwiseInput], cfg: &ClearConfig) -> Result<GlobalAssociation> {
    let g = build_aggregate(sizes, pairwise)?;
    let mut compared = vec![vec![false; sizes.len()]; sizes.len()];
    for p in pairwise {
        compared[p.s][p.t] = true;
        compared[p.t][p.s] = true;
    }
    let ev = Evidence { g: &g, compared };
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for comp in components(&g.adjacency) {
        let c = cluster_component(&g, &comp, cfg);
        clusters.extend(if cfg.refine && comp.len() > 1 { refine(&ev, c) } else { c });
    }
    for c in clusters.iter_mut() {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    let mut maps: Vec<Vec<usize>> = sizes.iter().map(|&n| vec![usize::MAX; n]).collect();
    for (u, c) in clusters.iter().enumerate() {
        for &f in c {
            let (s, i) = g.index.unflat(f);
            maps[s][i] = u;
        }
    }
    Ok(GlobalAssociation { universe_size: clusters.len(), maps })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub consistent: bool,
    /// First offending component as `(submap, tree)` objects.
    pub witness: Option<Vec<(usize, usize)>>,
}

/// A set of pairwise maps is cycle consistent iff every connected component
/// of the induced graph is a clique holding at most one object per submap.
pub fn check_cycle_consistency(sizes: &[usize], pairwise: &[PairwiseInput]) -> Result<ConsistencyReport> {
    let g = build_aggregate(sizes, pairwise)?;
    for comp in components(&g.adjacency) {
        let objs: Vec<(usize, usize)> = comp.iter().map(|&f| g.index.unflat(f)).collect();
        let mut bad = false;
        'outer: for (x, &u) in comp.iter().enumerate() {
            for (y, &v) in comp.iter().enumerate().skip(x + 1) {
                if objs[x].0 == objs[y].0 || g.adjacency[(u, v)] == 0.0 {
                    bad = true;
                    break 'outer;
                }
            }
        }
        if bad {
            return Ok(ConsistencyReport { consistent: false, witness: Some(objs) });
        }
    }
    Ok(ConsistencyReport { consistent: true, witness: None })
}

/// Synthetic multiway instance with known ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub sizes: Vec<usize>,
    /// Ground-truth universe id of each object.
    pub truth: Vec<Vec<usize>>,
    pub pairwise: Vec<PairwiseInput>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub universe: usize,
    pub submaps: usize,
    /// Probability that a submap observes a given universe object.
    pub observe_prob: f64,
    /// Probability that a pair of submaps gets a pairwise association.
    pub pair_prob: f64,
    /// Fraction of pairwise matches redirected to a wrong object.
    pub corrupt_frac: f64,
}

pub fn synthetic_instance(spec: &SyntheticSpec, seed: RngSeed) -> SyntheticInstance {
    let mut rng = seed.rng();
    let mut truth: Vec<Vec<usize>> = (0..spec.submaps)
        .map(|_| {
            let mut v: Vec<usize> = (0..spec.universe).filter(|_| rng.random::<f64>() < spec.observe_prob).collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    for v in truth.iter_mut() {
        if v.is_empty() {
            v.push(rng.random_range(0..spec.universe));
        }
    }
    let sizes: Vec<usize> = truth.iter().map(Vec::len).collect();
    let mut pairwise = Vec::new();
    for s in 0..spec.submaps {
        for t in s + 1..spec.submaps {
            if rng.random::<f64>() >= spec.pair_prob {
                continue;
            }
            let mut map: Vec<Option<usize>> =
                truth[s].iter().map(|u| truth[t].iter().position(|v| v == u)).collect();
            for i in 0..map.len() {
                if map[i].is_none() || rng.random::<f64>() >= spec.corrupt_frac {
                    continue;
                }
                let free: Vec<usize> = (0..sizes[t]).filter(|j| !map.contains(&Some(*j))).collect();
                map[i] = free.get(rng.random_range(0..free.len().max(1))).copied();
                if free.is_empty() {
                    // nothing free: swap targets with another matched object
                    let others: Vec<usize> = (0..map.len()).filter(|&o| o != i && map[o].is_some()).collect();
                    if let Some(&o) = others.get(rng.random_range(0..others.len().max(1))) {
                        map.swap(i, o);
                    }
                }
            }
            let pairs: Vec<(usize, usize)> = map.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
            if pairs.is_empty() {
                continue;
            }
            let perm = PartialPermutation::from_pairs(sizes[s], sizes[t], &pairs).expect("injective by construction");
            pairwise.push(PairwiseInput { s, t, perm });
        }
    }
    SyntheticInstance { sizes, truth, pairwise }
}

/// `(correct, total)` object-pair matches in a pairwise set, judged by `truth`.
pub fn match_counts(pairwise: &[PairwiseInput], truth: &[Vec<usize>]) -> (usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    for p in pairwise {
        for (i, j) in p.perm.pairs() {
            total += 1;
            if truth[p.s][i] == truth[p.t][j] {
                correct += 1;
            }
        }
    }
    (correct, total)
}
