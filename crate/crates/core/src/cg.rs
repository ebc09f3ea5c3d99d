//! Pairwise data association by maximum clique of a correspondence graph.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, Point2, Pose2};
use crate::submap::TreeTrack;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Distance-preservation tolerance, meters.
    pub epsilon: f64,
    /// Minimum clique size accepted as a loop closure.
    pub tau: usize,
    /// Relative radius difference allowed for a hypothesis; `None` admits all.
    pub radius_prefilter: Option<f64>,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { epsilon: 0.15, tau: 7, radius_prefilter: Some(0.25) }
    }
}

/// Fixed-size bitset over graph vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn clear(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }
    fn and(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & b).collect())
    }
    fn first(&self) -> Option<usize> {
        self.0.iter().enumerate().find(|(_, w)| **w != 0).map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceGraph {
    /// Hypotheses `(i, j)`: tree `i` of the first map matches tree `j` of the second.
    pub vertices: Vec<(usize, usize)>,
    pub epsilon: f64,
    adj: Vec<Bits>,
}

impl CorrespondenceGraph {
    /// Graph from an explicit edge list; used for testing the clique search.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Bits::new(n); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].set(b);
                adj[b].set(a);
            }
        }
        Self { vertices: (0..n).map(|v| (v, v)).collect(), epsilon: 0.0, adj }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].get(v)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Bits::count).sum::<usize>() / 2
    }

    pub fn is_clique(&self, set: &[usize]) -> bool {
        set.iter().enumerate().all(|(k, &u)| set[k + 1..].iter().all(|&v| self.has_edge(u, v)))
    }
}

/// True when hypotheses `(i, j)` and `(k, l)` are pairwise consistent.
pub fn consistent(ps: &[Point2], pt: &[Point2], (i, j): (usize, usize), (k, l): (usize, usize), eps: f64) -> bool {
    i != k && j != l && (ps[i].dist(ps[k]) - pt[j].dist(pt[l])).abs() <= eps
}

fn radius_ok(rs: f64, rt: f64, limit: Option<f64>) -> bool {
    match limit {
        None => true,
        Some(lim) => (rs - rt).abs() / rs.max(rt) < lim,
    }
}

pub fn build_correspondence_graph(s: &[TreeTrack], t: &[TreeTrack], cfg: &CgConfig) -> CorrespondenceGraph {
    let ps: Vec<Point2> = s.iter().map(|x| x.position).collect();
    let pt: Vec<Point2> = t.iter().map(|x| x.position).collect();
    let mut vertices = Vec::new();
    for (i, a) in s.iter().enumerate() {
        for (j, b) in t.iter().enumerate() {
            if radius_ok(a.radius, b.radius, cfg.radius_prefilter) {
                vertices.push((i, j));
            }
        }
    }
    let n = vertices.len();
    let mut adj = vec![Bits::new(n); n];
    for u in 0..n {
        for v in u + 1..n {
            if consistent(&ps, &pt, vertices[u], vertices[v], cfg.epsilon) {
                adj[u].set(v);
                adj[v].set(u);
            }
        }
    }
    CorrespondenceGraph { vertices, epsilon: cfg.epsilon, adj }
}

/// Number of colours in a greedy sequential colouring of `p`; an upper bound
/// on the clique number of the induced subgraph.
fn colour_bound(g: &CorrespondenceGraph, p: &Bits) -> usize {
    let mut uncoloured = p.clone();
    let mut colours = 0;
    while !uncoloured.is_empty() {
        colours += 1;
        let mut avail = uncoloured.clone();
        while let Some(v) = avail.first() {
            uncoloured.clear(v);
            avail.clear(v);
            for (w, nb) in avail.0.iter_mut().zip(&g.adj[v].0) {
                *w &= !nb;
            }
        }
    }
    colours
}

fn expand(g: &CorrespondenceGraph, r: &mut Vec<usize>, mut p: Bits, best: &mut Vec<usize>) {
    if p.is_empty() {
        if r.len() > best.len() {
            best.clone_from(r);
        }
        return;
    }
    while let Some(v) = p.first() {
        if r.len() + p.count() <= best.len() || r.len() + colour_bound(g, &p) <= best.len() {
            return;
        }
        r.push(v);
        expand(g, r, p.and(&g.adj[v]), best);
        r.pop();
        p.clear(v);
    }
}

/// Maximum clique, ties broken towards the lexicographically smallest sorted
/// vertex list. Vertices are explored in increasing order and only strict
/// improvements replace the incumbent, so the first maximum found wins.
pub fn max_clique(g: &CorrespondenceGraph) -> Vec<usize> {
    let n = g.len();
    let mut all = Bits::new(n);
    (0..n).for_each(|v| all.set(v));
    let mut best = Vec::new();
    expand(g, &mut Vec::new(), all, &mut best);
    best
}

/// Injective partial map from `0..size_s` into `0..size_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialPermutation {
    pub size_s: usize,
    pub size_t: usize,
    mapping: Vec<Option<usize>>,
}

impl PartialPermutation {
    pub fn from_pairs(size_s: usize, size_t: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut mapping = vec![None; size_s];
        let mut used = vec![false; size_t];
        for &(i, j) in pairs {
            if i >= size_s || j >= size_t {
                return Err(Error::InconsistentSizes(format!("pair ({i},{j}) outside {size_s}x{size_t}")));
            }
            if mapping[i].is_some() || used[j] {
                return Err(Error::InconsistentSizes(format!("pair ({i},{j}) breaks injectivity")));
            }
            mapping[i] = Some(j);
            used[j] = true;
        }
        Ok(Self { size_s, size_t, mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self { size_s: n, size_t: n, mapping: (0..n).map(Some).collect() }
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.mapping.get(i).copied().flatten()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.mapping.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect()
    }

    pub fn len(&self) -> usize {
        self.mapping.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inverse(&self) -> Self {
        let mut mapping = vec![None; self.size_t];
        for (i, j) in self.pairs() {
            mapping[j] = Some(i);
        }
        Self { size_s: self.size_t, size_t: self.size_s, mapping }
    }

    /// Dense 0/1 matrix, `size_s` rows.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.size_t]; self.size_s];
        for (i, j) in self.pairs() {
            m[i][j] = 1;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatch {
    pub permutation: PartialPermutation,
    /// Least-squares transform with `p_s ≈ T · p_t`.
    pub transform: Pose2,
    pub rms: f64,
    /// Matched points are (nearly) collinear, so the rotation is poorly
    /// constrained.
    pub weak_geometry: bool,
}

fn canonical_order(s: &[TreeTrack], t: &[TreeTrack]) -> Ordering {
    let key = |v: &[TreeTrack]| -> Vec<(u64, u64, u64)> {
        v.iter().map(|x| (x.position.x.to_bits(), x.position.y.to_bits(), x.radius.to_bits())).collect()
    };
    s.len().cmp(&t.len()).then_with(|| key(s).cmp(&key(t)))
}

fn spread_min(points: &[Point2]) -> f64 {
    let n = points.len() as f64;
    let c = points.iter().fold(Point2::ORIGIN, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let lmin = tr / 2.0 - ((tr * tr / 4.0 - det).max(0.0)).sqrt();
    lmin.max(0.0).sqrt()
}

fn associate_directed(s: &[TreeTrack], t: &[TreeTrack], cfg: &CgConfig) -> Option<PairwiseMatch> {
    let g = build_correspondence_graph(s, t, cfg);
    let clique = max_clique(&g);
    if clique.len() < cfg.tau.max(1) {
        return None;
    }
    let pairs: Vec<(usize, usize)> = clique.iter().map(|&v| g.vertices[v]).collect();
    let permutation = PartialPermutation::from_pairs(s.len(), t.len(), &pairs).expect("clique is injective");
    let src: Vec<Point2> = pairs.iter().map(|&(_, j)| t[j].position).collect();
    let dst: Vec<Point2> = pairs.iter().map(|&(i, _)| s[i].position).collect();
    let transform = fit_rigid(&src, &dst).unwrap_or(Pose2::IDENTITY);
    let rms = (src.iter().zip(&dst).map(|(a, b)| transform.apply(*a).dist_sq(*b)).sum::<f64>() / src.len() as f64).sqrt();
    let weak_geometry = src.len() < 2 || spread_min(&src) < 1e-6 || spread_min(&dst) < 1e-6;
    Some(PairwiseMatch { permutation, transform, rms, weak_geometry })
}

/// Associates trees of two submaps. The search always runs in a canonical
/// direction so that swapping the arguments yields the inverse result.
pub fn pairwise_associate(s: &[TreeTrack], t: &[TreeTrack], cfg: &CgConfig) -> Option<PairwiseMatch> {
    if canonical_order(s, t) == Ordering::Greater {
        let m = associate_directed(t, s, cfg)?;
        Some(PairwiseMatch {
            permutation: m.permutation.inverse(),
            transform: m.transform.inverse(),
            rms: m.rms,
            weak_geometry: m.weak_geometry,
        })
    } else {
        associate_directed(s, t, cfg)
    }
}

/// `s,t,i,j` rows for a set of accepted matches.
pub fn associations_csv<S: std::fmt::Display>(rows: &[(S, S, PartialPermutation)]) -> String {
    let mut out = String::from("s,t,i,j\n");
    for (s, t, p) in rows {
        for (i, j) in p.pairs() {
            let _ = writeln!(out, "{s},{t},{i},{j}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracks(pts: &[(f64, f64)]) -> Vec<TreeTrack> {
        pts.iter()
            .enumerate()
            .map(|(k, &(x, y))| TreeTrack { id: k as u32, position: Point2::new(x, y), radius: 0.2, observation_count: 3 })
            .collect()
    }

    #[test]
    fn one_by_one() {
        let g = build_correspondence_graph(&tracks(&[(0.0, 0.0)]), &tracks(&[(5.0, 1.0)]), &CgConfig::default());
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(max_clique(&g), vec![0]);
    }

    #[test]
    fn identical_triangle() {
        let t = tracks(&[(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)]);
        let g = build_correspondence_graph(&t, &t, &CgConfig::default());
        let diag: Vec<usize> = (0..g.len()).filter(|&v| g.vertices[v].0 == g.vertices[v].1).collect();
        assert!(g.is_clique(&diag));
        assert_eq!(max_clique(&g), diag);
    }

    #[test]
    fn disjoint_cliques_pick_larger() {
        let mut edges = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                edges.push((a, b));
            }
        }
        for a in 4..10 {
            for b in a + 1..10 {
                edges.push((a, b));
            }
        }
        let g = CorrespondenceGraph::from_edges(10, &edges);
        assert_eq!(max_clique(&g), (4..10).collect::<Vec<_>>());
        assert!(max_clique(&CorrespondenceGraph::from_edges(0, &[])).is_empty());
    }

    #[test]
    fn tie_goes_to_lexicographically_smallest() {
        // two triangles {1,2,3} and {0,4,5}
        let g = CorrespondenceGraph::from_edges(6, &[(1, 2), (2, 3), (1, 3), (0, 4), (4, 5), (0, 5)]);
        assert_eq!(max_clique(&g), vec![0, 4, 5]);
    }

    #[test]
    fn partial_permutation_checks() {
        assert!(PartialPermutation::from_pairs(3, 3, &[(0, 1), (1, 1)]).is_err());
        assert!(PartialPermutation::from_pairs(3, 3, &[(0, 1), (0, 2)]).is_err());
        assert!(PartialPermutation::from_pairs(2, 2, &[(2, 0)]).is_err());
        let p = PartialPermutation::from_pairs(3, 2, &[(2, 0), (0, 1)]).unwrap();
        assert_eq!(p.inverse().pairs(), vec![(0, 2), (1, 0)]);
        assert_eq!(p.inverse().inverse(), p);
        assert_eq!(p.to_matrix(), vec![vec![0, 1], vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn too_few_shared_trees() {
        let s = tracks(&[(0.0, 0.0), (3.0, 0.5), (1.0, 4.0), (10.0, 10.0)]);
        let t = tracks(&[(0.0, 0.0), (3.0, 0.5), (1.0, 4.0), (-7.0, 2.0)]);
        assert!(pairwise_associate(&s, &t, &CgConfig::default()).is_none());
        let loose = CgConfig { tau: 3, ..CgConfig::default() };
        assert!(pairwise_associate(&s, &t, &loose).unwrap().permutation.len() >= 3);
    }

    #[test]
    fn collinear_matches_are_flagged() {
        let s = tracks(&[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)]);
        let m = pairwise_associate(&s, &s, &CgConfig { tau: 3, ..CgConfig::default() }).unwrap();
        assert!(m.weak_geometry);
    }
}
