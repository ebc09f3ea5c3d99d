//! Landmark SLAM over submap origins and universe tree positions, solved by
//! batch Levenberg–Marquardt with a Schur complement on the landmarks.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::clear::GlobalAssociation;
use crate::error::{Error, Result};
use crate::geometry::{fit_rigid, normalize_angle, Point2, Pose2};
use crate::submap::{CompactSubmap, SubmapId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryFactor {
    pub from: usize,
    pub to: usize,
    pub z: Pose2,
    pub information: Matrix3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationFactor {
    pub pose: usize,
    pub landmark: usize,
    /// Landmark position in the submap frame.
    pub p: Point2,
    pub information: Matrix2<f64>,
}

/// Soft anchor fixing one pose of a component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorFactor {
    pub pose: usize,
    pub value: Pose2,
    pub information: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub pose_ids: Vec<SubmapId>,
    pub poses: Vec<Pose2>,
    pub landmarks: Vec<Point2>,
    pub odometry: Vec<OdometryFactor>,
    pub observations: Vec<ObservationFactor>,
    pub priors: Vec<PriorFactor>,
    /// Agents whose trajectory shares no landmark with the reference agent.
    pub unaligned_agents: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub odom_sigma_xy: f64,
    pub odom_sigma_theta: f64,
    pub observation_sigma: f64,
    pub anchor_information: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { odom_sigma_xy: 0.05, odom_sigma_theta: 0.01, observation_sigma: 0.1, anchor_information: 1e8 }
    }
}

impl NoiseModel {
    pub fn odometry_information(&self) -> Matrix3<f64> {
        let a = 1.0 / (self.odom_sigma_xy * self.odom_sigma_xy);
        let b = 1.0 / (self.odom_sigma_theta * self.odom_sigma_theta);
        Matrix3::from_diagonal(&Vector3::new(a, a, b))
    }

    pub fn observation_information(&self) -> Matrix2<f64> {
        Matrix2::identity() / (self.observation_sigma * self.observation_sigma)
    }
}

fn rot_t(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

fn drot_t(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, c, -c, -s)
}

fn v2(p: Point2) -> Vector2<f64> {
    Vector2::new(p.x, p.y)
}

/// Upper-triangular `W` with `WᵀW = Ω`.
fn sqrt_info3(info: &Matrix3<f64>) -> Matrix3<f64> {
    Cholesky::new(*info).map(|c| c.l().transpose()).unwrap_or_else(Matrix3::zeros)
}

fn sqrt_info2(info: &Matrix2<f64>) -> Matrix2<f64> {
    Cholesky::new(*info).map(|c| c.l().transpose()).unwrap_or_else(Matrix2::zeros)
}

/// Unweighted odometry error `z⁻¹ ∘ between(x_from, x_to)` in local
/// coordinates and its Jacobians with respect to `x_from` and `x_to`.
pub fn odometry_error(xf: &Pose2, xt: &Pose2, z: &Pose2) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let dt = Vector2::new(xt.x - xf.x, xt.y - xf.y);
    let rz = rot_t(z.theta);
    let rf = rot_t(xf.theta);
    let exy = rz * (rf * dt - Vector2::new(z.x, z.y));
    let eth = normalize_angle(xt.theta - xf.theta - z.theta);
    let a = rz * rf;
    let dth = rz * drot_t(xf.theta) * dt;
    let jf = Matrix3::new(-a[(0, 0)], -a[(0, 1)], dth[0], -a[(1, 0)], -a[(1, 1)], dth[1], 0.0, 0.0, -1.0);
    let jt = Matrix3::new(a[(0, 0)], a[(0, 1)], 0.0, a[(1, 0)], a[(1, 1)], 0.0, 0.0, 0.0, 1.0);
    (Vector3::new(exy[0], exy[1], eth), jf, jt)
}

/// Unweighted observation error `x⁻¹(l) − p` and Jacobians with respect to
/// the pose and the landmark.
pub fn observation_error(x: &Pose2, l: Point2, p: Point2) -> (Vector2<f64>, Matrix2x3<f64>, Matrix2<f64>) {
    let d = Vector2::new(l.x - x.x, l.y - x.y);
    let r = rot_t(x.theta);
    let e = r * d - v2(p);
    let dth = drot_t(x.theta) * d;
    let jx = Matrix2x3::new(-r[(0, 0)], -r[(0, 1)], dth[0], -r[(1, 0)], -r[(1, 1)], dth[1]);
    (e, jx, r)
}

fn prior_error(x: &Pose2, v: &Pose2) -> Vector3<f64> {
    Vector3::new(x.x - v.x, x.y - v.y, normalize_angle(x.theta - v.theta))
}

/// Stacked weighted residual and Jacobian as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub jacobian: Vec<(usize, usize, f64)>,
    pub n_cols: usize,
}

impl Linearization {
    pub fn dense_jacobian(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.residual.len(), self.n_cols);
        for &(r, c, v) in &self.jacobian {
            j[(r, c)] += v;
        }
        j
    }
}

impl FactorGraph {
    pub fn n_pose_vars(&self) -> usize {
        3 * self.poses.len()
    }

    pub fn n_vars(&self) -> usize {
        3 * self.poses.len() + 2 * self.landmarks.len()
    }

    pub fn pose_index(&self, id: SubmapId) -> Option<usize> {
        self.pose_ids.iter().position(|&p| p == id)
    }

    fn check(&self) -> Result<()> {
        let np = self.poses.len();
        let nl = self.landmarks.len();
        let bad = self.odometry.iter().any(|f| f.from >= np || f.to >= np || f.from == f.to)
            || self.observations.iter().any(|f| f.pose >= np || f.landmark >= nl)
            || self.priors.iter().any(|f| f.pose >= np);
        if bad || self.pose_ids.len() != np {
            return Err(Error::InconsistentSizes("factor references a missing variable".into()));
        }
        Ok(())
    }

    /// `½ Σ ‖W e‖²`.
    pub fn cost(&self) -> f64 {
        let mut c = 0.0;
        for f in &self.odometry {
            let (e, _, _) = odometry_error(&self.poses[f.from], &self.poses[f.to], &f.z);
            c += e.dot(&(f.information * e));
        }
        for f in &self.observations {
            let (e, _, _) = observation_error(&self.poses[f.pose], self.landmarks[f.landmark], f.p);
            c += e.dot(&(f.information * e));
        }
        for f in &self.priors {
            let e = prior_error(&self.poses[f.pose], &f.value);
            c += e.dot(&(f.information * e));
        }
        0.5 * c
    }

    pub fn residual_and_jacobian(&self) -> Linearization {
        let np = self.poses.len();
        let lcol = |l: usize| 3 * np + 2 * l;
        let mut res = Vec::new();
        let mut jac = Vec::new();
        let mut push_block = |row: usize, col: usize, m: &[f64], rows: usize, cols: usize| {
            for r in 0..rows {
                for c in 0..cols {
                    let v = m[c * rows + r];
                    if v != 0.0 {
                        jac.push((row + r, col + c, v));
                    }
                }
            }
        };
        for f in &self.odometry {
            let w = sqrt_info3(&f.information);
            let (e, jf, jt) = odometry_error(&self.poses[f.from], &self.poses[f.to], &f.z);
            let row = res.len();
            res.extend((w * e).iter());
            push_block(row, 3 * f.from, (w * jf).as_slice(), 3, 3);
            push_block(row, 3 * f.to, (w * jt).as_slice(), 3, 3);
        }
        for f in &self.observations {
            let w = sqrt_info2(&f.information);
            let (e, jx, jl) = observation_error(&self.poses[f.pose], self.landmarks[f.landmark], f.p);
            let row = res.len();
            res.extend((w * e).iter());
            push_block(row, 3 * f.pose, (w * jx).as_slice(), 2, 3);
            push_block(row, lcol(f.landmark), (w * jl).as_slice(), 2, 2);
        }
        for f in &self.priors {
            let w = sqrt_info3(&f.information);
            let e = prior_error(&self.poses[f.pose], &f.value);
            let row = res.len();
            res.extend((w * e).iter());
            push_block(row, 3 * f.pose, w.as_slice(), 3, 3);
        }
        Linearization { residual: DVector::from_vec(res), jacobian: jac, n_cols: self.n_vars() }
    }

    /// Debug dump, one factor per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, (id, p)) in self.pose_ids.iter().zip(&self.poses).enumerate() {
            let _ = writeln!(s, "POSE {k} {id} {:.6} {:.6} {:.6}", p.x, p.y, p.theta);
        }
        for (k, l) in self.landmarks.iter().enumerate() {
            let _ = writeln!(s, "LANDMARK {k} {:.6} {:.6}", l.x, l.y);
        }
        for f in &self.odometry {
            let _ = writeln!(s, "ODOM {} {} {:.6} {:.6} {:.6}", f.from, f.to, f.z.x, f.z.y, f.z.theta);
        }
        for f in &self.observations {
            let _ = writeln!(s, "OBS {} {} {:.6} {:.6}", f.pose, f.landmark, f.p.x, f.p.y);
        }
        for f in &self.priors {
            let _ = writeln!(s, "PRIOR {} {:.6} {:.6} {:.6}", f.pose, f.value.x, f.value.y, f.value.theta);
        }
        s
    }
}

/// Builds the SLAM problem. `submaps[k]` corresponds to `assoc.maps[k]`; the
/// origin of each compact submap is its dead-reckoned pose in its agent's
/// odometry frame.
///
/// The lowest agent id defines the world frame. Other agents are aligned
/// through the first submap pair (in input order) that shares at least three
/// universe ids with an already aligned agent; agents that never connect keep
/// their own frame, get their own anchor and are reported as unaligned.
pub fn build_graph(submaps: &[CompactSubmap], assoc: &GlobalAssociation, noise: &NoiseModel) -> Result<FactorGraph> {
    if assoc.maps.len() != submaps.len()
        || submaps.iter().zip(&assoc.maps).any(|(s, m)| s.trees.len() != m.len())
    {
        return Err(Error::InconsistentSizes("association does not cover the submaps".into()));
    }
    let mut by_agent: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (k, s) in submaps.iter().enumerate() {
        by_agent.entry(s.id.agent).or_default().push(k);
    }
    for v in by_agent.values_mut() {
        v.sort_by_key(|&k| submaps[k].id.seq);
    }

    let odom_info = noise.odometry_information();
    let mut odometry = Vec::new();
    for list in by_agent.values() {
        for w in list.windows(2) {
            let (a, b) = (&submaps[w[0]], &submaps[w[1]]);
            if b.id.seq == a.id.seq + 1 {
                odometry.push(OdometryFactor { from: w[0], to: w[1], z: a.origin.between(&b.origin), information: odom_info });
            }
        }
    }

    // agent frame → world frame
    let mut frames: HashMap<u8, Pose2> = HashMap::new();
    let reference = *by_agent.keys().next().unwrap_or(&0);
    frames.insert(reference, Pose2::IDENTITY);
    loop {
        let mut progress = false;
        'search: for (t, st) in submaps.iter().enumerate() {
            if frames.contains_key(&st.id.agent) {
                continue;
            }
            for (s, ss) in submaps.iter().enumerate() {
                let Some(frame_s) = frames.get(&ss.id.agent).copied() else { continue };
                let mut src = Vec::new();
                let mut dst = Vec::new();
                for (j, &u) in assoc.maps[t].iter().enumerate() {
                    if let Some(i) = assoc.maps[s].iter().position(|&v| v == u) {
                        src.push(st.trees[j].position);
                        dst.push(ss.trees[i].position);
                    }
                }
                if src.len() < 3 {
                    continue;
                }
                let t_st = fit_rigid(&src, &dst).expect("non-empty");
                let world_t = frame_s.compose(&ss.origin).compose(&t_st);
                frames.insert(st.id.agent, world_t.compose(&st.origin.inverse()));
                progress = true;
                break 'search;
            }
        }
        if !progress {
            break;
        }
    }

    let mut poses = Vec::with_capacity(submaps.len());
    let mut unaligned = Vec::new();
    let mut priors = Vec::new();
    let anchor = Matrix3::identity() * noise.anchor_information;
    for (&agent, list) in &by_agent {
        let aligned = frames.contains_key(&agent);
        if !aligned {
            unaligned.push(agent);
        }
        if agent == reference || !aligned {
            let first = list[0];
            let frame = frames.get(&agent).copied().unwrap_or(Pose2::IDENTITY);
            priors.push(PriorFactor { pose: first, value: frame.compose(&submaps[first].origin), information: anchor });
        }
    }
    for s in submaps {
        poses.push(frames.get(&s.id.agent).copied().unwrap_or(Pose2::IDENTITY).compose(&s.origin));
    }

    let obs_info = noise.observation_information();
    let mut observations = Vec::new();
    let mut sums = vec![(Point2::ORIGIN, 0usize); assoc.universe_size];
    for (k, s) in submaps.iter().enumerate() {
        for (i, t) in s.trees.iter().enumerate() {
            let u = assoc.maps[k][i];
            observations.push(ObservationFactor { pose: k, landmark: u, p: t.position, information: obs_info });
            let w = poses[k].apply(t.position);
            sums[u].0 = sums[u].0 + w;
            sums[u].1 += 1;
        }
    }
    let landmarks = sums.iter().map(|&(p, n)| if n > 0 { p * (1.0 / n as f64) } else { p }).collect();
    Ok(FactorGraph {
        pose_ids: submaps.iter().map(|s| s.id).collect(),
        poses,
        landmarks,
        odometry,
        observations,
        priors,
        unaligned_agents: unaligned,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub rel_cost_tol: f64,
    pub gradient_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { max_iterations: 100, rel_cost_tol: 1e-9, gradient_tol: 1e-8, initial_lambda: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmIteration {
    pub iteration: usize,
    pub cost: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: Vec<LmIteration>,
}

struct LandmarkBlock {
    h: Matrix2<f64>,
    g: Vector2<f64>,
    /// `(pose index, H_pose_landmark)` per observing pose.
    links: Vec<(usize, Matrix2x3<f64>)>,
}

struct Normal {
    hpp: DMatrix<f64>,
    gp: DVector<f64>,
    landmarks: Vec<LandmarkBlock>,
}

impl Normal {
    fn gradient_norm(&self) -> f64 {
        let gl = self.landmarks.iter().map(|b| b.g.amax()).fold(0.0, f64::max);
        self.gp.amax().max(gl)
    }
}

fn add3(h: &mut DMatrix<f64>, r: usize, c: usize, m: &Matrix3<f64>) {
    let mut v = h.view_mut((3 * r, 3 * c), (3, 3));
    v += m;
}

fn normal_equations(g: &FactorGraph) -> Normal {
    let np = g.poses.len();
    let mut hpp = DMatrix::zeros(3 * np, 3 * np);
    let mut gp = DVector::zeros(3 * np);
    let mut landmarks: Vec<LandmarkBlock> = (0..g.landmarks.len())
        .map(|_| LandmarkBlock { h: Matrix2::zeros(), g: Vector2::zeros(), links: Vec::new() })
        .collect();
    for f in &g.odometry {
        let (e, jf, jt) = odometry_error(&g.poses[f.from], &g.poses[f.to], &f.z);
        let o = f.information;
        add3(&mut hpp, f.from, f.from, &(jf.transpose() * o * jf));
        add3(&mut hpp, f.to, f.to, &(jt.transpose() * o * jt));
        add3(&mut hpp, f.from, f.to, &(jf.transpose() * o * jt));
        add3(&mut hpp, f.to, f.from, &(jt.transpose() * o * jf));
        let mut v = gp.rows_mut(3 * f.from, 3);
        v += jf.transpose() * o * e;
        let mut v = gp.rows_mut(3 * f.to, 3);
        v += jt.transpose() * o * e;
    }
    for f in &g.priors {
        let e = prior_error(&g.poses[f.pose], &f.value);
        add3(&mut hpp, f.pose, f.pose, &f.information);
        let mut v = gp.rows_mut(3 * f.pose, 3);
        v += f.information * e;
    }
    for f in &g.observations {
        let (e, jx, jl) = observation_error(&g.poses[f.pose], g.landmarks[f.landmark], f.p);
        let o = f.information;
        add3(&mut hpp, f.pose, f.pose, &(jx.transpose() * o * jx));
        let mut v = gp.rows_mut(3 * f.pose, 3);
        v += jx.transpose() * o * e;
        let b = &mut landmarks[f.landmark];
        b.h += jl.transpose() * o * jl;
        b.g += jl.transpose() * o * e;
        // H_lp block stored as 2x3
        let hlp = jl.transpose() * o * jx;
        match b.links.iter_mut().find(|(p, _)| *p == f.pose) {
            Some((_, m)) => *m += hlp,
            None => b.links.push((f.pose, hlp)),
        }
    }
    Normal { hpp, gp, landmarks }
}

/// Solves the damped system; returns pose and landmark steps.
fn solve_step(n: &Normal, lambda: f64) -> Option<(DVector<f64>, Vec<Vector2<f64>>)> {
    let dim = n.hpp.nrows();
    let mut s = n.hpp.clone();
    for i in 0..dim {
        s[(i, i)] += lambda;
    }
    let mut rhs = -n.gp.clone();
    let mut inv = Vec::with_capacity(n.landmarks.len());
    for b in &n.landmarks {
        let hl = b.h + Matrix2::identity() * lambda;
        let hi = hl.try_inverse()?;
        for (pa, wa) in &b.links {
            // wa is H_lp (2x3); H_pl = waᵀ
            let left = wa.transpose() * hi;
            for (pb, wb) in &b.links {
                let m = left * wb;
                let mut v = s.view_mut((3 * pa, 3 * pb), (3, 3));
                v -= m;
            }
            let mut v = rhs.rows_mut(3 * pa, 3);
            v += left * b.g;
        }
        inv.push(hi);
    }
    let dp = if dim == 0 { DVector::zeros(0) } else { Cholesky::new(s)?.solve(&rhs) };
    let dl = n
        .landmarks
        .iter()
        .zip(&inv)
        .map(|(b, hi)| {
            let mut r = -b.g;
            for (p, w) in &b.links {
                r -= w * dp.rows(3 * p, 3);
            }
            hi * r
        })
        .collect();
    Some((dp, dl))
}

fn apply_step(g: &FactorGraph, dp: &DVector<f64>, dl: &[Vector2<f64>]) -> FactorGraph {
    let mut out = g.clone();
    for (k, p) in out.poses.iter_mut().enumerate() {
        *p = Pose2::new(p.x + dp[3 * k], p.y + dp[3 * k + 1], p.theta + dp[3 * k + 2]);
    }
    for (l, d) in out.landmarks.iter_mut().zip(dl) {
        *l = Point2::new(l.x + d[0], l.y + d[1]);
    }
    out
}

/// Levenberg–Marquardt. Only steps that strictly decrease the cost are kept.
pub fn optimize(graph: &mut FactorGraph, cfg: &LmConfig) -> Result<OptimizeReport> {
    graph.check()?;
    let initial_cost = graph.cost();
    let mut cost = initial_cost;
    let mut lambda = cfg.initial_lambda;
    let mut log = Vec::new();
    let mut it = 0;
    'outer: while it < cfg.max_iterations {
        let n = normal_equations(graph);
        if n.gradient_norm() < cfg.gradient_tol {
            break;
        }
        loop {
            it += 1;
            let Some((dp, dl)) = solve_step(&n, lambda) else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return Err(Error::SingularSystem);
                }
                log.push(LmIteration { iteration: it, cost, lambda, accepted: false });
                if it >= cfg.max_iterations {
                    break 'outer;
                }
                continue;
            };
            let cand = apply_step(graph, &dp, &dl);
            let new_cost = cand.cost();
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                *graph = cand;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                log.push(LmIteration { iteration: it, cost, lambda, accepted: true });
                if rel < cfg.rel_cost_tol {
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            log.push(LmIteration { iteration: it, cost, lambda, accepted: false });
            if lambda > 1e12 || it >= cfg.max_iterations {
                break 'outer;
            }
        }
    }
    Ok(OptimizeReport { initial_cost, final_cost: cost, iterations: log })
}

/// Mean translational error, optionally after the best rigid alignment of
/// `estimated` onto `truth`.
pub fn ate(estimated: &[Pose2], truth: &[Pose2], align: bool) -> Result<f64> {
    if estimated.len() != truth.len() || estimated.is_empty() {
        return Err(Error::LengthMismatch(estimated.len(), truth.len()));
    }
    let est: Vec<Point2> = estimated.iter().map(Pose2::translation).collect();
    let tru: Vec<Point2> = truth.iter().map(Pose2::translation).collect();
    let t = if align { fit_rigid(&est, &tru).unwrap_or(Pose2::IDENTITY) } else { Pose2::IDENTITY };
    Ok(est.iter().zip(&tru).map(|(e, g)| t.apply(*e).dist(*g)).sum::<f64>() / est.len() as f64)
}

/// World positions of a submap's trees given its optimized origin.
pub fn reanchor(origin: &Pose2, trees: &[Point2]) -> Vec<Point2> {
    trees.iter().map(|&p| origin.apply(p)).collect()
}
