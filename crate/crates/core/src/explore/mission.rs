//! Closed-loop exploration mission: sense, detect, map, plan, step.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use super::{
    astar_masked, closest_frontier, cluster_frontiers, coverage, extract_frontiers, inflate, select_frontier, Frontier,
    PlannerConfig,
};
use crate::detect::{detect_trees, AcceptanceGate, DpMeansConfig};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2, RngSeed};
use crate::sim::{corrupt_odometry, Beam, Scan, simulate_scan, step_vehicle, Command, DriftModel, Forest, Rect, SensorModel, VehicleLimits, VehicleState};
use crate::submap::{
    encode_submap, Cell, CompactSubmap, OccupancyGrid2D, OccupancyParams, Submap, SubmapId, SubmapScheduler,
    DEFAULT_SUBMAP_PERIOD, DEFAULT_TAU_CULL,
};

#[derive(Debug, Clone, PartialEq)]
pub enum PlannerKind {
    /// Heading-aware cost with continuous hysteretic re-selection.
    Proposed,
    /// Closest frontier, re-selected only when the target is reached or
    /// stops being a frontier.
    Baseline,
    /// Cycles through fixed world-frame waypoints until the duration cap.
    Waypoints(Vec<Point2>),
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Proposed => "proposed",
            PlannerKind::Baseline => "baseline",
            PlannerKind::Waypoints(_) => "waypoints",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub planner: PlannerKind,
    pub planner_cfg: PlannerConfig,
    pub duration_cap: f64,
    pub dt: f64,
    pub scan_period: f64,
    pub limits: VehicleLimits,
    pub sensor: SensorModel,
    pub occupancy: OccupancyParams,
    /// Returns beyond this range are not integrated into the exploration
    /// grid.
    pub mapping_range: f64,
    pub drift: DriftModel,
    pub submap_period: f64,
    pub tau_cull: u32,
    /// Run tree detection and emit submaps.
    pub detect: bool,
    pub dp_means: DpMeansConfig,
    /// Detections farther than this from the sensor are not tracked.
    pub detection_range: f64,
    pub gate: AcceptanceGate,
    pub lookahead: f64,
    pub replan_period: f64,
    pub goal_tolerance: f64,
    /// A goal held longer than this is abandoned and blacklisted.
    pub goal_timeout: f64,
    pub min_cluster: usize,
    /// Extra mapped border around the search region, meters.
    pub grid_margin: f64,
    pub coverage_period: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            planner: PlannerKind::Proposed,
            planner_cfg: PlannerConfig::default(),
            duration_cap: 900.0,
            dt: 0.1,
            scan_period: 0.2,
            limits: VehicleLimits::default(),
            sensor: SensorModel::default(),
            occupancy: OccupancyParams::default(),
            mapping_range: 5.0,
            drift: DriftModel::NONE,
            submap_period: DEFAULT_SUBMAP_PERIOD,
            tau_cull: DEFAULT_TAU_CULL,
            detect: true,
            dp_means: DpMeansConfig::default(),
            detection_range: 5.0,
            gate: AcceptanceGate::default(),
            lookahead: 1.0,
            replan_period: 0.5,
            goal_tolerance: 0.5,
            goal_timeout: 30.0,
            min_cluster: 3,
            grid_margin: 5.0,
            coverage_period: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSetup {
    pub agent: u8,
    pub region: Rect,
    /// World-frame start pose. Each agent's odometry frame starts at identity.
    pub start: Pose2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmapRecord {
    pub compact: CompactSubmap,
    pub bytes: Vec<u8>,
    /// World-frame pose of the vehicle when the submap was opened.
    pub truth_origin: Pose2,
    /// Index of the forest tree behind each track, if one lies within 0.5 m.
    pub tree_truth: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionLog {
    pub agent: u8,
    pub planner: String,
    pub region: Rect,
    pub start: Pose2,
    pub times: Vec<f64>,
    /// World-frame true poses.
    pub truth: Vec<Pose2>,
    /// Dead-reckoned poses in the agent's odometry frame.
    pub odom: Vec<Pose2>,
    pub speeds: Vec<f64>,
    pub coverage: Vec<(f64, f64)>,
    pub completion_time: Option<f64>,
    pub duration_exceeded: bool,
    pub distance: f64,
    pub submaps: Vec<SubmapRecord>,
    pub collisions: usize,
    pub replans: usize,
    pub switches: usize,
}

impl MissionLog {
    pub fn elapsed(&self) -> f64 {
        self.completion_time.unwrap_or_else(|| self.times.last().copied().unwrap_or(0.0))
    }

    /// Distance over elapsed time.
    pub fn average_speed(&self) -> f64 {
        let t = self.elapsed();
        if t > 0.0 {
            self.distance / t
        } else {
            0.0
        }
    }

    /// Mean speed over ticks where the vehicle was moving faster than 0.1 m/s.
    pub fn moving_speed(&self) -> f64 {
        let moving: Vec<f64> = self.speeds.iter().copied().filter(|&v| v > 0.1).collect();
        if moving.is_empty() {
            0.0
        } else {
            moving.iter().sum::<f64>() / moving.len() as f64
        }
    }

    pub fn final_coverage(&self) -> f64 {
        self.coverage.last().map_or(0.0, |c| c.1)
    }

    pub fn payload_bytes(&self) -> usize {
        self.submaps.iter().map(|s| s.bytes.len()).sum()
    }

    /// Dead-reckoning ATE: odometry mapped into the world through the true
    /// start pose, compared with the truth.
    pub fn dead_reckoning_ate(&self) -> f64 {
        if self.truth.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .odom
            .iter()
            .zip(&self.truth)
            .map(|(o, t)| self.start.compose(o).translation().dist(t.translation()))
            .sum();
        s / self.truth.len() as f64
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "agent = {}", self.agent);
        let _ = writeln!(s, "planner = {}", self.planner);
        match self.completion_time {
            Some(t) => {
                let _ = writeln!(s, "completion_time = {t:.3}");
            }
            None => {
                let _ = writeln!(s, "completion_time = none");
            }
        }
        let _ = writeln!(s, "duration_exceeded = {}", self.duration_exceeded);
        let _ = writeln!(s, "distance = {:.4}", self.distance);
        let _ = writeln!(s, "average_speed = {:.4}", self.average_speed());
        let _ = writeln!(s, "moving_speed = {:.4}", self.moving_speed());
        let _ = writeln!(s, "final_coverage = {:.6}", self.final_coverage());
        let _ = writeln!(s, "submaps = {}", self.submaps.len());
        let _ = writeln!(s, "payload_bytes = {}", self.payload_bytes());
        let _ = writeln!(s, "collisions = {}", self.collisions);
        let _ = writeln!(s, "replans = {}", self.replans);
        let _ = writeln!(s, "switches = {}", self.switches);
        s
    }

    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("t,true_x,true_y,true_theta,odom_x,odom_y,odom_theta,speed\n");
        for k in 0..self.times.len() {
            let (t, o) = (&self.truth[k], &self.odom[k]);
            let _ = writeln!(
                s,
                "{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4}",
                self.times[k], t.x, t.y, t.theta, o.x, o.y, o.theta, self.speeds[k]
            );
        }
        s
    }

    pub fn coverage_csv(&self) -> String {
        let mut s = String::from("t,coverage\n");
        for (t, c) in &self.coverage {
            let _ = writeln!(s, "{t:.2},{c:.6}");
        }
        s
    }

    pub fn submaps_csv(&self) -> String {
        let mut s = String::from("agent,seq,trees,bytes,cumulative_bytes\n");
        let mut total = 0;
        for r in &self.submaps {
            total += r.bytes.len();
            let _ = writeln!(s, "{},{},{},{},{}", r.compact.id.agent, r.compact.id.seq, r.compact.trees.len(), r.bytes.len(), total);
        }
        s
    }

    /// Writes the summary, trajectory, coverage and payload files and the raw
    /// submap stream (concatenated length-prefixed payloads) into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let a = self.agent;
        std::fs::write(dir.join(format!("agent{a}_summary.txt")), self.summary_text())?;
        std::fs::write(dir.join(format!("agent{a}_trajectory.csv")), self.trajectory_csv())?;
        std::fs::write(dir.join(format!("agent{a}_coverage.csv")), self.coverage_csv())?;
        std::fs::write(dir.join(format!("agent{a}_submaps.csv")), self.submaps_csv())?;
        let mut stream = Vec::new();
        for r in &self.submaps {
            stream.extend_from_slice(&(r.bytes.len() as u32).to_le_bytes());
            stream.extend_from_slice(&r.bytes);
        }
        std::fs::write(dir.join(format!("agent{a}_submaps.bin")), stream)?;
        Ok(())
    }
}

/// Simulates every agent over the same forest. Agents do not interact, so
/// running them one after another is equivalent to lockstep ticking.
pub fn run_mission(forest: &Forest, agents: &[AgentSetup], cfg: &MissionConfig, seed: RngSeed) -> Result<Vec<MissionLog>> {
    validate(cfg)?;
    agents.iter().map(|a| run_agent(forest, a, cfg, seed.derive(&format!("agent{}", a.agent)))).collect()
}

fn validate(cfg: &MissionConfig) -> Result<()> {
    cfg.sensor.validate()?;
    let positive = [
        ("dt", cfg.dt),
        ("scan_period", cfg.scan_period),
        ("submap_period", cfg.submap_period),
        ("replan_period", cfg.replan_period),
        ("duration_cap", cfg.duration_cap),
        ("resolution", cfg.occupancy.resolution),
        ("mapping_range", cfg.mapping_range),
        ("switch_margin", cfg.planner_cfg.switch_margin),
    ];
    for (name, v) in positive {
        if !(v > 0.0) {
            return Err(Error::Config(format!("{name} must be > 0")));
        }
    }
    if !(cfg.planner_cfg.lambda >= 0.0) {
        return Err(Error::Config("lambda must be ≥ 0".into()));
    }
    Ok(())
}

struct Goal {
    frontier: Frontier,
    since: f64,
}

struct Agent<'a> {
    cfg: &'a MissionConfig,
    region: Rect,
    grid: OccupancyGrid2D,
    blocked: Vec<bool>,
    /// Obstacles dilated by most of the safety radius; pursuit shortcuts must avoid it.
    hard: Vec<bool>,
    blacklist: Vec<Point2>,
    goal: Option<Goal>,
    path: Vec<Point2>,
    waypoint: usize,
    replans: usize,
    switches: usize,
}

impl Agent<'_> {
    fn candidates(&self) -> Vec<Frontier> {
        let w = self.grid.width;
        let raw: Vec<Frontier> = extract_frontiers(&self.grid, &self.region)
            .into_iter()
            .filter(|f| !self.blocked[f.cell.1 * w + f.cell.0])
            .collect();
        cluster_frontiers(&raw, self.cfg.min_cluster)
            .into_iter()
            .filter(|f| self.blacklist.iter().all(|b| b.dist(f.position) > 0.5))
            .collect()
    }

    fn plan_to(&self, pose: &Pose2, goal: Cell, allow_unknown: bool) -> Result<Vec<Point2>> {
        let start = self.grid.cell_of(pose.translation()).ok_or(Error::NoPath)?;
        let escape = (self.cfg.planner_cfg.safety_radius / self.grid.resolution()).ceil() as usize + 1;
        let cells = astar_masked(&self.grid, start, goal, &self.blocked, allow_unknown, escape)?;
        Ok(cells.into_iter().skip(1).map(|c| self.grid.cell_center(c)).collect())
    }

    /// Re-selects the goal and path. Returns false once no reachable
    /// frontiers are left.
    fn replan(&mut self, pose: &Pose2, t: f64) -> bool {
        self.replans += 1;
        self.blocked = inflate(&self.grid, self.cfg.planner_cfg.safety_radius);
        self.hard = inflate(&self.grid, 0.75 * self.cfg.planner_cfg.safety_radius);
        if let PlannerKind::Waypoints(wps) = &self.cfg.planner {
            for _ in 0..wps.len() {
                let target = wps[self.waypoint % wps.len()];
                if pose.translation().dist(target) < self.cfg.goal_tolerance {
                    self.waypoint += 1;
                    continue;
                }
                match self.grid.cell_of(target).map(|c| self.plan_to(pose, c, true)) {
                    Some(Ok(p)) => {
                        self.path = p;
                        return true;
                    }
                    _ => self.waypoint += 1,
                }
            }
            self.path.clear();
            return true;
        }
        loop {
            let cands = self.candidates();
            if cands.is_empty() {
                self.goal = None;
                self.path.clear();
                return false;
            }
            // the active goal survives while some cluster is still near it
            let active = self.goal.as_ref().and_then(|g| {
                cands
                    .iter()
                    .filter(|f| f.position.dist(g.frontier.position) < 1.0)
                    .min_by(|a, b| {
                        a.position.dist_sq(g.frontier.position).total_cmp(&b.position.dist_sq(g.frontier.position))
                    })
                    .copied()
            });
            let (chosen, switched) = match (&self.cfg.planner, active) {
                (PlannerKind::Baseline, Some(a)) => (a, false),
                (PlannerKind::Baseline, None) => (closest_frontier(&cands, pose).expect("non-empty"), true),
                _ => {
                    let s = select_frontier(&cands, pose, &self.cfg.planner_cfg, active.as_ref()).expect("non-empty");
                    (s.frontier, s.switched)
                }
            };
            match self.plan_to(pose, chosen.cell, false) {
                Ok(p) => {
                    let since = match (&self.goal, switched) {
                        (Some(g), false) => g.since,
                        _ => t,
                    };
                    if switched && self.goal.is_some() {
                        self.switches += 1;
                    }
                    self.goal = Some(Goal { frontier: chosen, since });
                    self.path = p;
                    return true;
                }
                Err(_) => {
                    self.blacklist.push(chosen.position);
                    self.goal = None;
                }
            }
        }
    }

    fn line_of_sight(&self, a: Point2, b: Point2) -> bool {
        let step = self.grid.resolution() / 3.0;
        let n = (a.dist(b) / step).ceil() as usize;
        (1..=n).all(|i| {
            let q = a + (b - a) * (i as f64 / n as f64);
            if q.dist(a) < self.grid.resolution() {
                return true;
            }
            self.grid.cell_of(q).is_some_and(|c| {
                self.grid.state(c) != crate::submap::CellState::Occupied && !self.hard[c.1 * self.grid.width + c.0]
            })
        })
    }

    /// Pure pursuit: heading toward the first path point beyond the
    /// lookahead, speed reduced with heading error and near the path end.
    fn command(&mut self, state: &VehicleState) -> Command {
        let p = state.pose.translation();
        if self.path.is_empty() {
            return Command { speed: 0.0, heading: state.pose.theta };
        }
        let nearest = (0..self.path.len())
            .min_by(|&a, &b| self.path[a].dist_sq(p).total_cmp(&self.path[b].dist_sq(p)))
            .unwrap_or(0);
        self.path.drain(..nearest);
        let mut target = self.path[0];
        for q in &self.path[1..] {
            if q.dist(p) > self.cfg.lookahead || !self.line_of_sight(p, *q) {
                break;
            }
            target = *q;
        }
        let remaining: f64 = std::iter::once(p).chain(self.path.iter().copied()).collect::<Vec<_>>().windows(2).map(|w| w[0].dist(w[1])).sum();
        let heading = (target - p).angle();
        let err = crate::geometry::normalize_angle(heading - state.pose.theta).abs();
        let align = (1.0 - err / FRAC_PI_2).clamp(0.0, 1.0);
        let brake = (2.0 * self.cfg.limits.a_max * remaining).sqrt();
        // pure-pursuit curvature 2·sin(α)/L must stay within the yaw-rate limit
        let chord = target.dist(p).max(1e-3);
        let sin_a = err.sin().abs().max(1e-6);
        let turn = self.cfg.limits.yaw_rate_max * chord / (2.0 * sin_a);
        Command { speed: (self.cfg.limits.v_max * align).min(brake).min(turn), heading }
    }
}

fn run_agent(forest: &Forest, setup: &AgentSetup, cfg: &MissionConfig, seed: RngSeed) -> Result<MissionLog> {
    let region = setup.region;
    let bounds = region.expanded(cfg.grid_margin);
    let grid = OccupancyGrid2D::covering(bounds.min, bounds.max, cfg.occupancy);
    let mut agent = Agent {
        cfg,
        region,
        blocked: vec![false; grid.width * grid.height],
        hard: vec![false; grid.width * grid.height],
        grid,
        blacklist: Vec::new(),
        goal: None,
        path: Vec::new(),
        waypoint: 0,
        replans: 0,
        switches: 0,
    };
    let mut log = MissionLog {
        agent: setup.agent,
        planner: cfg.planner.name().to_string(),
        region,
        start: setup.start,
        times: Vec::new(),
        truth: Vec::new(),
        odom: Vec::new(),
        speeds: Vec::new(),
        coverage: Vec::new(),
        completion_time: None,
        duration_exceeded: false,
        distance: 0.0,
        submaps: Vec::new(),
        collisions: 0,
        replans: 0,
        switches: 0,
    };

    let scan_seed = seed.derive("scan");
    let odom_seed = seed.derive("odom");
    let every = |period: f64| ((period / cfg.dt).round() as usize).max(1);
    let (scan_every, replan_every, coverage_every) =
        (every(cfg.scan_period), every(cfg.replan_period), every(cfg.coverage_period));
    let steps = (cfg.duration_cap / cfg.dt).round() as usize;

    let mut state = VehicleState { pose: setup.start, speed: 0.0 };
    let mut odom = Pose2::IDENTITY;
    let mut sched = SubmapScheduler::new(cfg.submap_period);
    let mut submap = Submap::without_grid(SubmapId::new(setup.agent, 0), odom);
    let mut submap_truth = state.pose;
    let mut finished = false;

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if let Some(b) = sched.tick(t, odom) {
            emit(&mut log, &mut submap, submap_truth, forest, cfg)?;
            submap = Submap::without_grid(SubmapId::new(setup.agent, b.new_seq), b.new_origin);
            submap_truth = state.pose;
        }
        if k % scan_every == 0 {
            let scan = simulate_scan(forest, state.pose, &cfg.sensor, scan_seed.nth(k as u64))?;
            // the onboard planner maps with the true pose; drift only enters
            // the submap stream
            agent.grid.update_occupancy(&truncate(&scan, cfg.mapping_range), &state.pose);
            if cfg.detect {
                let mut dets = detect_trees(&scan, &cfg.dp_means, &cfg.gate);
                dets.retain(|d| d.circle.center.norm() <= cfg.detection_range);
                submap.update(&dets, &submap.origin_estimate.between(&odom))?;
            }
        }
        if k % coverage_every == 0 {
            log.coverage.push((t, coverage(&agent.grid, &region)));
        }
        log.times.push(t);
        log.truth.push(state.pose);
        log.odom.push(odom);
        log.speeds.push(state.speed);
        if k == steps {
            break;
        }

        let reached = agent.goal.as_ref().is_some_and(|g| g.frontier.position.dist(state.pose.translation()) < cfg.goal_tolerance);
        let stale = agent.goal.as_ref().is_some_and(|g| t - g.since > cfg.goal_timeout);
        if stale {
            let g = agent.goal.take().expect("stale goal");
            agent.blacklist.push(g.frontier.position);
        }
        if reached {
            // a frontier that survives a visit cannot be observed from here
            let g = agent.goal.take().expect("reached goal");
            agent.blacklist.push(g.frontier.position);
        }
        let must = agent.goal.is_none() || agent.path.is_empty() || k % replan_every == 0;
        if must && !agent.replan(&state.pose, t) {
            log.completion_time = Some(t);
            finished = true;
            log.coverage.push((t, coverage(&agent.grid, &region)));
            break;
        }

        let cmd = agent.command(&state);
        let mut next = step_vehicle(state, cmd, cfg.dt, &cfg.limits);
        if let Some(tree) = forest.trees.iter().find(|tr| tr.center.dist(next.pose.translation()) < tr.radius) {
            // contact: slide along the trunk surface, or stay put if that is
            // blocked too
            log.collisions += 1;
            let d = next.pose.translation() - tree.center;
            let dir = if d.norm() > 1e-9 { d * (1.0 / d.norm()) } else { state.pose.translation() - tree.center };
            let out = tree.center + dir * ((tree.radius + 0.02) / dir.norm().max(1e-9));
            let pos = if forest.is_inside_tree(out) { state.pose.translation() } else { out };
            next = VehicleState { pose: Pose2::new(pos.x, pos.y, next.pose.theta), speed: 0.5 * next.speed };
        }
        let inc = state.pose.between(&next.pose);
        log.distance += inc.translation().norm();
        odom = odom.compose(&corrupt_odometry(&inc, &cfg.drift, odom_seed.nth(k as u64)));
        state = next;
    }
    log.duration_exceeded = !finished;
    log.replans = agent.replans;
    log.switches = agent.switches;
    emit(&mut log, &mut submap, submap_truth, forest, cfg)?;
    Ok(log)
}

fn truncate(scan: &Scan, range: f64) -> Scan {
    if range >= scan.max_range {
        return scan.clone();
    }
    Scan {
        beams: scan.beams.iter().map(|b| Beam { bearing: b.bearing, range: b.range.filter(|&r| r <= range) }).collect(),
        max_range: range,
        ..*scan
    }
}

fn emit(log: &mut MissionLog, submap: &mut Submap, truth_origin: Pose2, forest: &Forest, cfg: &MissionConfig) -> Result<()> {
    submap.finalize(cfg.tau_cull)?;
    let bytes = encode_submap(submap);
    let tree_truth = submap
        .trees
        .iter()
        .map(|tr| {
            let w = truth_origin.apply(tr.position);
            forest
                .trees
                .iter()
                .enumerate()
                .map(|(i, t)| (i, t.center.dist(w)))
                .filter(|&(_, d)| d < 0.5)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
        })
        .collect();
    log.submaps.push(SubmapRecord { compact: submap.compact(), bytes, truth_origin, tree_truth });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_small_region_completes() {
        let region = Rect::new(0.0, 0.0, 5.0, 5.0);
        let forest = Forest::empty(region);
        for planner in [PlannerKind::Proposed, PlannerKind::Baseline] {
            let cfg = MissionConfig { planner, detect: false, duration_cap: 120.0, ..Default::default() };
            let start = Pose2::new(2.5, 2.5, 0.0);
            let logs = run_mission(&forest, &[AgentSetup { agent: 0, region, start }], &cfg, RngSeed(1)).unwrap();
            let log = &logs[0];
            assert!(log.completion_time.is_some(), "{}", log.summary_text());
            assert!((log.final_coverage() - 1.0).abs() < 1e-12, "{}", log.summary_text());
        }
    }
}
