//! Evaluation experiments behind the CLI and the acceptance suite. Every
//! experiment is a pure function of its parameters and seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::clear::{check_cycle_consistency, clear_solve, match_counts, synthetic_instance, ClearConfig, SyntheticSpec};
use crate::detect::{detect_trees, AcceptanceGate, DpMeansConfig};
use crate::error::{Error, Result};
use crate::explore::{run_mission, AgentSetup, MissionConfig, MissionLog, PlannerKind};
use crate::geometry::{Point2, Pose2, RngSeed};
use crate::glare::{build_glare, glarot_distance, GlareConfig};
use crate::pipeline::{evaluate_associations, interleave, GroundTruth, PipelineConfig, PipelineState};
use crate::sim::{generate_forest, simulate_scan, DriftModel, Forest, Rect, SensorModel, DEFAULT_RADIUS_RANGE};
use crate::slam::ate;

/// True-positive rule for a detection against a ground-truth trunk.
pub const TP_CENTER_TOLERANCE: f64 = 0.5;
pub const TP_RADIUS_TOLERANCE: f64 = 0.30;

fn scene_region() -> Rect {
    Rect::new(-15.0, -15.0, 15.0, 15.0)
}

fn random_heading(seed: RngSeed) -> f64 {
    seed.rng().random_range(-std::f64::consts::PI..std::f64::consts::PI)
}

/// Counts one-to-one true positives between world-frame detections
/// `(center, radius)` and the forest, closest pairs first.
pub fn count_true_positives(detections: &[(Point2, f64)], forest: &Forest) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (d, &(c, r)) in detections.iter().enumerate() {
        for (t, tree) in forest.trees.iter().enumerate() {
            let dist = c.dist(tree.center);
            if dist < TP_CENTER_TOLERANCE && (r - tree.radius).abs() < TP_RADIUS_TOLERANCE * tree.radius {
                pairs.push((dist, d, t));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detections.len()];
    let mut used_t = vec![false; forest.trees.len()];
    let mut tp = 0;
    for (_, d, t) in pairs {
        if !used_d[d] && !used_t[t] {
            used_d[d] = true;
            used_t[t] = true;
            tp += 1;
        }
    }
    tp
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectTrial {
    pub detections: usize,
    pub true_positives: usize,
}

/// One scan from the centre of a fresh 30×30 m forest with a random heading.
pub fn detect_trial(density: f64, sigma: f64, seed: RngSeed) -> Result<DetectTrial> {
    let forest = generate_forest(density, scene_region(), DEFAULT_RADIUS_RANGE, seed.derive("forest"))?
        .clear_around(Point2::ORIGIN, 1.0);
    let pose = Pose2::new(0.0, 0.0, random_heading(seed.derive("heading")));
    let sensor = SensorModel { range_noise_sigma: sigma, ..SensorModel::default() };
    let scan = simulate_scan(&forest, pose, &sensor, seed.derive("scan"))?;
    let dets: Vec<(Point2, f64)> = detect_trees(&scan, &DpMeansConfig::default(), &AcceptanceGate::default())
        .iter()
        .map(|d| (pose.apply(d.circle.center), d.circle.radius))
        .collect();
    Ok(DetectTrial { detections: dets.len(), true_positives: count_true_positives(&dets, &forest) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectRow {
    pub density: f64,
    pub sigma: f64,
    pub seeds: u64,
    /// Seeds with at least one detection; precision is averaged over these.
    pub scored: u64,
    pub mean_precision: f64,
    pub detections: usize,
    pub true_positives: usize,
}

pub fn detect_row(density: f64, sigma: f64, seeds: u64, base: RngSeed) -> Result<DetectRow> {
    let mut row = DetectRow { density, sigma, seeds, scored: 0, mean_precision: 0.0, detections: 0, true_positives: 0 };
    let mut sum = 0.0;
    for k in 0..seeds {
        let t = detect_trial(density, sigma, base.nth(k))?;
        row.detections += t.detections;
        row.true_positives += t.true_positives;
        if t.detections > 0 {
            row.scored += 1;
            sum += t.true_positives as f64 / t.detections as f64;
        }
    }
    row.mean_precision = if row.scored == 0 { 1.0 } else { sum / row.scored as f64 };
    Ok(row)
}

pub fn detect_csv(rows: &[DetectRow]) -> String {
    let mut s = String::from("density,sigma,seeds,scored,mean_precision,detections,true_positives\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{},{}",
            r.density, r.sigma, r.seeds, r.scored, r.mean_precision, r.detections, r.true_positives
        );
    }
    s
}

/// Relative pose between the two scans of an overlapping pair.
pub const GLAROT_PAIR_OFFSET: Pose2 = Pose2 { x: 0.5, y: 0.3, theta: 0.4 };

/// GLAROT distances `(overlapping, disjoint)` for one seed. The overlapping
/// pair is two nearby scans of one forest; the disjoint pair uses the same
/// relative pose in an independently drawn forest. Descriptors are raw
/// (unnormalised) histograms of the detected trunk centres.
pub fn glarot_trial(density: f64, glare: &GlareConfig, seed: RngSeed) -> Result<(f64, f64)> {
    let a = Pose2::new(0.0, 0.0, random_heading(seed.derive("heading")));
    let b = a.compose(&GLAROT_PAIR_OFFSET);
    let region = scene_region();
    let same = generate_forest(density, region, DEFAULT_RADIUS_RANGE, seed.derive("forest"))?
        .clear_around(a.translation(), 1.0)
        .clear_around(b.translation(), 1.0);
    let other = generate_forest(density, region, DEFAULT_RADIUS_RANGE, seed.derive("disjoint"))?
        .clear_around(b.translation(), 1.0);
    let sensor = SensorModel::default();
    let describe = |forest: &Forest, pose: Pose2, label: &str| -> Result<_> {
        let scan = simulate_scan(forest, pose, &sensor, seed.derive(label))?;
        let centers: Vec<Point2> = detect_trees(&scan, &DpMeansConfig::default(), &AcceptanceGate::default())
            .iter()
            .map(|d| d.circle.center)
            .collect();
        Ok(build_glare(&centers, glare))
    };
    let ga = describe(&same, a, "scan_a")?;
    let gb = describe(&same, b, "scan_b")?;
    let gc = describe(&other, b, "scan_c")?;
    Ok((glarot_distance(&ga, &gb)?, glarot_distance(&ga, &gc)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlarotRow {
    pub density: f64,
    pub seeds: u64,
    pub overlapping_mean: f64,
    pub disjoint_mean: f64,
}

impl GlarotRow {
    pub fn margin(&self) -> f64 {
        self.disjoint_mean - self.overlapping_mean
    }
}

pub fn glarot_row(density: f64, glare: &GlareConfig, seeds: u64, base: RngSeed) -> Result<GlarotRow> {
    let (mut o, mut d) = (0.0, 0.0);
    for k in 0..seeds {
        let (a, b) = glarot_trial(density, glare, base.nth(k))?;
        o += a;
        d += b;
    }
    let n = seeds.max(1) as f64;
    Ok(GlarotRow { density, seeds, overlapping_mean: o / n, disjoint_mean: d / n })
}

pub fn glarot_csv(rows: &[GlarotRow]) -> String {
    let mut s = String::from("density,seeds,overlapping_mean,disjoint_mean,margin\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6}", r.density, r.seeds, r.overlapping_mean, r.disjoint_mean, r.margin());
    }
    s
}

/// Synthetic multiway regime used for the CLEAR precision/recall harness.
pub fn clear_harness_spec(corrupt_frac: f64) -> SyntheticSpec {
    SyntheticSpec { universe: 20, submaps: 10, observe_prob: 0.5, pair_prob: 1.0, corrupt_frac }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearTrial {
    pub corrupt_frac: f64,
    pub input_correct: usize,
    pub input_total: usize,
    pub output_correct: usize,
    pub output_total: usize,
    pub cycle_consistent: bool,
}

fn ratio(c: usize, t: usize) -> f64 {
    if t == 0 {
        1.0
    } else {
        c as f64 / t as f64
    }
}

impl ClearTrial {
    pub fn input_precision(&self) -> f64 {
        ratio(self.input_correct, self.input_total)
    }

    pub fn output_precision(&self) -> f64 {
        ratio(self.output_correct, self.output_total)
    }

    /// Precision and correct-match count both at least as good as the input.
    pub fn improves_both(&self) -> bool {
        self.output_precision() >= self.input_precision() && self.output_correct >= self.input_correct
    }
}

/// One corrupted synthetic instance with a corruption rate drawn from
/// `[lo, hi]`, solved by CLEAR.
pub fn clear_trial(lo: f64, hi: f64, cfg: &ClearConfig, seed: RngSeed) -> Result<ClearTrial> {
    let corrupt_frac = if hi > lo { seed.derive("rate").rng().random_range(lo..=hi) } else { lo };
    let inst = synthetic_instance(&clear_harness_spec(corrupt_frac), seed.derive("instance"));
    let g = clear_solve(&inst.sizes, &inst.pairwise, cfg)?;
    let out = g.induced_pairwise();
    let (ic, it) = match_counts(&inst.pairwise, &inst.truth);
    let (oc, ot) = match_counts(&out, &inst.truth);
    let cycle_consistent = check_cycle_consistency(&inst.sizes, &out)?.consistent;
    Ok(ClearTrial {
        corrupt_frac,
        input_correct: ic,
        input_total: it,
        output_correct: oc,
        output_total: ot,
        cycle_consistent,
    })
}

pub fn clear_csv(trials: &[ClearTrial]) -> String {
    let mut s = String::from(
        "trial,corrupt_frac,input_correct,input_total,input_precision,output_correct,output_total,output_precision,improves_both\n",
    );
    for (k, t) in trials.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{:.6},{},{},{:.6},{},{},{:.6},{}",
            k,
            t.corrupt_frac,
            t.input_correct,
            t.input_total,
            t.input_precision(),
            t.output_correct,
            t.output_total,
            t.output_precision(),
            t.improves_both()
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub epsilon_cg: f64,
    pub raw_precision: f64,
    pub raw_correct: usize,
    pub clear_precision: f64,
    pub clear_correct: usize,
}

impl SweepPoint {
    /// The CLEAR output is at least as precise with at least as many correct
    /// matches as the raw CG output.
    pub fn clear_dominates(&self) -> bool {
        self.clear_precision >= self.raw_precision && self.clear_correct >= self.raw_correct
    }
}

/// Replays a recorded submap stream once per `ε_CG` value and scores raw CG
/// associations against the CLEAR-induced ones.
pub fn epsilon_sweep(logs: &[MissionLog], epsilons: &[f64], base: &PipelineConfig) -> Result<Vec<SweepPoint>> {
    let truth = GroundTruth::from_logs(logs);
    let stream = interleave(logs);
    epsilons
        .iter()
        .map(|&eps| {
            let mut cfg = *base;
            cfg.cg.epsilon = eps;
            let mut st = PipelineState::new(cfg);
            for b in &stream {
                st.ingest(b)?;
            }
            let raw = evaluate_associations(&st.pairwise(), &truth)?;
            let clr = evaluate_associations(&st.clear_pairwise(), &truth)?;
            Ok(SweepPoint {
                epsilon_cg: eps,
                raw_precision: raw.precision,
                raw_correct: raw.correct,
                clear_precision: clr.precision,
                clear_correct: clr.correct,
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("epsilon_cg,raw_precision,raw_correct,clear_precision,clear_correct\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{:.6},{},{:.6},{}",
            p.epsilon_cg, p.raw_precision, p.raw_correct, p.clear_precision, p.clear_correct
        );
    }
    s
}

/// Settings of the drifted single-agent SLAM experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SlamEvalConfig {
    pub duration: f64,
    pub density: f64,
    pub drift: DriftModel,
    pub pipeline: PipelineConfig,
}

impl Default for SlamEvalConfig {
    fn default() -> Self {
        Self {
            duration: 300.0,
            density: 0.2,
            drift: DriftModel {
                translation_sigma: 0.002,
                rotation_sigma: 0.0005,
                bias_per_meter: Pose2::new(0.0, 0.0, 0.0005),
            },
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Square loop around a 20×20 m plot, driven repeatedly.
pub fn loop_waypoints() -> Vec<Point2> {
    vec![Point2::new(16.0, 4.0), Point2::new(16.0, 16.0), Point2::new(4.0, 16.0), Point2::new(4.0, 4.0)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlamTrial {
    pub distance: f64,
    pub submaps: usize,
    /// Submaps that entered the factor graph.
    pub solved_submaps: usize,
    pub dead_reckoning_ate: f64,
    pub slam_ate: f64,
    pub associations: usize,
    pub precision: f64,
    pub payload: usize,
}

fn drift_mission(cfg: &SlamEvalConfig, seed: RngSeed) -> Result<Vec<MissionLog>> {
    let region = Rect::new(0.0, 0.0, 20.0, 20.0);
    let start = Pose2::new(4.0, 4.0, 0.0);
    let wps = loop_waypoints();
    let forest = generate_forest(cfg.density, region.expanded(10.0), DEFAULT_RADIUS_RANGE, seed.derive("forest"))?;
    let forest = wps.iter().fold(forest.clear_around(start.translation(), 1.0), |f, w| f.clear_around(*w, 1.0));
    let mission = MissionConfig {
        planner: PlannerKind::Waypoints(wps),
        duration_cap: cfg.duration,
        drift: cfg.drift,
        ..MissionConfig::default()
    };
    run_mission(&forest, &[AgentSetup { agent: 0, region, start }], &mission, seed.derive("mission"))
}

/// Drives the loop with drifted odometry, replays the submap stream through
/// the ground station and compares dead-reckoned and optimized submap
/// origins against the truth.
pub fn slam_trial(cfg: &SlamEvalConfig, seed: RngSeed) -> Result<SlamTrial> {
    let logs = drift_mission(cfg, seed)?;
    let log = &logs[0];
    let mut st = PipelineState::new(cfg.pipeline);
    for b in interleave(&logs) {
        st.ingest(&b)?;
    }
    // submaps after the last accepted association are not in the graph yet
    st.solve_now()?;
    let origins: BTreeMap<_, _> = st.origins().unwrap_or_default().into_iter().collect();
    let kept: Vec<_> = log.submaps.iter().filter(|r| origins.contains_key(&r.compact.id)).collect();
    let truth: Vec<Pose2> = kept.iter().map(|r| r.truth_origin).collect();
    let dr: Vec<Pose2> = kept.iter().map(|r| log.start.compose(&r.compact.origin)).collect();
    let est: Vec<Pose2> = kept.iter().map(|r| log.start.compose(&origins[&r.compact.id])).collect();
    let eval = evaluate_associations(&st.pairwise(), &GroundTruth::from_logs(&logs))?;
    Ok(SlamTrial {
        distance: log.distance,
        submaps: log.submaps.len(),
        solved_submaps: kept.len(),
        dead_reckoning_ate: ate(&dr, &truth, false)?,
        slam_ate: ate(&est, &truth, false)?,
        associations: st.associations.len(),
        precision: eval.precision,
        payload: st.total_payload(),
    })
}

pub fn slam_csv(trials: &[(u64, SlamTrial)]) -> String {
    let mut s = String::from(
        "seed,distance_m,submaps,solved_submaps,dead_reckoning_ate,slam_ate,associations,precision,payload_bytes\n",
    );
    for (seed, t) in trials {
        let _ = writeln!(
            s,
            "{},{:.3},{},{},{:.6},{:.6},{},{:.6},{}",
            seed,
            t.distance,
            t.submaps,
            t.solved_submaps,
            t.dead_reckoning_ate,
            t.slam_ate,
            t.associations,
            t.precision,
            t.payload
        );
    }
    s
}

/// Two agents exploring side-by-side 20×20 m regions with drifted odometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub density: f64,
    pub duration: f64,
    pub drift: DriftModel,
    pub pipeline: PipelineConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let slam = SlamEvalConfig::default();
        Self { density: 0.2, duration: 300.0, drift: slam.drift, pipeline: slam.pipeline }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrial {
    pub inter_agent_associations: usize,
    /// Both agents share one anchored component.
    pub fused: bool,
    pub landmarks: usize,
    pub median_landmark_error: f64,
    pub submaps: usize,
}

/// Two `w × h` regions sharing the edge `x = w`; each agent starts 2 m
/// from its outer edge facing the boundary.
pub fn side_by_side(w: f64, h: f64) -> [AgentSetup; 2] {
    [
        AgentSetup { agent: 0, region: Rect::new(0.0, 0.0, w, h), start: Pose2::new(2.0, 0.5 * h, 0.0) },
        AgentSetup {
            agent: 1,
            region: Rect::new(w, 0.0, 2.0 * w, h),
            start: Pose2::new(2.0 * w - 2.0, 0.5 * h, std::f64::consts::PI),
        },
    ]
}

/// Forest covering every agent region plus a 5 m margin, cleared around
/// the start poses.
pub fn scene_forest(agents: &[AgentSetup], density: f64, seed: RngSeed) -> Result<Forest> {
    let mut whole = agents.first().map_or(Rect::sized(1.0, 1.0), |a| a.region);
    for a in agents {
        whole = Rect::new(
            whole.min.x.min(a.region.min.x),
            whole.min.y.min(a.region.min.y),
            whole.max.x.max(a.region.max.x),
            whole.max.y.max(a.region.max.y),
        );
    }
    let forest = generate_forest(density, whole.expanded(5.0), DEFAULT_RADIUS_RANGE, seed.derive("forest"))?;
    Ok(agents.iter().fold(forest, |f, a| f.clear_around(a.start.translation(), 1.5)))
}

pub fn fusion_logs(cfg: &FusionConfig, seed: RngSeed) -> Result<(Forest, Vec<MissionLog>)> {
    let agents = side_by_side(20.0, 20.0);
    let forest = scene_forest(&agents, cfg.density, seed)?;
    let mission = MissionConfig { duration_cap: cfg.duration, drift: cfg.drift, ..MissionConfig::default() };
    let logs = run_mission(&forest, &agents, &mission, seed.derive("mission"))?;
    Ok((forest, logs))
}

/// Median over universe landmarks of the distance between the fused
/// landmark (mapped to the world through agent 0's start) and the forest
/// tree most of its tracks belong to. Landmarks without any true tree are
/// skipped.
pub fn landmark_errors(state: &PipelineState, logs: &[MissionLog], forest: &Forest) -> Result<Vec<f64>> {
    let (Some(g), Some(fg)) = (&state.global, &state.graph) else { return Ok(Vec::new()) };
    let truth = GroundTruth::from_logs(logs);
    let start = logs.iter().find(|l| l.agent == 0).map_or(Pose2::IDENTITY, |l| l.start);
    let mut votes: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); g.universe_size];
    for (k, sub) in state.submaps.iter().enumerate() {
        let ids = truth.trees.get(&sub.id).ok_or_else(|| Error::MissingGroundTruth(sub.id.to_string()))?;
        for (i, &u) in g.maps[k].iter().enumerate() {
            if let Some(Some(tree)) = ids.get(i) {
                *votes[u].entry(*tree).or_default() += 1;
            }
        }
    }
    let mut errors = Vec::new();
    for (u, v) in votes.iter().enumerate() {
        // most votes, lowest tree index on ties
        let Some((&tree, _)) = v.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else { continue };
        errors.push(start.apply(fg.landmarks[u]).dist(forest.trees[tree].center));
    }
    Ok(errors)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn fusion_trial(cfg: &FusionConfig, seed: RngSeed) -> Result<FusionTrial> {
    let (forest, logs) = fusion_logs(cfg, seed)?;
    let mut st = PipelineState::new(cfg.pipeline);
    for b in interleave(&logs) {
        st.ingest(&b)?;
    }
    // submaps after the last accepted association are not in the graph yet
    st.solve_now()?;
    let errors = landmark_errors(&st, &logs, &forest)?;
    let fused = st.graph.as_ref().is_some_and(|g| g.unaligned_agents.is_empty());
    Ok(FusionTrial {
        inter_agent_associations: st.inter_agent_associations(),
        fused,
        landmarks: errors.len(),
        median_landmark_error: median(&errors),
        submaps: st.submaps.len(),
    })
}

pub fn fusion_csv(trials: &[(u64, FusionTrial)]) -> String {
    let mut s = String::from("seed,submaps,inter_agent_associations,fused,landmarks,median_landmark_error\n");
    for (seed, t) in trials {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.6}",
            seed, t.submaps, t.inter_agent_associations, t.fused, t.landmarks, t.median_landmark_error
        );
    }
    s
}

/// Single agent starting 1 m inside the left edge of a `w × h` plot.
pub fn single_agent(w: f64, h: f64) -> AgentSetup {
    AgentSetup { agent: 0, region: Rect::sized(w, h), start: Pose2::new(1.0, 0.5 * h, 0.0) }
}

/// Scenario of the planner comparison: one agent in a 20×20 m plot.
pub fn planner_scene(density: f64, seed: RngSeed) -> Result<(Forest, AgentSetup)> {
    let agent = single_agent(20.0, 20.0);
    Ok((scene_forest(&[agent], density, seed)?, agent))
}

/// Exploration only (no tree detection); returns the agent's log.
pub fn planner_trial(planner: PlannerKind, density: f64, seed: RngSeed) -> Result<MissionLog> {
    let (forest, agent) = planner_scene(density, seed)?;
    let cfg = MissionConfig { planner, detect: false, ..MissionConfig::default() };
    let mut logs = run_mission(&forest, &[agent], &cfg, seed.derive("mission"))?;
    Ok(logs.remove(0))
}

pub fn planner_csv(rows: &[(u64, MissionLog)]) -> String {
    let mut s = String::from("seed,planner,completion_s,duration_exceeded,average_speed,distance_m,final_coverage,collisions\n");
    for (seed, l) in rows {
        let _ = writeln!(
            s,
            "{},{},{:.3},{},{:.6},{:.3},{:.6},{}",
            seed,
            l.planner,
            l.elapsed(),
            l.duration_exceeded,
            l.average_speed(),
            l.distance,
            l.final_coverage(),
            l.collisions
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Tree;

    #[test]
    fn tp_matching_is_one_to_one() {
        let mut forest = Forest::empty(Rect::sized(10.0, 10.0));
        forest.trees.push(Tree { center: Point2::new(1.0, 1.0), radius: 0.2 });
        let dets = [(Point2::new(1.1, 1.0), 0.21), (Point2::new(1.0, 1.05), 0.2), (Point2::new(1.0, 1.0), 0.4)];
        assert_eq!(count_true_positives(&dets, &forest), 1);
        assert_eq!(count_true_positives(&[(Point2::new(1.6, 1.0), 0.2)], &forest), 0);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn detect_trial_is_deterministic() {
        let a = detect_trial(0.2, 0.03, RngSeed(4)).unwrap();
        assert_eq!(a, detect_trial(0.2, 0.03, RngSeed(4)).unwrap());
        assert!(a.true_positives <= a.detections);
    }
}
