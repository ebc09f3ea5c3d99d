//! Ground-station pipeline over the submap stream: decode, GLARE candidates,
//! CG verification, CLEAR and SLAM, with payload and runtime ledgers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use crate::cg::{pairwise_associate, CgConfig, PartialPermutation};
use crate::clear::{clear_solve, ClearConfig, GlobalAssociation, PairwiseInput};
use crate::error::{Error, Result};
use crate::explore::MissionLog;
use crate::geometry::{Point2, Pose2};
use crate::glare::{build_glare, find_candidates, GlareConfig, GlareDescriptor};
use crate::slam::{build_graph, optimize, FactorGraph, LmConfig, NoiseModel};
use crate::submap::{decode_submap, CompactSubmap, SubmapId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub glare: GlareConfig,
    pub glarot_epsilon: f64,
    /// Compare L1-normalised descriptors so that the threshold does not scale
    /// with the tree count.
    pub normalize_descriptors: bool,
    /// Leave out consecutive submaps of the same agent.
    pub skip_consecutive: bool,
    pub cg: CgConfig,
    pub clear: ClearConfig,
    pub noise: NoiseModel,
    pub lm: LmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            glare: GlareConfig::default(),
            glarot_epsilon: 1.5,
            normalize_descriptors: true,
            skip_consecutive: false,
            cg: CgConfig::default(),
            clear: ClearConfig::default(),
            noise: NoiseModel::default(),
            lm: LmConfig::default(),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub decode: f64,
    pub glarot: f64,
    pub cg: f64,
    pub clear: f64,
    pub slam: f64,
}

impl StageTimes {
    fn add(&mut self, o: &StageTimes) {
        self.decode += o.decode;
        self.glarot += o.glarot;
        self.cg += o.cg;
        self.clear += o.clear;
        self.slam += o.slam;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestRecord {
    pub id: SubmapId,
    pub bytes: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub solved: bool,
    pub times: StageTimes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedAssociation {
    pub s: SubmapId,
    pub t: SubmapId,
    pub perm: PartialPermutation,
    /// `p_s ≈ transform · p_t`.
    pub transform: Pose2,
    pub glarot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub cfg: PipelineConfig,
    pub submaps: Vec<CompactSubmap>,
    pub descriptors: Vec<(SubmapId, GlareDescriptor)>,
    pub associations: Vec<AcceptedAssociation>,
    pub global: Option<GlobalAssociation>,
    pub graph: Option<FactorGraph>,
    pub solves: usize,
    pub ledger: Vec<IngestRecord>,
}

impl PipelineState {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self {
            cfg,
            submaps: Vec::new(),
            descriptors: Vec::new(),
            associations: Vec::new(),
            global: None,
            graph: None,
            solves: 0,
            ledger: Vec::new(),
        }
    }

    fn index_of(&self, id: SubmapId) -> Option<usize> {
        self.submaps.iter().position(|s| s.id == id)
    }

    /// Decodes one payload and runs the pipeline. On error the state is left
    /// as it was.
    pub fn ingest(&mut self, bytes: &[u8]) -> Result<&IngestRecord> {
        let mut times = StageTimes::default();
        let clock = Instant::now();
        let sub = decode_submap(bytes)?;
        if self.index_of(sub.id).is_some() {
            return Err(Error::MalformedPayload(format!("duplicate submap {}", sub.id)));
        }
        times.decode = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let raw = build_glare(&sub.positions(), &self.cfg.glare);
        let desc = if self.cfg.normalize_descriptors { raw.normalized() } else { raw };
        let mut probe = self.descriptors.clone();
        probe.push((sub.id, desc.clone()));
        let cands: Vec<_> = find_candidates(&probe, self.cfg.glarot_epsilon, self.cfg.skip_consecutive)?
            .into_iter()
            .filter(|c| c.t == sub.id || c.s == sub.id)
            .collect();
        times.glarot = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut new_assoc = Vec::new();
        for c in &cands {
            let other = if c.s == sub.id { c.t } else { c.s };
            let prev = &self.submaps[self.index_of(other).expect("candidate from stored descriptor")];
            if let Some(m) = pairwise_associate(&prev.trees, &sub.trees, &self.cfg.cg) {
                new_assoc.push(AcceptedAssociation {
                    s: prev.id,
                    t: sub.id,
                    perm: m.permutation,
                    transform: m.transform,
                    glarot: c.distance,
                });
            }
        }
        times.cg = clock.elapsed().as_secs_f64();

        let mut submaps = self.submaps.clone();
        submaps.push(sub.clone());
        let mut associations = self.associations.clone();
        let accepted = new_assoc.len();
        associations.extend(new_assoc);

        let (mut global, mut graph) = (self.global.clone(), self.graph.clone());
        let solved = accepted > 0;
        if solved {
            let clock = Instant::now();
            let g = solve_association(&submaps, &associations, &self.cfg.clear)?;
            times.clear = clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let mut fg = build_graph(&submaps, &g, &self.cfg.noise)?;
            optimize(&mut fg, &self.cfg.lm)?;
            times.slam = clock.elapsed().as_secs_f64();
            global = Some(g);
            graph = Some(fg);
        }

        self.submaps = submaps;
        self.descriptors.push((sub.id, desc));
        self.associations = associations;
        self.global = global;
        self.graph = graph;
        if solved {
            self.solves += 1;
        }
        self.ledger.push(IngestRecord { id: sub.id, bytes: bytes.len(), candidates: cands.len(), accepted, solved, times });
        Ok(self.ledger.last().expect("just pushed"))
    }

    /// Runs CLEAR and SLAM over everything received so far, even if no
    /// association was accepted (all-singleton association).
    pub fn solve_now(&mut self) -> Result<()> {
        let g = solve_association(&self.submaps, &self.associations, &self.cfg.clear)?;
        let mut fg = build_graph(&self.submaps, &g, &self.cfg.noise)?;
        optimize(&mut fg, &self.cfg.lm)?;
        self.global = Some(g);
        self.graph = Some(fg);
        self.solves += 1;
        Ok(())
    }

    pub fn total_payload(&self) -> usize {
        self.ledger.iter().map(|r| r.bytes).sum()
    }

    /// Optimized origin of every submap in the reference frame, or `None`
    /// before the first solve.
    pub fn origins(&self) -> Option<Vec<(SubmapId, Pose2)>> {
        self.graph.as_ref().map(|g| g.pose_ids.iter().copied().zip(g.poses.iter().copied()).collect())
    }

    /// Accepted associations whose submaps belong to different agents.
    pub fn inter_agent_associations(&self) -> usize {
        self.associations.iter().filter(|a| a.s.agent != a.t.agent).count()
    }

    pub fn pairwise(&self) -> Vec<(SubmapId, SubmapId, PartialPermutation)> {
        self.associations.iter().map(|a| (a.s, a.t, a.perm.clone())).collect()
    }

    /// Pairwise associations induced by the latest global association.
    pub fn clear_pairwise(&self) -> Vec<(SubmapId, SubmapId, PartialPermutation)> {
        let Some(g) = &self.global else { return Vec::new() };
        g.induced_pairwise()
            .into_iter()
            .map(|p| (self.submaps[p.s].id, self.submaps[p.t].id, p.perm))
            .collect()
    }

    /// Deterministic text dump of everything except wall-clock times.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for r in &self.ledger {
            let _ = writeln!(s, "INGEST {} {} {} {} {}", r.id, r.bytes, r.candidates, r.accepted, r.solved);
        }
        for a in &self.associations {
            let _ = writeln!(
                s,
                "ASSOC {} {} {:.9} {:.9} {:.9} {:.9} {:?}",
                a.s, a.t, a.glarot, a.transform.x, a.transform.y, a.transform.theta, a.perm.pairs()
            );
        }
        if let Some(g) = &self.global {
            let _ = writeln!(s, "UNIVERSE {}", g.universe_size);
            for (k, m) in g.maps.iter().enumerate() {
                let _ = writeln!(s, "MAP {} {:?}", self.submaps[k].id, m);
            }
        }
        if let Some(g) = &self.graph {
            s.push_str(&g.to_text());
        }
        s
    }

    pub fn payload_csv(&self) -> String {
        report_tables(&self.ledger).1
    }

    pub fn runtime_csv(&self) -> String {
        report_tables(&self.ledger).0
    }
}

fn solve_association(
    submaps: &[CompactSubmap],
    associations: &[AcceptedAssociation],
    cfg: &ClearConfig,
) -> Result<GlobalAssociation> {
    let index: BTreeMap<SubmapId, usize> = submaps.iter().enumerate().map(|(k, s)| (s.id, k)).collect();
    let sizes: Vec<usize> = submaps.iter().map(|s| s.trees.len()).collect();
    let pairwise: Vec<PairwiseInput> = associations
        .iter()
        .map(|a| PairwiseInput { s: index[&a.s], t: index[&a.t], perm: a.perm.clone() })
        .collect();
    clear_solve(&sizes, &pairwise, cfg)
}

/// Cumulative runtime table (`submaps,decode,glarot,cg,clear,slam`) and
/// payload table (`submaps,bytes,cumulative_bytes`), one row per ingest.
pub fn report_tables(ledger: &[IngestRecord]) -> (String, String) {
    let mut rt = String::from("submaps,decode_s,glarot_s,cg_s,clear_s,slam_s\n");
    let mut pl = String::from("submaps,bytes,cumulative_bytes\n");
    let mut acc = StageTimes::default();
    let mut total = 0;
    for (k, r) in ledger.iter().enumerate() {
        acc.add(&r.times);
        total += r.bytes;
        let _ = writeln!(rt, "{},{:.6},{:.6},{:.6},{:.6},{:.6}", k + 1, acc.decode, acc.glarot, acc.cg, acc.clear, acc.slam);
        let _ = writeln!(pl, "{},{},{}", k + 1, r.bytes, total);
    }
    (rt, pl)
}

/// Simulator ground truth for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    /// Forest tree index behind each track.
    pub trees: BTreeMap<SubmapId, Vec<Option<usize>>>,
    /// World-frame submap origins.
    pub origins: BTreeMap<SubmapId, Pose2>,
}

impl GroundTruth {
    pub fn from_logs(logs: &[MissionLog]) -> Self {
        let mut gt = GroundTruth::default();
        for log in logs {
            for r in &log.submaps {
                gt.trees.insert(r.compact.id, r.tree_truth.clone());
                gt.origins.insert(r.compact.id, r.truth_origin);
            }
        }
        gt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationEval {
    /// Correct over proposed matches; 1.0 when nothing is proposed.
    pub precision: f64,
    pub correct: usize,
    pub total: usize,
}

/// Scores proposed pairwise matches against simulator tree identities. A
/// match involving a track with no true tree counts as wrong.
pub fn evaluate_associations(
    proposed: &[(SubmapId, SubmapId, PartialPermutation)],
    truth: &GroundTruth,
) -> Result<AssociationEval> {
    let mut correct = 0;
    let mut total = 0;
    for (s, t, perm) in proposed {
        let ts = truth.trees.get(s).ok_or_else(|| Error::MissingGroundTruth(s.to_string()))?;
        let tt = truth.trees.get(t).ok_or_else(|| Error::MissingGroundTruth(t.to_string()))?;
        for (i, j) in perm.pairs() {
            total += 1;
            if matches!((ts.get(i), tt.get(j)), (Some(Some(a)), Some(Some(b))) if a == b) {
                correct += 1;
            }
        }
    }
    let precision = if total == 0 { 1.0 } else { correct as f64 / total as f64 };
    Ok(AssociationEval { precision, correct, total })
}

/// Interleaves agent streams by sequence number (then agent id), the order
/// in which a ground station would receive them.
pub fn interleave(logs: &[MissionLog]) -> Vec<Vec<u8>> {
    let mut all: Vec<(u16, u8, &Vec<u8>)> =
        logs.iter().flat_map(|l| l.submaps.iter().map(|r| (r.compact.id.seq, r.compact.id.agent, &r.bytes))).collect();
    all.sort_by_key(|&(q, a, _)| (q, a));
    all.into_iter().map(|(_, _, b)| b.clone()).collect()
}

/// Splits a recorded stream of `u32` little-endian length-prefixed payloads.
pub fn split_stream(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let (head, tail) = rest
            .split_first_chunk::<4>()
            .ok_or_else(|| Error::MalformedPayload("truncated length prefix".into()))?;
        let n = u32::from_le_bytes(*head) as usize;
        if tail.len() < n {
            return Err(Error::MalformedPayload(format!("payload of {n} bytes truncated to {}", tail.len())));
        }
        out.push(tail[..n].to_vec());
        rest = &tail[n..];
    }
    Ok(out)
}

/// Orders raw payloads from several recorded streams as [`interleave`] does.
pub fn order_payloads(payloads: Vec<Vec<u8>>) -> Result<Vec<Vec<u8>>> {
    let mut keyed = payloads
        .into_iter()
        .map(|b| decode_submap(&b).map(|s| ((s.id.seq, s.id.agent), b)))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, b)| b).collect())
}

/// World-frame position of every universe landmark, mapping the reference
/// agent's odometry frame into the world through `reference_start`.
pub fn world_landmarks(state: &PipelineState, reference_start: &Pose2) -> Vec<Point2> {
    state.graph.as_ref().map_or_else(Vec::new, |g| g.landmarks.iter().map(|&l| reference_start.apply(l)).collect())
}
