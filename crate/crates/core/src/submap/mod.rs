//! Deformable submaps: per-submap tree tracking and culling, a local
//! occupancy grid, the fixed-period submap lifecycle, and the compact wire
//! codec.

mod codec;
mod grid;

pub use codec::{decode_submap, encode_submap, encoded_len, HEADER_BYTES, TREE_BYTES, WIRE_MAGIC, WIRE_VERSION};
pub use grid::{Cell, CellState, OccupancyGrid2D, OccupancyParams};

use std::fmt;

use crate::detect::TreeDetection;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};
use crate::sim::Scan;

/// Merge gate for tree tracking.
pub const MERGE_DISTANCE: f64 = 0.5;
pub const MERGE_RADIUS_RATIO: f64 = 0.10;
pub const DEFAULT_TAU_CULL: u32 = 3;
pub const DEFAULT_SUBMAP_PERIOD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubmapId {
    pub agent: u8,
    pub seq: u16,
}

impl SubmapId {
    pub fn new(agent: u8, seq: u16) -> Self {
        Self { agent, seq }
    }
}

impl fmt::Display for SubmapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.agent, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeTrack {
    pub id: u32,
    /// Submap-frame position.
    pub position: Point2,
    pub radius: f64,
    pub observation_count: u32,
}

/// The transmitted part of a submap: origin and tree list.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSubmap {
    pub id: SubmapId,
    /// Origin in the agent's odometry frame.
    pub origin: Pose2,
    pub trees: Vec<TreeTrack>,
}

impl CompactSubmap {
    pub fn positions(&self) -> Vec<Point2> {
        self.trees.iter().map(|t| t.position).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submap {
    pub id: SubmapId,
    pub origin_estimate: Pose2,
    pub trees: Vec<TreeTrack>,
    pub occupancy: OccupancyGrid2D,
    pub open: bool,
    next_track_id: u32,
}

impl Submap {
    pub fn new(id: SubmapId, origin_estimate: Pose2, occupancy: OccupancyGrid2D) -> Self {
        Self { id, origin_estimate, trees: Vec::new(), occupancy, open: true, next_track_id: 0 }
    }

    /// Submap without a local occupancy grid.
    pub fn without_grid(id: SubmapId, origin_estimate: Pose2) -> Self {
        Self::new(id, origin_estimate, OccupancyGrid2D::empty())
    }

    /// Merges sensor-frame detections into the tracks.
    ///
    /// Each detection is compared with the closest track that existed before
    /// this call (ties to the lower id). It is merged when closer than 0.5 m
    /// and the radii differ by less than 10 %, updating the count-weighted
    /// mean position and radius; otherwise it starts a new track.
    pub fn update(&mut self, detections: &[TreeDetection], sensor_pose_in_submap: &Pose2) -> Result<()> {
        if !self.open {
            return Err(Error::ClosedSubmap);
        }
        let existing = self.trees.len();
        for det in detections {
            let p = sensor_pose_in_submap.apply(det.circle.center);
            let r = det.circle.radius;
            let nearest = self.trees[..existing]
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.position.dist_sq(p).total_cmp(&b.1.position.dist_sq(p)))
                .map(|(i, _)| i);
            let merge = nearest.filter(|&i| {
                let t = &self.trees[i];
                t.position.dist(p) < MERGE_DISTANCE && (r - t.radius).abs() / t.radius < MERGE_RADIUS_RATIO
            });
            match merge {
                Some(i) => {
                    let t = &mut self.trees[i];
                    let n = t.observation_count as f64;
                    t.position = (t.position * n + p) * (1.0 / (n + 1.0));
                    t.radius = (t.radius * n + r) / (n + 1.0);
                    t.observation_count += 1;
                }
                None => {
                    self.trees.push(TreeTrack {
                        id: self.next_track_id,
                        position: p,
                        radius: r,
                        observation_count: 1,
                    });
                    self.next_track_id += 1;
                }
            }
        }
        Ok(())
    }

    pub fn update_occupancy(&mut self, scan: &Scan, sensor_pose_in_submap: &Pose2) -> Result<()> {
        if !self.open {
            return Err(Error::ClosedSubmap);
        }
        self.occupancy.update_occupancy(scan, sensor_pose_in_submap);
        Ok(())
    }

    /// Drops tracks seen fewer than `tau_cull` times and closes the submap.
    /// Surviving tracks are renumbered densely in their existing order.
    pub fn finalize(&mut self, tau_cull: u32) -> Result<()> {
        if !self.open {
            return Err(Error::ClosedSubmap);
        }
        self.trees.retain(|t| t.observation_count >= tau_cull);
        for (i, t) in self.trees.iter_mut().enumerate() {
            t.id = i as u32;
        }
        self.open = false;
        Ok(())
    }

    pub fn compact(&self) -> CompactSubmap {
        CompactSubmap { id: self.id, origin: self.origin_estimate, trees: self.trees.clone() }
    }
}

pub fn update_submap(
    submap: &mut Submap,
    detections: &[TreeDetection],
    sensor_pose_in_submap: &Pose2,
) -> Result<()> {
    submap.update(detections, sensor_pose_in_submap)
}

pub fn finalize_submap(submap: &mut Submap, tau_cull: u32) -> Result<()> {
    submap.finalize(tau_cull)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubmapBoundary {
    /// Sequence number of the submap being closed.
    pub closed_seq: u16,
    pub new_seq: u16,
    pub time: f64,
    pub new_origin: Pose2,
    /// Relative motion between the closed submap's origin and the new one.
    pub odometry: Pose2,
}

/// Fixed-period submap clock. Submap `k` covers `[k·period, (k+1)·period)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmapScheduler {
    pub period: f64,
    seq: u16,
    origin: Pose2,
    started: bool,
}

impl SubmapScheduler {
    pub fn new(period: f64) -> Self {
        Self { period, seq: 0, origin: Pose2::IDENTITY, started: false }
    }

    pub fn current_seq(&self) -> u16 {
        self.seq
    }

    pub fn current_origin(&self) -> Pose2 {
        self.origin
    }

    /// Call once per tick with the odometry pose. The first call opens
    /// submap 0; a boundary event is returned whenever `time` reaches the
    /// end of the current submap's period.
    pub fn tick(&mut self, time: f64, odom_pose: Pose2) -> Option<SubmapBoundary> {
        if !self.started {
            self.started = true;
            self.origin = odom_pose;
            return None;
        }
        let boundary = (self.seq as f64 + 1.0) * self.period;
        if time + 1e-9 < boundary {
            return None;
        }
        let ev = SubmapBoundary {
            closed_seq: self.seq,
            new_seq: self.seq + 1,
            time,
            new_origin: odom_pose,
            odometry: self.origin.between(&odom_pose),
        };
        self.seq += 1;
        self.origin = odom_pose;
        Some(ev)
    }
}

/// Boundary events for a mission of `duration` seconds sampled every `dt`.
pub fn submap_lifecycle(duration: f64, dt: f64, period: f64, odometry: impl Fn(f64) -> Pose2) -> Vec<SubmapBoundary> {
    let mut sched = SubmapScheduler::new(period);
    let steps = (duration / dt).round() as usize;
    (0..steps).filter_map(|k| {
        let t = k as f64 * dt;
        sched.tick(t, odometry(t))
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::CircleFit;

    fn det(x: f64, y: f64, r: f64) -> TreeDetection {
        TreeDetection {
            circle: CircleFit { center: Point2::new(x, y), radius: r, residual: 0.0, n_points: 10 },
            arc_coverage: 0.4,
        }
    }

    fn submap() -> Submap {
        Submap::without_grid(SubmapId::new(0, 0), Pose2::IDENTITY)
    }

    #[test]
    fn close_detection_merges() {
        let mut s = submap();
        s.update(&[det(1.0, 0.0, 0.2)], &Pose2::IDENTITY).unwrap();
        s.update(&[det(1.3, 0.0, 0.2)], &Pose2::IDENTITY).unwrap();
        assert_eq!(s.trees.len(), 1);
        assert_eq!(s.trees[0].observation_count, 2);
        assert!((s.trees[0].position.x - 1.15).abs() < 1e-12);
    }

    #[test]
    fn far_or_different_radius_creates_track() {
        let mut s = submap();
        s.update(&[det(1.0, 0.0, 0.2)], &Pose2::IDENTITY).unwrap();
        s.update(&[det(1.6, 0.0, 0.2)], &Pose2::IDENTITY).unwrap();
        assert_eq!(s.trees.len(), 2);
        s.update(&[det(1.0, 0.3, 0.24)], &Pose2::IDENTITY).unwrap();
        assert_eq!(s.trees.len(), 3);
    }

    #[test]
    fn detections_are_moved_into_submap_frame() {
        let mut s = submap();
        s.update(&[det(1.0, 0.0, 0.2)], &Pose2::new(2.0, 0.0, std::f64::consts::FRAC_PI_2)).unwrap();
        let p = s.trees[0].position;
        assert!((p.x - 2.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn culling_filters_by_count() {
        let mut s = submap();
        for (i, n) in [1u32, 2, 3, 7].iter().enumerate() {
            s.trees.push(TreeTrack { id: i as u32, position: Point2::new(i as f64, 0.0), radius: 0.2, observation_count: *n });
        }
        let mut t = s.clone();
        s.finalize(3).unwrap();
        assert_eq!(s.trees.iter().map(|t| t.observation_count).collect::<Vec<_>>(), vec![3, 7]);
        assert!(!s.open);
        assert!(matches!(s.finalize(3), Err(Error::ClosedSubmap)));
        assert!(matches!(s.update(&[], &Pose2::IDENTITY), Err(Error::ClosedSubmap)));
        t.finalize(1).unwrap();
        assert_eq!(t.trees.len(), 4);
    }

    #[test]
    fn lifecycle_counts_submaps() {
        let events = submap_lifecycle(20.0, 0.1, 5.0, |t| Pose2::new(t, 0.0, 0.0));
        // submaps 0..=3 → three boundaries inside a 20 s mission
        assert_eq!(events.len(), 3);
        assert_eq!(events.last().unwrap().new_seq, 3);
        for e in &events {
            assert!((e.odometry.x - 5.0).abs() < 1e-9);
        }
    }
}
