//! Compact little-endian wire format for closed submaps.
//!
//! Header (20 bytes): magic `SM`, version, agent, seq u16, origin x/y as
//! i32 mm, theta as i32 µrad, tree count u16. Each tree (11 bytes): x/y as
//! i32 cm in the submap frame, radius u16 in 5 mm units, count u8.

use super::{CompactSubmap, Submap, SubmapId, TreeTrack};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};

pub const WIRE_MAGIC: [u8; 2] = [0x53, 0x4D];
pub const WIRE_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 20;
pub const TREE_BYTES: usize = 11;

const MM: f64 = 1e-3;
const CM: f64 = 1e-2;
const URAD: f64 = 1e-6;
const RADIUS_UNIT: f64 = 5e-3;

pub fn encoded_len(n_trees: usize) -> usize {
    HEADER_BYTES + TREE_BYTES * n_trees
}

fn quant_i32(v: f64, unit: f64) -> i32 {
    (v / unit).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

pub fn encode_submap(submap: &Submap) -> Vec<u8> {
    let n = submap.trees.len().min(u16::MAX as usize);
    let mut out = Vec::with_capacity(encoded_len(n));
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(submap.id.agent);
    out.extend_from_slice(&submap.id.seq.to_le_bytes());
    let o = submap.origin_estimate;
    out.extend_from_slice(&quant_i32(o.x, MM).to_le_bytes());
    out.extend_from_slice(&quant_i32(o.y, MM).to_le_bytes());
    out.extend_from_slice(&quant_i32(o.theta, URAD).to_le_bytes());
    out.extend_from_slice(&(n as u16).to_le_bytes());
    for t in &submap.trees[..n] {
        out.extend_from_slice(&quant_i32(t.position.x, CM).to_le_bytes());
        out.extend_from_slice(&quant_i32(t.position.y, CM).to_le_bytes());
        let r = (t.radius / RADIUS_UNIT).round().clamp(0.0, u16::MAX as f64) as u16;
        out.extend_from_slice(&r.to_le_bytes());
        out.push(t.observation_count.min(u8::MAX as u32) as u8);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedPayload(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take()?))
    }
}

pub fn decode_submap(bytes: &[u8]) -> Result<CompactSubmap> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take::<2>()? != WIRE_MAGIC {
        return Err(Error::MalformedPayload("bad magic".into()));
    }
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(Error::MalformedPayload(format!("unsupported version {version}")));
    }
    let agent = r.u8()?;
    let seq = r.u16()?;
    let x = r.i32()? as f64 * MM;
    let y = r.i32()? as f64 * MM;
    let theta = r.i32()? as f64 * URAD;
    let n = r.u16()? as usize;
    if bytes.len() != encoded_len(n) {
        return Err(Error::MalformedPayload(format!(
            "tree count {n} needs {} bytes, got {}",
            encoded_len(n),
            bytes.len()
        )));
    }
    let mut trees = Vec::with_capacity(n);
    for id in 0..n {
        let tx = r.i32()? as f64 * CM;
        let ty = r.i32()? as f64 * CM;
        let radius = r.u16()? as f64 * RADIUS_UNIT;
        let count = r.u8()? as u32;
        trees.push(TreeTrack { id: id as u32, position: Point2::new(tx, ty), radius, observation_count: count });
    }
    Ok(CompactSubmap { id: SubmapId::new(agent, seq), origin: Pose2::new(x, y, theta), trees })
}
