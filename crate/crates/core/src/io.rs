//! Text file formats shared between the pipeline stages.
//!
//! * frames: `frame_id x y z` per point, decimal meters; ids sortable but
//!   not necessarily contiguous in the file.
//! * poses: `frame_id` followed by 12 decimals — the rotation matrix in
//!   row-major order, then the translation.
//! * corrections: `j i rule` followed by the 12 decimals of `Δt`.
//! * pairs: `j i lambda e status`.
//!
//! Numbers are written with 12 significant digits, so a written pose
//! re-read differs from the in-memory one only at serialization precision.

use crate::chain::{Chain, CorrectionRecord};
use crate::cloud::{CloudError, Frame, ViewCone};
use crate::se3::RigidTransform;
use crate::select::MatchPair;
use nalgebra::{Matrix3, Vector3};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("pose file error: {0}")]
    Chain(String),
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Formats the 12 pose decimals: 9 rotation entries row-major, then the
/// translation.
pub fn format_transform(t: &RigidTransform) -> String {
    let r = &t.rotation;
    let p = &t.translation;
    let vals = [
        r[(0, 0)], r[(0, 1)], r[(0, 2)],
        r[(1, 0)], r[(1, 1)], r[(1, 2)],
        r[(2, 0)], r[(2, 1)], r[(2, 2)],
        p.x, p.y, p.z,
    ];
    vals.iter()
        .map(|v| format!("{v:.12e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses the 12 pose decimals written by [`format_transform`].
pub fn parse_transform(fields: &[&str]) -> Result<RigidTransform, String> {
    if fields.len() != 12 {
        return Err(format!("expected 12 decimals, got {}", fields.len()));
    }
    let mut vals = [0.0f64; 12];
    for (i, f) in fields.iter().enumerate() {
        vals[i] = f.parse().map_err(|e| format!("bad number `{f}`: {e}"))?;
    }
    let rotation = Matrix3::new(
        vals[0], vals[1], vals[2],
        vals[3], vals[4], vals[5],
        vals[6], vals[7], vals[8],
    );
    let translation = Vector3::new(vals[9], vals[10], vals[11]);
    RigidTransform::new(rotation, translation).map_err(|e| e.to_string())
}

/// Writes frames as `frame_id x y z` lines grouped by frame.
pub fn write_frames(path: &Path, frames: &[Frame]) -> Result<(), IoError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for f in frames {
        for p in &f.points {
            writeln!(out, "{} {:.12e} {:.12e} {:.12e}", f.id, p.x, p.y, p.z)?;
        }
    }
    Ok(())
}

/// Reads a frames file; points are grouped by id and frames returned sorted
/// by id, all carrying the given view cone (the cone is configuration, not
/// data). Frames may be interleaved in the file.
pub fn read_frames(path: &Path, cone: ViewCone) -> Result<Vec<Frame>, IoError> {
    let file = std::fs::File::open(path)?;
    let mut by_id: std::collections::BTreeMap<u32, Vec<Vector3<f64>>> =
        std::collections::BTreeMap::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(path, line_no, "expected `frame_id x y z`"));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad frame id: {e}")))?;
        let mut coords = [0.0f64; 3];
        for (k, f) in fields[1..].iter().enumerate() {
            coords[k] = f
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad coordinate `{f}`: {e}")))?;
        }
        by_id
            .entry(id)
            .or_default()
            .push(Vector3::new(coords[0], coords[1], coords[2]));
    }
    by_id
        .into_iter()
        .map(|(id, points)| Frame::new(id, points, cone).map_err(IoError::from))
        .collect()
}

/// Writes chain totals as `frame_id` + 12 decimals per line.
pub fn write_poses(path: &Path, frame_ids: &[u32], chain: &Chain) -> Result<(), IoError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (l, t) in chain.totals().iter().enumerate() {
        let id = frame_ids.get(l).copied().unwrap_or(l as u32);
        writeln!(out, "{} {}", id, format_transform(t))?;
    }
    Ok(())
}

/// Reads a pose file back into ids and a chain.
pub fn read_poses(path: &Path) -> Result<(Vec<u32>, Chain), IoError> {
    let file = std::fs::File::open(path)?;
    let mut ids = Vec::new();
    let mut totals = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 13 {
            return Err(parse_err(path, line_no, "expected `frame_id` + 12 decimals"));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad frame id: {e}")))?;
        let t = parse_transform(&fields[1..])
            .map_err(|msg| parse_err(path, line_no, msg))?;
        ids.push(id);
        totals.push(t);
    }
    let chain = Chain::from_totals(totals).map_err(|e| IoError::Chain(e.to_string()))?;
    Ok((ids, chain))
}

/// Writes the correction log: `j i rule` + the 12 decimals of `Δt`.
pub fn write_corrections(path: &Path, log: &[CorrectionRecord]) -> Result<(), IoError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in log {
        writeln!(
            out,
            "{} {} {} {}",
            c.j,
            c.i,
            c.rule.name(),
            format_transform(&c.delta)
        )?;
    }
    Ok(())
}

/// Writes selected pairs as `j i lambda e status`.
pub fn write_pairs(path: &Path, pairs: &[MatchPair]) -> Result<(), IoError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in pairs {
        writeln!(
            out,
            "{} {} {:.6} {:.6} {}",
            p.j,
            p.i,
            p.lambda,
            p.error,
            p.status.name()
        )?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text)?;
    Ok(())
}
